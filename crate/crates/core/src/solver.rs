//! Spectral initialization with coherence projections, regularized Wirtinger
//! gradient descent, error metrics and neighborhood diagnostics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_len, DeconvError, Result};
use crate::objective::{Objective, RegularizerParams};
use crate::operator::{apply_adjoint, operator_norm_estimate_seeded};
use crate::seed::{derive_seed, rng_from_seed, TAG_POWER};
use crate::signal_model::{coherence_profile, GroundTruth, MeasurementSet, ProblemInstance};
use crate::{inner, norm_sq, C64_ZERO};

/// A linear map `T` with orthonormal columns and its adjoint.
pub trait OrthonormalMap {
    fn input_len(&self) -> usize;
    fn apply(&self, z: &[Complex64]) -> Vec<Complex64>;
    fn adjoint(&self, w: &[Complex64]) -> Vec<Complex64>;
}

/// `F_M`: the filter's unitary spectrum on the length-`L` grid.
#[derive(Debug, Clone, Copy)]
pub struct FilterTransform<'a>(pub &'a ProblemInstance);

/// `C^{⊗N}`: the block-diagonal subspace synthesis.
#[derive(Debug, Clone, Copy)]
pub struct SubspaceTransform<'a>(pub &'a ProblemInstance);

/// An explicit matrix with orthonormal columns.
#[derive(Debug, Clone)]
pub struct DenseTransform(pub DMatrix<Complex64>);

impl OrthonormalMap for FilterTransform<'_> {
    fn input_len(&self) -> usize {
        self.0.m()
    }
    fn apply(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.0.filter_spectrum(z)
    }
    fn adjoint(&self, w: &[Complex64]) -> Vec<Complex64> {
        self.0.filter_spectrum_adjoint(w.to_vec())
    }
}

impl OrthonormalMap for SubspaceTransform<'_> {
    fn input_len(&self) -> usize {
        self.0.k() * self.0.n()
    }
    fn apply(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.0.synthesize_blocks(z)
    }
    fn adjoint(&self, w: &[Complex64]) -> Vec<Complex64> {
        self.0.analyze_blocks(w)
    }
}

impl OrthonormalMap for DenseTransform {
    fn input_len(&self) -> usize {
        self.0.ncols()
    }
    fn apply(&self, z: &[Complex64]) -> Vec<Complex64> {
        (&self.0 * nalgebra::DVector::from_column_slice(z)).iter().copied().collect()
    }
    fn adjoint(&self, w: &[Complex64]) -> Vec<Complex64> {
        (self.0.adjoint() * nalgebra::DVector::from_column_slice(w)).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionStatus {
    Feasible,
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: Vec<Complex64>,
    pub iterations: usize,
    pub status: ProjectionStatus,
}

fn peak(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

fn clip(v: &mut [Complex64], bound: f64) {
    for z in v.iter_mut() {
        let r = z.norm();
        if r > bound {
            *z *= bound / r;
        }
    }
}

/// Euclidean projection of `target` onto `{z : ‖T z‖_∞ ≤ bound}`.
///
/// `T` is an isometry, so the problem is solved in its range: Dykstra's
/// scheme alternates between the complex `ℓ∞` ball and `range(T)`. The
/// returned point is always feasible; on non-convergence the last iterate
/// is shrunk onto the constraint.
pub fn coherence_projection(
    target: &[Complex64],
    map: &dyn OrthonormalMap,
    bound: f64,
    tol: f64,
    max_iters: usize,
) -> Result<Projection> {
    ensure_len("projection target", target.len(), map.input_len())?;
    if !(bound > 0.0) {
        return Err(DeconvError::Domain(format!("projection bound must be positive, got {bound}")));
    }
    let w0 = map.apply(target);
    if peak(&w0) <= bound {
        return Ok(Projection {
            point: target.to_vec(),
            iterations: 0,
            status: ProjectionStatus::Feasible,
        });
    }
    let scale = norm_sq(&w0).sqrt();
    let mut x = w0;
    let mut p = vec![C64_ZERO; x.len()];
    let mut q = vec![C64_ZERO; x.len()];
    let mut status = ProjectionStatus::MaxIters;
    let mut iterations = max_iters;
    for it in 1..=max_iters {
        let mut y: Vec<Complex64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        clip(&mut y, bound);
        for ((pi, xi), yi) in p.iter_mut().zip(&x).zip(&y) {
            *pi = *xi + *pi - *yi;
        }
        let yq: Vec<Complex64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let next = map.apply(&map.adjoint(&yq));
        for ((qi, yqi), ni) in q.iter_mut().zip(&yq).zip(&next) {
            *qi = *yqi - *ni;
        }
        let moved = x.iter().zip(&next).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        x = next;
        if moved <= tol * scale {
            status = ProjectionStatus::Converged;
            iterations = it;
            break;
        }
    }
    let mut point = map.adjoint(&x);
    let pk = peak(&map.apply(&point));
    if pk > bound {
        let s = bound / pk;
        point.iter_mut().for_each(|z| *z *= s);
    }
    Ok(Projection {
        point,
        iterations,
        status,
    })
}

/// Output of the spectral initializer.
#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    /// Leading singular value of `A*(ŷ)`.
    pub d: f64,
    pub u0: Vec<Complex64>,
    pub v0: Vec<Complex64>,
    /// Unit-norm singular vectors before projection (`x̂0` already
    /// conjugated back to coefficient space).
    pub h_hat: Vec<Complex64>,
    pub x_hat: Vec<Complex64>,
    pub mu2: f64,
    pub nu2: f64,
    pub svd_converged: bool,
    pub projections_converged: bool,
}

const DENSE_SVD_LIMIT: usize = 40_000;
const PROJECTION_TOL: f64 = 1e-9;
const PROJECTION_ITERS: usize = 200;

/// Leading singular triple `(σ, u, v)` with `Z v = σ u`. The phase is fixed
/// so that the largest-magnitude entry of `u` is real and positive.
pub fn leading_singular_triple(z: &DMatrix<Complex64>, seed: u64) -> (f64, Vec<Complex64>, Vec<Complex64>, bool) {
    let (rows, cols) = z.shape();
    let (sigma, mut u, mut v, converged) = if rows * cols <= DENSE_SVD_LIMIT {
        let svd = z.clone().svd(true, true);
        let (imax, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
        let u = svd.u.as_ref().expect("requested").column(imax).iter().copied().collect();
        let v = svd.v_t.as_ref().expect("requested").row(imax).iter().map(|c| c.conj()).collect();
        (svd.singular_values[imax], u, v, true)
    } else {
        power_singular_triple(z, seed)
    };
    let (imax, _) = u
        .iter()
        .enumerate()
        .fold((0, -1.0), |acc, (i, c): (usize, &Complex64)| if c.norm() > acc.1 { (i, c.norm()) } else { acc });
    if u[imax].norm() > 0.0 {
        let phase = u[imax].conj() / u[imax].norm();
        u.iter_mut().for_each(|c| *c *= phase);
        v.iter_mut().for_each(|c| *c *= phase);
    }
    (sigma, u, v, converged)
}

fn power_singular_triple(z: &DMatrix<Complex64>, seed: u64) -> (f64, Vec<Complex64>, Vec<Complex64>, bool) {
    let mut rng = rng_from_seed(derive_seed(seed, TAG_POWER, 1));
    let mut v = nalgebra::DVector::from_fn(z.ncols(), |_, _| {
        Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    });
    v /= Complex64::new(v.norm(), 0.0);
    let zt = z.adjoint();
    let mut u = nalgebra::DVector::zeros(z.nrows());
    let mut sigma = 0.0;
    for _ in 0..5000 {
        let mut nu = z * &v;
        let nn = nu.norm();
        if nn == 0.0 {
            break;
        }
        nu /= Complex64::new(nn, 0.0);
        let mut nv = &zt * &nu;
        sigma = nv.norm();
        nv /= Complex64::new(sigma, 0.0);
        let change = (&nv - &v).norm();
        u = nu;
        v = nv;
        if change < 1e-12 {
            return (sigma, u.iter().copied().collect(), v.iter().copied().collect(), true);
        }
    }
    (sigma, u.iter().copied().collect(), v.iter().copied().collect(), false)
}

/// Spectral initializer. `mu2`/`nu2` are the coherence targets; `None`
/// takes the coherences of the unprojected singular vectors, which makes
/// the corresponding projection a no-op.
pub fn initialize(
    instance: &ProblemInstance,
    measurements: &MeasurementSet,
    mu2: Option<f64>,
    nu2: Option<f64>,
) -> Result<Initialization> {
    initialize_seeded(instance, measurements, mu2, nu2, 0)
}

pub fn initialize_seeded(
    instance: &ProblemInstance,
    measurements: &MeasurementSet,
    mu2: Option<f64>,
    nu2: Option<f64>,
    seed: u64,
) -> Result<Initialization> {
    ensure_len("measurements", measurements.yhat.len(), instance.measurement_len())?;
    if norm_sq(&measurements.yhat) == 0.0 {
        return Err(DeconvError::Domain("measurements are identically zero".into()));
    }
    let z = apply_adjoint(instance, &measurements.yhat)?;
    let (d, h_hat, v_right, svd_converged) = leading_singular_triple(&z.0, seed);
    let x_hat: Vec<Complex64> = v_right.iter().map(|c| c.conj()).collect();
    let sd = d.sqrt();
    let h_start: Vec<Complex64> = h_hat.iter().map(|c| c * sd).collect();
    let x_start: Vec<Complex64> = x_hat.iter().map(|c| c * sd).collect();
    let prof = coherence_profile(instance, &h_start, &x_start)?;
    let mu2 = mu2.unwrap_or(prof.mu2);
    let nu2 = nu2.unwrap_or(prof.nu2);
    let l = instance.l() as f64;
    let qn = (instance.q() * instance.n()) as f64;
    let pu = coherence_projection(
        &h_start,
        &FilterTransform(instance),
        2.0 * sd * mu2.sqrt() / l.sqrt(),
        PROJECTION_TOL,
        PROJECTION_ITERS,
    )?;
    let pv = coherence_projection(
        &x_start,
        &SubspaceTransform(instance),
        2.0 * sd * nu2.sqrt() / qn.sqrt(),
        PROJECTION_TOL,
        PROJECTION_ITERS,
    )?;
    let ok = |p: &Projection| p.status != ProjectionStatus::MaxIters;
    Ok(Initialization {
        d,
        projections_converged: ok(&pu) && ok(&pv),
        u0: pu.point,
        v0: pv.point,
        h_hat,
        x_hat,
        mu2,
        nu2,
        svd_converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// `η = 1 / (AUTO_STEP_FACTOR · d)`, see [`auto_step`].
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoMode {
    /// `ρ = d²`.
    Auto,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub eta: StepSize,
    pub rho: RhoMode,
    pub max_iters: usize,
    /// Stop once `‖∇F̃‖₂ ≤ grad_tol · d`.
    pub grad_tol: f64,
    /// Also stop once `F ≤ loss_tol · ‖ŷ‖²` (data fit reached); `0` disables.
    pub loss_tol: f64,
    pub use_regularizer: bool,
    /// Halve the step whenever a step would increase `F̃`.
    pub backtracking: bool,
    pub mu2: Option<f64>,
    pub nu2: Option<f64>,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            eta: StepSize::Auto,
            rho: RhoMode::Auto,
            max_iters: 5000,
            grad_tol: 1e-7,
            loss_tol: 0.0,
            use_regularizer: true,
            backtracking: true,
            mu2: None,
            nu2: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub iterations: usize,
    /// `F̃` at the start and after every accepted step.
    pub loss_trace: Vec<f64>,
    /// `‖u_t v̄_t* − h0 x̄0*‖_F / d0`, aligned with `loss_trace`; empty when no
    /// truth was supplied.
    pub error_trace: Vec<f64>,
    pub status: SolveStatus,
    pub eta: f64,
}

/// Scale of the automatic step: `η = 1 / (AUTO_STEP_FACTOR · d)`.
pub const AUTO_STEP_FACTOR: f64 = 4.0;

/// Step used by [`StepSize::Auto`].
pub fn auto_step(d: f64) -> f64 {
    1.0 / (AUTO_STEP_FACTOR * d)
}

/// `η = 1 / (10 d ‖A‖²)` with the operator norm from power iteration; the
/// conservative choice kept for comparison with [`auto_step`].
pub fn conservative_step(instance: &ProblemInstance, d: f64, seed: u64) -> Result<f64> {
    let est = operator_norm_estimate_seeded(instance, 500, 1e-8, seed)?;
    Ok(1.0 / (10.0 * d * est.value * est.value))
}

/// `‖u v̄* − h0 x̄0*‖_F` from the orthogonal split `u = α h0 + u⊥`, which
/// avoids the cancellation of the four-term expansion.
pub(crate) fn rank1_distance(u: &[Complex64], v: &[Complex64], h0: &[Complex64], x0: &[Complex64]) -> f64 {
    let hh = norm_sq(h0);
    let alpha = inner(u, h0) / hh;
    let perp = norm_sq(&u.iter().zip(h0).map(|(a, b)| a - alpha * b).collect::<Vec<_>>());
    let par = norm_sq(&v.iter().zip(x0).map(|(a, b)| alpha * a - b).collect::<Vec<_>>());
    (hh * par + perp * norm_sq(v)).max(0.0).sqrt()
}

/// `‖u v̄* − h0 x̄0*‖_F / ‖h0 x̄0*‖_F`, invariant to `(u, v) → (c u, v / c)`.
pub fn relative_error(u: &[Complex64], v: &[Complex64], h0: &[Complex64], x0: &[Complex64]) -> Result<f64> {
    ensure_len("u", u.len(), h0.len())?;
    ensure_len("v", v.len(), x0.len())?;
    let denom = (norm_sq(h0) * norm_sq(x0)).sqrt();
    if denom == 0.0 {
        return Err(DeconvError::Domain("zero ground truth".into()));
    }
    Ok(rank1_distance(u, v, h0, x0) / denom)
}

/// Regularized Wirtinger gradient descent with simultaneous updates of
/// `(u, v)` from `init`.
pub fn run_gradient_descent(
    instance: &ProblemInstance,
    measurements: &MeasurementSet,
    init: &Initialization,
    options: &SolveOptions,
    truth: Option<&GroundTruth>,
) -> Result<SolveResult> {
    instance.check_pair(&init.u0, &init.v0)?;
    if options.max_iters == 0 {
        return Err(DeconvError::Domain("max_iters must be at least 1".into()));
    }
    let d = init.d;
    if !(d > 0.0) {
        return Err(DeconvError::Domain("initialization has d <= 0".into()));
    }
    let regularizer = if options.use_regularizer {
        let rho = match options.rho {
            RhoMode::Auto => d * d,
            RhoMode::Explicit(r) => r,
        };
        Some(RegularizerParams::new(
            rho,
            d,
            options.mu2.unwrap_or(init.mu2),
            options.nu2.unwrap_or(init.nu2),
        )?)
    } else {
        None
    };
    let objective = Objective::new(instance, measurements, regularizer)?;
    let mut eta = match options.eta {
        StepSize::Fixed(e) if e > 0.0 => e,
        StepSize::Fixed(e) => return Err(DeconvError::Domain(format!("step size must be positive, got {e}"))),
        StepSize::Auto => auto_step(d),
    };
    let min_eta = eta * 1e-12;
    let error_of = |u: &[Complex64], v: &[Complex64]| truth.map(|t| rank1_distance(u, v, &t.h0, &t.x0) / t.d0);

    let (mut u, mut v) = (init.u0.clone(), init.v0.clone());
    let mut eval = objective.evaluate(&u, &v)?;
    let mut loss_trace = vec![eval.total()];
    let mut error_trace: Vec<f64> = error_of(&u, &v).into_iter().collect();
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let fit_target = options.loss_tol * norm_sq(&measurements.yhat);

    if !eval.total().is_finite() {
        status = SolveStatus::Diverged;
    } else {
        'outer: for t in 1..=options.max_iters {
            if eval.loss_f <= fit_target {
                status = SolveStatus::Converged;
                break;
            }
            let grad = objective.gradient(&u, &v, &eval);
            if grad.norm() <= options.grad_tol * d {
                status = SolveStatus::Converged;
                break;
            }
            loop {
                let nu: Vec<Complex64> = u.iter().zip(&grad.grad_h).map(|(a, g)| a - g * eta).collect();
                let nv: Vec<Complex64> = v.iter().zip(&grad.grad_x).map(|(a, g)| a - g * eta).collect();
                let next = objective.evaluate(&nu, &nv)?;
                let value = next.total();
                if !value.is_finite() && !options.backtracking {
                    status = SolveStatus::Diverged;
                    iterations = t;
                    break 'outer;
                }
                if options.backtracking && !(value <= eval.total()) {
                    eta *= 0.5;
                    if eta < min_eta {
                        // No representable decrease along the gradient.
                        status = SolveStatus::Converged;
                        break 'outer;
                    }
                    continue;
                }
                u = nu;
                v = nv;
                eval = next;
                break;
            }
            iterations = t;
            loss_trace.push(eval.total());
            if let Some(e) = error_of(&u, &v) {
                error_trace.push(e);
            }
        }
    }
    Ok(SolveResult {
        u,
        v,
        iterations,
        loss_trace,
        error_trace,
        status,
        eta,
    })
}

/// Initialization followed by gradient descent. Coherence targets come from
/// `options` (e.g. the ground truth in experiments) or are estimated.
pub fn solve(
    instance: &ProblemInstance,
    measurements: &MeasurementSet,
    options: &SolveOptions,
    truth: Option<&GroundTruth>,
) -> Result<(Initialization, SolveResult)> {
    let init = initialize_seeded(instance, measurements, options.mu2, options.nu2, options.seed)?;
    let result = run_gradient_descent(instance, measurements, &init, options, truth)?;
    Ok((init, result))
}

/// Membership of `(h, x)` in the magnitude, coherence and distance
/// neighborhoods of the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodFlags {
    pub in_nd0: bool,
    pub in_nmu: bool,
    pub in_nnu: bool,
    pub in_neps: bool,
    pub eps: f64,
}

impl NeighborhoodFlags {
    pub fn all(&self) -> bool {
        self.in_nd0 && self.in_nmu && self.in_nnu && self.in_neps
    }
}

/// Evaluates the four neighborhood predicates with every radius multiplied
/// by `scale` (`1` for the plain sets, `1/√3` for the shrunken ones).
#[allow(clippy::too_many_arguments)]
pub fn neighborhood_flags(
    instance: &ProblemInstance,
    h: &[Complex64],
    x: &[Complex64],
    truth: &GroundTruth,
    mu2: f64,
    nu2: f64,
    eps: f64,
    scale: f64,
) -> Result<NeighborhoodFlags> {
    instance.check_pair(h, x)?;
    let sd0 = truth.d0.sqrt();
    let l = instance.l() as f64;
    let qn = (instance.q() * instance.n()) as f64;
    let in_nd0 = norm_sq(h).sqrt() <= scale * 2.0 * sd0 && norm_sq(x).sqrt() <= scale * 2.0 * sd0;
    let in_nmu = l.sqrt() * peak(&instance.filter_spectrum(h)) <= scale * 4.0 * mu2.sqrt() * sd0;
    let in_nnu = qn.sqrt() * peak(&instance.synthesize_blocks(x)) <= scale * 4.0 * nu2.sqrt() * sd0;
    let in_neps = rank1_distance(h, x, &truth.h0, &truth.x0) <= scale * eps * truth.d0;
    Ok(NeighborhoodFlags {
        in_nd0,
        in_nmu,
        in_nnu,
        in_neps,
        eps,
    })
}
