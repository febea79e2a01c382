//! The measurement loss `F`, the coherence regularizer `G` and their
//! Wirtinger gradients `∂/∂h̄`, `∂/∂x̄`.

use num_complex::Complex64;

use crate::error::{ensure_len, DeconvError, Result};
use crate::operator::{rank1_spectra, Rank1Spectra};
use crate::signal_model::{MeasurementSet, ProblemInstance};
use crate::{inner, norm_sq, C64_ZERO};

/// Weights of the regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerParams {
    pub rho: f64,
    pub d: f64,
    pub mu2: f64,
    pub nu2: f64,
}

impl RegularizerParams {
    pub fn new(rho: f64, d: f64, mu2: f64, nu2: f64) -> Result<Self> {
        if !(rho >= 0.0 && d > 0.0 && mu2 > 0.0 && nu2 > 0.0) {
            return Err(DeconvError::Domain(format!(
                "need rho >= 0, d > 0 and positive coherences (rho={rho}, d={d}, mu2={mu2}, nu2={nu2})"
            )));
        }
        Ok(RegularizerParams { rho, d, mu2, nu2 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub grad_h: Vec<Complex64>,
    pub grad_x: Vec<Complex64>,
}

impl GradientPair {
    pub fn zeros(m: usize, kn: usize) -> Self {
        GradientPair {
            grad_h: vec![C64_ZERO; m],
            grad_x: vec![C64_ZERO; kn],
        }
    }

    pub fn norm(&self) -> f64 {
        (norm_sq(&self.grad_h) + norm_sq(&self.grad_x)).sqrt()
    }

    pub fn add_assign(&mut self, other: &GradientPair) {
        for (a, b) in self.grad_h.iter_mut().zip(&other.grad_h) {
            *a += b;
        }
        for (a, b) in self.grad_x.iter_mut().zip(&other.grad_x) {
            *a += b;
        }
    }
}

/// `G0(z) = max(z - 1, 0)²` and its derivative, taken as `0` at `z = 1`.
pub fn g0_penalty(z: f64) -> (f64, f64) {
    let t = (z - 1.0).max(0.0);
    (t * t, 2.0 * t)
}

/// Cached quantities at one point `(h, x)`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss_f: f64,
    pub loss_g: f64,
    spectra: Rank1Spectra,
    residual: Vec<Complex64>,
}

impl Evaluation {
    pub fn total(&self) -> f64 {
        self.loss_f + self.loss_g
    }
}

/// `F̃ = F + G` (or `F` alone when no regularizer is attached).
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    instance: &'a ProblemInstance,
    measurements: &'a MeasurementSet,
    regularizer: Option<RegularizerParams>,
}

impl<'a> Objective<'a> {
    pub fn new(
        instance: &'a ProblemInstance,
        measurements: &'a MeasurementSet,
        regularizer: Option<RegularizerParams>,
    ) -> Result<Self> {
        ensure_len("measurements", measurements.yhat.len(), instance.measurement_len())?;
        Ok(Objective {
            instance,
            measurements,
            regularizer,
        })
    }

    pub fn regularizer(&self) -> Option<RegularizerParams> {
        self.regularizer
    }

    pub fn evaluate(&self, h: &[Complex64], x: &[Complex64]) -> Result<Evaluation> {
        self.instance.check_pair(h, x)?;
        let spectra = rank1_spectra(self.instance, h, x);
        let mut residual = spectra.measurements(self.instance.sqrt_l());
        for (r, y) in residual.iter_mut().zip(&self.measurements.yhat) {
            *r -= y;
        }
        let loss_f = norm_sq(&residual);
        let loss_g = match &self.regularizer {
            Some(p) => regularizer_value(p, self.instance, h, x, &spectra),
            None => 0.0,
        };
        Ok(Evaluation {
            loss_f,
            loss_g,
            spectra,
            residual,
        })
    }

    /// `(∇F̃_h, ∇F̃_x)` at the point that produced `eval`.
    pub fn gradient(&self, h: &[Complex64], x: &[Complex64], eval: &Evaluation) -> GradientPair {
        let mut g = loss_gradient(self.instance, &eval.spectra, &eval.residual);
        if let Some(p) = &self.regularizer {
            g.add_assign(&regularizer_gradient(p, self.instance, h, x, &eval.spectra));
        }
        g
    }
}

fn loss_gradient(instance: &ProblemInstance, spectra: &Rank1Spectra, residual: &[Complex64]) -> GradientPair {
    let (l, sqrt_l) = (instance.l(), instance.sqrt_l());
    let mut acc_h = vec![C64_ZERO; l];
    let mut grad_x = Vec::with_capacity(instance.k() * instance.n());
    for (n, (rn, sn)) in residual.chunks(l).zip(&spectra.modulated).enumerate() {
        for ((a, r), s) in acc_h.iter_mut().zip(rn).zip(sn) {
            *a += s.conj() * r * sqrt_l;
        }
        let weighted: Vec<Complex64> = rn
            .iter()
            .zip(&spectra.filter)
            .map(|(r, f)| f.conj() * r * sqrt_l)
            .collect();
        let back = instance.signal_spectrum_adjoint(n, weighted);
        grad_x.extend(instance.basis().analyze(&back));
    }
    GradientPair {
        grad_h: instance.filter_spectrum_adjoint(acc_h),
        grad_x,
    }
}

fn coherence_scales(p: &RegularizerParams, instance: &ProblemInstance) -> (f64, f64) {
    let l = instance.l() as f64;
    let qn = (instance.q() * instance.n()) as f64;
    (l / (8.0 * p.d * p.mu2), qn / (8.0 * p.d * p.nu2))
}

fn regularizer_value(
    p: &RegularizerParams,
    instance: &ProblemInstance,
    h: &[Complex64],
    x: &[Complex64],
    spectra: &Rank1Spectra,
) -> f64 {
    let (sh, sx) = coherence_scales(p, instance);
    let norms = g0_penalty(norm_sq(h) / (2.0 * p.d)).0 + g0_penalty(norm_sq(x) / (2.0 * p.d)).0;
    let spec: f64 = spectra.filter.iter().map(|f| g0_penalty(sh * f.norm_sqr()).0).sum();
    let sig: f64 = spectra.signals.iter().map(|s| g0_penalty(sx * s.norm_sqr()).0).sum();
    p.rho * (norms + spec + sig)
}

fn regularizer_gradient(
    p: &RegularizerParams,
    instance: &ProblemInstance,
    h: &[Complex64],
    x: &[Complex64],
    spectra: &Rank1Spectra,
) -> GradientPair {
    let (sh, sx) = coherence_scales(p, instance);
    let outer = p.rho / (2.0 * p.d);
    let dh = g0_penalty(norm_sq(h) / (2.0 * p.d)).1;
    let dx = g0_penalty(norm_sq(x) / (2.0 * p.d)).1;
    let mut grad_h: Vec<Complex64> = h.iter().map(|v| v * (outer * dh)).collect();
    let mut grad_x: Vec<Complex64> = x.iter().map(|v| v * (outer * dx)).collect();

    let spec_w: Vec<Complex64> = spectra
        .filter
        .iter()
        .map(|f| f * g0_penalty(sh * f.norm_sqr()).1)
        .collect();
    if spec_w.iter().any(|v| *v != C64_ZERO) {
        let c = outer * instance.l() as f64 / (4.0 * p.mu2);
        for (g, v) in grad_h.iter_mut().zip(instance.filter_spectrum_adjoint(spec_w)) {
            *g += v * c;
        }
    }
    let sig_w: Vec<Complex64> = spectra
        .signals
        .iter()
        .map(|s| s * g0_penalty(sx * s.norm_sqr()).1)
        .collect();
    if sig_w.iter().any(|v| *v != C64_ZERO) {
        let c = outer * (instance.q() * instance.n()) as f64 / (4.0 * p.nu2);
        for (g, v) in grad_x.iter_mut().zip(instance.analyze_blocks(&sig_w)) {
            *g += v * c;
        }
    }
    GradientPair { grad_h, grad_x }
}

/// `F(h, x) = ‖A(h x̄*) − ŷ‖²`.
pub fn loss_f(
    instance: &ProblemInstance,
    measurements: &MeasurementSet,
    h: &[Complex64],
    x: &[Complex64],
) -> Result<f64> {
    Ok(Objective::new(instance, measurements, None)?.evaluate(h, x)?.loss_f)
}

/// `G(h, x)`: norm penalties plus per-frequency and per-sample coherence
/// penalties, all scaled by `ρ`.
pub fn regularizer_g(
    params: &RegularizerParams,
    instance: &ProblemInstance,
    h: &[Complex64],
    x: &[Complex64],
) -> Result<f64> {
    instance.check_pair(h, x)?;
    let spectra = rank1_spectra(instance, h, x);
    Ok(regularizer_value(params, instance, h, x, &spectra))
}

pub fn grad_f(
    instance: &ProblemInstance,
    measurements: &MeasurementSet,
    h: &[Complex64],
    x: &[Complex64],
) -> Result<GradientPair> {
    let obj = Objective::new(instance, measurements, None)?;
    let eval = obj.evaluate(h, x)?;
    Ok(obj.gradient(h, x, &eval))
}

pub fn grad_g(
    params: &RegularizerParams,
    instance: &ProblemInstance,
    h: &[Complex64],
    x: &[Complex64],
) -> Result<GradientPair> {
    instance.check_pair(h, x)?;
    let spectra = rank1_spectra(instance, h, x);
    Ok(regularizer_gradient(params, instance, h, x, &spectra))
}

/// Part of `F̃` targeted by [`directional_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    F,
    G,
    Total,
}

/// Analytic `2 Re⟨∇, δ⟩` against a central difference along `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalCheck {
    pub analytic: f64,
    pub numeric: f64,
    /// Some penalty argument sits within `1e-3` of the `G0` kink at 1, where
    /// the second derivative jumps and differences lose accuracy.
    pub near_kink: bool,
}

impl DirectionalCheck {
    pub fn relative_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(1e-300)
    }
}

fn near_kink(p: &RegularizerParams, instance: &ProblemInstance, h: &[Complex64], x: &[Complex64]) -> bool {
    let spectra = rank1_spectra(instance, h, x);
    let (sh, sx) = coherence_scales(p, instance);
    let close = |z: f64| (z - 1.0).abs() < 1e-3;
    close(norm_sq(h) / (2.0 * p.d))
        || close(norm_sq(x) / (2.0 * p.d))
        || spectra.filter.iter().any(|f| close(sh * f.norm_sqr()))
        || spectra.signals.iter().any(|s| close(sx * s.norm_sqr()))
}

/// Directional derivative check of one term at `(h, x)` along `(dh, dx)`.
#[allow(clippy::too_many_arguments)]
pub fn directional_check(
    instance: &ProblemInstance,
    measurements: &MeasurementSet,
    params: &RegularizerParams,
    term: Term,
    (h, x): (&[Complex64], &[Complex64]),
    (dh, dx): (&[Complex64], &[Complex64]),
    step: f64,
) -> Result<DirectionalCheck> {
    instance.check_pair(h, x)?;
    instance.check_pair(dh, dx)?;
    let value = |hh: &[Complex64], xx: &[Complex64]| -> Result<f64> {
        Ok(match term {
            Term::F => loss_f(instance, measurements, hh, xx)?,
            Term::G => regularizer_g(params, instance, hh, xx)?,
            Term::Total => Objective::new(instance, measurements, Some(*params))?.evaluate(hh, xx)?.total(),
        })
    };
    let grad = match term {
        Term::F => grad_f(instance, measurements, h, x)?,
        Term::G => grad_g(params, instance, h, x)?,
        Term::Total => {
            let obj = Objective::new(instance, measurements, Some(*params))?;
            let eval = obj.evaluate(h, x)?;
            obj.gradient(h, x, &eval)
        }
    };
    let analytic = 2.0 * (inner(dh, &grad.grad_h) + inner(dx, &grad.grad_x)).re;
    let shift = |s: f64| -> (Vec<Complex64>, Vec<Complex64>) {
        (
            h.iter().zip(dh).map(|(a, b)| a + b * s).collect(),
            x.iter().zip(dx).map(|(a, b)| a + b * s).collect(),
        )
    };
    let (hp, xp) = shift(step);
    let (hm, xm) = shift(-step);
    let numeric = (value(&hp, &xp)? - value(&hm, &xm)?) / (2.0 * step);
    let near = term != Term::F
        && (near_kink(params, instance, h, x) || near_kink(params, instance, &hp, &xp) || near_kink(params, instance, &hm, &xm));
    Ok(DirectionalCheck {
        analytic,
        numeric,
        near_kink: near,
    })
}
