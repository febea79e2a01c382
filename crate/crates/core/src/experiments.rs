//! Monte-Carlo harness: phase transitions, noise and oversampling sweeps, and
//! empirical isometry diagnostics.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{DeconvError, Result};
use crate::operator::apply_forward_rank1;
use crate::seed::{derive_seed, rng_from_seed, TAG_MODULATION, TAG_NOISE, TAG_SAMPLE, TAG_TRIAL, TAG_TRUTH};
use crate::signal_model::{
    coherence_profile, sample_ground_truth, sample_modulations, synthesize_measurements, GroundTruth,
    ProblemInstance,
};
use crate::solver::{rank1_distance, relative_error, solve, SolveOptions, SolveStatus};
use crate::norm_sq;

/// Success threshold on the relative error.
pub const SUCCESS_THRESHOLD: f64 = 1e-2;
/// Per-trial iteration cap in the harness.
pub const TRIAL_MAX_ITERS: usize = 3000;
/// Data-fit stopping level used by harness trials.
pub const TRIAL_LOSS_TOL: f64 = 1e-12;

/// Dimensions of a 1D instance with a first-`K` DCT subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub l: usize,
    pub q: usize,
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        let Dims { l, q, m, k, n } = *self;
        if l == 0 || q == 0 || m == 0 || k == 0 || n == 0 {
            return Err(DeconvError::Dimension(format!("all dimensions must be positive: {self:?}")));
        }
        if k > q || q > l || m > l {
            return Err(DeconvError::Dimension(format!("need K <= Q <= L and M <= L: {self:?}")));
        }
        Ok(())
    }

    pub fn get(&self, axis: Axis) -> usize {
        match axis {
            Axis::K => self.k,
            Axis::M => self.m,
            Axis::Q => self.q,
            Axis::N => self.n,
            Axis::L => self.l,
        }
    }

    pub fn with(mut self, axis: Axis, value: usize) -> Self {
        match axis {
            Axis::K => self.k = value,
            Axis::M => self.m = value,
            Axis::Q => self.q = value,
            Axis::N => self.n = value,
            Axis::L => self.l = value,
        }
        self
    }

    /// `LN / (KN + M)`.
    pub fn oversampling(&self) -> f64 {
        (self.l * self.n) as f64 / (self.k * self.n + self.m) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    K,
    M,
    Q,
    N,
    L,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::K => "K",
            Axis::M => "M",
            Axis::Q => "Q",
            Axis::N => "N",
            Axis::L => "L",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = DeconvError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "K" => Ok(Axis::K),
            "M" => Ok(Axis::M),
            "Q" => Ok(Axis::Q),
            "N" => Ok(Axis::N),
            "L" => Ok(Axis::L),
            other => Err(DeconvError::Config(format!("unknown axis '{other}' (expected K, M, Q, N or L)"))),
        }
    }
}

/// Everything a trial needs besides its dimensions and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSettings {
    pub d0: f64,
    pub threshold: f64,
    pub solver: SolveOptions,
}

impl Default for TrialSettings {
    fn default() -> Self {
        TrialSettings {
            d0: 1.0,
            threshold: SUCCESS_THRESHOLD,
            solver: SolveOptions {
                max_iters: TRIAL_MAX_ITERS,
                loss_tol: TRIAL_LOSS_TOL,
                ..SolveOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub error: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl TrialOutcome {
    /// Below threshold and terminated before the iteration cap.
    pub fn success(&self, threshold: f64) -> bool {
        self.status == SolveStatus::Converged && self.error < threshold
    }
}

/// One end-to-end trial: draw modulations and truth from `seed`, measure
/// with noise level `sigma`, initialize, descend, score.
pub fn run_trial(dims: Dims, sigma: f64, seed: u64, settings: &TrialSettings) -> Result<TrialOutcome> {
    dims.validate()?;
    let mods = sample_modulations(dims.q, dims.n, derive_seed(seed, TAG_MODULATION, 0))?;
    let basis = crate::signal_model::build_dct_subspace(dims.q, dims.k, &crate::signal_model::DctSelector::FirstK)?;
    let inst = ProblemInstance::new(
        dims.m,
        basis,
        mods,
        crate::spectral::TransformDescriptor::Dft1d { len: dims.l },
    )?;
    let truth = sample_ground_truth(dims.m, dims.k, dims.n, settings.d0, derive_seed(seed, TAG_TRUTH, 0))?;
    let meas = synthesize_measurements(&inst, &truth, sigma, derive_seed(seed, TAG_NOISE, 0))?;
    let prof = coherence_profile(&inst, &truth.h0, &truth.x0)?;
    let options = SolveOptions {
        mu2: Some(prof.mu2),
        nu2: Some(prof.nu2),
        seed,
        ..settings.solver
    };
    let (_, res) = solve(&inst, &meas, &options, None)?;
    let error = relative_error(&res.u, &res.v, &truth.h0, &truth.x0)?;
    Ok(TrialOutcome {
        error: if error.is_finite() { error } else { f64::INFINITY },
        iterations: res.iterations,
        status: res.status,
    })
}

/// Runs `f` on a pool capped by `MODDECONV_THREADS` (unset: rayon default).
pub fn with_harness_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var("MODDECONV_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0);
    match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// Success counts over a two-parameter grid; `counts[iy][ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub x_axis: Axis,
    pub y_axis: Axis,
    pub x_values: Vec<usize>,
    pub y_values: Vec<usize>,
    pub fixed: Dims,
    pub trials: usize,
    pub success_counts: Vec<Vec<usize>>,
    pub valid: Vec<Vec<bool>>,
    pub threshold: f64,
}

impl PhaseGrid {
    /// `None` for invalid cells.
    pub fn success_rate(&self, ix: usize, iy: usize) -> Option<f64> {
        self.valid[iy][ix].then(|| self.success_counts[iy][ix] as f64 / self.trials as f64)
    }

    pub fn cell_dims(&self, ix: usize, iy: usize) -> Dims {
        self.fixed
            .with(self.x_axis, self.x_values[ix])
            .with(self.y_axis, self.y_values[iy])
    }

    /// Number of valid cells with success rate at least `rate`.
    pub fn region_size(&self, rate: f64) -> usize {
        (0..self.y_values.len())
            .flat_map(|iy| (0..self.x_values.len()).map(move |ix| (ix, iy)))
            .filter(|&(ix, iy)| self.success_rate(ix, iy).is_some_and(|r| r >= rate))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpec {
    pub fixed: Dims,
    pub x_axis: Axis,
    pub x_values: Vec<usize>,
    pub y_axis: Axis,
    pub y_values: Vec<usize>,
    pub trials: usize,
    pub settings: TrialSettings,
}

/// Noiseless phase transition. Cell `c` (row-major over `y`, then `x`) and
/// trial `t` use seed `derive_seed(derive_seed(base, TRIAL, c), TRIAL, t)`.
pub fn run_phase_transition(spec: &PhaseSpec, base_seed: u64) -> Result<PhaseGrid> {
    if spec.x_axis == spec.y_axis {
        return Err(DeconvError::Config("phase grid axes must differ".into()));
    }
    if spec.trials == 0 || spec.x_values.is_empty() || spec.y_values.is_empty() {
        return Err(DeconvError::Config("phase grid needs trials and non-empty axes".into()));
    }
    let (nx, ny) = (spec.x_values.len(), spec.y_values.len());
    let cells: Vec<(usize, usize, Dims)> = (0..ny)
        .flat_map(|iy| (0..nx).map(move |ix| (ix, iy)))
        .map(|(ix, iy)| {
            let d = spec.fixed.with(spec.x_axis, spec.x_values[ix]).with(spec.y_axis, spec.y_values[iy]);
            (ix, iy, d)
        })
        .collect();
    let jobs: Vec<(usize, u64, Dims)> = cells
        .iter()
        .enumerate()
        .filter(|(_, (_, _, d))| d.validate().is_ok())
        .flat_map(|(c, &(_, _, d))| {
            let cell_seed = derive_seed(base_seed, TAG_TRIAL, c as u64);
            (0..spec.trials).map(move |t| (c, derive_seed(cell_seed, TAG_TRIAL, t as u64), d))
        })
        .collect();
    let outcomes: Vec<Result<(usize, bool)>> = with_harness_pool(|| {
        jobs.par_iter()
            .map(|&(c, seed, d)| run_trial(d, 0.0, seed, &spec.settings).map(|o| (c, o.success(spec.settings.threshold))))
            .collect()
    });
    let mut success_counts = vec![vec![0usize; nx]; ny];
    let mut valid = vec![vec![false; nx]; ny];
    for &(ix, iy, d) in &cells {
        valid[iy][ix] = d.validate().is_ok();
    }
    for o in outcomes {
        let (c, ok) = o?;
        if ok {
            let (ix, iy, _) = cells[c];
            success_counts[iy][ix] += 1;
        }
    }
    Ok(PhaseGrid {
        x_axis: spec.x_axis,
        y_axis: spec.y_axis,
        x_values: spec.x_values.clone(),
        y_values: spec.y_values.clone(),
        fixed: spec.fixed,
        trials: spec.trials,
        success_counts,
        valid,
        threshold: spec.settings.threshold,
    })
}

/// Per-abscissa error statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub abscissa_name: String,
    pub abscissa: Vec<f64>,
    /// Mean of `log10(max(error, 1e-16))`.
    pub mean_log_error: Vec<f64>,
    pub mean_error: Vec<f64>,
    pub median_error: Vec<f64>,
    pub trials: usize,
}

fn summarize(errors: &[f64]) -> (f64, f64, f64) {
    let n = errors.len() as f64;
    let mean_log = errors.iter().map(|e| e.max(1e-16).log10()).sum::<f64>() / n;
    let mean = errors.iter().sum::<f64>() / n;
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    (mean_log, mean, median)
}

fn sweep(
    name: &str,
    abscissa: Vec<f64>,
    cells: Vec<(Dims, f64)>,
    trials: usize,
    base_seed: u64,
    settings: &TrialSettings,
) -> Result<SweepTable> {
    if trials == 0 {
        return Err(DeconvError::Config("sweep needs at least one trial".into()));
    }
    // Trial t shares its seed across abscissa values (common random numbers),
    // so curves are not blurred by independent draws per point.
    let jobs: Vec<(usize, Dims, f64, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, &(d, sigma))| (0..trials).map(move |t| (c, d, sigma, derive_seed(base_seed, TAG_TRIAL, t as u64))))
        .collect();
    let errors: Vec<Result<f64>> = with_harness_pool(|| {
        jobs.par_iter()
            .map(|&(_, d, sigma, seed)| run_trial(d, sigma, seed, settings).map(|o| o.error))
            .collect()
    });
    let errors: Vec<f64> = errors.into_iter().collect::<Result<_>>()?;
    let mut table = SweepTable {
        abscissa_name: name.to_string(),
        abscissa,
        mean_log_error: vec![],
        mean_error: vec![],
        median_error: vec![],
        trials,
    };
    for chunk in errors.chunks(trials) {
        let (ml, m, med) = summarize(chunk);
        table.mean_log_error.push(ml);
        table.mean_error.push(m);
        table.median_error.push(med);
    }
    Ok(table)
}

/// `σ = 10^(−SNR/20)`; `+∞` dB is noiseless.
pub fn sigma_for_snr(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 20.0)
    }
}

/// Relative error against SNR (dB) at fixed dimensions.
pub fn run_noise_sweep(
    dims: Dims,
    snr_db: &[f64],
    trials: usize,
    base_seed: u64,
    settings: &TrialSettings,
) -> Result<SweepTable> {
    dims.validate()?;
    if let Some(bad) = snr_db.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
        return Err(DeconvError::Config(format!("invalid SNR {bad}")));
    }
    // Noise-free trials should not wait on a data-fit level they cannot reach.
    let mut noisy = *settings;
    noisy.solver.loss_tol = 0.0;
    let cells = snr_db.iter().map(|&s| (dims, sigma_for_snr(s))).collect();
    let mut table = sweep("snr_db", snr_db.to_vec(), cells, trials, base_seed, &noisy)?;
    if snr_db.iter().any(|s| s.is_infinite()) {
        // Re-run noiseless points with the usual data-fit stop.
        for (i, _) in snr_db.iter().enumerate().filter(|(_, s)| s.is_infinite()) {
            let t = sweep("snr_db", vec![f64::INFINITY], vec![(dims, 0.0)], trials, base_seed, settings)?;
            table.mean_log_error[i] = t.mean_log_error[0];
            table.mean_error[i] = t.mean_error[0];
            table.median_error[i] = t.median_error[0];
        }
    }
    Ok(table)
}

/// Noiseless error against oversampling `L / (K + M)` with `L = Q`, `N = 1`.
pub fn run_oversampling_sweep(
    k: usize,
    m: usize,
    ratios: &[f64],
    trials: usize,
    base_seed: u64,
    settings: &TrialSettings,
) -> Result<SweepTable> {
    let mut cells = Vec::with_capacity(ratios.len());
    for &r in ratios {
        if !(r >= 1.0) || !r.is_finite() {
            return Err(DeconvError::Config(format!("oversampling ratio must be finite and >= 1, got {r}")));
        }
        let l = (r * (k + m) as f64).round() as usize;
        let d = Dims { l, q: l, m, k, n: 1 };
        d.validate()?;
        cells.push((d, 0.0));
    }
    sweep("oversampling", ratios.to_vec(), cells, trials, base_seed, settings)
}

/// Ratios `‖A(hx̄* − h0x̄0*)‖² / ‖hx̄* − h0x̄0*‖_F²` at random points of the
/// coherence-bounded neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct RipReport {
    pub ratios: Vec<f64>,
    /// Total candidate draws, accepted or not.
    pub draws: usize,
    /// Set when a sample could not be accepted within the draw budget.
    pub exhausted: bool,
}

/// Draw budget per accepted sample.
pub const RIP_DRAW_LIMIT: usize = 10_000;

impl RipReport {
    pub fn fraction_within(&self, lo: f64, hi: f64) -> f64 {
        if self.ratios.is_empty() {
            return 0.0;
        }
        self.ratios.iter().filter(|&&r| r >= lo && r <= hi).count() as f64 / self.ratios.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.ratios.iter().sum::<f64>() / self.ratios.len().max(1) as f64
    }
}

fn gaussian_vec<R: Rng>(rng: &mut R, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect()
}

/// Samples `(h, x) = (h0 + a g, x0 + b w)` with Gaussian directions and
/// radii uniform in `[0, √d0]`, keeping those inside `N_d0 ∩ N_μ ∩ N_ν`.
pub fn empirical_rip_check(
    instance: &ProblemInstance,
    truth: &GroundTruth,
    samples: usize,
    base_seed: u64,
) -> Result<RipReport> {
    if samples == 0 {
        return Err(DeconvError::Config("samples must be >= 1".into()));
    }
    instance.check_pair(&truth.h0, &truth.x0)?;
    let prof = coherence_profile(instance, &truth.h0, &truth.x0)?;
    let y0 = apply_forward_rank1(instance, &truth.h0, &truth.x0)?;
    let sd0 = truth.d0.sqrt();
    let mut rng = rng_from_seed(derive_seed(base_seed, TAG_SAMPLE, 0));
    let mut report = RipReport {
        ratios: Vec::with_capacity(samples),
        draws: 0,
        exhausted: false,
    };
    'samples: for _ in 0..samples {
        for _ in 0..RIP_DRAW_LIMIT {
            report.draws += 1;
            let mut step = |base: &[Complex64]| {
                let g = gaussian_vec(&mut rng, base.len());
                let r = rng.random::<f64>() * sd0 / norm_sq(&g).sqrt();
                base.iter().zip(&g).map(|(b, gi)| b + gi * r).collect::<Vec<_>>()
            };
            let h = step(&truth.h0);
            let x = step(&truth.x0);
            let flags =
                crate::solver::neighborhood_flags(instance, &h, &x, truth, prof.mu2, prof.nu2, f64::INFINITY, 1.0)?;
            if !(flags.in_nd0 && flags.in_nmu && flags.in_nnu) {
                continue;
            }
            let denom = rank1_distance(&h, &x, &truth.h0, &truth.x0).powi(2);
            if denom == 0.0 {
                continue;
            }
            let y = apply_forward_rank1(instance, &h, &x)?;
            let num: f64 = y.iter().zip(&y0).map(|(a, b)| (a - b).norm_sqr()).sum();
            report.ratios.push(num / denom);
            continue 'samples;
        }
        report.exhausted = true;
        break;
    }
    Ok(report)
}

/// Mean of `‖A(h0x̄0*)‖² / ‖h0x̄0*‖_F²` over fresh modulation draws for a
/// fixed truth; its expectation is exactly one.
pub fn energy_ratio_mean(dims: Dims, draws: usize, base_seed: u64) -> Result<f64> {
    dims.validate()?;
    if draws == 0 {
        return Err(DeconvError::Config("draws must be >= 1".into()));
    }
    let truth = sample_ground_truth(dims.m, dims.k, dims.n, 1.0, derive_seed(base_seed, TAG_TRUTH, 0))?;
    let template = ProblemInstance::dct_1d(dims.l, dims.q, dims.m, dims.k, dims.n, base_seed)?;
    let denom = norm_sq(&truth.h0) * norm_sq(&truth.x0);
    let ratios: Vec<Result<f64>> = with_harness_pool(|| {
        (0..draws)
            .into_par_iter()
            .map(|i| {
                let mods = sample_modulations(dims.q, dims.n, derive_seed(base_seed, TAG_MODULATION, i as u64))?;
                let inst = template.with_modulations(mods)?;
                Ok(norm_sq(&apply_forward_rank1(&inst, &truth.h0, &truth.x0)?) / denom)
            })
            .collect()
    });
    let mut total = 0.0;
    for r in ratios {
        total += r?;
    }
    Ok(total / draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_settings() -> TrialSettings {
        TrialSettings::default()
    }

    #[test]
    fn axis_parsing_and_dims() {
        assert_eq!("k".parse::<Axis>().unwrap(), Axis::K);
        assert!("Z".parse::<Axis>().is_err());
        let d = Dims { l: 40, q: 40, m: 5, k: 5, n: 1 };
        assert_eq!(d.with(Axis::Q, 20).q, 20);
        assert!((d.oversampling() - 4.0).abs() < 1e-12);
        assert!(d.with(Axis::K, 50).validate().is_err());
    }

    #[test]
    fn phase_grid_is_deterministic_and_marks_invalid_cells() {
        let spec = PhaseSpec {
            fixed: Dims { l: 48, q: 48, m: 4, k: 4, n: 1 },
            x_axis: Axis::K,
            x_values: vec![4, 60],
            y_axis: Axis::M,
            y_values: vec![4],
            trials: 3,
            settings: small_settings(),
        };
        let a = run_phase_transition(&spec, 11).unwrap();
        let b = run_phase_transition(&spec, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.valid[0][0] && !a.valid[0][1]);
        assert_eq!(a.success_rate(1, 0), None);
        assert_eq!(a.success_counts[0][0], 3);
    }

    #[test]
    fn grossly_underdetermined_cell_fails() {
        let spec = PhaseSpec {
            fixed: Dims { l: 24, q: 24, m: 20, k: 20, n: 1 },
            x_axis: Axis::K,
            x_values: vec![20],
            y_axis: Axis::M,
            y_values: vec![20],
            trials: 2,
            settings: TrialSettings {
                solver: SolveOptions { max_iters: 300, ..small_settings().solver },
                ..small_settings()
            },
        };
        let g = run_phase_transition(&spec, 3).unwrap();
        assert_eq!(g.success_counts[0][0], 0);
    }

    #[test]
    fn noiseless_sweep_point_is_below_threshold() {
        let dims = Dims { l: 64, q: 64, m: 4, k: 4, n: 1 };
        let t = run_noise_sweep(dims, &[f64::INFINITY, 20.0], 3, 5, &small_settings()).unwrap();
        assert!(t.mean_error[0] < SUCCESS_THRESHOLD);
        assert!(t.mean_log_error[1] > t.mean_log_error[0]);
        assert_eq!(sigma_for_snr(20.0), 0.1);
    }

    #[test]
    fn oversampling_rejects_ratio_below_one() {
        assert!(run_oversampling_sweep(4, 4, &[0.5], 1, 0, &small_settings()).is_err());
    }

    #[test]
    fn rip_ratios_are_positive_and_seeded() {
        let inst = ProblemInstance::dct_1d(64, 64, 4, 4, 1, 2).unwrap();
        let truth = sample_ground_truth(4, 4, 1, 1.0, 9).unwrap();
        let a = empirical_rip_check(&inst, &truth, 20, 1).unwrap();
        let b = empirical_rip_check(&inst, &truth, 20, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ratios.len(), 20);
        assert!(!a.exhausted);
        assert!(a.ratios.iter().all(|&r| r > 0.0));
    }

    #[test]
    fn summary_statistics() {
        let (ml, m, med) = summarize(&[1e-3, 1e-1, 1.0]);
        assert!((ml + 4.0 / 3.0).abs() < 1e-12);
        assert!((m - 0.367).abs() < 1e-12);
        assert_eq!(med, 1e-1);
    }
}
