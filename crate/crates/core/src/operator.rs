//! The measurement map `A` and its adjoint, plus dense oracles.
//!
//! Block `n` of `A(h x̄*)` is `√L (F_M h ⊙ F_Q R_n C x_n)` with unitary DFTs.
//! A general `M x KN` matrix `X` maps entrywise to `f_ℓ* X ĉ_{ℓ,n}`, where
//! `f_ℓ*` is row `ℓ` of `F_M` and `ĉ_{ℓ,n}` holds row `ℓ` of
//! `√L F_Q R_n C` (unconjugated) in block `n`. With this bookkeeping the
//! rank-one lift of `(h, x)` is `h x̄*`, and `A(h x̄*)` reproduces the
//! time-domain model `h ⊛ (r_n ⊙ C x_n)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_len, DeconvError, Result};
use crate::seed::{derive_seed, rng_from_seed, TAG_POWER};
use crate::signal_model::ProblemInstance;
use crate::C64_ZERO;

/// Largest `LN · M · KN` the dense oracles accept.
pub const DENSE_GUARD: usize = 10_000_000;

/// An `M x KN` matrix in the lifted domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrix(pub DMatrix<Complex64>);

impl LiftedMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LiftedMatrix(DMatrix::zeros(rows, cols))
    }

    /// `h x̄*`, i.e. entry `(i, j) = h_i x_j`.
    pub fn rank1(h: &[Complex64], x: &[Complex64]) -> Self {
        LiftedMatrix(DMatrix::from_fn(h.len(), x.len(), |i, j| h[i] * x[j]))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self, other⟩ = tr(other* self)`.
    pub fn inner(&self, other: &LiftedMatrix) -> Complex64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        LiftedMatrix(self.0.map(|v| v * c))
    }

    pub fn plus(&self, other: &LiftedMatrix) -> Self {
        LiftedMatrix(&self.0 + &other.0)
    }
}

fn check_lifted(instance: &ProblemInstance, x: &LiftedMatrix) -> Result<()> {
    let want = (instance.m(), instance.k() * instance.n());
    if x.shape() != want {
        return Err(DeconvError::Dimension(format!(
            "lifted matrix is {:?}, expected {:?}",
            x.shape(),
            want
        )));
    }
    Ok(())
}

/// Spectra shared by the forward map, the loss and its gradients.
#[derive(Debug, Clone)]
pub(crate) struct Rank1Spectra {
    /// `F_M h`.
    pub filter: Vec<Complex64>,
    /// `C^{⊗N} x`.
    pub signals: Vec<Complex64>,
    /// `F_Q R_n C x_n` per channel.
    pub modulated: Vec<Vec<Complex64>>,
}

pub(crate) fn rank1_spectra(instance: &ProblemInstance, h: &[Complex64], x: &[Complex64]) -> Rank1Spectra {
    let signals = instance.synthesize_blocks(x);
    let modulated = signals
        .chunks(instance.q())
        .enumerate()
        .map(|(n, s)| instance.signal_spectrum(n, s))
        .collect();
    Rank1Spectra {
        filter: instance.filter_spectrum(h),
        signals,
        modulated,
    }
}

impl Rank1Spectra {
    pub(crate) fn measurements(&self, sqrt_l: f64) -> Vec<Complex64> {
        self.modulated
            .iter()
            .flat_map(|sn| self.filter.iter().zip(sn).map(move |(a, b)| a * b * sqrt_l))
            .collect()
    }
}

/// `A(h x̄*)` through `O(N L log L)` FFTs; the lifted matrix is never formed.
pub fn apply_forward_rank1(instance: &ProblemInstance, h: &[Complex64], x: &[Complex64]) -> Result<Vec<Complex64>> {
    instance.check_pair(h, x)?;
    Ok(rank1_spectra(instance, h, x).measurements(instance.sqrt_l()))
}

/// Observations `√L F_M h ⊙ F_Q R_n s_n` of arbitrary length-`QN` inputs
/// `s` that need not lie in the subspace.
pub fn apply_to_signals(instance: &ProblemInstance, h: &[Complex64], signals: &[Complex64]) -> Result<Vec<Complex64>> {
    ensure_len("h", h.len(), instance.m())?;
    ensure_len("signals", signals.len(), instance.q() * instance.n())?;
    let filter = instance.filter_spectrum(h);
    let sqrt_l = instance.sqrt_l();
    Ok(signals
        .chunks(instance.q())
        .enumerate()
        .flat_map(|(n, s)| {
            let sn = instance.signal_spectrum(n, s);
            filter.iter().zip(sn).map(|(a, b)| a * b * sqrt_l).collect::<Vec<_>>()
        })
        .collect())
}

/// `B_{n,k} = F_Q R_n C e_k`, the spectrum of one modulated basis column.
fn modulated_column(instance: &ProblemInstance, n: usize, k: usize) -> Vec<Complex64> {
    instance.signal_spectrum(n, &instance.basis().column(k))
}

/// `A(X)` for an arbitrary `M x KN` matrix.
pub fn apply_forward_general(instance: &ProblemInstance, x: &LiftedMatrix) -> Result<Vec<Complex64>> {
    check_lifted(instance, x)?;
    let (l, k, sqrt_l) = (instance.l(), instance.k(), instance.sqrt_l());
    let mut out = Vec::with_capacity(instance.measurement_len());
    for n in 0..instance.n() {
        let mut acc = vec![C64_ZERO; l];
        for kk in 0..k {
            let col: Vec<Complex64> = x.0.column(n * k + kk).iter().copied().collect();
            if col.iter().all(|v| *v == C64_ZERO) {
                continue;
            }
            let fh = instance.filter_spectrum(&col);
            let b = modulated_column(instance, n, kk);
            for ((a, f), bb) in acc.iter_mut().zip(&fh).zip(&b) {
                *a += f * bb;
            }
        }
        out.extend(acc.into_iter().map(|v| v * sqrt_l));
    }
    Ok(out)
}

/// `A*(y) = Σ y_n[ℓ] f_ℓ ĉ*_{ℓ,n}`, built column by column with FFTs.
pub fn apply_adjoint(instance: &ProblemInstance, y: &[Complex64]) -> Result<LiftedMatrix> {
    ensure_len("y", y.len(), instance.measurement_len())?;
    let (l, k, sqrt_l) = (instance.l(), instance.k(), instance.sqrt_l());
    let mut out = LiftedMatrix::zeros(instance.m(), k * instance.n());
    for (n, yn) in y.chunks(l).enumerate() {
        for kk in 0..k {
            let b = modulated_column(instance, n, kk);
            let v: Vec<Complex64> = yn.iter().zip(&b).map(|(a, bb)| a * bb.conj() * sqrt_l).collect();
            let col = instance.filter_spectrum_adjoint(v);
            out.0.column_mut(n * k + kk).iter_mut().zip(col).for_each(|(o, c)| *o = c);
        }
    }
    Ok(out)
}

/// Result of the power iteration for `‖A‖_{2→2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `A*A` from a fixed-seed Gaussian start.
pub fn operator_norm_estimate(instance: &ProblemInstance, max_iters: usize, tol: f64) -> Result<NormEstimate> {
    operator_norm_estimate_seeded(instance, max_iters, tol, 0)
}

pub fn operator_norm_estimate_seeded(
    instance: &ProblemInstance,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<NormEstimate> {
    if max_iters == 0 {
        return Err(DeconvError::Domain("max_iters must be at least 1".into()));
    }
    let (rows, cols) = (instance.m(), instance.k() * instance.n());
    let mut rng = rng_from_seed(derive_seed(seed, TAG_POWER, 0));
    let mut x = LiftedMatrix(DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    }));
    let norm = x.frobenius_norm();
    x = x.scaled(Complex64::new(1.0 / norm, 0.0));
    let mut eig = 0.0f64;
    for it in 1..=max_iters {
        let next = apply_adjoint(instance, &apply_forward_general(instance, &x)?)?;
        let new_eig = next.frobenius_norm();
        if new_eig == 0.0 {
            return Ok(NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            });
        }
        x = next.scaled(Complex64::new(1.0 / new_eig, 0.0));
        let change = (new_eig - eig).abs() / new_eig;
        eig = new_eig;
        if change < tol {
            return Ok(NormEstimate {
                value: eig.sqrt(),
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(NormEstimate {
        value: eig.sqrt(),
        iterations: max_iters,
        converged: false,
    })
}

fn guard(instance: &ProblemInstance) -> Result<()> {
    let size = instance.measurement_len() * instance.m() * instance.k() * instance.n();
    if size > DENSE_GUARD {
        return Err(DeconvError::SizeGuard {
            size,
            limit: DENSE_GUARD,
        });
    }
    Ok(())
}

/// The defining vector `ĉ_{ℓ,n}` restricted to block `n` (length `K`).
pub fn measurement_row(instance: &ProblemInstance, ell: usize, n: usize) -> Vec<Complex64> {
    let desc = instance.transform();
    let signs = instance.modulations().channel(n);
    let sqrt_l = instance.sqrt_l();
    (0..instance.k())
        .map(|k| {
            instance
                .signal_support()
                .iter()
                .enumerate()
                .map(|(q, &p)| desc.dft_entry(ell, p) * signs[q] * instance.basis().entry(q, k))
                .sum::<Complex64>()
                * sqrt_l
        })
        .collect()
}

/// The defining vector `f_ℓ` (length `M`), the conjugate of row `ℓ` of `F_M`.
pub fn filter_row(instance: &ProblemInstance, ell: usize) -> Vec<Complex64> {
    let desc = instance.transform();
    instance
        .filter_support()
        .iter()
        .map(|&p| desc.dft_entry(ell, p).conj())
        .collect()
}

/// Literal entrywise evaluation of `f_ℓ* X ĉ_{ℓ,n}` with no FFT.
pub fn dense_measurement_oracle(instance: &ProblemInstance, x: &LiftedMatrix) -> Result<Vec<Complex64>> {
    guard(instance)?;
    check_lifted(instance, x)?;
    let k = instance.k();
    let mut out = Vec::with_capacity(instance.measurement_len());
    for n in 0..instance.n() {
        for ell in 0..instance.l() {
            let f = filter_row(instance, ell);
            let c = measurement_row(instance, ell, n);
            let mut acc = C64_ZERO;
            for (m, fm) in f.iter().enumerate() {
                for (kk, ck) in c.iter().enumerate() {
                    acc += fm.conj() * x.0[(m, n * k + kk)] * ck;
                }
            }
            out.push(acc);
        }
    }
    Ok(out)
}

/// Dense `circ(h)`: `L x Q`, column `q` is `h` shifted to the grid position
/// of input sample `q`.
fn circulant(instance: &ProblemInstance, h: &[Complex64]) -> DMatrix<Complex64> {
    let desc = instance.transform();
    let mut grid = vec![C64_ZERO; instance.l()];
    for (&p, &v) in instance.filter_support().iter().zip(h) {
        grid[p] = v;
    }
    let sig = instance.signal_support();
    DMatrix::from_fn(instance.l(), instance.q(), |row, q| grid[desc.wrap_sub(row, sig[q])])
}

/// Per channel, the `L x Q` blocks of `H_h X_x` and `H_{h0} X_{x0}`.
fn chaos_blocks(
    instance: &ProblemInstance,
    h: &[Complex64],
    x: &[Complex64],
    h0: &[Complex64],
    x0: &[Complex64],
) -> Result<Vec<DMatrix<Complex64>>> {
    guard(instance)?;
    instance.check_pair(h, x)?;
    instance.check_pair(h0, x0)?;
    let (ch, ch0) = (circulant(instance, h), circulant(instance, h0));
    let (s, s0) = (instance.synthesize_blocks(x), instance.synthesize_blocks(x0));
    let q = instance.q();
    Ok((0..instance.n())
        .map(|n| {
            DMatrix::from_fn(instance.l(), q, |row, col| {
                ch[(row, col)] * s[n * q + col] - ch0[(row, col)] * s0[n * q + col]
            })
        })
        .collect())
}

/// `‖(H_h X_x − H_{h0} X_{x0}) r‖²` with `r` the instance's stacked signs.
pub fn chaos_oracle(
    instance: &ProblemInstance,
    h: &[Complex64],
    x: &[Complex64],
    h0: &[Complex64],
    x0: &[Complex64],
) -> Result<f64> {
    let blocks = chaos_blocks(instance, h, x, h0, x0)?;
    Ok(blocks
        .iter()
        .enumerate()
        .map(|(n, b)| {
            let r = instance.modulations().channel(n);
            let v = b * nalgebra::DVector::from_iterator(r.len(), r.iter().map(|&s| Complex64::new(s, 0.0)));
            v.iter().map(|z| z.norm_sqr()).sum::<f64>()
        })
        .sum())
}

/// `‖H_h X_x − H_{h0} X_{x0}‖_F`.
pub fn chaos_frobenius(
    instance: &ProblemInstance,
    h: &[Complex64],
    x: &[Complex64],
    h0: &[Complex64],
    x0: &[Complex64],
) -> Result<f64> {
    let blocks = chaos_blocks(instance, h, x, h0, x0)?;
    Ok(blocks
        .iter()
        .map(|b| b.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt())
}
