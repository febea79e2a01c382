//! Problem instances: subspace bases, random modulations, ground truths and
//! synthetic Fourier-domain measurements.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dim_err, ensure_len, DeconvError, Result};
use crate::operator;
use crate::seed::rng_from_seed;
use crate::spectral::{Spectral, TransformDescriptor};
use crate::{norm_sq, C64_ZERO};

/// Which construction produced a [`SubspaceBasis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    DctColumns,
    FourierColumns,
    Dct2Mask,
    Custom,
}

/// Column selection for [`build_dct_subspace`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DctSelector {
    FirstK,
    Indices(Vec<usize>),
}

#[derive(Debug, Clone)]
enum BasisRepr {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
    /// Separable 2D DCT restricted to a set of `(row, col)` coefficients.
    /// `dh` and `dw` are row-major DCT-II matrices (`d[k * n + i]`).
    Separable {
        height: usize,
        width: usize,
        dh: Vec<f64>,
        dw: Vec<f64>,
        coeffs: Vec<(usize, usize)>,
    },
}

/// A `Q x K` matrix with orthonormal columns spanning the inputs.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    q: usize,
    k: usize,
    kind: BasisKind,
    repr: BasisRepr,
}

/// Orthonormal DCT-II matrix, row-major, row `k` is the `k`-th basis vector.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for k in 0..n {
        let alpha = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            d[k * n + i] = alpha * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    d
}

impl SubspaceBasis {
    /// Wraps an explicit matrix, checking that its columns are orthonormal.
    pub fn from_matrix(entries: DMatrix<Complex64>) -> Result<Self> {
        let (q, k) = entries.shape();
        if k == 0 || k > q {
            return dim_err(format!("basis must be tall and non-empty, got {q}x{k}"));
        }
        let gram = entries.adjoint() * &entries;
        let dev = (gram - DMatrix::<Complex64>::identity(k, k))
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()));
        if dev > 1e-10 {
            return dim_err(format!("basis columns are not orthonormal (deviation {dev:.3e})"));
        }
        Ok(SubspaceBasis {
            q,
            k,
            kind: BasisKind::Custom,
            repr: BasisRepr::Complex(entries),
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn is_real(&self) -> bool {
        !matches!(self.repr, BasisRepr::Complex(_))
    }

    /// Entry `C[row, col]`.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        match &self.repr {
            BasisRepr::Real(m) => Complex64::new(m[(row, col)], 0.0),
            BasisRepr::Complex(m) => m[(row, col)],
            BasisRepr::Separable {
                height,
                width,
                dh,
                dw,
                coeffs,
            } => {
                let (a, b) = coeffs[col];
                let (i, j) = (row / width, row % width);
                Complex64::new(dh[a * height + i] * dw[b * width + j], 0.0)
            }
        }
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        (0..self.q).map(|row| self.entry(row, col)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.q, self.k, |r, c| self.entry(r, c))
    }

    /// Largest entry magnitude `‖C‖_∞`.
    pub fn max_abs_entry(&self) -> f64 {
        match &self.repr {
            BasisRepr::Real(m) => m.iter().fold(0.0, |a, v| a.max(v.abs())),
            BasisRepr::Complex(m) => m.iter().fold(0.0, |a, v| a.max(v.norm())),
            BasisRepr::Separable {
                height,
                width,
                dh,
                dw,
                coeffs,
            } => {
                let row_max = |d: &[f64], n: usize, k: usize| {
                    d[k * n..(k + 1) * n].iter().fold(0.0f64, |a, v| a.max(v.abs()))
                };
                coeffs.iter().fold(0.0, |acc, &(a, b)| {
                    acc.max(row_max(dh, *height, a) * row_max(dw, *width, b))
                })
            }
        }
    }

    /// `C x` for a coefficient vector of length `K`.
    pub fn synthesize(&self, x: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.k);
        let mut out = vec![C64_ZERO; self.q];
        match &self.repr {
            BasisRepr::Real(m) => {
                for (col, &xk) in m.column_iter().zip(x) {
                    for (o, &c) in out.iter_mut().zip(col.iter()) {
                        *o += xk * c;
                    }
                }
            }
            BasisRepr::Complex(m) => {
                for (col, &xk) in m.column_iter().zip(x) {
                    for (o, &c) in out.iter_mut().zip(col.iter()) {
                        *o += xk * c;
                    }
                }
            }
            BasisRepr::Separable {
                height,
                width,
                dh,
                dw,
                coeffs,
            } => {
                let (h, w) = (*height, *width);
                // t[:, b] = sum_a dh[a, :] * g[a, b]
                let mut t = vec![C64_ZERO; h * w];
                let mut used = vec![false; w];
                for (&(a, b), &xk) in coeffs.iter().zip(x) {
                    used[b] = true;
                    for i in 0..h {
                        t[i * w + b] += xk * dh[a * h + i];
                    }
                }
                for i in 0..h {
                    let row = &mut out[i * w..(i + 1) * w];
                    for b in (0..w).filter(|&b| used[b]) {
                        let tib = t[i * w + b];
                        let basis = &dw[b * w..(b + 1) * w];
                        for (o, &d) in row.iter_mut().zip(basis) {
                            *o += tib * d;
                        }
                    }
                }
            }
        }
        out
    }

    /// `C* s` for a vector of length `Q`.
    pub fn analyze(&self, s: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(s.len(), self.q);
        match &self.repr {
            BasisRepr::Real(m) => m
                .column_iter()
                .map(|col| col.iter().zip(s).map(|(&c, &v)| v * c).sum())
                .collect(),
            BasisRepr::Complex(m) => m
                .column_iter()
                .map(|col| col.iter().zip(s).map(|(c, &v)| c.conj() * v).sum())
                .collect(),
            BasisRepr::Separable {
                height,
                width,
                dh,
                dw,
                coeffs,
            } => {
                let (h, w) = (*height, *width);
                // u[a, :] = sum_i dh[a, i] * img[i, :], only for rows in use
                let mut u: Vec<Option<Vec<Complex64>>> = vec![None; h];
                for &(a, _) in coeffs {
                    if u[a].is_none() {
                        let mut acc = vec![C64_ZERO; w];
                        for i in 0..h {
                            let d = dh[a * h + i];
                            for (o, &v) in acc.iter_mut().zip(&s[i * w..(i + 1) * w]) {
                                *o += v * d;
                            }
                        }
                        u[a] = Some(acc);
                    }
                }
                coeffs
                    .iter()
                    .map(|&(a, b)| {
                        let ua = u[a].as_ref().expect("row computed above");
                        ua.iter().zip(&dw[b * w..(b + 1) * w]).map(|(&v, &d)| v * d).sum()
                    })
                    .collect()
            }
        }
    }

    /// Largest entry of `|C* C - I|`.
    pub fn gram_deviation(&self) -> f64 {
        let c = self.to_dense();
        let gram = c.adjoint() * &c;
        (gram - DMatrix::<Complex64>::identity(self.k, self.k))
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// Orthonormal DCT-II columns of length `q`.
pub fn build_dct_subspace(q: usize, k: usize, selector: &DctSelector) -> Result<SubspaceBasis> {
    if k == 0 || k > q {
        return dim_err(format!("need 1 <= K <= Q, got K={k}, Q={q}"));
    }
    let indices: Vec<usize> = match selector {
        DctSelector::FirstK => (0..k).collect(),
        DctSelector::Indices(idx) => {
            if idx.len() != k {
                return dim_err(format!("selector has {} indices, K={k}", idx.len()));
            }
            check_distinct(idx.iter().copied(), q)?;
            idx.clone()
        }
    };
    let d = dct_matrix(q);
    let m = DMatrix::from_fn(q, k, |row, col| d[indices[col] * q + row]);
    Ok(SubspaceBasis {
        q,
        k,
        kind: BasisKind::DctColumns,
        repr: BasisRepr::Real(m),
    })
}

fn check_distinct(idx: impl Iterator<Item = usize>, bound: usize) -> Result<()> {
    let mut seen = vec![false; bound];
    for i in idx {
        if i >= bound {
            return dim_err(format!("index {i} out of range [0, {bound})"));
        }
        if std::mem::replace(&mut seen[i], true) {
            return dim_err(format!("duplicate index {i}"));
        }
    }
    Ok(())
}

/// Columns of the unitary `Q x Q` DFT at the given (possibly negative)
/// frequencies, taken modulo `Q`.
pub fn build_fourier_subspace(q: usize, k: usize, freqs: &[i64]) -> Result<SubspaceBasis> {
    if k == 0 || k > q || freqs.len() != k {
        return dim_err(format!(
            "need 1 <= K <= Q with K frequencies, got K={k}, Q={q}, {} frequencies",
            freqs.len()
        ));
    }
    let reduced: Vec<usize> = freqs.iter().map(|&f| f.rem_euclid(q as i64) as usize).collect();
    check_distinct(reduced.iter().copied(), q)?;
    let scale = 1.0 / (q as f64).sqrt();
    let m = DMatrix::from_fn(q, k, |row, col| {
        let phase = -2.0 * PI * ((row * reduced[col]) % q) as f64 / q as f64;
        Complex64::from_polar(scale, phase)
    });
    Ok(SubspaceBasis {
        q,
        k,
        kind: BasisKind::FourierColumns,
        repr: BasisRepr::Complex(m),
    })
}

/// 2D DCT atoms selected by a row-major `height x width` coefficient mask.
/// Columns follow the scan order of the mask.
pub fn build_dct2_mask_subspace(height: usize, width: usize, mask: &[bool]) -> Result<SubspaceBasis> {
    ensure_len("coefficient mask", mask.len(), height * width)?;
    let coeffs: Vec<(usize, usize)> = mask
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| (i / width, i % width))
        .collect();
    if coeffs.is_empty() {
        return dim_err("coefficient mask selects nothing");
    }
    Ok(SubspaceBasis {
        q: height * width,
        k: coeffs.len(),
        kind: BasisKind::Dct2Mask,
        repr: BasisRepr::Separable {
            height,
            width,
            dh: dct_matrix(height),
            dw: dct_matrix(width),
            coeffs,
        },
    })
}

/// Forward orthonormal 2D DCT of a row-major image.
pub fn dct2_forward(height: usize, width: usize, image: &[f64]) -> Vec<f64> {
    let (dh, dw) = (dct_matrix(height), dct_matrix(width));
    let mut tmp = vec![0.0; height * width];
    for a in 0..height {
        for i in 0..height {
            let d = dh[a * height + i];
            for j in 0..width {
                tmp[a * width + j] += d * image[i * width + j];
            }
        }
    }
    let mut out = vec![0.0; height * width];
    for a in 0..height {
        for b in 0..width {
            out[a * width + b] = (0..width).map(|j| tmp[a * width + j] * dw[b * width + j]).sum();
        }
    }
    out
}

/// Mask of the `k` 2D-DCT coefficients with the largest pooled magnitude
/// across `images`. Ties resolve toward lower scan index.
pub fn largest_dct2_mask(height: usize, width: usize, images: &[&[f64]], k: usize) -> Result<Vec<bool>> {
    let q = height * width;
    if k == 0 || k > q {
        return dim_err(format!("need 1 <= K <= {q}, got {k}"));
    }
    let mut energy = vec![0.0; q];
    for img in images {
        ensure_len("image", img.len(), q)?;
        for (e, c) in energy.iter_mut().zip(dct2_forward(height, width, img)) {
            *e += c * c;
        }
    }
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    let mut mask = vec![false; q];
    for &i in &order[..k] {
        mask[i] = true;
    }
    Ok(mask)
}

/// `N` Rademacher sign vectors of length `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationSet {
    signs: Vec<Vec<f64>>,
    seed: u64,
}

impl ModulationSet {
    /// Wraps explicit sign vectors; every entry must be exactly `±1`.
    pub fn from_signs(signs: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let q = signs.first().map_or(0, Vec::len);
        if q == 0 {
            return dim_err("modulation set needs at least one non-empty channel");
        }
        for s in &signs {
            ensure_len("sign vector", s.len(), q)?;
            if s.iter().any(|&v| v != 1.0 && v != -1.0) {
                return Err(DeconvError::Domain("modulation entries must be ±1".into()));
            }
        }
        Ok(ModulationSet { signs, seed })
    }

    pub fn channels(&self) -> usize {
        self.signs.len()
    }

    pub fn len(&self) -> usize {
        self.signs[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channel(&self, n: usize) -> &[f64] {
        &self.signs[n]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

pub fn sample_modulations(q: usize, n: usize, seed: u64) -> Result<ModulationSet> {
    if q == 0 || n == 0 {
        return dim_err("Q and N must be positive");
    }
    let mut rng = rng_from_seed(seed);
    let signs = (0..n)
        .map(|_| {
            (0..q)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();
    Ok(ModulationSet { signs, seed })
}

/// Everything that defines the linear map: dimensions, basis, signs and the
/// transform that diagonalizes the circular convolution.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    l: usize,
    q: usize,
    m: usize,
    k: usize,
    n: usize,
    basis: Arc<SubspaceBasis>,
    modulations: ModulationSet,
    transform: TransformDescriptor,
    filter_support: Vec<usize>,
    signal_support: Vec<usize>,
    spectral: Arc<Spectral>,
}

impl ProblemInstance {
    /// Builds an instance; `m` is the filter length. For 2D transforms `m`
    /// and the basis length must match the descriptor's block shapes.
    pub fn new(
        m: usize,
        basis: SubspaceBasis,
        modulations: ModulationSet,
        transform: TransformDescriptor,
    ) -> Result<Self> {
        let l = transform.len();
        let (q, k, n) = (basis.q(), basis.k(), modulations.channels());
        if m == 0 || q == 0 || k == 0 || n == 0 || l == 0 {
            return dim_err("all dimensions must be at least 1");
        }
        if l < q.max(m) {
            return dim_err(format!("need L >= max(Q, M), got L={l}, Q={q}, M={m}"));
        }
        if k > q {
            return dim_err(format!("need Q >= K, got Q={q}, K={k}"));
        }
        ensure_len("modulation", modulations.len(), q)?;
        let (filter_shape, signal_shape) = match transform {
            TransformDescriptor::Dft1d { .. } => ((1, m), (1, q)),
            TransformDescriptor::Dft2d {
                height,
                width,
                filter,
                signal,
            } => {
                if filter.0 * filter.1 != m || signal.0 * signal.1 != q {
                    return dim_err("2D block shapes disagree with M or Q");
                }
                if filter.0 > height || filter.1 > width || signal.0 > height || signal.1 > width {
                    return dim_err("2D blocks exceed the grid");
                }
                (filter, signal)
            }
        };
        Ok(ProblemInstance {
            l,
            q,
            m,
            k,
            n,
            basis: Arc::new(basis),
            filter_support: transform.support(m, filter_shape),
            signal_support: transform.support(q, signal_shape),
            spectral: Arc::new(Spectral::new(&transform)),
            modulations,
            transform,
        })
    }

    /// 1D instance of length `l` with a DCT basis and fresh signs.
    pub fn dct_1d(l: usize, q: usize, m: usize, k: usize, n: usize, seed: u64) -> Result<Self> {
        let basis = build_dct_subspace(q, k, &DctSelector::FirstK)?;
        let mods = sample_modulations(q, n, seed)?;
        Self::new(m, basis, mods, TransformDescriptor::Dft1d { len: l })
    }

    /// Same basis and transform with a different modulation draw.
    pub fn with_modulations(&self, modulations: ModulationSet) -> Result<Self> {
        ensure_len("modulation", modulations.len(), self.q)?;
        if modulations.channels() != self.n {
            return dim_err("channel count changed");
        }
        Ok(ProblemInstance {
            modulations,
            ..self.clone()
        })
    }

    pub fn l(&self) -> usize {
        self.l
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn basis(&self) -> &SubspaceBasis {
        &self.basis
    }
    pub fn modulations(&self) -> &ModulationSet {
        &self.modulations
    }
    pub fn transform(&self) -> &TransformDescriptor {
        &self.transform
    }

    /// Number of measurements `L N`.
    pub fn measurement_len(&self) -> usize {
        self.l * self.n
    }

    /// The `√L` factor that multiplies the product of the two spectra.
    pub(crate) fn sqrt_l(&self) -> f64 {
        (self.l as f64).sqrt()
    }

    pub(crate) fn filter_support(&self) -> &[usize] {
        &self.filter_support
    }

    pub(crate) fn signal_support(&self) -> &[usize] {
        &self.signal_support
    }

    /// `F_M h`: unitary spectrum of the zero-padded filter.
    pub(crate) fn filter_spectrum(&self, h: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![C64_ZERO; self.l];
        for (&p, &v) in self.filter_support.iter().zip(h) {
            buf[p] = v;
        }
        self.spectral.forward(&mut buf);
        let s = 1.0 / self.sqrt_l();
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    /// `F_M* v`.
    pub(crate) fn filter_spectrum_adjoint(&self, mut v: Vec<Complex64>) -> Vec<Complex64> {
        self.spectral.inverse(&mut v);
        let s = 1.0 / self.sqrt_l();
        self.filter_support.iter().map(|&p| v[p] * s).collect()
    }

    /// `F_Q R_n s` for a length-`Q` signal `s`.
    pub(crate) fn signal_spectrum(&self, n: usize, s: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![C64_ZERO; self.l];
        let r = self.modulations.channel(n);
        for ((&p, &v), &sign) in self.signal_support.iter().zip(s).zip(r) {
            buf[p] = v * sign;
        }
        self.spectral.forward(&mut buf);
        let sc = 1.0 / self.sqrt_l();
        buf.iter_mut().for_each(|v| *v *= sc);
        buf
    }

    /// `R_n F_Q* v`.
    pub(crate) fn signal_spectrum_adjoint(&self, n: usize, mut v: Vec<Complex64>) -> Vec<Complex64> {
        self.spectral.inverse(&mut v);
        let sc = 1.0 / self.sqrt_l();
        let r = self.modulations.channel(n);
        self.signal_support
            .iter()
            .zip(r)
            .map(|(&p, &sign)| v[p] * (sc * sign))
            .collect()
    }

    /// `C^{⊗N} x` (length `QN`).
    pub fn synthesize_blocks(&self, x: &[Complex64]) -> Vec<Complex64> {
        x.chunks(self.k)
            .flat_map(|xn| self.basis.synthesize(xn))
            .collect()
    }

    /// `(C^{⊗N})* s` (length `KN`).
    pub fn analyze_blocks(&self, s: &[Complex64]) -> Vec<Complex64> {
        s.chunks(self.q)
            .flat_map(|sn| self.basis.analyze(sn))
            .collect()
    }

    pub(crate) fn check_pair(&self, h: &[Complex64], x: &[Complex64]) -> Result<()> {
        ensure_len("h", h.len(), self.m)?;
        ensure_len("x", x.len(), self.k * self.n)
    }
}

/// Whether ground-truth draws are complex or real Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Field {
    #[default]
    Complex,
    Real,
}

/// The unknowns `(h0, x0)` with `‖h0‖ = ‖x0‖ = √d0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub h0: Vec<Complex64>,
    pub x0: Vec<Complex64>,
    pub d0: f64,
}

impl GroundTruth {
    /// Rescales `(h, x) -> (c h, x / c)` so both norms equal `√d0` with
    /// `d0 = ‖h‖‖x‖`. The rank-one product is unchanged.
    pub fn balanced(h: Vec<Complex64>, x: Vec<Complex64>) -> Result<Self> {
        let (nh, nx) = (norm_sq(&h).sqrt(), norm_sq(&x).sqrt());
        if !(nh > 0.0 && nx > 0.0) {
            return Err(DeconvError::Domain("ground truth must be nonzero".into()));
        }
        let c = (nx / nh).sqrt();
        Ok(GroundTruth {
            h0: h.into_iter().map(|v| v * c).collect(),
            x0: x.into_iter().map(|v| v / c).collect(),
            d0: nh * nx,
        })
    }
}

pub fn sample_ground_truth(m: usize, k: usize, n: usize, d0: f64, seed: u64) -> Result<GroundTruth> {
    sample_ground_truth_in(m, k, n, d0, seed, Field::Complex)
}

pub fn sample_ground_truth_in(
    m: usize,
    k: usize,
    n: usize,
    d0: f64,
    seed: u64,
    field: Field,
) -> Result<GroundTruth> {
    if !(d0 > 0.0 && d0.is_finite()) {
        return Err(DeconvError::Domain(format!("d0 must be positive, got {d0}")));
    }
    if m == 0 || k == 0 || n == 0 {
        return dim_err("M, K and N must be positive");
    }
    let mut rng = rng_from_seed(seed);
    let mut draw = |len: usize| -> Vec<Complex64> {
        let mut v: Vec<Complex64> = (0..len)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = match field {
                    Field::Complex => StandardNormal.sample(&mut rng),
                    Field::Real => 0.0,
                };
                Complex64::new(re, im)
            })
            .collect();
        let s = (d0 / norm_sq(&v)).sqrt();
        v.iter_mut().for_each(|z| *z *= s);
        v
    };
    let h0 = draw(m);
    let x0 = draw(k * n);
    Ok(GroundTruth { h0, x0, d0 })
}

/// Fourier-domain observations `ŷ = A(h0 x̄0*) + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub yhat: Vec<Complex64>,
    pub sigma: f64,
    pub noise: Vec<Complex64>,
    pub seed: u64,
}

impl MeasurementSet {
    /// Wraps externally supplied observations (no noise record).
    pub fn observed(yhat: Vec<Complex64>) -> Self {
        let len = yhat.len();
        MeasurementSet {
            yhat,
            sigma: 0.0,
            noise: vec![C64_ZERO; len],
            seed: 0,
        }
    }

    /// `ŷ` multiplied by a scalar (noise record scaled alike).
    pub fn scaled(&self, c: Complex64) -> Self {
        MeasurementSet {
            yhat: self.yhat.iter().map(|v| v * c).collect(),
            noise: self.noise.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

/// Noise entries are complex Gaussian with variance `σ² d0² / (L N)` split
/// evenly between real and imaginary parts.
pub fn synthesize_measurements(
    instance: &ProblemInstance,
    truth: &GroundTruth,
    sigma: f64,
    seed: u64,
) -> Result<MeasurementSet> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DeconvError::Domain(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let mut yhat = operator::apply_forward_rank1(instance, &truth.h0, &truth.x0)?;
    let len = yhat.len();
    let noise = if sigma == 0.0 {
        vec![C64_ZERO; len]
    } else {
        let std = sigma * truth.d0 / (2.0 * len as f64).sqrt();
        let mut rng = rng_from_seed(seed);
        (0..len)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re * std, im * std)
            })
            .collect()
    };
    if sigma > 0.0 {
        for (y, e) in yhat.iter_mut().zip(&noise) {
            *y += e;
        }
    }
    Ok(MeasurementSet {
        yhat,
        sigma,
        noise,
        seed,
    })
}

/// Peak-to-energy ratios of a filter spectrum, of subspace signals and of
/// the basis entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceProfile {
    pub mu2: f64,
    pub nu2: f64,
    pub nu_max2: f64,
}

pub fn coherence_profile(
    instance: &ProblemInstance,
    h: &[Complex64],
    x: &[Complex64],
) -> Result<CoherenceProfile> {
    instance.check_pair(h, x)?;
    let (hh, xx) = (norm_sq(h), norm_sq(x));
    if hh == 0.0 || xx == 0.0 {
        return Err(DeconvError::Domain("coherence of a zero vector".into()));
    }
    let peak = |v: &[Complex64]| v.iter().fold(0.0f64, |m, z| m.max(z.norm_sqr()));
    let mu2 = instance.l() as f64 * peak(&instance.filter_spectrum(h)) / hh;
    let qn = (instance.q() * instance.n()) as f64;
    let nu2 = qn * peak(&instance.synthesize_blocks(x)) / xx;
    let nu_max2 = instance.q() as f64 * instance.basis().max_abs_entry().powi(2);
    Ok(CoherenceProfile { mu2, nu2, nu_max2 })
}

/// `2D` instance used by the imaging demo: `L = Q = height * width`.
pub fn image_instance(
    height: usize,
    width: usize,
    kernel: (usize, usize),
    basis: SubspaceBasis,
    modulations: ModulationSet,
) -> Result<ProblemInstance> {
    ProblemInstance::new(
        kernel.0 * kernel.1,
        basis,
        modulations,
        TransformDescriptor::Dft2d {
            height,
            width,
            filter: kernel,
            signal: (height, width),
        },
    )
}
