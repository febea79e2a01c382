//! Random-mask image deblurring: `N` images pass through their own ±1 mask
//! and then one shared unknown blur; both are recovered jointly.

use num_complex::Complex64;
use rand::Rng;

use super::pgm::GrayImage;
use crate::error::{DeconvError, Result};
use crate::operator::apply_to_signals;
use crate::seed::{derive_seed, rng_from_seed, TAG_MODULATION, TAG_TRUTH};
use crate::signal_model::{
    build_dct2_mask_subspace, image_instance, largest_dct2_mask, sample_modulations, MeasurementSet,
};
use crate::solver::{solve, SolveOptions, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeblurOptions {
    pub blur_size: usize,
    pub blur_sigma: f64,
    /// Number of retained 2D-DCT coefficients.
    pub k: usize,
    pub seed: u64,
    pub solver: SolveOptions,
}

impl DeblurOptions {
    /// 64×64-scale defaults: 5×5 blur, 15% of coefficients for 4096 pixels.
    pub fn desk() -> Self {
        DeblurOptions {
            blur_size: 5,
            blur_sigma: 1.3,
            k: 614,
            seed: 0,
            solver: SolveOptions {
                max_iters: 5000,
                ..SolveOptions::default()
            },
        }
    }

    /// 150×150 reference setting: 10×10 blur of variance 7, K = 3400.
    pub fn full() -> Self {
        DeblurOptions {
            blur_size: 10,
            blur_sigma: 7f64.sqrt(),
            k: 3400,
            ..Self::desk()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeblurMetrics {
    /// `Σ‖ŝ_n − s_n‖² / Σ‖s_n‖²` against the original images.
    pub image_mse: f64,
    /// Same, against the images' projections onto the DCT subspace.
    pub model_mse: f64,
    /// `‖k̂ − k‖² / ‖k‖²` with both kernels scaled to unit sum.
    pub kernel_mse: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone)]
pub struct DeblurOutput {
    pub recovered: Vec<GrayImage>,
    /// Blurred, masked observations (circular, real part).
    pub observed: Vec<GrayImage>,
    /// Unit-sum estimate, row-major `blur_size × blur_size`.
    pub kernel: Vec<f64>,
    pub metrics: DeblurMetrics,
}

/// Sampled Gaussian on a `size × size` grid, normalized to unit sum.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size == 0 || !(sigma > 0.0) {
        return Err(DeconvError::Domain("blur needs size >= 1 and sigma > 0".into()));
    }
    let c = (size as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..size * size)
        .map(|i| {
            let (r, s) = ((i / size) as f64 - c, (i % size) as f64 - c);
            (-(r * r + s * s) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

/// Smooth blob images loosely resembling cells under a microscope.
pub fn synthetic_cells(size: usize, count: usize, seed: u64) -> Result<Vec<GrayImage>> {
    (0..count)
        .map(|n| {
            let mut rng = rng_from_seed(derive_seed(seed, TAG_TRUTH, n as u64));
            let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
                .map(|_| {
                    let s = size as f64;
                    (
                        rng.random_range(0.15 * s..0.85 * s),
                        rng.random_range(0.15 * s..0.85 * s),
                        rng.random_range(0.06 * s..0.16 * s),
                        rng.random_range(0.4..1.0),
                    )
                })
                .collect();
            let mut px: Vec<f64> = (0..size * size)
                .map(|i| {
                    let (r, c) = ((i / size) as f64, (i % size) as f64);
                    0.1 + blobs
                        .iter()
                        .map(|&(br, bc, rad, amp)| {
                            amp * (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * rad * rad)).exp()
                        })
                        .sum::<f64>()
                })
                .collect();
            let peak = px.iter().cloned().fold(0.0, f64::max);
            px.iter_mut().for_each(|p| *p /= peak);
            GrayImage::new(size, size, px)
        })
        .collect()
}

/// Circular 2D convolution with a kernel anchored at the origin.
fn circular_blur(img: &[f64], h: usize, w: usize, kernel: &[f64], kh: usize, kw: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for a in 0..kh {
                for b in 0..kw {
                    acc += kernel[a * kw + b] * img[((r + h - a) % h) * w + (c + w - b) % w];
                }
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Full demo with a Gaussian blur built from `options`.
pub fn deblur_demo(images: &[GrayImage], options: &DeblurOptions) -> Result<DeblurOutput> {
    let kernel = gaussian_kernel(options.blur_size, options.blur_sigma)?;
    deblur_with_kernel(images, &kernel, (options.blur_size, options.blur_size), options)
}

/// Blurs the masked `images` with `kernel` (used as ground truth) and
/// recovers images and kernel blindly.
pub fn deblur_with_kernel(
    images: &[GrayImage],
    kernel: &[f64],
    shape: (usize, usize),
    options: &DeblurOptions,
) -> Result<DeblurOutput> {
    let first = images
        .first()
        .ok_or_else(|| DeconvError::Config("deblur needs at least one image".into()))?;
    let (h, w) = (first.height, first.width);
    if images.iter().any(|im| (im.height, im.width) != (h, w)) {
        return Err(DeconvError::Dimension("all images must share one shape".into()));
    }
    if shape.0 > h || shape.1 > w || shape.0 * shape.1 != kernel.len() {
        return Err(DeconvError::Dimension(format!(
            "blur support {}x{} does not fit {h}x{w} images",
            shape.0, shape.1
        )));
    }
    let q = h * w;
    if options.k == 0 || options.k > q {
        return Err(DeconvError::Dimension(format!("K = {} must be in 1..={q}", options.k)));
    }
    let n = images.len();
    let ksum: f64 = kernel.iter().sum();
    if ksum == 0.0 {
        return Err(DeconvError::Domain("kernel sums to zero".into()));
    }

    // Subspace from the blurred (unmasked) images: what a practitioner has.
    let blurred: Vec<Vec<f64>> = images
        .iter()
        .map(|im| circular_blur(&im.pixels, h, w, kernel, shape.0, shape.1))
        .collect();
    let refs: Vec<&[f64]> = blurred.iter().map(|b| b.as_slice()).collect();
    let mask = largest_dct2_mask(h, w, &refs, options.k)?;
    let basis = build_dct2_mask_subspace(h, w, &mask)?;
    let mods = sample_modulations(q, n, derive_seed(options.seed, TAG_MODULATION, 0))?;
    let inst = image_instance(h, w, shape, basis, mods)?;

    let h0: Vec<Complex64> = kernel.iter().map(|&v| Complex64::new(v / ksum, 0.0)).collect();
    let signals: Vec<Complex64> = images
        .iter()
        .flat_map(|im| im.pixels.iter().map(|&p| Complex64::new(p, 0.0)))
        .collect();
    let yhat = apply_to_signals(&inst, &h0, &signals)?;
    let observed = yhat
        .chunks(q)
        .map(|yn| {
            let mut buf = yn.to_vec();
            crate::spectral::inverse_unitary_2d(h, w, &mut buf);
            let vals: Vec<f64> = buf.iter().map(|c| c.re).collect();
            let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            GrayImage::from_unclamped(h, w, &vals.iter().map(|v| 0.5 + 0.5 * v / peak).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let meas = MeasurementSet::observed(yhat);

    let solver = SolveOptions {
        seed: options.seed,
        ..options.solver
    };
    let (_, res) = solve(&inst, &meas, &solver, None)?;

    // u v̄* ≈ h0 x̄0* with sum(h0) = 1, so c = sum(u) fixes the scale.
    let c: Complex64 = res.u.iter().sum();
    if c.norm() == 0.0 {
        return Err(DeconvError::Domain("recovered kernel sums to zero".into()));
    }
    let kernel_est: Vec<Complex64> = res.u.iter().map(|v| v / c).collect();
    let kernel_mse = kernel_est.iter().zip(&h0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()
        / h0.iter().map(|v| v.norm_sqr()).sum::<f64>();

    let x_est: Vec<Complex64> = res.v.iter().map(|v| v * c).collect();
    let recovered_vals: Vec<f64> = inst.synthesize_blocks(&x_est).iter().map(|z| z.re).collect();
    let projected: Vec<f64> = inst
        .synthesize_blocks(&inst.analyze_blocks(&signals))
        .iter()
        .map(|z| z.re)
        .collect();
    let energy: f64 = signals.iter().map(|s| s.norm_sqr()).sum();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let originals: Vec<f64> = signals.iter().map(|s| s.re).collect();
    let metrics = DeblurMetrics {
        image_mse: sq(&recovered_vals, &originals) / energy,
        model_mse: sq(&recovered_vals, &projected) / projected.iter().map(|v| v * v).sum::<f64>(),
        kernel_mse,
        iterations: res.iterations,
        status: res.status,
    };
    let recovered = recovered_vals
        .chunks(q)
        .map(|px| GrayImage::from_unclamped(h, w, px))
        .collect::<Result<Vec<_>>>()?;
    Ok(DeblurOutput {
        recovered,
        observed,
        kernel: kernel_est.iter().map(|v| v.re).collect(),
        metrics,
    })
}
