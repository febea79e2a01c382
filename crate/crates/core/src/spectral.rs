//! Unnormalized DFT plans for the 1D and separable 2D transforms.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Which DFT diagonalizes the circular convolution of an instance.
///
/// The 2D form treats a length-`height * width` vector as a row-major image;
/// the filter occupies the top-left `filter` block and the modulated input the
/// top-left `signal` block of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDescriptor {
    Dft1d {
        len: usize,
    },
    Dft2d {
        height: usize,
        width: usize,
        filter: (usize, usize),
        signal: (usize, usize),
    },
}

impl TransformDescriptor {
    /// Total number of grid points `L`.
    pub fn len(&self) -> usize {
        match *self {
            TransformDescriptor::Dft1d { len } => len,
            TransformDescriptor::Dft2d { height, width, .. } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid positions of the `count` entries of a support whose 2D shape is
    /// `shape` (ignored in 1D).
    pub(crate) fn support(&self, count: usize, shape: (usize, usize)) -> Vec<usize> {
        match *self {
            TransformDescriptor::Dft1d { .. } => (0..count).collect(),
            TransformDescriptor::Dft2d { width, .. } => (0..count)
                .map(|i| (i / shape.1) * width + i % shape.1)
                .collect(),
        }
    }

    /// Entry `F[freq, pos]` of the unitary DFT matrix.
    pub fn dft_entry(&self, freq: usize, pos: usize) -> Complex64 {
        let phase = match *self {
            TransformDescriptor::Dft1d { len } => {
                -2.0 * PI * ((freq * pos) % len) as f64 / len as f64
            }
            TransformDescriptor::Dft2d { height, width, .. } => {
                let (u, v) = (freq / width, freq % width);
                let (i, j) = (pos / width, pos % width);
                -2.0 * PI
                    * (((u * i) % height) as f64 / height as f64
                        + ((v * j) % width) as f64 / width as f64)
            }
        };
        Complex64::from_polar(1.0 / (self.len() as f64).sqrt(), phase)
    }

    /// Grid position of `a - b` under circular wrap-around.
    pub(crate) fn wrap_sub(&self, a: usize, b: usize) -> usize {
        match *self {
            TransformDescriptor::Dft1d { len } => (a + len - b) % len,
            TransformDescriptor::Dft2d { height, width, .. } => {
                let (ai, aj) = (a / width, a % width);
                let (bi, bj) = (b / width, b % width);
                ((ai + height - bi) % height) * width + (aj + width - bj) % width
            }
        }
    }
}

enum Plans {
    OneD {
        fwd: Arc<dyn Fft<f64>>,
        inv: Arc<dyn Fft<f64>>,
    },
    TwoD {
        height: usize,
        width: usize,
        row_fwd: Arc<dyn Fft<f64>>,
        row_inv: Arc<dyn Fft<f64>>,
        col_fwd: Arc<dyn Fft<f64>>,
        col_inv: Arc<dyn Fft<f64>>,
    },
}

/// `F* v` for the unitary 2D DFT on a `height × width` grid, in place.
pub(crate) fn inverse_unitary_2d(height: usize, width: usize, buf: &mut [Complex64]) {
    let desc = TransformDescriptor::Dft2d {
        height,
        width,
        filter: (1, 1),
        signal: (height, width),
    };
    Spectral::new(&desc).inverse(buf);
    let s = 1.0 / ((height * width) as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= s);
}

/// Planned transforms for one descriptor. Plans are immutable and shared.
pub(crate) struct Spectral {
    len: usize,
    plans: Plans,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("len", &self.len).finish()
    }
}

impl Spectral {
    pub(crate) fn new(desc: &TransformDescriptor) -> Self {
        let mut planner = FftPlanner::new();
        let plans = match *desc {
            TransformDescriptor::Dft1d { len } => Plans::OneD {
                fwd: planner.plan_fft_forward(len),
                inv: planner.plan_fft_inverse(len),
            },
            TransformDescriptor::Dft2d { height, width, .. } => Plans::TwoD {
                height,
                width,
                row_fwd: planner.plan_fft_forward(width),
                row_inv: planner.plan_fft_inverse(width),
                col_fwd: planner.plan_fft_forward(height),
                col_inv: planner.plan_fft_inverse(height),
            },
        };
        Spectral {
            len: desc.len(),
            plans,
        }
    }

    /// In-place unnormalized forward DFT.
    pub(crate) fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, true)
    }

    /// In-place unnormalized inverse DFT (no `1/L`).
    pub(crate) fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, false)
    }

    fn run(&self, buf: &mut [Complex64], forward: bool) {
        debug_assert_eq!(buf.len(), self.len);
        match &self.plans {
            Plans::OneD { fwd, inv } => {
                if forward {
                    fwd.process(buf)
                } else {
                    inv.process(buf)
                }
            }
            Plans::TwoD {
                height,
                width,
                row_fwd,
                row_inv,
                col_fwd,
                col_inv,
            } => {
                let (h, w) = (*height, *width);
                if forward {
                    row_fwd.process(buf);
                } else {
                    row_inv.process(buf);
                }
                let mut t = transpose(buf, h, w);
                if forward {
                    col_fwd.process(&mut t);
                } else {
                    col_inv.process(&mut t);
                }
                buf.copy_from_slice(&transpose(&t, w, h));
            }
        }
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(desc: &TransformDescriptor, x: &[Complex64]) -> Vec<Complex64> {
        let l = desc.len();
        let scale = (l as f64).sqrt();
        (0..l)
            .map(|f| (0..l).map(|p| desc.dft_entry(f, p) * x[p]).sum::<Complex64>() * scale)
            .collect()
    }

    #[test]
    fn planned_transforms_match_the_dft_matrix() {
        let descs = [
            TransformDescriptor::Dft1d { len: 12 },
            TransformDescriptor::Dft2d {
                height: 3,
                width: 4,
                filter: (2, 2),
                signal: (3, 4),
            },
        ];
        for desc in descs {
            let x: Vec<Complex64> = (0..12)
                .map(|i| Complex64::new((i as f64).sin(), (3.0 * i as f64).cos()))
                .collect();
            let spectral = Spectral::new(&desc);
            let mut y = x.clone();
            spectral.forward(&mut y);
            for (a, b) in y.iter().zip(naive_dft(&desc, &x)) {
                assert!((a - b).norm() < 1e-12);
            }
            spectral.inverse(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a / 12.0 - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn support_maps_blocks_into_the_grid() {
        let desc = TransformDescriptor::Dft2d {
            height: 4,
            width: 5,
            filter: (2, 3),
            signal: (4, 5),
        };
        assert_eq!(desc.support(6, (2, 3)), vec![0, 1, 2, 5, 6, 7]);
        assert_eq!(desc.wrap_sub(0, 6), 3 * 5 + 4);
    }
}
