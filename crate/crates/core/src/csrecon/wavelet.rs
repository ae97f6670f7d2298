//! Orthogonal Daubechies wavelet transform with periodic boundaries.
//!
//! Coefficients use the usual Mallat layout: after each level the approximation
//! occupies the top-left quadrant of the current block. Images whose sides are
//! not multiples of `2^levels` are zero-padded before analysis; synthesis crops
//! back, which keeps synthesis the exact adjoint of analysis.

use ndarray::{s, Array1, Array2, ArrayViewMut1};

use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Wavelet2d {
    lo: Vec<f64>,
    hi: Vec<f64>,
    levels: usize,
}

impl Wavelet2d {
    /// The 4-tap Daubechies filter (two vanishing moments).
    pub fn daubechies4(levels: usize) -> Self {
        let s3 = 3f64.sqrt();
        let d = 4.0 * 2f64.sqrt();
        let lo = vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d];
        Self::from_lowpass(lo, levels)
    }

    /// Orthogonal wavelet from its low-pass filter; the high-pass is the
    /// alternating flip `g[j] = (-1)^j h[L-1-j]`.
    pub fn from_lowpass(lo: Vec<f64>, levels: usize) -> Self {
        let n = lo.len();
        let hi = (0..n)
            .map(|j| if j % 2 == 0 { lo[n - 1 - j] } else { -lo[n - 1 - j] })
            .collect();
        Self { lo, hi, levels }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Coefficient array shape for an image of the given size.
    pub fn padded_shape(&self, rows: usize, cols: usize) -> (usize, usize) {
        let m = 1usize << self.levels;
        (rows.div_ceil(m) * m, cols.div_ceil(m) * m)
    }

    fn analyze_1d(&self, mut x: ArrayViewMut1<Complex64>, buf: &mut Array1<Complex64>) {
        let n = x.len();
        let half = n / 2;
        for k in 0..half {
            let mut a = Complex64::new(0.0, 0.0);
            let mut d = Complex64::new(0.0, 0.0);
            for (j, (&h, &g)) in self.lo.iter().zip(&self.hi).enumerate() {
                let v = x[(2 * k + j) % n];
                a += v * h;
                d += v * g;
            }
            buf[k] = a;
            buf[half + k] = d;
        }
        x.assign(&buf.slice(s![..n]));
    }

    fn synthesize_1d(&self, mut x: ArrayViewMut1<Complex64>, buf: &mut Array1<Complex64>) {
        let n = x.len();
        let half = n / 2;
        buf.slice_mut(s![..n]).fill(Complex64::new(0.0, 0.0));
        for k in 0..half {
            let a = x[k];
            let d = x[half + k];
            for (j, (&h, &g)) in self.lo.iter().zip(&self.hi).enumerate() {
                buf[(2 * k + j) % n] += a * h + d * g;
            }
        }
        x.assign(&buf.slice(s![..n]));
    }

    /// Analysis: image -> coefficients (shape [`Self::padded_shape`]).
    pub fn forward(&self, img: &Array2<Complex64>) -> Array2<Complex64> {
        let (rows, cols) = img.dim();
        let (pr, pc) = self.padded_shape(rows, cols);
        let mut w = Array2::zeros((pr, pc));
        w.slice_mut(s![..rows, ..cols]).assign(img);
        let mut buf = Array1::zeros(pr.max(pc));
        let (mut r, mut c) = (pr, pc);
        for _ in 0..self.levels {
            let mut block = w.slice_mut(s![..r, ..c]);
            for row in block.rows_mut() {
                self.analyze_1d(row, &mut buf);
            }
            for col in block.columns_mut() {
                self.analyze_1d(col, &mut buf);
            }
            r /= 2;
            c /= 2;
        }
        w
    }

    /// Synthesis (inverse and adjoint of [`Self::forward`]), cropped to `rows x cols`.
    pub fn inverse(&self, coeffs: &Array2<Complex64>, rows: usize, cols: usize) -> Result<Array2<Complex64>> {
        let (pr, pc) = self.padded_shape(rows, cols);
        if coeffs.dim() != (pr, pc) {
            return Err(Error::Shape(format!(
                "coefficients are {:?}, expected {pr}x{pc}",
                coeffs.dim()
            )));
        }
        let mut w = coeffs.clone();
        let mut buf = Array1::zeros(pr.max(pc));
        for level in (0..self.levels).rev() {
            let (r, c) = (pr >> level, pc >> level);
            let mut block = w.slice_mut(s![..r, ..c]);
            for col in block.columns_mut() {
                self.synthesize_1d(col, &mut buf);
            }
            for row in block.rows_mut() {
                self.synthesize_1d(row, &mut buf);
            }
        }
        Ok(w.slice(s![..rows, ..cols]).to_owned())
    }
}
