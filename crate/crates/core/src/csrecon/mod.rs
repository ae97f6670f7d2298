//! Per-frame compressed-sensing reconstruction.
//!
//! Minimizes
//!
//! ```text
//! f(x) = ||F_u x - y||^2 + a_w * sum_j sqrt(|(W x)_j|^2 + mu) + a_tv * sum_j sqrt(|(D x)_j|^2 + mu)
//! ```
//!
//! with `W` an orthogonal 4-level Daubechies wavelet and `D` the periodic
//! horizontal/vertical first differences, by nonlinear conjugate gradient with
//! a backtracking Armijo line search.
//!
//! Gradients are taken with respect to the real and imaginary parts jointly and
//! returned as a complex image `g`, so that the directional derivative along
//! `v` is `Re <g, v>`.

pub mod wavelet;

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Zip};

use crate::kspace::{inner, FourierOp};
use crate::{Complex64, Error, Result};

pub use wavelet::Wavelet2d;

#[derive(Debug, Clone, PartialEq)]
pub struct CsConfig {
    pub alpha_wavelet: f64,
    pub alpha_tv: f64,
    /// Smoothing constant of the L1 terms.
    pub smooth_mu: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    pub initial_step: f64,
    /// Backtracking shrink factor, in (0, 1).
    pub shrink: f64,
    /// Sufficient-decrease constant of the Armijo condition.
    pub armijo_c: f64,
    pub max_backtracks: usize,
    pub wavelet_levels: usize,
}

impl Default for CsConfig {
    fn default() -> Self {
        Self {
            alpha_wavelet: 1e-3,
            alpha_tv: 1e-3,
            smooth_mu: 1e-15,
            max_iters: 30,
            grad_tol: 1e-9,
            initial_step: 1.0,
            shrink: 0.5,
            armijo_c: 1e-4,
            max_backtracks: 20,
            wavelet_levels: 4,
        }
    }
}

impl CsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_wavelet >= 0.0
            && self.alpha_tv >= 0.0
            && self.smooth_mu > 0.0
            && self.grad_tol >= 0.0
            && self.initial_step > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.armijo_c >= 0.0
            && self.armijo_c < 1.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid CS configuration {self:?}")));
        }
        Ok(())
    }
}

/// Periodic forward differences: `(x[r, c+1] - x[r, c], x[r+1, c] - x[r, c])`.
pub fn finite_differences(x: &Array2<Complex64>) -> (Array2<Complex64>, Array2<Complex64>) {
    let (rows, cols) = x.dim();
    let dh = Array2::from_shape_fn((rows, cols), |(r, c)| x[[r, (c + 1) % cols]] - x[[r, c]]);
    let dv = Array2::from_shape_fn((rows, cols), |(r, c)| x[[(r + 1) % rows, c]] - x[[r, c]]);
    (dh, dv)
}

/// Adjoint of [`finite_differences`].
pub fn finite_differences_adjoint(dh: &Array2<Complex64>, dv: &Array2<Complex64>) -> Array2<Complex64> {
    let (rows, cols) = dh.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        dh[[r, (c + cols - 1) % cols]] - dh[[r, c]] + dv[[(r + rows - 1) % rows, c]] - dv[[r, c]]
    })
}

fn smoothed_l1(v: &Array2<Complex64>, mu: f64) -> f64 {
    v.iter().map(|z| (z.norm_sqr() + mu).sqrt()).sum()
}

fn smoothed_l1_grad(v: &Array2<Complex64>, mu: f64) -> Array2<Complex64> {
    v.mapv(|z| z / (z.norm_sqr() + mu).sqrt())
}

/// One frame's reconstruction problem.
pub struct CsProblem<'a> {
    op: &'a FourierOp,
    mask: &'a [usize],
    y: ArrayView2<'a, Complex64>,
    cfg: &'a CsConfig,
    wavelet: Wavelet2d,
}

/// Images of a point under every linear operator the objective uses.
struct Transformed {
    data: Array2<Complex64>,
    wav: Array2<Complex64>,
    dh: Array2<Complex64>,
    dv: Array2<Complex64>,
}

impl<'a> CsProblem<'a> {
    pub fn new(op: &'a FourierOp, mask: &'a [usize], y: ArrayView2<'a, Complex64>, cfg: &'a CsConfig) -> Result<Self> {
        cfg.validate()?;
        if y.dim() != (mask.len(), op.cols()) {
            return Err(Error::Shape(format!(
                "measurement {:?} does not match {} rows x {} cols",
                y.dim(),
                mask.len(),
                op.cols()
            )));
        }
        Ok(Self {
            op,
            mask,
            y,
            cfg,
            wavelet: Wavelet2d::daubechies4(cfg.wavelet_levels),
        })
    }

    fn check(&self, x: &Array2<Complex64>) -> Result<()> {
        if x.dim() != (self.op.rows(), self.op.cols()) {
            return Err(Error::Shape(format!("image {:?} does not match operator", x.dim())));
        }
        Ok(())
    }

    fn transform(&self, x: &Array2<Complex64>) -> Result<Transformed> {
        let data = self.op.forward(x.view(), self.mask)?;
        let wav = if self.cfg.alpha_wavelet > 0.0 {
            self.wavelet.forward(x)
        } else {
            Array2::zeros((0, 0))
        };
        let (dh, dv) = if self.cfg.alpha_tv > 0.0 {
            finite_differences(x)
        } else {
            (Array2::zeros((0, 0)), Array2::zeros((0, 0)))
        };
        Ok(Transformed { data, wav, dh, dv })
    }

    fn value_of(&self, t: &Transformed) -> f64 {
        let data: f64 = t
            .data
            .iter()
            .zip(self.y.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let mu = self.cfg.smooth_mu;
        let mut f = data;
        if self.cfg.alpha_wavelet > 0.0 {
            f += self.cfg.alpha_wavelet * smoothed_l1(&t.wav, mu);
        }
        if self.cfg.alpha_tv > 0.0 {
            f += self.cfg.alpha_tv * (smoothed_l1(&t.dh, mu) + smoothed_l1(&t.dv, mu));
        }
        f
    }

    fn gradient_of(&self, t: &Transformed) -> Result<Array2<Complex64>> {
        let (rows, cols) = (self.op.rows(), self.op.cols());
        let resid = &t.data - &self.y;
        let mut g = self.op.adjoint(resid.view(), self.mask)?.mapv(|z| z * 2.0);
        let mu = self.cfg.smooth_mu;
        if self.cfg.alpha_wavelet > 0.0 {
            let gw = self.wavelet.inverse(&smoothed_l1_grad(&t.wav, mu), rows, cols)?;
            g.scaled_add(Complex64::new(self.cfg.alpha_wavelet, 0.0), &gw);
        }
        if self.cfg.alpha_tv > 0.0 {
            let gd = finite_differences_adjoint(&smoothed_l1_grad(&t.dh, mu), &smoothed_l1_grad(&t.dv, mu));
            g.scaled_add(Complex64::new(self.cfg.alpha_tv, 0.0), &gd);
        }
        Ok(g)
    }

    pub fn objective(&self, x: &Array2<Complex64>) -> Result<f64> {
        self.check(x)?;
        Ok(self.value_of(&self.transform(x)?))
    }

    pub fn gradient(&self, x: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        self.check(x)?;
        self.gradient_of(&self.transform(x)?)
    }

    /// `f(x + step * d)` from precomputed transforms of `x` and `d`.
    fn value_along(&self, tx: &Transformed, td: &Transformed, step: f64) -> f64 {
        let mu = self.cfg.smooth_mu;
        let line = |a: &Array2<Complex64>, b: &Array2<Complex64>| -> f64 {
            a.iter()
                .zip(b.iter())
                .map(|(p, q)| ((p + q * step).norm_sqr() + mu).sqrt())
                .sum()
        };
        let data: f64 = tx
            .data
            .iter()
            .zip(td.data.iter())
            .zip(self.y.iter())
            .map(|((a, b), y)| (a + b * step - y).norm_sqr())
            .sum();
        let mut f = data;
        if self.cfg.alpha_wavelet > 0.0 {
            f += self.cfg.alpha_wavelet * line(&tx.wav, &td.wav);
        }
        if self.cfg.alpha_tv > 0.0 {
            f += self.cfg.alpha_tv * (line(&tx.dh, &td.dh) + line(&tx.dv, &td.dv));
        }
        f
    }
}

/// Objective of one frame.
pub fn objective<'a>(
    op: &'a FourierOp,
    x: &Array2<Complex64>,
    y: ArrayView2<'a, Complex64>,
    mask: &'a [usize],
    cfg: &'a CsConfig,
) -> Result<f64> {
    CsProblem::new(op, mask, y, cfg)?.objective(x)
}

/// Gradient of [`objective`].
pub fn gradient<'a>(
    op: &'a FourierOp,
    x: &Array2<Complex64>,
    y: ArrayView2<'a, Complex64>,
    mask: &'a [usize],
    cfg: &'a CsConfig,
) -> Result<Array2<Complex64>> {
    CsProblem::new(op, mask, y, cfg)?.gradient(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
    /// Accepted step length (0 for the initial row).
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverWarning {
    /// No step satisfying the Armijo condition within the backtracking budget.
    LineSearchFailed { iteration: usize },
}

#[derive(Debug, Clone)]
pub struct FrameRecon {
    pub image: Array2<Complex64>,
    pub iterations: usize,
    pub warning: Option<SolverWarning>,
    /// Objective after every accepted step, starting with `x0`.
    pub trace: Vec<TraceRow>,
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("iteration,objective,grad_norm,step\n");
    for r in trace {
        writeln!(s, "{},{},{},{}", r.iteration, r.objective, r.grad_norm, r.step).unwrap();
    }
    s
}

fn real_inner(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    inner(a.view(), b.view()).re
}

/// Reconstructs one frame from its sampled rows, starting at `x0` (the
/// zero-filled adjoint when `None`).
pub fn reconstruct_frame<'a>(
    op: &'a FourierOp,
    y: ArrayView2<'a, Complex64>,
    mask: &'a [usize],
    cfg: &'a CsConfig,
    x0: Option<&Array2<Complex64>>,
) -> Result<FrameRecon> {
    let problem = CsProblem::new(op, mask, y, cfg)?;
    let mut x = match x0 {
        Some(x0) => {
            problem.check(x0)?;
            x0.clone()
        }
        None => op.adjoint(y, mask)?,
    };
    let mut tx = problem.transform(&x)?;
    let mut f = problem.value_of(&tx);
    let mut g = problem.gradient_of(&tx)?;
    let mut gg = real_inner(&g, &g);
    let mut d = g.mapv(|z| -z);
    let mut t0 = cfg.initial_step;
    let mut trace = vec![TraceRow {
        iteration: 0,
        objective: f,
        grad_norm: gg.sqrt(),
        step: 0.0,
    }];
    let mut warning = None;
    let mut iterations = 0;

    while iterations < cfg.max_iters && gg.sqrt() >= cfg.grad_tol {
        let mut slope = real_inner(&g, &d);
        if !(slope < 0.0) {
            d = g.mapv(|z| -z);
            slope = -gg;
        }
        let td = problem.transform(&d)?;
        let mut step = t0;
        let mut backtracks = 0;
        let mut accepted = false;
        while backtracks <= cfg.max_backtracks {
            let trial = problem.value_along(&tx, &td, step);
            if trial <= f + cfg.armijo_c * step * slope {
                accepted = true;
                break;
            }
            step *= cfg.shrink;
            backtracks += 1;
        }
        if !accepted {
            warning = Some(SolverWarning::LineSearchFailed { iteration: iterations + 1 });
            break;
        }
        let mut x_new = x.clone();
        x_new.scaled_add(Complex64::new(step, 0.0), &d);
        let tx_new = problem.transform(&x_new)?;
        let f_new = problem.value_of(&tx_new);
        if f_new > f {
            // accepted on the line model but not on a fresh evaluation (rounding)
            warning = Some(SolverWarning::LineSearchFailed { iteration: iterations + 1 });
            break;
        }
        let g_new = problem.gradient_of(&tx_new)?;
        let gg_new = real_inner(&g_new, &g_new);
        // hybrid Polak-Ribiere / Fletcher-Reeves, clipped at zero
        let beta_pr = (gg_new - real_inner(&g_new, &g)) / gg;
        let beta_fr = gg_new / gg;
        let beta = beta_pr.min(beta_fr).max(0.0);
        Zip::from(&mut d).and(&g_new).for_each(|di, &gi| *di = -gi + *di * beta);

        x = x_new;
        tx = tx_new;
        f = f_new;
        g = g_new;
        gg = gg_new;
        iterations += 1;
        trace.push(TraceRow {
            iteration: iterations,
            objective: f,
            grad_norm: gg.sqrt(),
            step,
        });
        if backtracks > 2 {
            t0 *= cfg.shrink;
        } else if backtracks == 0 {
            t0 /= cfg.shrink;
        }
    }
    Ok(FrameRecon {
        image: x,
        iterations,
        warning,
        trace,
    })
}
