//! Estimators built from the pieces above: compressed sensing with (optionally
//! learned-metric) matching, plain MRF, BLIP projected Landweber and the
//! fully sampled oracle.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;

use crate::csrecon::{reconstruct_frame, CsConfig, SolverWarning, TraceRow};
use crate::dictionary::Dictionary;
use crate::kspace::{FourierOp, ImageSequence, MeasurementSet};
use crate::matching::{match_image, ImageMatch, Matcher, DEFAULT_BACKGROUND};
use crate::metric::MahalanobisMetric;
use crate::phantom::ParameterMaps;
use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mrf,
    Csmrf,
    CsmrfMl,
    Blip,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mrf, Method::Csmrf, Method::CsmrfMl, Method::Blip, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mrf => "mrf",
            Method::Csmrf => "csmrf",
            Method::CsmrfMl => "csmrf_ml",
            Method::Blip => "blip",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub cs: CsConfig,
    /// Frame-update / match passes of the CS estimator.
    pub outer_iters: usize,
    pub blip_iters: usize,
    pub blip_step: f64,
    /// Matcher background cutoff, relative to the largest fingerprint norm.
    pub background: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cs: CsConfig::default(),
            outer_iters: 1,
            blip_iters: 16,
            blip_step: 1.0,
            background: DEFAULT_BACKGROUND,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.cs.validate()?;
        if self.outer_iters == 0 {
            return Err(Error::InvalidArgument("outer_iters must be >= 1".into()));
        }
        if !(self.blip_step > 0.0) {
            return Err(Error::InvalidArgument("blip_step must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.background) {
            return Err(Error::InvalidArgument("background cutoff must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Result of one estimator run.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub maps: ParameterMaps,
    /// Matched atom per voxel, `-1` for background.
    pub atoms: Array2<i32>,
    /// Final image sequence (after replacement where the method replaces).
    pub images: ImageSequence,
    /// Per-frame CS traces of the last pass.
    pub traces: Vec<Vec<TraceRow>>,
    /// `(pass, frame, warning)` for every frame whose solver stopped early.
    pub warnings: Vec<(usize, usize, SolverWarning)>,
    /// Data residual `||Y - F_u X||` before the first and after every BLIP
    /// iteration.
    pub residuals: Vec<f64>,
}

impl Estimate {
    fn from_match(m: ImageMatch) -> Self {
        Self {
            maps: m.maps,
            atoms: m.atoms,
            images: m.replaced,
            traces: Vec::new(),
            warnings: Vec::new(),
            residuals: Vec::new(),
        }
    }
}

fn operator(meas: &MeasurementSet) -> Result<FourierOp> {
    meas.validate()?;
    Ok(FourierOp::new(meas.rows, meas.cols))
}

fn check_frames(meas: &MeasurementSet, dict: &Dictionary) -> Result<()> {
    if meas.frames() != dict.frames() {
        return Err(Error::Shape(format!(
            "{} measured frames vs dictionary length {}",
            meas.frames(),
            dict.frames()
        )));
    }
    Ok(())
}

/// Zero-filled adjoint per frame, then L2 matching.
pub fn run_mrf(meas: &MeasurementSet, dict: &Dictionary, cfg: &PipelineConfig) -> Result<Estimate> {
    cfg.validate()?;
    check_frames(meas, dict)?;
    let op = operator(meas)?;
    let images = meas.adjoint_images(&op)?;
    let matcher = Matcher::new(dict, None)?.with_background(cfg.background);
    Ok(Estimate::from_match(match_image(&images, &matcher)?))
}

/// L2 matching of fully sampled measurements.
pub fn run_oracle(meas: &MeasurementSet, dict: &Dictionary, cfg: &PipelineConfig) -> Result<Estimate> {
    if !meas.masks.is_full() {
        return Err(Error::InvalidArgument("oracle estimate needs fully sampled masks".into()));
    }
    run_mrf(meas, dict, cfg)
}

/// Reconstructs all frames, starting each from `start` (or the adjoint).
pub fn reconstruct_sequence(
    meas: &MeasurementSet,
    cfg: &CsConfig,
    start: Option<&ImageSequence>,
) -> Result<(ImageSequence, Vec<Vec<TraceRow>>, Vec<(usize, SolverWarning)>)> {
    let op = operator(meas)?;
    let frames: Vec<_> = (0..meas.frames())
        .into_par_iter()
        .map(|t| {
            let x0 = start.map(|s| s.frame(t).to_owned());
            reconstruct_frame(&op, meas.y[t].view(), &meas.masks.frames[t], cfg, x0.as_ref())
        })
        .collect::<Result<_>>()?;
    let mut images = ImageSequence::zeros(meas.frames(), meas.rows, meas.cols);
    let mut traces = Vec::with_capacity(frames.len());
    let mut warnings = Vec::new();
    for (t, r) in frames.into_iter().enumerate() {
        images.frame_mut(t).assign(&r.image);
        if let Some(w) = r.warning {
            warnings.push((t, w));
        }
        traces.push(r.trace);
    }
    Ok((images, traces, warnings))
}

/// Per-frame CS reconstruction followed by matching (with `metric` when
/// given) and replacement; extra passes warm-start from the replaced sequence.
pub fn run_csmrf(
    meas: &MeasurementSet,
    dict: &Dictionary,
    metric: Option<&MahalanobisMetric>,
    cfg: &PipelineConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    check_frames(meas, dict)?;
    let matcher = Matcher::new(dict, metric)?.with_background(cfg.background);
    let mut start: Option<ImageSequence> = None;
    let mut warnings = Vec::new();
    let mut last = None;
    for pass in 0..cfg.outer_iters {
        let (images, traces, w) = reconstruct_sequence(meas, &cfg.cs, start.as_ref())?;
        warnings.extend(w.into_iter().map(|(t, w)| (pass, t, w)));
        let m = match_image(&images, &matcher)?;
        start = Some(m.replaced.clone());
        last = Some((m, traces));
    }
    let (m, traces) = last.expect("at least one pass");
    for (pass, t, w) in &warnings {
        log::debug!("pass {pass} frame {t}: {w:?}");
    }
    let mut est = Estimate::from_match(m);
    est.traces = traces;
    est.warnings = warnings;
    Ok(est)
}

fn residual(op: &FourierOp, meas: &MeasurementSet, x: &ImageSequence) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..meas.frames() {
        let fx = op.forward(x.frame(t), &meas.masks.frames[t])?;
        total += fx
            .iter()
            .zip(meas.y[t].iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>();
    }
    Ok(total.sqrt())
}

/// Projected Landweber: a gradient step on the data term per frame, then
/// projection of every fingerprint onto `{rho D^k : rho >= 0}`. Starts at 0.
pub fn run_blip(meas: &MeasurementSet, dict: &Dictionary, cfg: &PipelineConfig) -> Result<Estimate> {
    cfg.validate()?;
    let (iters, step) = (cfg.blip_iters, cfg.blip_step);
    check_frames(meas, dict)?;
    let op = operator(meas)?;
    let matcher = Matcher::new(dict, None)?.with_background(cfg.background);
    let mut x = ImageSequence::zeros(meas.frames(), meas.rows, meas.cols);
    let mut residuals = vec![residual(&op, meas, &x)?];
    let mut last = None;
    for _ in 0..iters {
        let updates: Vec<Array2<Complex64>> = (0..meas.frames())
            .into_par_iter()
            .map(|t| {
                let mask = &meas.masks.frames[t];
                let fx = op.forward(x.frame(t), mask)?;
                let r = &meas.y[t] - &fx;
                let g = op.adjoint(r.view(), mask)?;
                Ok(&x.frame(t) + &g.mapv(|z| z * step))
            })
            .collect::<Result<_>>()?;
        let mut z = ImageSequence::zeros(meas.frames(), meas.rows, meas.cols);
        for (t, u) in updates.into_iter().enumerate() {
            z.frame_mut(t).assign(&u);
        }
        let m = match_image(&z, &matcher)?;
        x = m.replaced.clone();
        residuals.push(residual(&op, meas, &x)?);
        last = Some(m);
    }
    let mut est = match last {
        Some(m) => Estimate::from_match(m),
        None => Estimate::from_match(match_image(&x, &matcher)?),
    };
    est.residuals = residuals;
    Ok(est)
}
