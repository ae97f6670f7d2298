//! Flip-angle and repetition-time schedules.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::{io, rng_from_seed, Error, Result};

/// Nominal repetition time, ms.
pub const BASE_TR_MS: f64 = 10.0;
/// Length of one flip-angle period, frames.
pub const PERIOD: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    /// Flip angle per frame, degrees.
    pub fa_deg: Vec<f64>,
    /// Repetition time per frame, ms.
    pub tr_ms: Vec<f64>,
}

impl PulseSequence {
    pub fn new(fa_deg: Vec<f64>, tr_ms: Vec<f64>) -> Result<Self> {
        if fa_deg.len() != tr_ms.len() || fa_deg.is_empty() {
            return Err(Error::Shape(format!(
                "flip angle ({}) and TR ({}) schedules must be non-empty and equally long",
                fa_deg.len(),
                tr_ms.len()
            )));
        }
        if fa_deg.iter().any(|a| !a.is_finite()) || tr_ms.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidArgument(
                "flip angles must be finite and TR positive".into(),
            ));
        }
        Ok(Self { fa_deg, tr_ms })
    }

    /// Constant flip angle and TR.
    pub fn constant(len: usize, fa_deg: f64, tr_ms: f64) -> Result<Self> {
        Self::new(vec![fa_deg; len], vec![tr_ms; len])
    }

    pub fn len(&self) -> usize {
        self.fa_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fa_deg.is_empty()
    }

    /// `t,fa_deg,tr_ms` rows, `t` starting at 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,fa_deg,tr_ms\n");
        for (i, (fa, tr)) in self.fa_deg.iter().zip(&self.tr_ms).enumerate() {
            writeln!(s, "{},{},{}", i + 1, fa, tr).unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut fa = Vec::new();
        let mut tr = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::format("sequence csv", format!("line {}: bad number {s:?}", n + 1))
                })
            };
            if fields.len() != 3 {
                return Err(Error::format(
                    "sequence csv",
                    format!("line {}: expected 3 fields", n + 1),
                ));
            }
            fa.push(parse(fields[1])?);
            tr.push(parse(fields[2])?);
        }
        Self::new(fa, tr)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), self.to_csv().as_bytes())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = io::read_file(path.as_ref())?;
        Self::from_csv(&String::from_utf8_lossy(&bytes))
    }
}

/// How the third (300 < t <= 500) branch of the flip-angle schedule is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaVariant {
    /// `5 + sin(2*pi/200 * 25) + eta`, a constant plus noise.
    #[default]
    Literal,
    /// `5 + sin(2*pi*t/200) * 25 + eta`.
    Corrected,
}

impl std::str::FromStr for FaVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(FaVariant::Literal),
            "corrected" => Ok(FaVariant::Corrected),
            _ => Err(Error::InvalidArgument(format!("unknown sequence variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub length: usize,
    /// Standard deviation of the additive flip-angle noise, degrees.
    pub eta_sigma: f64,
    pub variant: FaVariant,
    /// Half-width of uniform TR jitter around 10 ms; `None` keeps TR fixed.
    pub tr_jitter_ms: Option<f64>,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            length: 300,
            eta_sigma: 5.0,
            variant: FaVariant::Literal,
            tr_jitter_ms: None,
        }
    }
}

/// Noise-free flip angle at 1-based frame `t`, before clamping.
pub fn base_flip_angle(t: usize, variant: FaVariant) -> (f64, bool) {
    let tp = (t - 1) % PERIOD + 1;
    let tf = tp as f64;
    if tp <= 250 {
        (10.0 + (2.0 * PI * tf / 500.0).sin() * 50.0, true)
    } else if tp <= 300 {
        (10.0, false)
    } else {
        match variant {
            FaVariant::Literal => (5.0 + (2.0 * PI / 200.0 * 25.0).sin(), true),
            FaVariant::Corrected => (5.0 + (2.0 * PI * tf / 200.0).sin() * 25.0, true),
        }
    }
}

/// Repeating sinusoidal flip-angle train with Gaussian perturbations; the
/// second branch carries no noise. Final angles are clamped at 0.
pub fn generate_sequence(spec: &SequenceSpec, seed: u64) -> Result<PulseSequence> {
    if spec.length == 0 {
        return Err(Error::InvalidArgument("sequence length must be >= 1".into()));
    }
    if !(spec.eta_sigma >= 0.0) {
        return Err(Error::InvalidArgument("eta_sigma must be >= 0".into()));
    }
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, spec.eta_sigma).expect("sigma checked");
    let mut fa = Vec::with_capacity(spec.length);
    let mut tr = Vec::with_capacity(spec.length);
    for t in 1..=spec.length {
        let (base, noisy) = base_flip_angle(t, spec.variant);
        let eta = if noisy && spec.eta_sigma > 0.0 {
            normal.sample(&mut rng)
        } else {
            0.0
        };
        fa.push((base + eta).max(0.0));
        tr.push(match spec.tr_jitter_ms {
            Some(j) if j > 0.0 => BASE_TR_MS + (rng.gen::<f64>() * 2.0 - 1.0) * j.min(BASE_TR_MS * 0.5),
            _ => BASE_TR_MS,
        });
    }
    PulseSequence::new(fa, tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless(len: usize, variant: FaVariant) -> PulseSequence {
        generate_sequence(
            &SequenceSpec {
                length: len,
                eta_sigma: 0.0,
                variant,
                tr_jitter_ms: None,
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn branch_values() {
        let s = noiseless(300, FaVariant::Literal);
        assert_eq!(s.fa_deg[260 - 1], 10.0);
        let s = noiseless(500, FaVariant::Literal);
        assert!((s.fa_deg[125 - 1] - 60.0).abs() < 1e-12);
        let expected = 5.0 + (PI / 4.0).sin();
        assert!((s.fa_deg[400 - 1] - expected).abs() < 1e-12);
        assert!((s.fa_deg[400 - 1] - 5.7071).abs() < 1e-4);
        let c = noiseless(500, FaVariant::Corrected);
        assert!((c.fa_deg[350 - 1] - (5.0 + (2.0 * PI * 350.0 / 200.0).sin() * 25.0).max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn period_repeats() {
        let s = noiseless(1200, FaVariant::Literal);
        for t in 0..700 {
            assert_eq!(s.fa_deg[t], s.fa_deg[t + 500]);
        }
    }

    #[test]
    fn tr_constant_and_fa_nonnegative() {
        let s = generate_sequence(
            &SequenceSpec {
                length: 1000,
                eta_sigma: 20.0,
                variant: FaVariant::Corrected,
                tr_jitter_ms: None,
            },
            3,
        )
        .unwrap();
        assert!(s.tr_ms.iter().all(|&t| t == 10.0));
        assert!(s.fa_deg.iter().all(|&a| a >= 0.0));
        assert!(s.fa_deg.iter().any(|&a| a == 0.0));
    }

    #[test]
    fn deterministic_and_jitter() {
        let spec = SequenceSpec {
            tr_jitter_ms: Some(1.0),
            ..SequenceSpec::default()
        };
        let a = generate_sequence(&spec, 42).unwrap();
        let b = generate_sequence(&spec, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.tr_ms.iter().all(|t| (9.0..=11.0).contains(t)));
        assert!(a.tr_ms.iter().any(|&t| t != 10.0));
    }

    #[test]
    fn csv_round_trip() {
        let s = generate_sequence(&SequenceSpec::default(), 5).unwrap();
        let back = PulseSequence::from_csv(&s.to_csv()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(generate_sequence(
            &SequenceSpec {
                length: 0,
                ..SequenceSpec::default()
            },
            0
        )
        .is_err());
        assert!(PulseSequence::new(vec![1.0], vec![0.0]).is_err());
    }
}
