//! Row-wise Cartesian undersampling masks.
//!
//! Row indices follow the centered (FFT-shifted) k-space layout: the DC row is
//! `n_rows / 2`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

use crate::{io, rng_from_seed, Error, Result, Rng};

/// Sampled k-space rows for each of `T` frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSequence {
    pub n_rows: usize,
    /// Sorted row indices per frame.
    pub frames: Vec<Vec<usize>>,
    /// Rows kept eligible in every frame (the `c` rows nearest DC), sorted.
    pub center: Vec<usize>,
}

pub fn dc_row(n_rows: usize) -> usize {
    n_rows / 2
}

fn distance_from_dc(i: usize, n_rows: usize) -> usize {
    i.abs_diff(dc_row(n_rows))
}

/// The `c` rows nearest the DC row, ties toward the lower index.
pub fn center_set(n_rows: usize, c: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..n_rows).collect();
    rows.sort_by_key(|&i| (distance_from_dc(i, n_rows), i));
    rows.truncate(c);
    rows.sort_unstable();
    rows
}

/// Variable-density row probabilities `p(i) ∝ (1 - d(i)/d_max)^q`, where `d` is
/// the distance to the DC row and `d_max` is one more than the largest distance
/// so that the outermost row keeps a positive probability.
pub fn init_probability(n_rows: usize, rows_per_frame: usize, power: f64) -> Result<Vec<f64>> {
    if rows_per_frame == 0 || rows_per_frame > n_rows {
        return Err(Error::InvalidArgument(format!(
            "rows per frame {rows_per_frame} outside [1, {n_rows}]"
        )));
    }
    if !(power >= 0.0) {
        return Err(Error::InvalidArgument("density power must be >= 0".into()));
    }
    let d_max = (0..n_rows).map(|i| distance_from_dc(i, n_rows)).max().unwrap() as f64 + 1.0;
    let w: Vec<f64> = (0..n_rows)
        .map(|i| (1.0 - distance_from_dc(i, n_rows) as f64 / d_max).powf(power))
        .collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Draws `count` distinct indices with probability proportional to `weights`,
/// one at a time without replacement. Zero-weight entries are never chosen.
fn weighted_without_replacement(weights: &[f64], count: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let mut w = weights.to_vec();
    let available = w.iter().filter(|&&x| x > 0.0).count();
    if available < count {
        return Err(Error::InfeasibleSampling(format!(
            "only {available} rows eligible, {count} requested"
        )));
    }
    let mut picked = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = w.iter().sum();
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut choice = None;
        for (i, &x) in w.iter().enumerate() {
            if x <= 0.0 {
                continue;
            }
            acc += x;
            choice = Some(i);
            if target < acc {
                break;
            }
        }
        let i = choice.expect("at least one eligible row");
        picked.push(i);
        w[i] = 0.0;
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Time-dependent masks: frame 1 is drawn from the variable-density
/// probabilities; each later frame zeroes the probability of every row the
/// previous frame sampled, except rows in the center set, and renormalizes.
pub fn draw_mask_sequence(
    n_rows: usize,
    rows_per_frame: usize,
    center: usize,
    frames: usize,
    power: f64,
    seed: u64,
) -> Result<MaskSequence> {
    let sp1 = init_probability(n_rows, rows_per_frame, power)?;
    if center > n_rows {
        return Err(Error::InvalidArgument(format!(
            "center size {center} exceeds {n_rows} rows"
        )));
    }
    if n_rows + center < 2 * rows_per_frame {
        return Err(Error::InfeasibleSampling(format!(
            "{n_rows} rows cannot supply {rows_per_frame} fresh rows per frame with c = {center}"
        )));
    }
    let center_rows = center_set(n_rows, center);
    let mut in_center = vec![false; n_rows];
    for &i in &center_rows {
        in_center[i] = true;
    }
    let mut rng = rng_from_seed(seed);
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut w = sp1.clone();
        if let Some(prev) = out.last() {
            for &i in prev {
                if !in_center[i] {
                    w[i] = 0.0;
                }
            }
        }
        let frame = weighted_without_replacement(&w, rows_per_frame, &mut rng).map_err(|e| {
            Error::InfeasibleSampling(format!("frame {}: {e}", t + 1))
        })?;
        out.push(frame);
    }
    Ok(MaskSequence {
        n_rows,
        frames: out,
        center: center_rows,
    })
}

/// Baseline: every frame drawn independently from the variable-density probabilities.
pub fn draw_independent_masks(
    n_rows: usize,
    rows_per_frame: usize,
    power: f64,
    frames: usize,
    seed: u64,
) -> Result<MaskSequence> {
    let sp1 = init_probability(n_rows, rows_per_frame, power)?;
    let mut rng = rng_from_seed(seed);
    let out = (0..frames)
        .map(|_| weighted_without_replacement(&sp1, rows_per_frame, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(MaskSequence {
        n_rows,
        frames: out,
        center: Vec::new(),
    })
}

/// Uniform EPI-style undersampling: every `factor`-th row from a random shift per frame.
pub fn draw_epi_masks(n_rows: usize, factor: usize, frames: usize, seed: u64) -> Result<MaskSequence> {
    if factor < 1 {
        return Err(Error::InvalidArgument("EPI factor must be >= 1".into()));
    }
    if n_rows == 0 {
        return Err(Error::InvalidArgument("no k-space rows".into()));
    }
    let mut rng = rng_from_seed(seed);
    let out = (0..frames)
        .map(|_| {
            let shift = rng.gen_range(0..factor.min(n_rows));
            (shift..n_rows).step_by(factor).collect()
        })
        .collect();
    Ok(MaskSequence {
        n_rows,
        frames: out,
        center: Vec::new(),
    })
}

/// Full sampling in every frame.
pub fn full_masks(n_rows: usize, frames: usize) -> MaskSequence {
    MaskSequence {
        n_rows,
        frames: vec![(0..n_rows).collect(); frames],
        center: Vec::new(),
    }
}

impl MaskSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Largest per-frame row count.
    pub fn rows_per_frame(&self) -> usize {
        self.frames.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_full(&self) -> bool {
        self.frames.iter().all(|f| f.len() == self.n_rows)
    }

    /// Fraction of k-space rows acquired, averaged over frames.
    pub fn sampling_ratio(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        let total: usize = self.frames.iter().map(Vec::len).sum();
        total as f64 / (self.n_rows * self.frames.len()) as f64
    }

    pub fn validate(&self) -> Result<()> {
        for (t, f) in self.frames.iter().enumerate() {
            if f.windows(2).any(|w| w[1] <= w[0]) || f.iter().any(|&i| i >= self.n_rows) {
                return Err(Error::InvalidArgument(format!(
                    "frame {} has unsorted, duplicate or out-of-range rows",
                    t + 1
                )));
            }
        }
        if self.center.iter().any(|&i| i >= self.n_rows) {
            return Err(Error::InvalidArgument("center row out of range".into()));
        }
        Ok(())
    }

    /// Header `n_rows R c T`, then one line of space-separated rows per frame.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} {} {} {}\n",
            self.n_rows,
            self.rows_per_frame(),
            self.center.len(),
            self.frames.len()
        );
        for f in &self.frames {
            let line: Vec<String> = f.iter().map(usize::to_string).collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::format("mask text", format!("line {line}: {msg}"));
        let mut lines = text.lines();
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| err(1, "missing header"))?
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|_| err(1, "bad header field")))
            .collect::<Result<_>>()?;
        if header.len() != 4 {
            return Err(err(1, "header must be `n_rows R c T`"));
        }
        let (n_rows, _, c, t) = (header[0], header[1], header[2], header[3]);
        let mut frames = Vec::with_capacity(t);
        for i in 0..t {
            let line = lines.next().ok_or_else(|| err(i + 2, "missing frame line"))?;
            let rows = line
                .split_whitespace()
                .map(|s| s.parse::<usize>().map_err(|_| err(i + 2, "bad row index")))
                .collect::<Result<Vec<_>>>()?;
            frames.push(rows);
        }
        let m = MaskSequence {
            n_rows,
            frames,
            center: center_set(n_rows, c.min(n_rows)),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&String::from_utf8_lossy(&io::read_file(path.as_ref())?))
    }
}
