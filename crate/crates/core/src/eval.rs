//! Map quality scores (PSNR, SSIM) and multi-seed aggregation.
//!
//! Both maps are mapped to `[0, 255]` with the affine transform that sends the
//! truth map's minimum to 0 and its maximum to 255, so scores of different
//! estimators against the same truth share one scale.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::io;
use crate::phantom::{MapKind, ParameterMaps};
use crate::{Error, Result};

pub const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Full-scale reference rows (PSNR dB, SSIM) for T1, T2, B0 and density.
pub const REFERENCE_CSMRF_ML: [(f64, f64); 4] = [(31.1, 0.99), (37.3, 0.99), (39.9, 0.99), (25.8, 0.92)];
/// Full-scale oracle T1 PSNR, dB.
pub const REFERENCE_ORACLE_T1_PSNR: f64 = 42.8;

fn check_dims(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("maps {:?} and {:?} differ", a.dim(), b.dim())));
    }
    Ok(())
}

/// Affine map taking the truth's `[min, max]` to `[0, 255]`.
fn truth_transform(truth: &Array2<f64>) -> Result<(f64, f64)> {
    let lo = truth.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument("truth map is constant; normalization undefined".into()));
    }
    Ok((lo, PEAK / (hi - lo)))
}

fn normalized(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    check_dims(estimate, truth)?;
    let (lo, scale) = truth_transform(truth)?;
    Ok((estimate.mapv(|v| (v - lo) * scale), truth.mapv(|v| (v - lo) * scale)))
}

/// PSNR in dB; `+inf` when the maps agree exactly.
pub fn psnr(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    let (e, t) = normalized(estimate, truth)?;
    let mse = e.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / e.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean local SSIM of two maps already on the `[0, 255]` scale, over every
/// fully contained 11x11 window.
pub fn ssim_normalized(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check_dims(a, b)?;
    let (rows, cols) = a.dim();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "maps of {rows}x{cols} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let g = gaussian_window();
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let (or, oc) = (rows - SSIM_WINDOW + 1, cols - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for r0 in 0..or {
        for c0 in 0..oc {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let w = g[i] * g[j];
                    let x = a[[r0 + i, c0 + j]];
                    let y = b[[r0 + i, c0 + j]];
                    ma += w * x;
                    mb += w * y;
                    saa += w * x * x;
                    sbb += w * y * y;
                    sab += w * x * y;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (or * oc) as f64)
}

/// SSIM after truth-anchored normalization.
pub fn ssim(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    let (e, t) = normalized(estimate, truth)?;
    ssim_normalized(&e, &t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapScore {
    pub psnr: f64,
    pub ssim: f64,
}

pub fn score_map(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<MapScore> {
    Ok(MapScore {
        psnr: psnr(estimate, truth)?,
        ssim: ssim(estimate, truth)?,
    })
}

/// Scores for T1, T2, B0 and density, in that order.
pub fn score_run(estimate: &ParameterMaps, truth: &ParameterMaps) -> Result<[(MapKind, MapScore); 4]> {
    let mut out = [(MapKind::T1, MapScore { psnr: 0.0, ssim: 0.0 }); 4];
    for (slot, kind) in out.iter_mut().zip(MapKind::ALL) {
        *slot = (kind, score_map(estimate.get(kind), truth.get(kind))?);
    }
    Ok(out)
}

/// One `method, seed, map, psnr_db, ssim` record.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub method: String,
    pub seed: u64,
    pub map: MapKind,
    pub score: MapScore,
}

pub fn score_rows(method: &str, seed: u64, estimate: &ParameterMaps, truth: &ParameterMaps) -> Result<Vec<ScoreRow>> {
    Ok(score_run(estimate, truth)?
        .into_iter()
        .map(|(map, score)| ScoreRow {
            method: method.to_string(),
            seed,
            map,
            score,
        })
        .collect())
}

pub fn rows_csv(rows: &[ScoreRow]) -> String {
    let mut s = String::from("method,seed,map,psnr_db,ssim\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{}", r.method, r.seed, r.map.name(), r.score.psnr, r.score.ssim).unwrap();
    }
    s
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 || !mean.is_finite() {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: String,
    pub map: MapKind,
    pub count: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

/// Mean +- std per (method, map), methods in first-seen order.
pub fn aggregate(rows: &[ScoreRow]) -> Vec<Aggregate> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let mi = match order.iter().position(|m| *m == r.method) {
            Some(i) => i,
            None => {
                order.push(r.method.clone());
                order.len() - 1
            }
        };
        let ki = MapKind::ALL.iter().position(|k| *k == r.map).expect("known map");
        let g = groups.entry((mi, ki)).or_default();
        g.0.push(r.score.psnr);
        g.1.push(r.score.ssim);
    }
    groups
        .into_iter()
        .map(|((mi, ki), (p, s))| {
            let (psnr_mean, psnr_std) = mean_std(&p);
            let (ssim_mean, ssim_std) = mean_std(&s);
            Aggregate {
                method: order[mi].clone(),
                map: MapKind::ALL[ki],
                count: p.len(),
                psnr_mean,
                psnr_std,
                ssim_mean,
                ssim_std,
            }
        })
        .collect()
}

pub fn aggregate_csv(aggs: &[Aggregate]) -> String {
    let mut s = String::from("method,map,psnr_mean,psnr_std,ssim_mean,ssim_std\n");
    for a in aggs {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            a.method,
            a.map.name(),
            a.psnr_mean,
            a.psnr_std,
            a.ssim_mean,
            a.ssim_std
        )
        .unwrap();
    }
    s
}

/// Looks up one aggregate.
pub fn find<'a>(aggs: &'a [Aggregate], method: &str, map: MapKind) -> Option<&'a Aggregate> {
    aggs.iter().find(|a| a.method == method && a.map == map)
}

pub fn write_rows(path: impl AsRef<Path>, rows: &[ScoreRow]) -> Result<()> {
    io::write_file(path.as_ref(), rows_csv(rows).as_bytes())
}

pub fn write_aggregate(path: impl AsRef<Path>, aggs: &[Aggregate]) -> Result<()> {
    io::write_file(path.as_ref(), aggregate_csv(aggs).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use rand::Rng as _;

    fn ramp(rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(r, c)| (r * cols + c) as f64)
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>() * 100.0 - 20.0)
    }

    #[test]
    fn identical_maps() {
        let t = random(16, 16, 1);
        assert_eq!(psnr(&t, &t).unwrap(), f64::INFINITY);
        assert_eq!(ssim(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn uniform_error_gives_twenty_db() {
        let t = Array2::from_shape_fn((4, 4), |(r, _)| if r == 0 { 0.0 } else { 10.0 });
        let e = t.mapv(|v| v + 1.0);
        assert!((psnr(&e, &t).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_matches_two_pass_recomputation() {
        for seed in 0..5 {
            let t = random(12, 9, seed);
            let e = random(12, 9, seed + 50);
            let lo = t.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sq = Vec::new();
            for (a, b) in e.iter().zip(t.iter()) {
                let na = 255.0 * (a - lo) / (hi - lo);
                let nb = 255.0 * (b - lo) / (hi - lo);
                sq.push((na - nb).powi(2));
            }
            sq.reverse();
            let mse = sq.iter().sum::<f64>() / sq.len() as f64;
            let expected = 10.0 * (255.0f64.powi(2) / mse).log10();
            assert!((psnr(&e, &t).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_truth_is_an_error() {
        let t = Array2::from_elem((12, 12), 3.0);
        assert!(psnr(&t, &t).is_err());
        assert!(ssim(&t, &t).is_err());
    }

    #[test]
    fn constant_patch_closed_form() {
        let a = Array2::from_elem((11, 11), 100.0);
        let b = Array2::from_elem((11, 11), 150.0);
        let c1 = (0.01f64 * 255.0).powi(2);
        let expected = (2.0 * 100.0 * 150.0 + c1) / (100.0f64.powi(2) + 150.0f64.powi(2) + c1);
        assert!((ssim_normalized(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ssim_symmetric_range_and_window_check() {
        let a = random(20, 20, 3).mapv(|v| v + 20.0);
        let b = random(20, 20, 4).mapv(|v| v + 20.0);
        let ab = ssim_normalized(&a, &b).unwrap();
        let ba = ssim_normalized(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-14);
        assert!((-1.0..=1.0).contains(&ab) && ab < 1.0);
        assert!(ssim(&ramp(8, 20), &ramp(8, 20)).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let t = ramp(16, 16);
        let noise = random(16, 16, 7);
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.1, 1.0, 10.0] {
            let p = psnr(&(&t + &noise.mapv(|v| v * amp)), &t).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn flip_invariance() {
        let t = random(16, 16, 8);
        let e = random(16, 16, 9);
        let flip = |m: &Array2<f64>| {
            let mut f = m.clone();
            f.invert_axis(ndarray::Axis(1));
            f
        };
        assert!((psnr(&e, &t).unwrap() - psnr(&flip(&e), &flip(&t)).unwrap()).abs() < 1e-10);
        assert!((ssim(&e, &t).unwrap() - ssim(&flip(&e), &flip(&t)).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn score_run_on_truth() {
        let maps = ParameterMaps {
            t1: random(12, 12, 1),
            t2: random(12, 12, 2),
            b0: random(12, 12, 3),
            density: random(12, 12, 4),
        };
        for (_, s) in score_run(&maps, &maps).unwrap() {
            assert_eq!(s.psnr, f64::INFINITY);
            assert_eq!(s.ssim, 1.0);
        }
    }

    #[test]
    fn aggregation_matches_recomputation() {
        let vals = [(1, 20.0), (2, 22.5), (3, 19.0)];
        let rows: Vec<ScoreRow> = vals
            .iter()
            .map(|&(seed, p)| ScoreRow {
                method: "mrf".into(),
                seed,
                map: MapKind::T2,
                score: MapScore { psnr: p, ssim: p / 100.0 },
            })
            .collect();
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        let mean = (20.0 + 22.5 + 19.0) / 3.0;
        let var = ((20.0 - mean) * (20.0 - mean) + (22.5 - mean) * (22.5 - mean) + (19.0 - mean) * (19.0 - mean)) / 2.0;
        assert!((agg[0].psnr_mean - mean).abs() < 1e-12);
        assert!((agg[0].psnr_std - f64::sqrt(var)).abs() < 1e-12);
        assert!(aggregate_csv(&agg).starts_with("method,map,psnr_mean,psnr_std,ssim_mean,ssim_std\nmrf,t2,"));
    }
}
