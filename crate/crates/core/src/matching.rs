//! Nearest-atom dictionary matching, parameter retrieval and proton density.
//!
//! Queries and atoms are compared as realified vectors, so the complex inner
//! product's real part `Re <x, D>` is a plain dot product. L2 matching picks
//! the atom with the largest correlation to the normalized query; metric
//! matching picks the smallest `||W x - W D||^2`. Ties go to the lowest index.

use ndarray::{s, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::dictionary::{AtomParams, Dictionary};
use crate::kspace::{FourierOp, ImageSequence, MeasurementSet};
use crate::metric::{transform_rows, MahalanobisMetric};
use crate::phantom::ParameterMaps;
use crate::{Complex64, Error, Result};

/// Voxels per matching block. Fixed so results never depend on thread count.
const BLOCK: usize = 128;

/// Default background cutoff, relative to the largest fingerprint norm.
pub const DEFAULT_BACKGROUND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    /// Best atom, `None` for an all-zero query.
    pub atom: Option<usize>,
    pub params: AtomParams,
    /// Coefficient on the unit atom, `max(Re <x, D>, 0)` with the raw query.
    pub scale: f64,
    /// Proton density: `scale` divided by the atom's simulated magnitude.
    pub rho: f64,
    /// `Re <x / ||x||, D>` for the chosen atom.
    pub correlation: f64,
    /// Squared distance between the normalized query and the atom, in the
    /// matching metric.
    pub distance: f64,
}

impl MatchResult {
    pub fn background() -> Self {
        Self {
            atom: None,
            params: AtomParams {
                t1: 0.0,
                t2: 0.0,
                b0: 0.0,
            },
            scale: 0.0,
            rho: 0.0,
            correlation: 0.0,
            distance: 0.0,
        }
    }
}

fn realify_rows(x: &Array2<Complex64>) -> Array2<f64> {
    let (n, t) = x.dim();
    let mut out = Array2::zeros((n, 2 * t));
    for (i, row) in x.outer_iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            out[[i, j]] = z.re;
            out[[i, t + j]] = z.im;
        }
    }
    out
}

/// Dictionary prepared for repeated matching, with atoms realified and (for a
/// metric) mapped through `W` once.
pub struct Matcher<'a> {
    dict: &'a Dictionary,
    metric: Option<&'a MahalanobisMetric>,
    /// Realified atoms, `K x 2T`.
    atoms: Array2<f64>,
    /// Metric-transformed atoms and their squared norms.
    w_atoms: Option<(Array2<f64>, Vec<f64>)>,
    background: f64,
}

impl<'a> Matcher<'a> {
    pub fn new(dict: &'a Dictionary, metric: Option<&'a MahalanobisMetric>) -> Result<Self> {
        if dict.is_empty() {
            return Err(Error::InvalidArgument("empty dictionary".into()));
        }
        let atoms = dict.realified();
        let w_atoms = match metric {
            Some(m) => {
                if m.dim() != 2 * dict.frames() {
                    return Err(Error::Shape(format!(
                        "metric dimension {} does not match 2T = {}",
                        m.dim(),
                        2 * dict.frames()
                    )));
                }
                let wa = transform_rows(&atoms, m);
                let sq = wa.outer_iter().map(|r| r.dot(&r)).collect();
                Some((wa, sq))
            }
            None => None,
        };
        Ok(Self {
            dict,
            metric,
            atoms,
            w_atoms,
            background: DEFAULT_BACKGROUND,
        })
    }

    /// Fingerprints with norm below `rel` times the largest norm in a batch
    /// are treated as background.
    pub fn with_background(mut self, rel: f64) -> Self {
        self.background = rel.max(0.0);
        self
    }

    pub fn dictionary(&self) -> &Dictionary {
        self.dict
    }

    pub fn uses_metric(&self) -> bool {
        self.metric.is_some()
    }

    /// Matches every row of an `N x T` fingerprint matrix.
    pub fn match_rows(&self, fps: &Array2<Complex64>) -> Result<Vec<MatchResult>> {
        if fps.ncols() != self.dict.frames() {
            return Err(Error::Shape(format!(
                "fingerprints have {} frames, dictionary {}",
                fps.ncols(),
                self.dict.frames()
            )));
        }
        let n = fps.nrows();
        let max_norm = fps
            .outer_iter()
            .map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let cutoff = self.background * max_norm;
        let blocks: Vec<usize> = (0..n).step_by(BLOCK).collect();
        let out: Vec<Vec<MatchResult>> = blocks
            .par_iter()
            .map(|&start| {
                let end = (start + BLOCK).min(n);
                self.match_block(&fps.slice(s![start..end, ..]).to_owned(), cutoff)
            })
            .collect();
        Ok(out.into_iter().flatten().collect())
    }

    pub fn match_one(&self, x: ArrayView1<Complex64>) -> Result<MatchResult> {
        let row = x.to_owned().insert_axis(Axis(0));
        Ok(self.match_rows(&row)?[0])
    }

    fn match_block(&self, fps: &Array2<Complex64>, cutoff: f64) -> Vec<MatchResult> {
        let raw = realify_rows(fps);
        let norms: Vec<f64> = raw.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
        let mut q = raw.clone();
        for (mut row, &nrm) in q.outer_iter_mut().zip(&norms) {
            if nrm > 0.0 {
                row /= nrm;
            }
        }
        let (scores, wq) = match (&self.w_atoms, self.metric) {
            (Some((wa, sq)), Some(m)) => {
                let wq = transform_rows(&q, m);
                let mut g = wq.dot(&wa.t());
                for mut row in g.outer_iter_mut() {
                    for (v, s) in row.iter_mut().zip(sq) {
                        *v = 2.0 * *v - s;
                    }
                }
                (g, Some(wq))
            }
            _ => (q.dot(&self.atoms.t()), None),
        };
        let mut out = Vec::with_capacity(fps.nrows());
        for i in 0..fps.nrows() {
            if !(norms[i] > 0.0) || norms[i] < cutoff {
                out.push(MatchResult::background());
                continue;
            }
            let row = scores.row(i);
            let mut best = 0;
            let mut best_score = row[0];
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > best_score {
                    best = k;
                    best_score = v;
                }
            }
            let atom = self.atoms.row(best);
            let correlation = q.row(i).dot(&atom);
            let distance = match (&wq, &self.w_atoms) {
                (Some(wq), Some((wa, _))) => {
                    let d = &wq.row(i) - &wa.row(best);
                    d.dot(&d)
                }
                _ => {
                    let d = &q.row(i) - &atom;
                    d.dot(&d)
                }
            };
            let scale = raw.row(i).dot(&atom).max(0.0);
            out.push(MatchResult {
                atom: Some(best),
                params: self.dict.params(best),
                scale,
                rho: scale / self.dict.norm(best),
                correlation,
                distance,
            });
        }
        out
    }
}

/// L2 match of one fingerprint.
pub fn match_l2(x: &[Complex64], dict: &Dictionary) -> Result<MatchResult> {
    Matcher::new(dict, None)?.match_one(ArrayView1::from(x))
}

/// Learned-metric match of one fingerprint.
pub fn match_metric(x: &[Complex64], dict: &Dictionary, metric: &MahalanobisMetric) -> Result<MatchResult> {
    Matcher::new(dict, Some(metric))?.match_one(ArrayView1::from(x))
}

/// Per-voxel outcome of matching a whole image sequence.
#[derive(Debug, Clone)]
pub struct ImageMatch {
    pub maps: ParameterMaps,
    /// Matched atom per voxel, `-1` for background.
    pub atoms: Array2<i32>,
    /// Every fingerprint replaced by `scale * D^k`.
    pub replaced: ImageSequence,
}

pub fn match_image(recon: &ImageSequence, matcher: &Matcher) -> Result<ImageMatch> {
    let (rows, cols) = (recon.rows(), recon.cols());
    let results = matcher.match_rows(&recon.fingerprints())?;
    let dict = matcher.dictionary();
    let mut maps = ParameterMaps::zeros(rows, cols);
    let mut atoms = Array2::from_elem((rows, cols), -1);
    let mut fps = Array2::zeros((rows * cols, recon.frames()));
    for (v, m) in results.iter().enumerate() {
        let (r, c) = (v / cols, v % cols);
        let Some(k) = m.atom else { continue };
        atoms[[r, c]] = k as i32;
        maps.t1[[r, c]] = m.params.t1;
        maps.t2[[r, c]] = m.params.t2;
        maps.b0[[r, c]] = m.params.b0;
        maps.density[[r, c]] = m.rho;
        if m.scale > 0.0 {
            let mut row = fps.row_mut(v);
            row.assign(&dict.atom(k));
            row.mapv_inplace(|z| z * m.scale);
        }
    }
    Ok(ImageMatch {
        maps,
        atoms,
        replaced: ImageSequence::from_fingerprints(&fps, rows, cols)?,
    })
}

/// Matching of fully sampled data with the L2 distance.
pub fn oracle_estimate(meas: &MeasurementSet, dict: &Dictionary) -> Result<ImageMatch> {
    if !meas.masks.is_full() {
        return Err(Error::InvalidArgument("oracle estimate needs fully sampled masks".into()));
    }
    let op = FourierOp::new(meas.rows, meas.cols);
    let images = meas.adjoint_images(&op)?;
    match_image(&images, &Matcher::new(dict, None)?)
}

/// Fraction of foreground voxels (`truth >= 0`) whose atom matches exactly.
pub fn atom_accuracy(estimate: &Array2<i32>, truth: &Array2<i32>) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(Error::Shape("atom maps differ in size".into()));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for (&e, &t) in estimate.iter().zip(truth.iter()) {
        if t >= 0 {
            total += 1;
            hits += usize::from(e == t);
        }
    }
    if total == 0 {
        return Err(Error::InvalidArgument("no foreground voxels".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// `|x|` of the fingerprint at every voxel.
pub fn fingerprint_norms(seq: &ImageSequence) -> Array2<f64> {
    let mut out = Array2::zeros((seq.rows(), seq.cols()));
    for frame in seq.data.outer_iter() {
        out.zip_mut_with(&frame, |a, z| *a += z.norm_sqr());
    }
    out.mapv_inplace(f64::sqrt);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use rand::Rng as _;

    fn random_dictionary(k: usize, t: usize, seed: u64) -> Dictionary {
        let mut rng = rng_from_seed(seed);
        let mut atoms = Array2::from_shape_fn((k, t), |_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        for mut row in atoms.outer_iter_mut() {
            let n = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            row.mapv_inplace(|z| z / n);
        }
        let params = (0..k)
            .map(|i| AtomParams {
                t1: 100.0 + i as f64,
                t2: 10.0 + i as f64,
                b0: i as f64,
            })
            .collect();
        Dictionary::from_parts(atoms, params, vec![1.0; k]).unwrap()
    }

    fn random_query(t: usize, rng: &mut crate::Rng) -> Vec<Complex64> {
        (0..t)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect()
    }

    fn random_metric(dim: usize, seed: u64) -> MahalanobisMetric {
        let mut rng = rng_from_seed(seed);
        let b = Array2::from_shape_fn((dim, dim), |_| rng.gen::<f64>() - 0.5);
        let w = &b.t().dot(&b) + &(Array2::<f64>::eye(dim) * 0.1);
        MahalanobisMetric::new(w, 0.0).unwrap()
    }

    #[test]
    fn scaled_atom_is_recovered() {
        let d = random_dictionary(6, 8, 1);
        let x: Vec<Complex64> = d.atom(4).iter().map(|z| z * 0.7).collect();
        let m = match_l2(&x, &d).unwrap();
        assert_eq!(m.atom, Some(4));
        assert!((m.scale - 0.7).abs() < 1e-12);
        assert!((m.correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_density_is_clamped() {
        let mut atoms = Array2::zeros((2, 2));
        atoms[[0, 0]] = Complex64::new(1.0, 0.0);
        atoms[[1, 1]] = Complex64::new(1.0, 0.0);
        let params = vec![AtomParams { t1: 1.0, t2: 1.0, b0: 0.0 }; 2];
        let d = Dictionary::from_parts(atoms, params, vec![1.0, 1.0]).unwrap();
        let x = [Complex64::new(-1.0, 0.0), Complex64::new(0.0, 0.0)];
        let m = match_l2(&x, &d).unwrap();
        assert!(m.rho >= 0.0 && m.scale == 0.0);
    }

    #[test]
    fn zero_query_is_background() {
        let d = random_dictionary(3, 4, 2);
        let m = match_l2(&[Complex64::new(0.0, 0.0); 4], &d).unwrap();
        assert_eq!(m, MatchResult::background());
    }

    #[test]
    fn l2_agrees_with_brute_force() {
        let mut rng = rng_from_seed(3);
        for seed in 0..50 {
            let d = random_dictionary(3, 5, seed);
            let x = random_query(5, &mut rng);
            let m = match_l2(&x, &d).unwrap();
            let nx = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let mut best = (f64::INFINITY, 0);
            for k in 0..d.len() {
                let dist: f64 = x.iter().zip(d.atom(k)).map(|(a, b)| (a / nx - b).norm_sqr()).sum();
                if dist < best.0 {
                    best = (dist, k);
                }
            }
            assert_eq!(m.atom, Some(best.1));
            let ip: Complex64 = x.iter().zip(d.atom(best.1)).map(|(a, b)| a.conj() * b).sum();
            assert!((m.scale - ip.re.max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_agrees_with_brute_force() {
        let mut rng = rng_from_seed(4);
        for seed in 0..30 {
            let d = random_dictionary(5, 3, seed);
            let metric = random_metric(6, seed + 100);
            let x = random_query(3, &mut rng);
            let m = match_metric(&x, &d, &metric).unwrap();
            let q = crate::metric::realify(&x).unwrap();
            let mut best = (f64::INFINITY, 0);
            for k in 0..d.len() {
                let a = crate::metric::realify(d.atom(k)).unwrap();
                let dist = crate::metric::mahalanobis_distance(q.view(), a.view(), &metric).unwrap();
                if dist < best.0 {
                    best = (dist, k);
                }
            }
            assert_eq!(m.atom, Some(best.1));
            assert!((m.distance - best.0).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_metric_matches_l2() {
        let mut rng = rng_from_seed(5);
        for seed in 0..200 {
            let d = random_dictionary(7, 4, seed);
            let id = MahalanobisMetric::identity(8);
            let x = random_query(4, &mut rng);
            assert_eq!(match_l2(&x, &d).unwrap().atom, match_metric(&x, &d, &id).unwrap().atom);
        }
    }

    #[test]
    fn atom_query_under_any_metric() {
        let d = random_dictionary(5, 3, 6);
        let metric = random_metric(6, 7);
        let x: Vec<Complex64> = d.atom(2).to_vec();
        let m = match_metric(&x, &d, &metric).unwrap();
        assert_eq!(m.atom, Some(2));
        assert!(m.distance < 1e-20);
    }

    #[test]
    fn positive_scaling_invariance() {
        let d = random_dictionary(9, 6, 8);
        let mut rng = rng_from_seed(9);
        let x = random_query(6, &mut rng);
        let a = match_l2(&x, &d).unwrap();
        let x3: Vec<Complex64> = x.iter().map(|z| z * 3.0).collect();
        let b = match_l2(&x3, &d).unwrap();
        assert_eq!(a.atom, b.atom);
        assert!((b.scale - 3.0 * a.scale).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let mut atoms = Array2::zeros((3, 2));
        atoms[[0, 0]] = Complex64::new(0.0, 1.0);
        atoms[[1, 0]] = Complex64::new(1.0, 0.0);
        atoms[[2, 0]] = Complex64::new(1.0, 0.0);
        let params = vec![AtomParams { t1: 1.0, t2: 1.0, b0: 0.0 }; 3];
        let d = Dictionary::from_parts(atoms, params, vec![1.0; 3]).unwrap();
        let m = match_l2(&[Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)], &d).unwrap();
        assert_eq!(m.atom, Some(1));
    }

    #[test]
    fn image_matching_and_replacement() {
        let d = random_dictionary(4, 6, 10);
        let mut fps = Array2::zeros((6, 6));
        let mut rng = rng_from_seed(11);
        for v in 1..6 {
            let q = random_query(6, &mut rng);
            for t in 0..6 {
                fps[[v, t]] = q[t];
            }
        }
        let seq = ImageSequence::from_fingerprints(&fps, 2, 3).unwrap();
        let matcher = Matcher::new(&d, None).unwrap();
        let out = match_image(&seq, &matcher).unwrap();
        assert_eq!(out.atoms[[0, 0]], -1);
        assert_eq!(out.maps.density[[0, 0]], 0.0);
        let norms = fingerprint_norms(&out.replaced);
        let results = matcher.match_rows(&fps).unwrap();
        for v in 0..6 {
            assert!((norms[[v / 3, v % 3]] - results[v].scale).abs() < 1e-12);
        }
        let zero = ImageSequence::zeros(6, 2, 3);
        let out = match_image(&zero, &matcher).unwrap();
        assert!(out.atoms.iter().all(|&a| a == -1));
    }

    #[test]
    fn metric_dimension_checked() {
        let d = random_dictionary(3, 4, 12);
        assert!(Matcher::new(&d, Some(&MahalanobisMetric::identity(4))).is_err());
    }
}
