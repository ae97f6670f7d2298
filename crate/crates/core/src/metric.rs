//! Relevant Component Analysis (RCA) for a Mahalanobis matching metric.
//!
//! Fingerprints are compared as real vectors `[Re(x) | Im(x)]` of length `2T`
//! after unit normalization. Training groups reconstructed fingerprints into
//! chunklets by their ground-truth atom, estimates the within-chunklet
//! covariance `C` and whitens with `W = (C + ridge I)^(-1/2)`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};

use crate::dictionary::Dictionary;
use crate::io::{self, ByteReader, ByteWriter};
use crate::kspace::ImageSequence;
use crate::{Complex64, Error, Result};

pub const METRIC_MAGIC: &[u8; 4] = b"MRFA";

/// `[Re(x) | Im(x)]` of `x / ||x||`, or `None` for an all-zero fingerprint.
pub fn realify<'a>(x: impl IntoIterator<Item = &'a Complex64>) -> Option<Array1<f64>> {
    let x: Vec<Complex64> = x.into_iter().copied().collect();
    let t = x.len();
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return None;
    }
    let mut v = Array1::zeros(2 * t);
    for (j, z) in x.iter().enumerate() {
        v[j] = z.re / norm;
        v[t + j] = z.im / norm;
    }
    Some(v)
}

/// Groups of realified fingerprints sharing a ground-truth atom.
#[derive(Debug, Clone)]
pub struct ChunkletSet {
    dim: usize,
    /// Atom index of each chunklet.
    pub labels: Vec<usize>,
    pub chunklets: Vec<Vec<Array1<f64>>>,
}

impl ChunkletSet {
    pub fn new(labels: Vec<usize>, chunklets: Vec<Vec<Array1<f64>>>) -> Result<Self> {
        if labels.len() != chunklets.len() {
            return Err(Error::Shape("one label per chunklet required".into()));
        }
        let dim = match chunklets.first().and_then(|c| c.first()) {
            Some(v) => v.len(),
            None => return Err(Error::InvalidArgument("no chunklets".into())),
        };
        for c in &chunklets {
            if c.is_empty() {
                return Err(Error::InvalidArgument("empty chunklet".into()));
            }
            if c.iter().any(|v| v.len() != dim) {
                return Err(Error::Shape("chunklet members differ in length".into()));
            }
        }
        Ok(Self {
            dim,
            labels,
            chunklets,
        })
    }

    pub fn len(&self) -> usize {
        self.chunklets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunklets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of samples `M`.
    pub fn total(&self) -> usize {
        self.chunklets.iter().map(Vec::len).sum()
    }

    pub fn means(&self) -> Vec<Array1<f64>> {
        self.chunklets
            .iter()
            .map(|c| {
                let mut m = Array1::zeros(self.dim);
                for v in c {
                    m += v;
                }
                m / c.len() as f64
            })
            .collect()
    }
}

/// One chunklet per atom that has at least one assigned voxel. Each holds the
/// voxels' normalized fingerprints plus the atom itself. `assignment` uses
/// negative values for background.
pub fn build_chunklets(recon: &ImageSequence, dict: &Dictionary, assignment: &Array2<i32>) -> Result<ChunkletSet> {
    if assignment.dim() != (recon.rows(), recon.cols()) {
        return Err(Error::Shape(format!(
            "assignment {:?} vs image {}x{}",
            assignment.dim(),
            recon.rows(),
            recon.cols()
        )));
    }
    if recon.frames() != dict.frames() {
        return Err(Error::Shape(format!(
            "recon has {} frames, dictionary {}",
            recon.frames(),
            dict.frames()
        )));
    }
    let mut groups: BTreeMap<usize, Vec<Array1<f64>>> = BTreeMap::new();
    let fps = recon.fingerprints();
    for (v, &k) in assignment.iter().enumerate() {
        if k < 0 {
            continue;
        }
        let k = k as usize;
        if k >= dict.len() {
            return Err(Error::InvalidArgument(format!("atom index {k} out of range")));
        }
        if let Some(p) = realify(fps.row(v)) {
            groups.entry(k).or_default().push(p);
        }
    }
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no foreground voxels to build chunklets from".into()));
    }
    let mut labels = Vec::with_capacity(groups.len());
    let mut chunklets = Vec::with_capacity(groups.len());
    for (k, mut members) in groups {
        members.push(realify(dict.atom(k)).expect("atoms have unit norm"));
        labels.push(k);
        chunklets.push(members);
    }
    ChunkletSet::new(labels, chunklets)
}

/// `C = (1/M) sum_j sum_i (P_ji - mean_j)(P_ji - mean_j)^T`.
pub fn within_chunklet_covariance(cs: &ChunkletSet) -> Array2<f64> {
    let means = cs.means();
    let mut z = Array2::zeros((cs.total(), cs.dim()));
    let mut row = 0;
    for (c, m) in cs.chunklets.iter().zip(&means) {
        for v in c {
            z.row_mut(row).assign(&(v - m));
            row += 1;
        }
    }
    let mut c = z.t().dot(&z) / cs.total() as f64;
    // exact symmetry
    for i in 0..c.nrows() {
        for j in 0..i {
            let s = 0.5 * (c[[i, j]] + c[[j, i]]);
            c[[i, j]] = s;
            c[[j, i]] = s;
        }
    }
    c
}

/// `1e-8 * trace(C) / dim`.
pub fn default_ridge(c: &Array2<f64>) -> f64 {
    let n = c.nrows().max(1) as f64;
    1e-8 * c.diag().sum() / n
}

/// Regularization added to `C` before whitening.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Ridge {
    /// [`default_ridge`] of the covariance.
    #[default]
    Auto,
    Value(f64),
}

/// Real whitening transform `W`; the learned matrix is `A = W^T W`.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisMetric {
    w: Array2<f64>,
    ridge: f64,
}

impl MahalanobisMetric {
    pub fn new(w: Array2<f64>, ridge: f64) -> Result<Self> {
        if !w.is_square() || w.nrows() == 0 {
            return Err(Error::Shape(format!("metric transform must be square, got {:?}", w.dim())));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("metric transform has non-finite entries".into()));
        }
        Ok(Self { w, ridge })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            w: Array2::eye(dim),
            ridge: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `A = W^T W`.
    pub fn matrix(&self) -> Array2<f64> {
        self.w.t().dot(&self.w)
    }

    pub fn transform(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.w.dot(&v)
    }

    /// Share of `A`'s squared Frobenius norm sitting on its diagonal.
    pub fn diagonal_dominance(&self) -> f64 {
        let a = self.matrix();
        let total: f64 = a.iter().map(|x| x * x).sum();
        let diag: f64 = a.diag().iter().map(|x| x * x).sum();
        if total > 0.0 {
            diag / total
        } else {
            0.0
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(METRIC_MAGIC);
        w.u32(self.dim() as u32);
        for &x in self.w.iter() {
            w.f64(x);
        }
        w.f64(self.ridge);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "metric");
        r.magic(METRIC_MAGIC)?;
        let dim = r.u32()? as usize;
        r.expect_items(dim * dim + 1, 8)?;
        let mut data = Vec::with_capacity(dim * dim);
        for _ in 0..dim * dim {
            data.push(r.f64()?);
        }
        let ridge = r.f64()?;
        r.finish()?;
        let w = Array2::from_shape_vec((dim, dim), data).map_err(|e| Error::format("metric", e.to_string()))?;
        Self::new(w, ridge)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&io::read_file(path.as_ref())?)
    }
}

/// `W = (C + ridge I)^(-1/2)` by symmetric eigendecomposition.
pub fn whiten(c: &Array2<f64>, ridge: f64) -> Result<MahalanobisMetric> {
    if !c.is_square() || c.nrows() == 0 {
        return Err(Error::Shape(format!("covariance must be square, got {:?}", c.dim())));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
    }
    let n = c.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| c[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = lmax * n as f64 * f64::EPSILON;
    if ridge == 0.0 {
        let deficient = eig.eigenvalues.iter().filter(|&&l| l <= tol).count();
        if deficient > 0 {
            return Err(Error::RankDeficient { deficient, dim: n });
        }
    }
    let floor = if ridge > 0.0 { ridge } else { tol };
    let scale: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| 1.0 / (l + ridge).max(floor).sqrt())
        .collect();
    let v = &eig.eigenvectors;
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for (k, &d) in scale.iter().enumerate() {
                s += v[(i, k)] * d * v[(j, k)];
            }
            w[[i, j]] = s;
            w[[j, i]] = s;
        }
    }
    MahalanobisMetric::new(w, ridge)
}

pub fn rca_fit(cs: &ChunkletSet, ridge: Ridge) -> Result<MahalanobisMetric> {
    let c = within_chunklet_covariance(cs);
    let r = match ridge {
        Ridge::Auto => default_ridge(&c),
        Ridge::Value(r) => r,
    };
    whiten(&c, r)
}

/// `||W (a - b)||^2`.
pub fn mahalanobis_distance(a: ArrayView1<f64>, b: ArrayView1<f64>, m: &MahalanobisMetric) -> Result<f64> {
    if a.len() != b.len() || a.len() != m.dim() {
        return Err(Error::Shape(format!(
            "lengths {} and {} vs metric dimension {}",
            a.len(),
            b.len(),
            m.dim()
        )));
    }
    let d = &a - &b;
    Ok(m.w.dot(&d).iter().map(|x| x * x).sum())
}

/// Rows of `x` mapped through `W` (`x W^T`).
pub(crate) fn transform_rows(x: &Array2<f64>, m: &MahalanobisMetric) -> Array2<f64> {
    x.dot(&m.w.t())
}
