//! Undersampled Fourier measurement operator and measurement synthesis.
//!
//! The transform is the centered, unitary 2D DFT
//! `X = fftshift(fft2(ifftshift(x))) / sqrt(rows * cols)`, so the adjoint of
//! row-restricted sampling is zero filling followed by the inverse transform.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::dictionary::simulate_fingerprint;
use crate::io::{self, ByteReader, ByteWriter};
use crate::phantom::ParameterMaps;
use crate::sampling::MaskSequence;
use crate::sequence::PulseSequence;
use crate::{rng_from_seed, Complex64, Error, Result};

pub const MEAS_MAGIC: &[u8; 4] = b"MRFY";
pub const MEAS_VERSION: u32 = 1;

/// Centered unitary 2D DFT of a fixed image size.
#[derive(Clone)]
pub struct FourierOp {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FourierOp({}x{})", self.rows, self.cols)
    }
}

fn shift_rows(src: ArrayView2<Complex64>, dst: &mut ArrayViewMut2<Complex64>, offset: usize) {
    let n = src.nrows();
    for i in 0..n {
        dst.row_mut(i).assign(&src.row((i + offset) % n));
    }
}

impl FourierOp {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            // fft along a row has length `cols`
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn check_image(&self, img: &ArrayView2<Complex64>) -> Result<()> {
        if img.dim() != (self.rows, self.cols) {
            return Err(Error::Shape(format!(
                "image is {:?}, operator expects {}x{}",
                img.dim(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    fn transform(&self, img: ArrayView2<Complex64>, inverse: bool) -> Array2<Complex64> {
        let (r, c) = (self.rows, self.cols);
        // centered transform: pre-shift by ifftshift, post-shift by fftshift
        let (pre_r, pre_c) = (r / 2, c / 2);
        let (post_r, post_c) = (r - r / 2, c - c / 2);
        let mut a = Array2::zeros((r, c));
        shift_rows(img, &mut a.view_mut(), pre_r);
        let mut b = Array2::zeros((r, c));
        shift_rows(a.t(), &mut b.view_mut().reversed_axes(), pre_c);
        let (row_fft, col_fft) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        // rows are contiguous in standard layout
        for mut row in b.outer_iter_mut() {
            row_fft.process(row.as_slice_mut().expect("standard layout"));
        }
        let mut bt = b.t().as_standard_layout().into_owned();
        for mut col in bt.outer_iter_mut() {
            col_fft.process(col.as_slice_mut().expect("standard layout"));
        }
        // bt is cols x rows; shift back along both axes
        let scale = 1.0 / ((r * c) as f64).sqrt();
        let mut out = Array2::zeros((r, c));
        for i in 0..r {
            let si = (i + post_r) % r;
            for j in 0..c {
                let sj = (j + post_c) % c;
                out[[i, j]] = bt[[sj, si]] * scale;
            }
        }
        out
    }

    /// Full centered unitary forward transform.
    pub fn fft2c(&self, img: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        self.check_image(&img)?;
        Ok(self.transform(img, false))
    }

    /// Full centered unitary inverse transform.
    pub fn ifft2c(&self, ksp: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        self.check_image(&ksp)?;
        Ok(self.transform(ksp, true))
    }

    /// Transform, then keep only the listed k-space rows (in the given order).
    pub fn forward(&self, img: ArrayView2<Complex64>, mask_rows: &[usize]) -> Result<Array2<Complex64>> {
        if let Some(&bad) = mask_rows.iter().find(|&&i| i >= self.rows) {
            return Err(Error::InvalidArgument(format!("mask row {bad} out of range")));
        }
        let full = self.fft2c(img)?;
        let mut out = Array2::zeros((mask_rows.len(), self.cols));
        for (k, &i) in mask_rows.iter().enumerate() {
            out.row_mut(k).assign(&full.row(i));
        }
        Ok(out)
    }

    /// Zero-fill the unsampled rows, then inverse transform.
    pub fn adjoint(&self, meas: ArrayView2<Complex64>, mask_rows: &[usize]) -> Result<Array2<Complex64>> {
        if meas.dim() != (mask_rows.len(), self.cols) {
            return Err(Error::Shape(format!(
                "measurement is {:?}, expected {}x{}",
                meas.dim(),
                mask_rows.len(),
                self.cols
            )));
        }
        let mut full = Array2::zeros((self.rows, self.cols));
        for (k, &i) in mask_rows.iter().enumerate() {
            if i >= self.rows {
                return Err(Error::InvalidArgument(format!("mask row {i} out of range")));
            }
            let mut row = full.row_mut(i);
            row += &meas.row(k);
        }
        Ok(self.transform(full.view(), true))
    }
}

/// `T` complex images of one slice, stored frame-major `(T, rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSequence {
    pub data: Array3<Complex64>,
}

impl ImageSequence {
    pub fn zeros(frames: usize, rows: usize, cols: usize) -> Self {
        Self {
            data: Array3::zeros((frames, rows, cols)),
        }
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn rows(&self) -> usize {
        self.data.dim().1
    }

    pub fn cols(&self) -> usize {
        self.data.dim().2
    }

    pub fn voxels(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn frame(&self, t: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(0), t)
    }

    pub fn frame_mut(&mut self, t: usize) -> ArrayViewMut2<'_, Complex64> {
        self.data.index_axis_mut(Axis(0), t)
    }

    /// Time course at pixel `(r, c)`.
    pub fn fingerprint(&self, r: usize, c: usize) -> Vec<Complex64> {
        self.data.slice(s![.., r, c]).to_vec()
    }

    /// All fingerprints as an `N x T` matrix, voxels in row-major order.
    pub fn fingerprints(&self) -> Array2<Complex64> {
        let (t, r, c) = self.data.dim();
        let mut out = Array2::zeros((r * c, t));
        for (ti, frame) in self.data.outer_iter().enumerate() {
            for (v, z) in frame.iter().enumerate() {
                out[[v, ti]] = *z;
            }
        }
        out
    }

    pub fn from_fingerprints(fp: &Array2<Complex64>, rows: usize, cols: usize) -> Result<Self> {
        let (n, t) = fp.dim();
        if n != rows * cols {
            return Err(Error::Shape(format!("{n} fingerprints for a {rows}x{cols} image")));
        }
        let mut data = Array3::zeros((t, rows, cols));
        for v in 0..n {
            for ti in 0..t {
                data[[ti, v / cols, v % cols]] = fp[[v, ti]];
            }
        }
        Ok(Self { data })
    }
}

/// Per-voxel raw fingerprint scaled by proton density.
pub fn render_ground_truth(maps: &ParameterMaps, seq: &PulseSequence) -> Result<ImageSequence> {
    maps.validate()?;
    let (rows, cols) = (maps.rows(), maps.cols());
    let mut unique: BTreeMap<(u64, u64, u64), usize> = BTreeMap::new();
    let mut keys = Vec::new();
    for ((r, c), &rho) in maps.density.indexed_iter() {
        if rho == 0.0 {
            continue;
        }
        let key = (
            maps.t1[[r, c]].to_bits(),
            maps.t2[[r, c]].to_bits(),
            maps.b0[[r, c]].to_bits(),
        );
        let next = unique.len();
        let id = *unique.entry(key).or_insert(next);
        if id == next {
            keys.push(key);
        }
    }
    let sims = keys
        .par_iter()
        .map(|&(t1, t2, b0)| {
            simulate_fingerprint(f64::from_bits(t1), f64::from_bits(t2), f64::from_bits(b0), seq)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ImageSequence::zeros(seq.len(), rows, cols);
    for ((r, c), &rho) in maps.density.indexed_iter() {
        if rho == 0.0 {
            continue;
        }
        let key = (
            maps.t1[[r, c]].to_bits(),
            maps.t2[[r, c]].to_bits(),
            maps.b0[[r, c]].to_bits(),
        );
        let sim = &sims[unique[&key]];
        for (t, z) in sim.iter().enumerate() {
            out.data[[t, r, c]] = z * rho;
        }
    }
    Ok(out)
}

/// Undersampled k-space rows for every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub rows: usize,
    pub cols: usize,
    pub masks: MaskSequence,
    /// Frame `t` holds `masks.frames[t].len() x cols` samples.
    pub y: Vec<Array2<Complex64>>,
}

impl MeasurementSet {
    pub fn frames(&self) -> usize {
        self.y.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.masks.n_rows != self.rows || self.masks.len() != self.y.len() {
            return Err(Error::Shape("mask sequence does not match measurements".into()));
        }
        for (t, (y, m)) in self.y.iter().zip(&self.masks.frames).enumerate() {
            if y.dim() != (m.len(), self.cols) {
                return Err(Error::Shape(format!(
                    "frame {} has {:?} samples for {} rows",
                    t + 1,
                    y.dim(),
                    m.len()
                )));
            }
        }
        self.masks.validate()
    }

    /// Zero-filled inverse transform of every frame.
    pub fn adjoint_images(&self, op: &FourierOp) -> Result<ImageSequence> {
        self.validate()?;
        let frames = self
            .y
            .par_iter()
            .zip(self.masks.frames.par_iter())
            .map(|(y, m)| op.adjoint(y.view(), m))
            .collect::<Result<Vec<_>>>()?;
        let mut out = ImageSequence::zeros(self.frames(), self.rows, self.cols);
        for (t, f) in frames.into_iter().enumerate() {
            out.frame_mut(t).assign(&f);
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(MEAS_MAGIC);
        w.u32(MEAS_VERSION);
        w.u32(self.rows as u32);
        w.u32(self.cols as u32);
        w.u32(self.y.len() as u32);
        let text = self.masks.to_text();
        w.u32(text.len() as u32);
        w.bytes(text.as_bytes());
        for frame in &self.y {
            for z in frame.iter() {
                w.f64(z.re);
                w.f64(z.im);
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "measurement");
        r.magic(MEAS_MAGIC)?;
        let version = r.u32()?;
        if version != MEAS_VERSION {
            return Err(Error::format("measurement", format!("unsupported version {version}")));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let t = r.u32()? as usize;
        let text_len = r.u32()? as usize;
        let text = r.take(text_len)?;
        let masks = MaskSequence::from_text(&String::from_utf8_lossy(text))?;
        if masks.len() != t || masks.n_rows != rows {
            return Err(Error::format("measurement", "embedded masks disagree with header"));
        }
        let mut y = Vec::with_capacity(t);
        for frame in &masks.frames {
            r.expect_items(frame.len() * cols, 16)?;
            let data = (0..frame.len() * cols)
                .map(|_| Ok(Complex64::new(r.f64()?, r.f64()?)))
                .collect::<Result<Vec<_>>>()?;
            y.push(Array2::from_shape_vec((frame.len(), cols), data).expect("length checked"));
        }
        r.finish()?;
        let m = Self { rows, cols, masks, y };
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&io::read_file(path.as_ref())?)
    }
}

/// Samples every frame of `truth` through its mask and adds complex Gaussian
/// noise with total standard deviation `noise_sigma` (each of the real and
/// imaginary parts has std `noise_sigma / sqrt(2)`).
pub fn acquire(
    truth: &ImageSequence,
    masks: &MaskSequence,
    noise_sigma: f64,
    seed: u64,
) -> Result<MeasurementSet> {
    if masks.len() != truth.frames() || masks.n_rows != truth.rows() {
        return Err(Error::Shape(format!(
            "{} masks over {} rows for {} frames of {} rows",
            masks.len(),
            masks.n_rows,
            truth.frames(),
            truth.rows()
        )));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument("noise sigma must be >= 0".into()));
    }
    let op = FourierOp::new(truth.rows(), truth.cols());
    let mut y = (0..truth.frames())
        .into_par_iter()
        .map(|t| op.forward(truth.frame(t), &masks.frames[t]))
        .collect::<Result<Vec<_>>>()?;
    if noise_sigma > 0.0 {
        let mut rng = rng_from_seed(seed);
        let normal = Normal::new(0.0, noise_sigma / 2f64.sqrt()).expect("sigma checked");
        for frame in &mut y {
            for z in frame.iter_mut() {
                *z += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
    }
    Ok(MeasurementSet {
        rows: truth.rows(),
        cols: truth.cols(),
        masks: masks.clone(),
        y,
    })
}

/// Noise level at which the fully sampled, zero-filled image of `frame`
/// has the given PSNR against its noiseless version (peak = largest
/// magnitude of that frame). The transform is unitary, so image-domain noise
/// keeps the k-space standard deviation.
pub fn noise_sigma_for_psnr(truth: &ImageSequence, frame: usize, psnr_db: f64) -> Result<f64> {
    if frame >= truth.frames() {
        return Err(Error::InvalidArgument(format!(
            "frame {frame} out of range for {} frames",
            truth.frames()
        )));
    }
    let peak = truth.frame(frame).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) || !psnr_db.is_finite() {
        return Err(Error::InvalidArgument("need a nonzero frame and a finite PSNR".into()));
    }
    Ok(peak * 10f64.powf(-psnr_db / 20.0))
}

/// Hermitian inner product `<a, b> = sum conj(a) b`.
pub fn inner(a: ArrayView2<Complex64>, b: ArrayView2<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: ArrayView2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{build_parameter_maps, synth_label_map, NoiseSpec, TissueTable};
    use crate::sampling::{draw_mask_sequence, full_masks};
    use crate::sequence::{generate_sequence, SequenceSpec};
    use rand::Rng as _;
    use std::f64::consts::PI;

    fn random_image(rows: usize, cols: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_fn((rows, cols), |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    /// Direct O(N^2) centered DFT.
    fn naive_centered_dft(x: &Array2<Complex64>) -> Array2<Complex64> {
        let (r, c) = x.dim();
        let (hr, hc) = ((r / 2) as f64, (c / 2) as f64);
        let scale = 1.0 / ((r * c) as f64).sqrt();
        Array2::from_shape_fn((r, c), |(k, l)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..r {
                for n in 0..c {
                    let phase = -2.0
                        * PI
                        * ((k as f64 - hr) * (m as f64 - hr) / r as f64
                            + (l as f64 - hc) * (n as f64 - hc) / c as f64);
                    acc += x[[m, n]] * Complex64::from_polar(1.0, phase);
                }
            }
            acc * scale
        })
    }

    #[test]
    fn matches_naive_dft() {
        let mut impulse = Array2::zeros((4, 4));
        impulse[[0, 0]] = Complex64::new(1.0, 0.0);
        let op = FourierOp::new(4, 4);
        let oracle = naive_centered_dft(&impulse);
        let got = op.forward(impulse.view(), &[1]).unwrap();
        for j in 0..4 {
            assert!((got[[0, j]] - oracle[[1, j]]).norm() < 1e-12);
        }
        for &(r, c) in &[(6, 10), (5, 7), (8, 8)] {
            let x = random_image(r, c, 3);
            let op = FourierOp::new(r, c);
            let full = op.fft2c(x.view()).unwrap();
            let oracle = naive_centered_dft(&x);
            let err = (&full - &oracle).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{r}x{c}: {err}");
        }
    }

    #[test]
    fn unitary_and_zero() {
        let op = FourierOp::new(16, 12);
        let rows: Vec<usize> = (0..16).collect();
        let x = random_image(16, 12, 1);
        let y = op.forward(x.view(), &rows).unwrap();
        assert!((norm(y.view()) - norm(x.view())).abs() < 1e-10);
        let back = op.adjoint(y.view(), &rows).unwrap();
        assert!(norm((&back - &x).view()) < 1e-10);
        let z = op.forward(Array2::zeros((16, 12)).view(), &[2, 5]).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = rng_from_seed(99);
        for trial in 0..100 {
            let (r, c) = (8 + 2 * (trial % 5), 6 + trial % 7);
            let op = FourierOp::new(r, c);
            let mut mask: Vec<usize> = (0..r).filter(|_| rng.gen::<f64>() < 0.4).collect();
            if mask.is_empty() {
                mask.push(r / 2);
            }
            let x = random_image(r, c, trial as u64);
            let y = random_image(mask.len(), c, 1000 + trial as u64);
            let lhs = inner(op.forward(x.view(), &mask).unwrap().view(), y.view());
            let rhs = inner(x.view(), op.adjoint(y.view(), &mask).unwrap().view());
            let rel = (lhs - rhs).norm() / (norm(x.view()) * norm(y.view()));
            assert!(rel < 1e-10, "trial {trial}: {rel}");
        }
    }

    #[test]
    fn single_row_projection_idempotent() {
        let op = FourierOp::new(8, 8);
        let x = random_image(8, 8, 5);
        let p = |v: &Array2<Complex64>| op.adjoint(op.forward(v.view(), &[3]).unwrap().view(), &[3]).unwrap();
        let once = p(&x);
        let twice = p(&once);
        assert!(norm((&once - &twice).view()) < 1e-10);
        // forward . adjoint is the identity on sampled rows
        let y = random_image(2, 8, 6);
        let back = op.forward(op.adjoint(y.view(), &[1, 6]).unwrap().view(), &[1, 6]).unwrap();
        assert!(norm((&back - &y).view()) < 1e-10);
    }

    #[test]
    fn adjoint_shape_mismatch() {
        let op = FourierOp::new(8, 8);
        assert!(op.adjoint(Array2::zeros((2, 8)).view(), &[1]).is_err());
        assert!(op.forward(Array2::zeros((8, 8)).view(), &[8]).is_err());
    }

    fn small_truth() -> (ParameterMaps, ImageSequence) {
        let labels = synth_label_map(16, 16, 2).unwrap();
        let maps = build_parameter_maps(&labels, &TissueTable::brain(), &NoiseSpec::default(), 2).unwrap();
        let seq = generate_sequence(
            &SequenceSpec {
                length: 20,
                ..SequenceSpec::default()
            },
            4,
        )
        .unwrap();
        let img = render_ground_truth(&maps, &seq).unwrap();
        (maps, img)
    }

    #[test]
    fn ground_truth_rendering() {
        let (maps, img) = small_truth();
        let seq = generate_sequence(
            &SequenceSpec {
                length: 20,
                ..SequenceSpec::default()
            },
            4,
        )
        .unwrap();
        for ((r, c), &rho) in maps.density.indexed_iter() {
            let fp = img.fingerprint(r, c);
            if rho == 0.0 {
                assert!(fp.iter().all(|z| z.norm() == 0.0));
            } else {
                let sim = simulate_fingerprint(maps.t1[[r, c]], maps.t2[[r, c]], maps.b0[[r, c]], &seq).unwrap();
                for (a, b) in fp.iter().zip(&sim) {
                    assert_eq!(*a, b * rho);
                }
            }
        }
        let mut doubled = maps.clone();
        doubled.density.mapv_inplace(|v| v * 2.0);
        // density > 1 is fine for rendering purposes
        let img2 = render_ground_truth(&doubled, &seq).unwrap();
        for (a, b) in img2.data.iter().zip(img.data.iter()) {
            assert!((a - b * 2.0).norm() <= 1e-15 * a.norm().max(1.0));
        }
        let fp = img.fingerprints();
        assert_eq!(ImageSequence::from_fingerprints(&fp, 16, 16).unwrap(), img);
    }

    #[test]
    fn acquisition_noise_free_and_round_trip() {
        let (_, img) = small_truth();
        let full = full_masks(16, 20);
        let y = acquire(&img, &full, 0.0, 1).unwrap();
        let op = FourierOp::new(16, 16);
        for t in 0..20 {
            assert_eq!(y.y[t], op.forward(img.frame(t), &full.frames[t]).unwrap());
        }
        let back = y.adjoint_images(&op).unwrap();
        let err = (&back.data - &img.data).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);

        let masks = draw_mask_sequence(16, 3, 2, 20, 4.0, 8).unwrap();
        let y = acquire(&img, &masks, 0.3, 5).unwrap();
        let bytes = y.to_bytes();
        assert_eq!(MeasurementSet::from_bytes(&bytes).unwrap(), y);
        assert!(MeasurementSet::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    }

    #[test]
    fn noise_standard_deviation() {
        let truth = ImageSequence::zeros(200, 32, 16);
        let masks = full_masks(32, 200);
        let y = acquire(&truth, &masks, 0.5, 77).unwrap();
        let samples: Vec<Complex64> = y.y.iter().flat_map(|f| f.iter().cloned()).collect();
        assert!(samples.len() >= 100_000);
        let var = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64;
        let std = var.sqrt();
        assert!((std - 0.5).abs() / 0.5 < 0.02, "std {std}");
        let re_var = samples.iter().map(|z| z.re * z.re).sum::<f64>() / samples.len() as f64;
        assert!((re_var - 0.125).abs() / 0.125 < 0.03);
    }

    #[test]
    fn calibrated_noise_hits_target_psnr() {
        let mut truth = ImageSequence::zeros(1, 64, 64);
        truth.frame_mut(0).assign(&random_image(64, 64, 5));
        let sigma = noise_sigma_for_psnr(&truth, 0, 19.1).unwrap();
        let masks = full_masks(64, 1);
        let meas = acquire(&truth, &masks, sigma, 9).unwrap();
        let op = FourierOp::new(64, 64);
        let noisy = op.adjoint(meas.y[0].view(), &masks.frames[0]).unwrap();
        let mse = noisy.iter().zip(truth.frame(0).iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / 4096.0;
        let peak = truth.frame(0).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let psnr = 10.0 * (peak * peak / mse).log10();
        assert!((psnr - 19.1).abs() < 0.1, "psnr {psnr}");
        assert!(noise_sigma_for_psnr(&truth, 1, 19.1).is_err());
    }
}
