//! IR-bSSFP Bloch simulation and the normalized fingerprint dictionary.
//!
//! The simulator starts from the inverted state `(0, 0, -1)`. Each frame applies
//! an instantaneous RF rotation about x with alternating sign, relaxes and
//! precesses for TR/2 to the echo (where the sample `Mx + i My` is taken), then
//! for another TR/2 up to the next pulse.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::io::{self, ByteReader, ByteWriter};
use crate::phantom::TissueTable;
use crate::sequence::PulseSequence;
use crate::{Complex64, Error, Result};

pub const DICT_MAGIC: &[u8; 4] = b"MRFD";
pub const DICT_VERSION: u32 = 1;

/// Magnetization of one isochromat, in units of M0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl SpinState {
    pub fn inverted() -> Self {
        Self {
            mx: 0.0,
            my: 0.0,
            mz: -1.0,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.mx * self.mx + self.my * self.my + self.mz * self.mz).sqrt()
    }

    pub fn transverse(&self) -> Complex64 {
        Complex64::new(self.mx, self.my)
    }

    /// Rotation about the x axis by `angle` radians.
    pub fn rotate_x(&mut self, angle: f64) {
        let (s, c) = angle.sin_cos();
        let my = c * self.my + s * self.mz;
        let mz = -s * self.my + c * self.mz;
        self.my = my;
        self.mz = mz;
    }

    /// Free precession and relaxation over `tau_ms`.
    pub fn relax(&mut self, tau_ms: f64, t1: f64, t2: f64, b0_hz: f64) {
        let e1 = (-tau_ms / t1).exp();
        let e2 = (-tau_ms / t2).exp();
        let phi = 2.0 * PI * b0_hz * tau_ms * 1e-3;
        let (s, c) = phi.sin_cos();
        let mx = e2 * (c * self.mx - s * self.my);
        let my = e2 * (s * self.mx + c * self.my);
        self.mx = mx;
        self.my = my;
        self.mz = 1.0 + (self.mz - 1.0) * e1;
    }
}

fn check_relaxation(t1: f64, t2: f64) -> Result<()> {
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "relaxation times must be positive (T1 = {t1}, T2 = {t2})"
        )));
    }
    if t2 > t1 {
        return Err(Error::InvalidArgument(format!(
            "T2 = {t2} exceeds T1 = {t1}"
        )));
    }
    Ok(())
}

/// Simulates the raw (unit proton density) IR-bSSFP signal evolution, calling
/// `observe` with the spin state at each echo.
pub fn simulate_with(
    t1: f64,
    t2: f64,
    b0: f64,
    seq: &PulseSequence,
    mut observe: impl FnMut(usize, &SpinState),
) -> Result<()> {
    check_relaxation(t1, t2)?;
    let mut m = SpinState::inverted();
    for (t, (&fa, &tr)) in seq.fa_deg.iter().zip(&seq.tr_ms).enumerate() {
        // frames are 1-based for the alternating sign
        let sign = if (t + 1) % 2 == 0 { 1.0 } else { -1.0 };
        m.rotate_x(sign * fa.to_radians());
        m.relax(tr / 2.0, t1, t2, b0);
        observe(t, &m);
        m.relax(tr / 2.0, t1, t2, b0);
    }
    Ok(())
}

/// Raw fingerprint `X_t = Mx + i My` at every echo.
pub fn simulate_fingerprint(t1: f64, t2: f64, b0: f64, seq: &PulseSequence) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(seq.len());
    simulate_with(t1, t2, b0, seq, |_, m| out.push(m.transverse()))?;
    Ok(out)
}

/// Tissue parameters of one dictionary atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomParams {
    pub t1: f64,
    pub t2: f64,
    pub b0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    pub t1_values: Vec<f64>,
    pub t2_values: Vec<f64>,
    pub b0_values: Vec<f64>,
}

/// Source of a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// The segmented ranges of the original full-scale study.
    Paper,
    /// Coarse log-spaced grid sized for laptop runs (20 x 20 x 11). B0 spans a
    /// single 180 Hz window so no two offsets alias at the nominal 10 ms TR.
    Desk,
    Custom {
        t1: Vec<f64>,
        t2: Vec<f64>,
        b0: Vec<f64>,
    },
}

fn arange(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    sorted_unique(
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp().round())
            .collect(),
    )
}

fn check_list(name: &str, v: &[f64], positive: bool) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} list is empty")));
    }
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "{name} list must be strictly increasing"
        )));
    }
    if v.iter().any(|x| !x.is_finite() || (positive && *x <= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "{name} values must be finite{}",
            if positive { " and positive" } else { "" }
        )));
    }
    Ok(())
}

impl ParameterGrid {
    pub fn new(t1_values: Vec<f64>, t2_values: Vec<f64>, b0_values: Vec<f64>) -> Result<Self> {
        check_list("T1", &t1_values, true)?;
        check_list("T2", &t2_values, true)?;
        check_list("B0", &b0_values, false)?;
        Ok(Self {
            t1_values,
            t2_values,
            b0_values,
        })
    }

    /// Adds every foreground tissue's exact (T1, T2, B0) to the axes so that a
    /// noise-free phantom built from `table` lies on the grid.
    pub fn with_tissues(&self, table: &TissueTable) -> Self {
        let mut t1 = self.t1_values.clone();
        let mut t2 = self.t2_values.clone();
        let mut b0 = self.b0_values.clone();
        for t in table.foreground() {
            t1.push(t.t1);
            t2.push(t.t2);
            b0.push(t.b0);
        }
        Self {
            t1_values: sorted_unique(t1),
            t2_values: sorted_unique(t2),
            b0_values: sorted_unique(b0),
        }
    }

    /// Number of triples before the T2 <= T1 filter.
    pub fn full_size(&self) -> usize {
        self.t1_values.len() * self.t2_values.len() * self.b0_values.len()
    }

    /// Triples in lexicographic (T1, T2, B0) order.
    pub fn triples(&self, include_t2_above_t1: bool) -> Vec<AtomParams> {
        let mut out = Vec::new();
        for &t1 in &self.t1_values {
            for &t2 in &self.t2_values {
                if t2 > t1 && !include_t2_above_t1 {
                    continue;
                }
                for &b0 in &self.b0_values {
                    out.push(AtomParams { t1, t2, b0 });
                }
            }
        }
        out
    }
}

pub fn build_grid(spec: &GridSpec) -> Result<ParameterGrid> {
    match spec {
        GridSpec::Paper => {
            let t1 = sorted_unique(
                [
                    arange(300.0, 1000.0, 30.0),
                    arange(1000.0, 2500.0, 100.0),
                    arange(2500.0, 4700.0, 300.0),
                ]
                .concat(),
            );
            let t2 = sorted_unique(
                [
                    arange(45.0, 100.0, 10.0),
                    arange(110.0, 320.0, 50.0),
                    arange(320.0, 370.0, 10.0),
                    arange(380.0, 630.0, 50.0),
                ]
                .concat(),
            );
            let b0 = arange(-200.0, 200.0, 10.0);
            ParameterGrid::new(t1, t2, b0)
        }
        GridSpec::Desk => ParameterGrid::new(
            log_spaced(300.0, 4700.0, 20),
            log_spaced(40.0, 650.0, 20),
            arange(-90.0, 90.0, 18.0),
        ),
        GridSpec::Custom { t1, t2, b0 } => ParameterGrid::new(t1.clone(), t2.clone(), b0.clone()),
    }
}

/// `K` unit-norm complex fingerprints of length `T` and the triples that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<Complex64>,
    params: Vec<AtomParams>,
    norms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DictionaryOptions {
    /// Keep unphysical triples with T2 > T1 (the simulator still requires
    /// T2 <= T1, so such atoms are simulated with T2 clamped to T1).
    pub include_t2_above_t1: bool,
}

pub fn build_dictionary(
    grid: &ParameterGrid,
    seq: &PulseSequence,
    opts: DictionaryOptions,
) -> Result<Dictionary> {
    let params = grid.triples(opts.include_t2_above_t1);
    if params.is_empty() {
        return Err(Error::InvalidArgument(
            "every grid triple was filtered out (T2 > T1)".into(),
        ));
    }
    let t = seq.len();
    let rows: Vec<(Vec<Complex64>, f64)> = params
        .par_iter()
        .map(|p| {
            let raw = simulate_fingerprint(p.t1, p.t2.min(p.t1), p.b0, seq)?;
            let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "atom {p:?} has zero signal energy"
                )));
            }
            Ok((raw.into_iter().map(|z| z / norm).collect(), norm))
        })
        .collect::<Result<_>>()?;
    let mut atoms = Array2::zeros((params.len(), t));
    let mut norms = Vec::with_capacity(params.len());
    for (k, (row, norm)) in rows.into_iter().enumerate() {
        atoms.row_mut(k).assign(&ArrayView1::from(&row));
        norms.push(norm);
    }
    Ok(Dictionary {
        atoms,
        params,
        norms,
    })
}

impl Dictionary {
    pub fn from_parts(atoms: Array2<Complex64>, params: Vec<AtomParams>, norms: Vec<f64>) -> Result<Self> {
        if atoms.nrows() != params.len() || norms.len() != params.len() {
            return Err(Error::Shape("atom, parameter and norm counts differ".into()));
        }
        if params.is_empty() || atoms.ncols() == 0 {
            return Err(Error::InvalidArgument("empty dictionary".into()));
        }
        if norms.iter().any(|n| !(*n > 0.0)) {
            return Err(Error::InvalidArgument("atom norms must be positive".into()));
        }
        Ok(Self {
            atoms,
            params,
            norms,
        })
    }

    /// Number of atoms `K`.
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Fingerprint length `T`.
    pub fn frames(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> &Array2<Complex64> {
        &self.atoms
    }

    pub fn atom(&self, k: usize) -> ArrayView1<'_, Complex64> {
        self.atoms.row(k)
    }

    /// Parameter retrieval for atom `k`.
    pub fn params(&self, k: usize) -> AtomParams {
        self.params[k]
    }

    pub fn all_params(&self) -> &[AtomParams] {
        &self.params
    }

    /// Pre-normalization magnitude of atom `k`.
    pub fn norm(&self, k: usize) -> f64 {
        self.norms[k]
    }

    /// Index of the atom generated by exactly `p`, if any.
    pub fn index_of(&self, p: AtomParams) -> Option<usize> {
        self.params.iter().position(|q| *q == p)
    }

    /// Atoms as real rows `[Re(d_1..d_T), Im(d_1..d_T)]`, shape `K x 2T`.
    pub fn realified(&self) -> Array2<f64> {
        let (k, t) = self.atoms.dim();
        let mut out = Array2::zeros((k, 2 * t));
        for (i, row) in self.atoms.outer_iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                out[[i, j]] = z.re;
                out[[i, t + j]] = z.im;
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(DICT_MAGIC);
        w.u32(DICT_VERSION);
        w.u32(self.len() as u32);
        w.u32(self.frames() as u32);
        for p in &self.params {
            w.f64(p.t1);
            w.f64(p.t2);
            w.f64(p.b0);
        }
        for &n in &self.norms {
            w.f64(n);
        }
        for z in self.atoms.iter() {
            w.f64(z.re);
            w.f64(z.im);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "dictionary");
        r.magic(DICT_MAGIC)?;
        let version = r.u32()?;
        if version != DICT_VERSION {
            return Err(Error::format("dictionary", format!("unsupported version {version}")));
        }
        let k = r.u32()? as usize;
        let t = r.u32()? as usize;
        r.expect_items(k * (4 + 2 * t), 8)?;
        let params = (0..k)
            .map(|_| {
                Ok(AtomParams {
                    t1: r.f64()?,
                    t2: r.f64()?,
                    b0: r.f64()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let norms = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let data = (0..k * t)
            .map(|_| Ok(Complex64::new(r.f64()?, r.f64()?)))
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        let atoms = Array2::from_shape_vec((k, t), data).expect("length checked");
        Self::from_parts(atoms, params, norms)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&io::read_file(path.as_ref())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{generate_sequence, SequenceSpec};
    use nalgebra::{Matrix3, Vector3};

    fn seq(len: usize) -> PulseSequence {
        generate_sequence(
            &SequenceSpec {
                length: len,
                ..SequenceSpec::default()
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn zero_flip_angle_gives_zero_signal() {
        let s = PulseSequence::constant(50, 0.0, 10.0).unwrap();
        let x = simulate_fingerprint(800.0, 80.0, 0.0, &s).unwrap();
        assert!(x.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn lossless_full_flips() {
        let s = PulseSequence::constant(40, 180.0, 10.0).unwrap();
        let mut mz = Vec::new();
        let x = {
            let mut out = Vec::new();
            simulate_with(1e9, 1e9, 0.0, &s, |_, m| {
                out.push(m.transverse());
                mz.push(m.mz);
            })
            .unwrap();
            out
        };
        assert!(mz.iter().all(|z| (z.abs() - 1.0).abs() < 1e-6));
        assert!(x.iter().all(|z| z.norm() < 1e-9));
    }

    /// Independent oracle: the exact affine map over two TRs (one pulse of each
    /// sign), solved directly for its fixed point.
    #[test]
    fn converges_to_steady_state() {
        let (t1, t2, tr, fa) = (833.0f64, 86.0f64, 10.0f64, 40.0f64.to_radians());
        let s = PulseSequence::constant(2000, 40.0, tr).unwrap();
        let x = simulate_fingerprint(t1, t2, 0.0, &s).unwrap();

        let rot = |a: f64| {
            Matrix3::new(1.0, 0.0, 0.0, 0.0, a.cos(), a.sin(), 0.0, -a.sin(), a.cos())
        };
        let e1 = (-tr / 2.0 / t1).exp();
        let e2 = (-tr / 2.0 / t2).exp();
        let relax = Matrix3::new(e2, 0.0, 0.0, 0.0, e2, 0.0, 0.0, 0.0, e1);
        let recover = Vector3::new(0.0, 0.0, 1.0 - e1);
        // echo-to-echo for an odd pulse (-fa) followed by relaxation; states at echo
        let step = |m: Vector3<f64>, a: f64| relax * (rot(a) * (relax * m + recover)) + recover;
        // affine map echo(odd) -> echo(odd) through one even and one odd pulse
        let apply = |m: Vector3<f64>| step(step(m, fa), -fa);
        let b = apply(Vector3::zeros());
        let a = Matrix3::from_columns(&[
            apply(Vector3::x()) - b,
            apply(Vector3::y()) - b,
            apply(Vector3::z()) - b,
        ]);
        let fixed = (Matrix3::identity() - a).try_inverse().unwrap() * b;
        let expected = (fixed.x * fixed.x + fixed.y * fixed.y).sqrt();
        // frame index 1998 is odd in 1-based counting (t = 1999)
        let got = x[1998].norm();
        assert!(expected > 0.05);
        assert!((got - expected).abs() < 1e-9, "got {got}, expected {expected}");
    }

    #[test]
    fn magnetization_norm_bounded() {
        let s = seq(400);
        for &(t1, t2, b0) in &[(300.0, 45.0, -200.0), (4700.0, 600.0, 185.0), (833.0, 86.0, 0.0)] {
            simulate_with(t1, t2, b0, &s, |_, m| assert!(m.norm() <= 1.0 + 1e-9)).unwrap();
        }
    }

    #[test]
    fn rejects_bad_relaxation() {
        let s = seq(10);
        assert!(simulate_fingerprint(0.0, 10.0, 0.0, &s).is_err());
        assert!(simulate_fingerprint(100.0, 200.0, 0.0, &s).is_err());
    }

    #[test]
    fn paper_grid_counts() {
        let g = build_grid(&GridSpec::Paper).unwrap();
        assert_eq!(g.b0_values.len(), 41);
        assert_eq!(g.b0_values[0], -200.0);
        assert_eq!(g.t1_values.len(), 47);
        assert_eq!(g.t2_values.len(), 23);
        assert_eq!(g.full_size(), 47 * 23 * 41);
    }

    #[test]
    fn desk_grid_shape() {
        let g = build_grid(&GridSpec::Desk).unwrap();
        assert_eq!(g.t1_values.len(), 20);
        assert_eq!(g.t2_values.len(), 20);
        assert_eq!(g.b0_values.len(), 11);
        let aligned = g.with_tissues(&TissueTable::brain());
        for t in TissueTable::brain().foreground() {
            assert!(aligned.t1_values.contains(&t.t1));
            assert!(aligned.t2_values.contains(&t.t2));
            assert!(aligned.b0_values.contains(&t.b0));
        }
    }

    #[test]
    fn custom_grid_validation() {
        let g = build_grid(&GridSpec::Custom {
            t1: vec![500.0],
            t2: vec![55.0],
            b0: vec![0.0],
        })
        .unwrap();
        assert_eq!(g.triples(false).len(), 1);
        assert!(build_grid(&GridSpec::Custom {
            t1: vec![500.0],
            t2: vec![80.0, 60.0],
            b0: vec![0.0],
        })
        .is_err());
        assert!(build_grid(&GridSpec::Custom {
            t1: vec![],
            t2: vec![60.0],
            b0: vec![0.0],
        })
        .is_err());
    }

    #[test]
    fn single_atom_dictionary() {
        let s = seq(100);
        let g = ParameterGrid::new(vec![500.0], vec![55.0], vec![0.0]).unwrap();
        let d = build_dictionary(&g, &s, DictionaryOptions::default()).unwrap();
        let raw = simulate_fingerprint(500.0, 55.0, 0.0, &s).unwrap();
        let n = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert_eq!(d.len(), 1);
        assert!((d.norm(0) - n).abs() < 1e-12);
        for (a, r) in d.atom(0).iter().zip(&raw) {
            assert!((a - r / n).norm() < 1e-15);
        }
    }

    #[test]
    fn unit_rows_order_and_filter() {
        let s = seq(120);
        let g = ParameterGrid::new(vec![60.0, 400.0, 900.0], vec![50.0, 100.0], vec![-20.0, 30.0]).unwrap();
        let d = build_dictionary(&g, &s, DictionaryOptions::default()).unwrap();
        // (60, 100) is filtered
        assert_eq!(d.len(), 10);
        for row in d.atoms().outer_iter() {
            let n: f64 = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let keys: Vec<_> = d.all_params().iter().map(|p| (p.t1, p.t2, p.b0)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(keys, sorted);
        for k in 0..d.len() {
            assert_eq!(d.index_of(d.params(k)), Some(k));
        }
        let all = build_dictionary(
            &g,
            &s,
            DictionaryOptions {
                include_t2_above_t1: true,
            },
        )
        .unwrap();
        assert_eq!(all.len(), 12);

        let empty = ParameterGrid::new(vec![40.0], vec![50.0], vec![0.0]).unwrap();
        assert!(build_dictionary(&empty, &s, DictionaryOptions::default()).is_err());
    }

    #[test]
    fn density_scales_linearly() {
        let s = seq(80);
        let x = simulate_fingerprint(833.0, 86.0, -30.0, &s).unwrap();
        let doubled: Vec<_> = x.iter().map(|z| z * 2.0).collect();
        for (a, b) in doubled.iter().zip(&x) {
            assert_eq!(*a, b * 2.0);
        }
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let s = seq(30);
        let g = ParameterGrid::new(vec![400.0, 900.0], vec![50.0], vec![0.0, 10.0]).unwrap();
        let d = build_dictionary(&g, &s, DictionaryOptions::default()).unwrap();
        let bytes = d.to_bytes();
        assert_eq!(Dictionary::from_bytes(&bytes).unwrap(), d);
        assert!(Dictionary::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[1] = b'Z';
        assert!(Dictionary::from_bytes(&bad).is_err());
    }
}
