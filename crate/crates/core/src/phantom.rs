//! Tissue tables, segmented label maps and ground-truth parameter maps.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;

use crate::{io, rng_from_seed, Error, Result};

/// One row of a tissue table.
#[derive(Debug, Clone, PartialEq)]
pub struct Tissue {
    pub label: i32,
    pub name: String,
    /// Longitudinal relaxation, ms.
    pub t1: f64,
    /// Transverse relaxation, ms.
    pub t2: f64,
    /// Off-resonance, Hz.
    pub b0: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TissueTable {
    entries: Vec<Tissue>,
}

impl TissueTable {
    pub fn new(entries: Vec<Tissue>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|o| o.label == e.label) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate tissue label {}",
                    e.label
                )));
            }
            if !(0.0..=1.0).contains(&e.density) {
                return Err(Error::InvalidArgument(format!(
                    "tissue {} density {} outside [0, 1]",
                    e.name, e.density
                )));
            }
            let is_background = e.density == 0.0;
            if is_background && (e.t1 != 0.0 || e.t2 != 0.0 || e.b0 != 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "background tissue {} must have all-zero parameters",
                    e.name
                )));
            }
            if !is_background && !(e.t1 >= e.t2 && e.t2 > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "tissue {} violates T1 >= T2 > 0 (T1 = {}, T2 = {})",
                    e.name, e.t1, e.t2
                )));
            }
        }
        Ok(Self { entries })
    }

    /// The seven-component segmented brain table (background, CSF, gray matter,
    /// white matter, fat, muscle, muscle/skin).
    pub fn brain() -> Self {
        let rows = [
            (1, "Background", 0.0, 0.0, 0.0, 0.0),
            (2, "CSF", 4231.0, 572.0, 185.0, 1.0),
            (3, "Gray matter", 833.0, 86.0, -30.0, 0.86),
            (4, "White matter", 500.0, 55.0, -70.0, 0.77),
            (5, "Fat", 350.0, 70.0, -80.0, 0.7),
            (6, "Muscle", 900.0, 47.0, -40.0, 1.0),
            (7, "Muscle/skin", 2269.0, 329.0, 75.0, 1.0),
        ];
        let entries = rows
            .iter()
            .map(|&(label, name, t1, t2, b0, density)| Tissue {
                label,
                name: name.to_string(),
                t1,
                t2,
                b0,
                density,
            })
            .collect();
        Self::new(entries).expect("built-in table is valid")
    }

    pub fn entries(&self) -> &[Tissue] {
        &self.entries
    }

    pub fn get(&self, label: i32) -> Option<&Tissue> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn contains(&self, label: i32) -> bool {
        self.get(label).is_some()
    }

    /// Foreground tissues (density > 0).
    pub fn foreground(&self) -> impl Iterator<Item = &Tissue> {
        self.entries.iter().filter(|e| e.density > 0.0)
    }
}

/// Segmented slice: one tissue label per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub labels: Array2<i32>,
}

impl LabelMap {
    pub fn rows(&self) -> usize {
        self.labels.nrows()
    }

    pub fn cols(&self) -> usize {
        self.labels.ncols()
    }

    pub fn validate(&self, table: &TissueTable) -> Result<()> {
        for ((row, col), &label) in self.labels.indexed_iter() {
            if !table.contains(label) {
                return Err(Error::UnknownLabel { label, row, col });
            }
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_int_map(path, &self.labels)
    }
}

/// Reads a label map in the map binary format and validates it against `table`.
pub fn load_label_map(path: impl AsRef<Path>, table: &TissueTable) -> Result<LabelMap> {
    let labels = io::read_int_map(path)?;
    let map = LabelMap { labels };
    map.validate(table)?;
    Ok(map)
}

/// Procedural head-like phantom: nested, slightly irregular elliptical shells
/// (skin, fat, muscle, CSF, gray matter, white matter) plus two CSF ventricles,
/// on a background border. Labels follow [`TissueTable::brain`].
pub fn synth_label_map(rows: usize, cols: usize, seed: u64) -> Result<LabelMap> {
    if rows < 8 || cols < 8 {
        return Err(Error::InvalidArgument(format!(
            "phantom must be at least 8x8, got {rows}x{cols}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut jitter = |scale: f64| (rng.gen::<f64>() * 2.0 - 1.0) * scale;

    let cx = jitter(0.02);
    let cy = jitter(0.02);
    let ax = 0.82 + jitter(0.03);
    let ay = 0.86 + jitter(0.03);
    let phase1 = jitter(PI);
    let phase2 = jitter(PI);
    let amp1 = 0.025 + jitter(0.01);
    let amp2 = 0.015 + jitter(0.01);
    let vent_dx = 0.16 + jitter(0.02);
    let vent_dy = -0.04 + jitter(0.03);

    // (outer radius, label), checked from the inside out
    let shells = [
        (0.45, 4),
        (0.74, 3),
        (0.80, 2),
        (0.87, 6),
        (0.93, 5),
        (1.00, 7),
    ];

    let mut labels = Array2::from_elem((rows, cols), 1);
    for r in 0..rows {
        for c in 0..cols {
            if r == 0 || c == 0 || r == rows - 1 || c == cols - 1 {
                continue;
            }
            let y = (r as f64 + 0.5) / rows as f64 * 2.0 - 1.0 - cy;
            let x = (c as f64 + 0.5) / cols as f64 * 2.0 - 1.0 - cx;
            let theta = y.atan2(x);
            let wobble = 1.0 + amp1 * (3.0 * theta + phase1).sin() + amp2 * (5.0 * theta + phase2).sin();
            let rho = ((x / ax).powi(2) + (y / ay).powi(2)).sqrt() / wobble;

            let mut label = 1;
            for &(outer, l) in &shells {
                if rho <= outer {
                    label = l;
                    break;
                }
            }
            if label == 4 {
                let in_ventricle = |sx: f64| {
                    ((x - sx * vent_dx) / 0.07).powi(2) + ((y - vent_dy) / 0.2).powi(2) <= 1.0
                };
                if in_ventricle(1.0) || in_ventricle(-1.0) {
                    label = 2;
                }
            }
            labels[[r, c]] = label;
        }
    }
    Ok(LabelMap { labels })
}

/// Ground-truth (or estimated) parameter maps over one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMaps {
    pub t1: Array2<f64>,
    pub t2: Array2<f64>,
    pub b0: Array2<f64>,
    pub density: Array2<f64>,
}

/// Which of the four quantitative maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    T1,
    T2,
    B0,
    Density,
}

impl MapKind {
    pub const ALL: [MapKind; 4] = [MapKind::T1, MapKind::T2, MapKind::B0, MapKind::Density];

    pub fn name(self) -> &'static str {
        match self {
            MapKind::T1 => "t1",
            MapKind::T2 => "t2",
            MapKind::B0 => "b0",
            MapKind::Density => "density",
        }
    }
}

impl ParameterMaps {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let z = Array2::zeros((rows, cols));
        Self {
            t1: z.clone(),
            t2: z.clone(),
            b0: z.clone(),
            density: z,
        }
    }

    pub fn rows(&self) -> usize {
        self.t1.nrows()
    }

    pub fn cols(&self) -> usize {
        self.t1.ncols()
    }

    pub fn get(&self, kind: MapKind) -> &Array2<f64> {
        match kind {
            MapKind::T1 => &self.t1,
            MapKind::T2 => &self.t2,
            MapKind::B0 => &self.b0,
            MapKind::Density => &self.density,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.t1.dim();
        if self.t2.dim() != dim || self.b0.dim() != dim || self.density.dim() != dim {
            return Err(Error::Shape("parameter maps differ in size".into()));
        }
        for ((idx, &rho), (&t1, &t2)) in self
            .density
            .indexed_iter()
            .zip(self.t1.iter().zip(self.t2.iter()))
        {
            if rho > 0.0 && !(t1 >= t2 && t2 >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "voxel {idx:?} has T1 = {t1}, T2 = {t2}"
                )));
            }
        }
        Ok(())
    }
}

/// One-sided additive uniform perturbations applied per voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub t1_range: (f64, f64),
    pub t2_range: (f64, f64),
    pub b0_range: (f64, f64),
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            t1_range: (0.0, 50.0),
            t2_range: (0.0, 10.0),
            b0_range: (0.0, 10.0),
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            t1_range: (0.0, 0.0),
            t2_range: (0.0, 0.0),
            b0_range: (0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("t1", self.t1_range),
            ("t2", self.t2_range),
            ("b0", self.b0_range),
        ] {
            if !(lo >= 0.0 && hi >= lo) {
                return Err(Error::InvalidArgument(format!(
                    "{name} noise interval [{lo}, {hi}] must satisfy 0 <= lo <= hi"
                )));
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut crate::Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Assigns every voxel its tissue's parameters and perturbs T1, T2 and B0 of
/// foreground voxels with independent one-sided uniform noise.
pub fn build_parameter_maps(
    labels: &LabelMap,
    table: &TissueTable,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<ParameterMaps> {
    labels.validate(table)?;
    noise.validate()?;
    let (rows, cols) = labels.labels.dim();
    let mut maps = ParameterMaps::zeros(rows, cols);
    let mut rng = rng_from_seed(seed);
    for ((r, c), &label) in labels.labels.indexed_iter() {
        let tissue = table.get(label).expect("validated above");
        if tissue.density == 0.0 {
            continue;
        }
        maps.t1[[r, c]] = tissue.t1 + draw(&mut rng, noise.t1_range);
        maps.t2[[r, c]] = tissue.t2 + draw(&mut rng, noise.t2_range);
        maps.b0[[r, c]] = tissue.b0 + draw(&mut rng, noise.b0_range);
        maps.density[[r, c]] = tissue.density;
    }
    Ok(maps)
}
