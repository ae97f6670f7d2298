//! Seeded end-to-end experiments and the parameter sweeps built on them.
//!
//! For every seed a test phantom is synthesized, sampled with the configured
//! mask strategy and estimated with each requested method. The learned metric
//! is trained on a separate phantom (`seed + train_offset`) acquired with the
//! same sequence and masks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;

use crate::config::{ExperimentConfig, Strategy};
use crate::dictionary::{build_dictionary, build_grid, Dictionary, DictionaryOptions};
use crate::eval::{mean_std, score_run, MapScore};
use crate::kspace::{acquire, noise_sigma_for_psnr, render_ground_truth, ImageSequence, MeasurementSet};
use crate::matching::{atom_accuracy, match_image, Matcher};
use crate::metric::{build_chunklets, rca_fit, MahalanobisMetric};
use crate::phantom::{build_parameter_maps, LabelMap, load_label_map, synth_label_map, MapKind, ParameterMaps, TissueTable};
use crate::pipeline::{reconstruct_sequence, run_blip, run_csmrf, run_mrf, run_oracle, Estimate, Method};
use crate::sampling::{draw_epi_masks, draw_independent_masks, draw_mask_sequence, full_masks, MaskSequence};
use crate::sequence::{generate_sequence, PulseSequence};
use crate::{Error, Result};

/// Independent seed for one named random stream of a run.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in stream.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// State shared by every seed of an experiment.
#[derive(Debug, Clone)]
pub struct Shared {
    pub table: TissueTable,
    pub sequence: PulseSequence,
    pub dict: Dictionary,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Shared> {
    cfg.validate()?;
    let table = TissueTable::brain();
    let sequence = generate_sequence(&cfg.sequence, cfg.sequence_seed)?;
    let mut grid = build_grid(&cfg.grid)?;
    if cfg.align_grid {
        grid = grid.with_tissues(&table);
    }
    let dict = build_dictionary(
        &grid,
        &sequence,
        DictionaryOptions {
            include_t2_above_t1: cfg.include_t2_above_t1,
        },
    )?;
    Ok(Shared { table, sequence, dict })
}

/// Ground truth of one slice.
#[derive(Debug, Clone)]
pub struct Slice {
    pub labels: LabelMap,
    pub maps: ParameterMaps,
    pub images: ImageSequence,
    /// Atom whose fully sampled match reproduces each voxel, `-1` for background.
    pub atoms: Array2<i32>,
}

pub fn make_slice(cfg: &ExperimentConfig, shared: &Shared, seed: u64, external: bool) -> Result<Slice> {
    let labels = match (&cfg.label_map, external) {
        (Some(path), true) => load_label_map(path, &shared.table)?,
        _ => synth_label_map(cfg.rows, cfg.cols, derive_seed(seed, "labels"))?,
    };
    let maps = build_parameter_maps(&labels, &shared.table, &cfg.tissue_noise, derive_seed(seed, "tissue"))?;
    let images = render_ground_truth(&maps, &shared.sequence)?;
    let atoms = match_image(&images, &Matcher::new(&shared.dict, None)?.with_background(cfg.pipeline.background))?.atoms;
    Ok(Slice {
        labels,
        maps,
        images,
        atoms,
    })
}

pub fn draw_masks(cfg: &ExperimentConfig, strategy: Strategy, seed: u64) -> Result<MaskSequence> {
    let s = &cfg.sampling;
    let t = cfg.sequence.length;
    let seed = derive_seed(seed, "masks");
    match strategy {
        Strategy::TimeDependent => draw_mask_sequence(cfg.rows, s.rows_per_frame, s.center, t, s.power, seed),
        Strategy::Independent => draw_independent_masks(cfg.rows, s.rows_per_frame, s.power, t, seed),
        Strategy::Epi => draw_epi_masks(cfg.rows, s.epi_factor, t, seed),
        Strategy::Full => Ok(full_masks(cfg.rows, t)),
    }
}

/// Diagnostics of one metric fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub chunklets: usize,
    pub samples: usize,
    pub ridge: f64,
    pub diagonal_dominance: f64,
}

/// Learns the metric from a CS reconstruction of `train` sampled with `masks`.
pub fn train_metric(
    cfg: &ExperimentConfig,
    shared: &Shared,
    train: &Slice,
    masks: &MaskSequence,
    seed: u64,
) -> Result<(MahalanobisMetric, TrainingReport)> {
    let meas = acquire(&train.images, masks, noise_sigma(cfg, train)?, derive_seed(seed, "train-noise"))?;
    let (recon, _, _) = reconstruct_sequence(&meas, &cfg.pipeline.cs, None)?;
    fit_metric(&recon, &shared.dict, &train.atoms, cfg)
}

pub fn fit_metric(
    recon: &ImageSequence,
    dict: &Dictionary,
    atoms: &Array2<i32>,
    cfg: &ExperimentConfig,
) -> Result<(MahalanobisMetric, TrainingReport)> {
    let cs = build_chunklets(recon, dict, atoms)?;
    let metric = rca_fit(&cs, cfg.metric.ridge)?;
    let report = TrainingReport {
        chunklets: cs.len(),
        samples: cs.total(),
        ridge: metric.ridge(),
        diagonal_dominance: metric.diagonal_dominance(),
    };
    Ok((metric, report))
}

/// k-space noise level used for `slice`.
pub fn noise_sigma(cfg: &ExperimentConfig, slice: &Slice) -> Result<f64> {
    match cfg.noise_psnr {
        Some(p) => noise_sigma_for_psnr(&slice.images, 0, p),
        None => Ok(cfg.noise_sigma),
    }
}

/// Measurements of `slice` for the strategy a method uses.
pub fn measure(
    cfg: &ExperimentConfig,
    slice: &Slice,
    strategy: Strategy,
    seed: u64,
) -> Result<MeasurementSet> {
    let masks = draw_masks(cfg, strategy, seed)?;
    acquire(&slice.images, &masks, noise_sigma(cfg, slice)?, derive_seed(seed, strategy.name()))
}

/// Mask strategy a method samples with.
pub fn strategy_for(cfg: &ExperimentConfig, method: Method) -> Strategy {
    match method {
        Method::Blip => Strategy::Epi,
        Method::Oracle => Strategy::Full,
        _ => cfg.sampling.strategy,
    }
}

/// Runs one estimator on already acquired measurements.
pub fn estimate(
    cfg: &ExperimentConfig,
    method: Method,
    meas: &MeasurementSet,
    dict: &Dictionary,
    metric: Option<&MahalanobisMetric>,
) -> Result<Estimate> {
    match method {
        Method::Mrf => run_mrf(meas, dict, &cfg.pipeline),
        Method::Oracle => run_oracle(meas, dict, &cfg.pipeline),
        Method::Blip => run_blip(meas, dict, &cfg.pipeline),
        Method::Csmrf => run_csmrf(meas, dict, None, &cfg.pipeline),
        Method::CsmrfMl => {
            let m = metric.ok_or_else(|| Error::InvalidArgument("csmrf_ml needs a trained metric".into()))?;
            run_csmrf(meas, dict, Some(m), &cfg.pipeline)
        }
    }
}

/// Everything produced for one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub truth: Slice,
    pub training: Option<TrainingReport>,
    pub estimates: Vec<(Method, Estimate)>,
}

impl SeedRun {
    pub fn get(&self, method: Method) -> Option<&Estimate> {
        self.estimates.iter().find(|(m, _)| *m == method).map(|(_, e)| e)
    }

    pub fn scores(&self, method: Method) -> Result<[(MapKind, MapScore); 4]> {
        let e = self
            .get(method)
            .ok_or_else(|| Error::InvalidArgument(format!("method {method} was not run")))?;
        score_run(&e.maps, &self.truth.maps)
    }

    pub fn accuracy(&self, method: Method) -> Result<f64> {
        let e = self
            .get(method)
            .ok_or_else(|| Error::InvalidArgument(format!("method {method} was not run")))?;
        atom_accuracy(&e.atoms, &self.truth.atoms)
    }
}

pub fn run_seed(cfg: &ExperimentConfig, shared: &Shared, seed: u64) -> Result<SeedRun> {
    let truth = make_slice(cfg, shared, seed, true)?;
    let mut metric = None;
    let mut training = None;
    if cfg.methods.contains(&Method::CsmrfMl) {
        let train = make_slice(cfg, shared, seed + cfg.metric.train_offset, false)?;
        let masks = draw_masks(cfg, cfg.sampling.strategy, seed)?;
        let (m, report) = train_metric(cfg, shared, &train, &masks, seed)?;
        log::info!("seed {seed}: metric from {} chunklets / {} samples", report.chunklets, report.samples);
        metric = Some(m);
        training = Some(report);
    }
    let mut by_strategy: BTreeMap<&'static str, MeasurementSet> = BTreeMap::new();
    let mut estimates = Vec::new();
    for &method in &cfg.methods {
        let strategy = strategy_for(cfg, method);
        if !by_strategy.contains_key(strategy.name()) {
            by_strategy.insert(strategy.name(), measure(cfg, &truth, strategy, seed)?);
        }
        let meas = &by_strategy[strategy.name()];
        let est = estimate(cfg, method, meas, &shared.dict, metric.as_ref())?;
        log::info!("seed {seed}: {method} done");
        estimates.push((method, est));
    }
    Ok(SeedRun {
        seed,
        truth,
        training,
        estimates,
    })
}

/// One scored (setting, method, seed, map) record of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub setting: String,
    pub method: Method,
    pub seed: u64,
    pub map: MapKind,
    pub score: MapScore,
    pub accuracy: f64,
}

fn collect_rows(setting: &str, run: &SeedRun, out: &mut Vec<StudyRow>) -> Result<()> {
    for (method, _) in &run.estimates {
        let acc = run.accuracy(*method)?;
        for (map, score) in run.scores(*method)? {
            out.push(StudyRow {
                setting: setting.to_string(),
                method: *method,
                seed: run.seed,
                map,
                score,
                accuracy: acc,
            });
        }
    }
    Ok(())
}

/// Mean and standard deviation per (setting, method, map).
#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub setting: String,
    pub method: Method,
    pub map: MapKind,
    pub psnr: (f64, f64),
    pub ssim: (f64, f64),
    pub accuracy: (f64, f64),
}

pub fn summarize(rows: &[StudyRow]) -> Vec<StudySummary> {
    let mut order: Vec<(String, Method, MapKind)> = Vec::new();
    for r in rows {
        let key = (r.setting.clone(), r.method, r.map);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(setting, method, map)| {
            let sel: Vec<&StudyRow> = rows
                .iter()
                .filter(|r| r.setting == setting && r.method == method && r.map == map)
                .collect();
            let col = |f: fn(&StudyRow) -> f64| mean_std(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            StudySummary {
                psnr: col(|r| r.score.psnr),
                ssim: col(|r| r.score.ssim),
                accuracy: col(|r| r.accuracy),
                setting,
                method,
                map,
            }
        })
        .collect()
}

pub fn study_rows_csv(rows: &[StudyRow]) -> String {
    let mut s = String::from("setting,method,seed,map,psnr_db,ssim,accuracy\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.setting,
            r.method,
            r.seed,
            r.map.name(),
            r.score.psnr,
            r.score.ssim,
            r.accuracy
        )
        .unwrap();
    }
    s
}

pub fn summary_csv(rows: &[StudySummary]) -> String {
    let mut s = String::from("setting,method,map,psnr_mean,psnr_std,ssim_mean,ssim_std,accuracy_mean,accuracy_std\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.setting,
            r.method,
            r.map.name(),
            r.psnr.0,
            r.psnr.1,
            r.ssim.0,
            r.ssim.1,
            r.accuracy.0,
            r.accuracy.1
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    /// Sweep rows per frame.
    Ratio,
    /// Sweep sequence length.
    Length,
    /// Time-dependent masks for several center sizes vs independent masks.
    Strategy,
    /// L2 against learned-metric matching.
    Metric,
}

impl std::str::FromStr for StudyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(StudyKind::Ratio),
            "length" => Ok(StudyKind::Length),
            "strategy" => Ok(StudyKind::Strategy),
            "metric" => Ok(StudyKind::Metric),
            _ => Err(Error::InvalidArgument(format!("unknown study {s:?}"))),
        }
    }
}

/// Settings swept by a study.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub rows_per_frame: Vec<usize>,
    pub lengths: Vec<usize>,
    pub centers: Vec<usize>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            rows_per_frame: vec![2, 4, 8, 16],
            lengths: vec![100, 200, 300],
            centers: vec![2, 4, 6, 8],
        }
    }
}

/// Runs `kind` over every seed of `cfg`; returns the per-seed rows.
pub fn run_study(kind: StudyKind, cfg: &ExperimentConfig, sweep: &Sweep) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    let mut run_setting = |setting: String, c: ExperimentConfig, shared: Option<&Shared>| -> Result<()> {
        let owned;
        let shared = match shared {
            Some(s) => s,
            None => {
                owned = prepare(&c)?;
                &owned
            }
        };
        for &seed in &c.seeds {
            let run = run_seed(&c, shared, seed)?;
            collect_rows(&setting, &run, &mut rows)?;
        }
        Ok(())
    };
    match kind {
        StudyKind::Ratio => {
            let shared = prepare(cfg)?;
            for &r in &sweep.rows_per_frame {
                let mut c = cfg.clone();
                c.sampling.rows_per_frame = r;
                c.sampling.epi_factor = (cfg.rows / r).max(1);
                run_setting(format!("rows={r}"), c, Some(&shared))?;
            }
        }
        StudyKind::Length => {
            for &t in &sweep.lengths {
                let mut c = cfg.clone();
                c.sequence.length = t;
                run_setting(format!("length={t}"), c, None)?;
            }
        }
        StudyKind::Strategy => {
            let shared = prepare(cfg)?;
            let methods: Vec<Method> = cfg
                .methods
                .iter()
                .copied()
                .filter(|m| !matches!(m, Method::Blip | Method::Oracle))
                .collect();
            for &center in &sweep.centers {
                let mut c = cfg.clone();
                c.methods = methods.clone();
                c.sampling.strategy = Strategy::TimeDependent;
                c.sampling.center = center;
                run_setting(format!("c={center}"), c, Some(&shared))?;
            }
            let mut c = cfg.clone();
            c.methods = methods;
            c.sampling.strategy = Strategy::Independent;
            run_setting("baseline".into(), c, Some(&shared))?;
        }
        StudyKind::Metric => {
            let shared = prepare(cfg)?;
            let mut c = cfg.clone();
            c.methods = vec![Method::Csmrf, Method::CsmrfMl];
            c.metric.enabled = true;
            run_setting("metric".into(), c, Some(&shared))?;
        }
    }
    Ok(rows)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
