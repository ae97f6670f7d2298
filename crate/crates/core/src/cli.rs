//! Stage runners behind the `csmrf` binary.
//!
//! Every stage reads its predecessors' files, writes its own outputs into a
//! directory and leaves a `manifest.txt` there. The manifest is a valid
//! experiment config (stage arguments are recorded as `#` comments), so
//! `--config manifest.txt` re-runs the stage.
//!
//! ```text
//! out/
//!   dict/       dictionary.mrfd sequence.csv
//!   phantom/    labels.mrfm atoms.mrfm t1.mrfm t2.mrfm b0.mrfm density.mrfm
//!   acquire/    measurements.mrfy masks.txt
//!   metric/     metric.mrfa training.txt
//!   <method>/   t1.mrfm ... atoms.mrfm trace.csv
//!   evaluate/   scores.csv
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, Strategy};
use crate::dictionary::Dictionary;
use crate::eval::{aggregate, aggregate_csv, rows_csv, score_rows};
use crate::io::{self, DisplayRange};
use crate::kspace::{acquire, render_ground_truth, MeasurementSet};
use crate::matching::{atom_accuracy, match_image, Matcher};
use crate::metric::MahalanobisMetric;
use crate::phantom::{MapKind, ParameterMaps};
use crate::pipeline::{Estimate, Method};
use crate::sampling::MaskSequence;
use crate::sequence::generate_sequence;
use crate::study::{
    derive_seed, draw_masks, estimate, fit_metric, make_slice, prepare, run_seed, run_study, summarize,
    study_rows_csv, summary_csv, Shared, StudyKind, Sweep,
};
use crate::{Error, Result};

pub const DICTIONARY_FILE: &str = "dictionary.mrfd";
pub const SEQUENCE_FILE: &str = "sequence.csv";
pub const MEASUREMENTS_FILE: &str = "measurements.mrfy";
pub const MASKS_FILE: &str = "masks.txt";
pub const METRIC_FILE: &str = "metric.mrfa";
pub const ATOMS_FILE: &str = "atoms.mrfm";
pub const LABELS_FILE: &str = "labels.mrfm";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Writes the config plus the stage's own arguments.
pub fn write_manifest(dir: &Path, stage: &str, cfg: &ExperimentConfig, args: &[(&str, String)]) -> Result<()> {
    let mut s = format!("# stage = {stage}\n");
    for (k, v) in args {
        writeln!(s, "# {k} = {v}").unwrap();
    }
    s.push('\n');
    s.push_str(&cfg.to_text());
    io::write_file(&dir.join(MANIFEST_FILE), s.as_bytes())
}

pub fn map_path(dir: &Path, kind: MapKind) -> PathBuf {
    dir.join(format!("{}.mrfm", kind.name()))
}

pub fn write_maps(dir: &Path, maps: &ParameterMaps) -> Result<()> {
    for kind in MapKind::ALL {
        io::write_real_map(map_path(dir, kind), maps.get(kind))?;
    }
    Ok(())
}

pub fn read_maps(dir: &Path) -> Result<ParameterMaps> {
    let maps = ParameterMaps {
        t1: io::read_real_map(map_path(dir, MapKind::T1))?,
        t2: io::read_real_map(map_path(dir, MapKind::T2))?,
        b0: io::read_real_map(map_path(dir, MapKind::B0))?,
        density: io::read_real_map(map_path(dir, MapKind::Density))?,
    };
    maps.validate()?;
    Ok(maps)
}

fn shape_check(cfg: &ExperimentConfig, rows: usize, cols: usize, what: &str) -> Result<()> {
    if (rows, cols) != (cfg.rows, cfg.cols) {
        return Err(Error::Shape(format!(
            "{what} is {rows}x{cols}, config expects {}x{}",
            cfg.rows, cfg.cols
        )));
    }
    Ok(())
}

/// Dictionary and the sequence it was simulated with.
pub fn cmd_dict(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let shared = prepare(cfg)?;
    shared.dict.write(out.join(DICTIONARY_FILE))?;
    shared.sequence.write_csv(out.join(SEQUENCE_FILE))?;
    write_manifest(out, "dict", cfg, &[("atoms", shared.dict.len().to_string())])?;
    log::info!("dictionary: {} atoms x {} frames", shared.dict.len(), shared.dict.frames());
    Ok(out.join(DICTIONARY_FILE))
}

/// Ground-truth maps of one slice. `train` draws the training slice
/// (`seed + train_offset`, always synthetic).
pub fn cmd_phantom(cfg: &ExperimentConfig, seed: u64, train: bool, out: &Path) -> Result<()> {
    let shared = prepare(cfg)?;
    let slice_seed = if train { seed + cfg.metric.train_offset } else { seed };
    let slice = make_slice(cfg, &shared, slice_seed, !train)?;
    write_maps(out, &slice.maps)?;
    io::write_int_map(out.join(ATOMS_FILE), &slice.atoms)?;
    slice.labels.write(out.join(LABELS_FILE))?;
    write_manifest(
        out,
        "phantom",
        cfg,
        &[("seed", seed.to_string()), ("train", train.to_string())],
    )
}

fn content_hash(maps: &ParameterMaps) -> u64 {
    MapKind::ALL
        .iter()
        .flat_map(|&k| io::encode_real_map(maps.get(k)))
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Undersampled k-space of a phantom. Masks are drawn from `seed`, so a
/// training and a test slice acquired with the same seed share masks.
pub fn cmd_acquire(
    cfg: &ExperimentConfig,
    seed: u64,
    phantom: &Path,
    strategy: Option<Strategy>,
    out: &Path,
) -> Result<MeasurementSet> {
    cfg.validate()?;
    let maps = read_maps(phantom)?;
    shape_check(cfg, maps.rows(), maps.cols(), "phantom")?;
    let sequence = generate_sequence(&cfg.sequence, cfg.sequence_seed)?;
    let images = render_ground_truth(&maps, &sequence)?;
    let strategy = strategy.unwrap_or(cfg.sampling.strategy);
    let masks = draw_masks(cfg, strategy, seed)?;
    let sigma = match cfg.noise_psnr {
        Some(p) => crate::kspace::noise_sigma_for_psnr(&images, 0, p)?,
        None => cfg.noise_sigma,
    };
    let noise_seed = derive_seed(seed ^ content_hash(&maps), strategy.name());
    let meas = acquire(&images, &masks, sigma, noise_seed)?;
    meas.write(out.join(MEASUREMENTS_FILE))?;
    masks.write_text(out.join(MASKS_FILE))?;
    write_manifest(
        out,
        "acquire",
        cfg,
        &[
            ("seed", seed.to_string()),
            ("phantom", phantom.display().to_string()),
            ("strategy", strategy.name().to_string()),
            ("noise_sigma", sigma.to_string()),
        ],
    )?;
    Ok(meas)
}

/// Learns the matching metric from CS reconstructions of a training slice.
/// Chunklet labels come from L2 matching of the slice's noiseless images.
pub fn cmd_train_metric(
    cfg: &ExperimentConfig,
    phantom: &Path,
    measurements: &Path,
    dictionary: &Path,
    out: &Path,
) -> Result<MahalanobisMetric> {
    cfg.validate()?;
    let dict = Dictionary::read(dictionary)?;
    let meas = MeasurementSet::read(measurements)?;
    let maps = read_maps(phantom)?;
    shape_check(cfg, maps.rows(), maps.cols(), "phantom")?;
    let sequence = generate_sequence(&cfg.sequence, cfg.sequence_seed)?;
    let truth = render_ground_truth(&maps, &sequence)?;
    let labels = match_image(&truth, &Matcher::new(&dict, None)?.with_background(cfg.pipeline.background))?.atoms;
    let (recon, _, _) = crate::pipeline::reconstruct_sequence(&meas, &cfg.pipeline.cs, None)?;
    let (metric, report) = fit_metric(&recon, &dict, &labels, cfg)?;
    metric.write(out.join(METRIC_FILE))?;
    let text = format!(
        "chunklets = {}\nsamples = {}\nridge = {}\ndiagonal_dominance = {}\n",
        report.chunklets, report.samples, report.ridge, report.diagonal_dominance
    );
    io::write_file(&out.join("training.txt"), text.as_bytes())?;
    write_manifest(
        out,
        "train-metric",
        cfg,
        &[
            ("phantom", phantom.display().to_string()),
            ("measurements", measurements.display().to_string()),
            ("dictionary", dictionary.display().to_string()),
        ],
    )?;
    Ok(metric)
}

fn trace_text(est: &Estimate) -> String {
    let mut s = String::from("frame,iteration,objective,grad_norm,step\n");
    for (t, trace) in est.traces.iter().enumerate() {
        for r in trace {
            writeln!(s, "{t},{},{},{},{}", r.iteration, r.objective, r.grad_norm, r.step).unwrap();
        }
    }
    s
}

/// Estimates maps from measurements with one method.
pub fn cmd_reconstruct(
    cfg: &ExperimentConfig,
    method: Method,
    measurements: &Path,
    dictionary: &Path,
    metric: Option<&Path>,
    out: &Path,
) -> Result<Estimate> {
    cfg.validate()?;
    let dict = Dictionary::read(dictionary)?;
    let meas = MeasurementSet::read(measurements)?;
    let metric = metric.map(MahalanobisMetric::read).transpose()?;
    let est = estimate(cfg, method, &meas, &dict, metric.as_ref())?;
    write_maps(out, &est.maps)?;
    io::write_int_map(out.join(ATOMS_FILE), &est.atoms)?;
    if !est.traces.is_empty() {
        io::write_file(&out.join("trace.csv"), trace_text(&est).as_bytes())?;
    }
    if !est.residuals.is_empty() {
        let mut s = String::from("iteration,residual\n");
        for (i, r) in est.residuals.iter().enumerate() {
            writeln!(s, "{i},{r}").unwrap();
        }
        io::write_file(&out.join("residuals.csv"), s.as_bytes())?;
    }
    if !est.warnings.is_empty() {
        log::warn!("{} frame solves stopped early", est.warnings.len());
    }
    let mut args = vec![
        ("method", method.to_string()),
        ("measurements", measurements.display().to_string()),
        ("dictionary", dictionary.display().to_string()),
    ];
    if let Some(m) = &metric {
        args.push(("metric_dim", m.dim().to_string()));
    }
    write_manifest(out, "reconstruct", cfg, &args)?;
    Ok(est)
}

/// Scores estimated maps against truth; appends atom accuracy when both
/// directories hold an atom map.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    label: &str,
    seed: u64,
    estimate: &Path,
    truth: &Path,
    out: &Path,
) -> Result<String> {
    let est = read_maps(estimate)?;
    let gt = read_maps(truth)?;
    let rows = score_rows(label, seed, &est, &gt)?;
    let mut csv = rows_csv(&rows);
    io::write_file(&out.join("scores.csv"), csv.as_bytes())?;
    io::write_file(&out.join("aggregate.csv"), aggregate_csv(&aggregate(&rows)).as_bytes())?;
    let (ea, ta) = (estimate.join(ATOMS_FILE), truth.join(ATOMS_FILE));
    if ea.exists() && ta.exists() {
        let acc = atom_accuracy(&io::read_int_map(ea)?, &io::read_int_map(ta)?)?;
        io::write_file(&out.join("accuracy.txt"), format!("{acc}\n").as_bytes())?;
        writeln!(csv, "# accuracy = {acc}").unwrap();
    }
    write_manifest(
        out,
        "evaluate",
        cfg,
        &[
            ("method", label.to_string()),
            ("estimate", estimate.display().to_string()),
            ("truth", truth.display().to_string()),
        ],
    )?;
    Ok(csv)
}

/// Grayscale rendering of a map, windowed by `reference` (the truth) when given.
pub fn cmd_export(map: &Path, reference: Option<&Path>, out: &Path) -> Result<()> {
    let m = io::read_real_map(map)?;
    let range = match reference {
        Some(r) => DisplayRange::of(&io::read_real_map(r)?),
        None => DisplayRange::of(&m),
    };
    io::export_pgm(&m, range, out)
}

/// Exports truth and every method's maps of one seed with shared windows.
pub fn export_seed_images(cfg: &ExperimentConfig, shared: &Shared, seed: u64, out: &Path) -> Result<()> {
    let run = run_seed(cfg, shared, seed)?;
    for kind in MapKind::ALL {
        let range = DisplayRange::of(run.truth.maps.get(kind));
        io::export_pgm(run.truth.maps.get(kind), range, out.join(format!("truth_{}.pgm", kind.name())))?;
        for (method, est) in &run.estimates {
            io::export_pgm(est.maps.get(kind), range, out.join(format!("{method}_{}.pgm", kind.name())))?;
        }
    }
    Ok(())
}

/// Runs a study over the config's seeds; writes per-seed rows, the mean/std
/// summary and map images of the first seed at the base setting.
pub fn cmd_study(kind: StudyKind, cfg: &ExperimentConfig, sweep: &Sweep, out: &Path) -> Result<String> {
    let rows = run_study(kind, cfg, sweep)?;
    let summary = summary_csv(&summarize(&rows));
    io::write_file(&out.join("rows.csv"), study_rows_csv(&rows).as_bytes())?;
    io::write_file(&out.join("summary.csv"), summary.as_bytes())?;
    let shared = prepare(cfg)?;
    export_seed_images(cfg, &shared, cfg.seeds[0], &out.join("images"))?;
    let study = format!("{kind:?}").to_lowercase();
    write_manifest(out, "study", cfg, &[("study", study)])?;
    Ok(summary)
}

/// Reads a mask file written by [`cmd_acquire`].
pub fn read_masks(path: &Path) -> Result<MaskSequence> {
    MaskSequence::read_text(path)
}
