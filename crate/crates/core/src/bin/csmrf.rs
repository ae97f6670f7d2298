use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csmrf::cli::{self, DICTIONARY_FILE, MEASUREMENTS_FILE, METRIC_FILE};
use csmrf::config::{ExperimentConfig, Strategy};
use csmrf::pipeline::Method;
use csmrf::study::{StudyKind, Sweep};

#[derive(Parser)]
#[command(name = "csmrf", version, about = "Compressed-sensing MR fingerprinting stages")]
struct Args {
    /// Experiment config (`[section]` / `key = value` text).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; for `study`, replaces the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; defaults to the config's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to MRF_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ground-truth maps of a slice.
    Phantom {
        /// Draw the training slice instead of the test slice.
        #[arg(long)]
        train: bool,
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Simulate the dictionary.
    Dict {
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Sample a phantom's k-space.
    Acquire {
        #[arg(long)]
        phantom: Option<PathBuf>,
        /// time_dependent | independent | epi | full
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Learn the matching metric on a training slice.
    TrainMetric {
        #[arg(long)]
        phantom: Option<PathBuf>,
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long)]
        dictionary: Option<PathBuf>,
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Estimate maps with one method.
    Reconstruct {
        /// mrf | csmrf | csmrf_ml | blip | oracle
        #[arg(long, default_value = "csmrf_ml")]
        method: Method,
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long)]
        dictionary: Option<PathBuf>,
        #[arg(long)]
        metric: Option<PathBuf>,
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Score estimated maps against the truth.
    Evaluate {
        #[arg(long, default_value = "csmrf_ml")]
        method: String,
        #[arg(long)]
        estimate: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Multi-seed sweep: ratio | length | strategy | metric.
    Study {
        kind: StudyKind,
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Render a map as a 16-bit PGM.
    Export {
        #[arg(long)]
        map: PathBuf,
        /// Map whose min/max sets the gray window (usually the truth).
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        dest: PathBuf,
    },
}

fn threads(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var("MRF_THREADS").ok()?.parse().ok())
        .filter(|&n| n > 0)
}

fn run(args: Args) -> csmrf::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    let seed = cfg.seeds[0];
    let root = args.out.clone().unwrap_or_else(|| cfg.output.clone());
    let at = |dest: Option<PathBuf>, name: &str| dest.unwrap_or_else(|| root.join(name));
    let or = |p: Option<PathBuf>, dir: &str, file: &str| p.unwrap_or_else(|| root.join(dir).join(file));
    match args.cmd {
        Cmd::Phantom { train, dest } => {
            let name = if train { "train_phantom" } else { "phantom" };
            cli::cmd_phantom(&cfg, seed, train, &at(dest, name))?;
        }
        Cmd::Dict { dest } => {
            cli::cmd_dict(&cfg, &at(dest, "dict"))?;
        }
        Cmd::Acquire { phantom, strategy, dest } => {
            let phantom = phantom.unwrap_or_else(|| root.join("phantom"));
            cli::cmd_acquire(&cfg, seed, &phantom, strategy, &at(dest, "acquire"))?;
        }
        Cmd::TrainMetric {
            phantom,
            measurements,
            dictionary,
            dest,
        } => {
            cli::cmd_train_metric(
                &cfg,
                &phantom.unwrap_or_else(|| root.join("train_phantom")),
                &or(measurements, "train_acquire", MEASUREMENTS_FILE),
                &or(dictionary, "dict", DICTIONARY_FILE),
                &at(dest, "metric"),
            )?;
        }
        Cmd::Reconstruct {
            method,
            measurements,
            dictionary,
            metric,
            dest,
        } => {
            let metric = match (metric, method) {
                (Some(m), _) => Some(m),
                (None, Method::CsmrfMl) => Some(root.join("metric").join(METRIC_FILE)),
                _ => None,
            };
            cli::cmd_reconstruct(
                &cfg,
                method,
                &or(measurements, "acquire", MEASUREMENTS_FILE),
                &or(dictionary, "dict", DICTIONARY_FILE),
                metric.as_deref(),
                &at(dest, method.name()),
            )?;
        }
        Cmd::Evaluate {
            method,
            estimate,
            truth,
            dest,
        } => {
            let estimate = estimate.unwrap_or_else(|| root.join(&method));
            let truth = truth.unwrap_or_else(|| root.join("phantom"));
            let out = dest.unwrap_or_else(|| root.join("evaluate").join(&method));
            print!("{}", cli::cmd_evaluate(&cfg, &method, seed, &estimate, &truth, &out)?);
        }
        Cmd::Study { kind, dest } => {
            let name = format!("study_{}", format!("{kind:?}").to_lowercase());
            print!("{}", cli::cmd_study(kind, &cfg, &Sweep::default(), &at(dest, &name))?);
        }
        Cmd::Export { map, reference, dest } => {
            cli::cmd_export(&map, reference.as_deref(), Path::new(&dest))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = threads(args.threads) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
