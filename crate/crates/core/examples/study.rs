//! A reduced sweep: sampling ratio, sequence length, mask strategy or
//! matching metric, averaged over seeds.
//!
//! cargo run --release --example study -- [ratio|length|strategy|metric] [seeds]

use csmrf::config::ExperimentConfig;
use csmrf::study::{run_study, summarize, summary_csv, StudyKind, Sweep};

fn main() -> csmrf::Result<()> {
    let kind: StudyKind = std::env::args().nth(1).unwrap_or_else(|| "ratio".into()).parse()?;
    let seeds: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let mut cfg = ExperimentConfig::default();
    cfg.rows = 32;
    cfg.cols = 32;
    cfg.sequence.length = 150;
    cfg.sampling.epi_factor = 8;
    cfg.seeds = (1..=seeds).collect();
    let sweep = Sweep {
        rows_per_frame: vec![2, 4, 8],
        lengths: vec![100, 150, 200],
        centers: vec![2, 4],
    };
    let rows = run_study(kind, &cfg, &sweep)?;
    print!("{}", summary_csv(&summarize(&rows)));
    Ok(())
}
