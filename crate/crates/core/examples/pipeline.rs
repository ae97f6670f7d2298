//! One seed end to end: phantom, masks, metric training and every estimator,
//! scored against the truth. Map images land in `out_dir`.
//!
//! cargo run --release --example pipeline -- [out_dir] [seed]

use csmrf::cli::export_seed_images;
use csmrf::config::ExperimentConfig;
use csmrf::pipeline::Method;
use csmrf::study::{prepare, run_seed};

fn main() -> csmrf::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/pipeline".into());
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut cfg = ExperimentConfig::default();
    cfg.methods = vec![Method::Oracle, Method::Mrf, Method::Csmrf, Method::CsmrfMl];
    let shared = prepare(&cfg)?;
    println!("{} atoms, {} frames, {} rows per frame", shared.dict.len(), shared.dict.frames(), cfg.sampling.rows_per_frame);

    let run = run_seed(&cfg, &shared, seed)?;
    println!("{:<9} {:>7} {:>7} {:>7} {:>7} {:>9}", "method", "T1", "T2", "B0", "rho", "accuracy");
    for (method, _) in &run.estimates {
        let s = run.scores(*method)?;
        println!(
            "{:<9} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>9.3}",
            method.name(),
            s[0].1.psnr,
            s[1].1.psnr,
            s[2].1.psnr,
            s[3].1.psnr,
            run.accuracy(*method)?
        );
    }
    export_seed_images(&cfg, &shared, seed, std::path::Path::new(&out))?;
    println!("images in {out}");
    Ok(())
}
