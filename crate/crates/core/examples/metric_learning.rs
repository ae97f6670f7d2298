//! Learns a Mahalanobis matching metric (relevant component analysis) on a
//! training slice and compares it with L2 matching on a separate test slice
//! acquired with the same masks.
//!
//! cargo run --release --example metric_learning -- [seed]

use csmrf::config::ExperimentConfig;
use csmrf::kspace::acquire;
use csmrf::matching::{atom_accuracy, match_image, Matcher};
use csmrf::pipeline::reconstruct_sequence;
use csmrf::study::{derive_seed, draw_masks, make_slice, prepare, train_metric};

fn main() -> csmrf::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = ExperimentConfig::default();
    let shared = prepare(&cfg)?;
    let train = make_slice(&cfg, &shared, seed + cfg.metric.train_offset, false)?;
    let test = make_slice(&cfg, &shared, seed, true)?;
    let masks = draw_masks(&cfg, cfg.sampling.strategy, seed)?;

    let (metric, report) = train_metric(&cfg, &shared, &train, &masks, seed)?;
    println!(
        "trained on {} chunklets / {} fingerprints; dim {}, ridge {:.2e}, diagonal share {:.3}",
        report.chunklets,
        report.samples,
        metric.dim(),
        report.ridge,
        report.diagonal_dominance
    );

    let meas = acquire(&test.images, &masks, cfg.noise_sigma, derive_seed(seed, "test"))?;
    let (recon, _, _) = reconstruct_sequence(&meas, &cfg.pipeline.cs, None)?;
    let bg = cfg.pipeline.background;
    let l2 = match_image(&recon, &Matcher::new(&shared.dict, None)?.with_background(bg))?;
    let ml = match_image(&recon, &Matcher::new(&shared.dict, Some(&metric))?.with_background(bg))?;
    println!("atom accuracy  L2 {:.3}  learned {:.3}", atom_accuracy(&l2.atoms, &test.atoms)?, atom_accuracy(&ml.atoms, &test.atoms)?);
    for (name, m) in [("L2", &l2), ("learned", &ml)] {
        let t1 = csmrf::eval::psnr(&m.maps.t1, &test.maps.t1)?;
        let t2 = csmrf::eval::psnr(&m.maps.t2, &test.maps.t2)?;
        println!("{name:>8}: T1 {t1:.2} dB  T2 {t2:.2} dB");
    }
    Ok(())
}
