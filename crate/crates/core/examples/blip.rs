//! BLIP baseline: projected Landweber iterations on EPI-undersampled data,
//! with the data residual after every projection.
//!
//! cargo run --release --example blip

use csmrf::config::{ExperimentConfig, Strategy};
use csmrf::pipeline::run_blip;
use csmrf::study::{measure, make_slice, prepare};

fn main() -> csmrf::Result<()> {
    let cfg = ExperimentConfig::default();
    let shared = prepare(&cfg)?;
    let truth = make_slice(&cfg, &shared, 1, true)?;
    let meas = measure(&cfg, &truth, Strategy::Epi, 1)?;
    println!("EPI factor {}: {} rows per frame", cfg.sampling.epi_factor, meas.masks.rows_per_frame());

    let est = run_blip(&meas, &shared.dict, &cfg.pipeline)?;
    for (i, r) in est.residuals.iter().enumerate() {
        println!("iter {i:>2}  residual {r:.6}");
    }
    let t2 = csmrf::eval::psnr(&est.maps.t2, &truth.maps.t2)?;
    println!("T2 PSNR {t2:.2} dB");
    Ok(())
}
