//! Truth-anchored PSNR / SSIM and multi-seed aggregation, on maps degraded by
//! growing amounts of noise.
//!
//! cargo run --release --example evaluation

use csmrf::eval::{aggregate, aggregate_csv, psnr, score_rows, ssim};
use csmrf::phantom::{build_parameter_maps, synth_label_map, NoiseSpec, TissueTable};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> csmrf::Result<()> {
    let table = TissueTable::brain();
    let truth = build_parameter_maps(&synth_label_map(64, 64, 1)?, &table, &NoiseSpec::default(), 1)?;

    println!("noise(ms)  T1 PSNR    T1 SSIM");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for sigma in [0.0, 10.0, 50.0, 200.0] {
        let mut est = truth.t1.clone();
        if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).unwrap();
            est.mapv_inplace(|v| v + n.sample(&mut rng));
        }
        println!("{sigma:>9} {:>9.2} {:>10.4}", psnr(&est, &truth.t1)?, ssim(&est, &truth.t1)?);
    }

    let mut rows = Vec::new();
    for seed in 1..=3 {
        let mut est = truth.clone();
        let n = Normal::new(0.0, 20.0 * seed as f64).unwrap();
        est.t1.mapv_inplace(|v| v + n.sample(&mut rng));
        est.t2.mapv_inplace(|v| v + n.sample(&mut rng) / 4.0);
        rows.extend(score_rows("noisy", seed, &est, &truth)?);
    }
    print!("{}", aggregate_csv(&aggregate(&rows)));
    Ok(())
}
