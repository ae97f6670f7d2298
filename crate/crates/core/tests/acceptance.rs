//! End-to-end acceptance checks. Each test prints one `PASS` / `FAIL` line.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::Instant;

use csmrf::config::{ExperimentConfig, Strategy};
use csmrf::csrecon::wavelet::Wavelet2d;
use csmrf::csrecon::{gradient, objective, reconstruct_frame, CsConfig};
use csmrf::dictionary::{AtomParams, Dictionary};
use csmrf::eval::mean_std;
use csmrf::io::{encode_int_map, encode_real_map};
use csmrf::kspace::{inner, norm, FourierOp};
use csmrf::matching::{match_l2, match_metric};
use csmrf::metric::{rca_fit, within_chunklet_covariance, ChunkletSet, MahalanobisMetric, Ridge};
use csmrf::phantom::{MapKind, NoiseSpec};
use csmrf::pipeline::{run_blip, run_oracle, Method, PipelineConfig};
use csmrf::sampling::{draw_mask_sequence, full_masks};
use csmrf::study::{make_slice, measure, prepare, run_seed, SeedRun};
use csmrf::Complex64;
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

// Written to the raw stderr handle so the line shows without --nocapture.
fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "criterion {id:>2} {name:<28} {verdict}  {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_image(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<Complex64> {
    Array2::from_shape_fn((rows, cols), |_| Complex64::new(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5))
}

fn random_rows(n: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.4)).collect();
    if rows.is_empty() {
        rows.push(r.gen_range(0..n));
    }
    rows
}

/// Grid-aligned desk-scale experiment: tissue parameters sit exactly on the grid.
fn aligned_config() -> ExperimentConfig {
    ExperimentConfig {
        tissue_noise: NoiseSpec::none(),
        ..ExperimentConfig::default()
    }
}

fn psnr_of(run: &SeedRun, method: Method, kind: MapKind) -> f64 {
    run.scores(method).unwrap().iter().find(|(k, _)| *k == kind).unwrap().1.psnr
}

fn mean_of(runs: &[SeedRun], f: impl Fn(&SeedRun) -> f64) -> f64 {
    mean_std(&runs.iter().map(f).collect::<Vec<_>>()).0
}

#[test]
fn criterion_01_oracle_exactness() {
    let start = Instant::now();
    let cfg = aligned_config();
    let shared = prepare(&cfg).unwrap();
    let truth = make_slice(&cfg, &shared, 1, true).unwrap();
    let meas = measure(&cfg, &truth, Strategy::Full, 1).unwrap();
    let est = run_oracle(&meas, &shared.dict, &cfg.pipeline).unwrap();
    let (mut fg, mut exact, mut rho_err) = (0usize, 0usize, 0.0f64);
    for ((r, c), &d) in truth.maps.density.indexed_iter() {
        if d <= 0.0 {
            continue;
        }
        fg += 1;
        let same = [MapKind::T1, MapKind::T2, MapKind::B0]
            .iter()
            .all(|&k| est.maps.get(k)[[r, c]] == truth.maps.get(k)[[r, c]]);
        exact += usize::from(same);
        rho_err = rho_err.max((est.maps.density[[r, c]] - d).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = fg > 0 && exact == fg && rho_err < 1e-9 && secs < 60.0;
    report(
        1,
        "oracle exactness",
        pass,
        &format!("{exact}/{fg} foreground voxels exact, max rho error {rho_err:.2e}, {secs:.1} s"),
    );
}

#[test]
fn criterion_02_operator_correctness() {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let (rows, cols) = [(8, 8), (16, 12), (32, 32), (64, 64), (7, 9)][trial % 5];
        let op = FourierOp::new(rows, cols);
        let mask = random_rows(rows, &mut r);
        let x = random_image(rows, cols, &mut r);
        let y = random_image(mask.len(), cols, &mut r);
        let fx = op.forward(x.view(), &mask).unwrap();
        let fhy = op.adjoint(y.view(), &mask).unwrap();
        let gap = (inner(fx.view(), y.view()) - inner(x.view(), fhy.view())).norm();
        worst = worst.max(gap / (norm(x.view()) * norm(y.view())));
    }
    let mut wave = 0.0f64;
    for (i, (rows, cols)) in [(64, 64), (32, 48), (17, 23)].into_iter().enumerate() {
        let w = Wavelet2d::daubechies4(4);
        let x = random_image(rows, cols, &mut rng(20 + i as u64));
        let back = w.inverse(&w.forward(&x), rows, cols).unwrap();
        wave = wave.max(norm((&back - &x).view()) / norm(x.view()));
    }
    report(
        2,
        "operator correctness",
        worst < 1e-10 && wave < 1e-10,
        &format!("adjoint gap {worst:.2e}, wavelet round trip {wave:.2e}"),
    );
}

#[test]
fn criterion_03_solver_correctness() {
    let op = FourierOp::new(8, 8);
    let cfg = CsConfig {
        alpha_wavelet: 0.05,
        alpha_tv: 0.05,
        smooth_mu: 1e-6,
        wavelet_levels: 3,
        ..CsConfig::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mut r = rng(300 + seed);
        let mask = random_rows(8, &mut r);
        let x = random_image(8, 8, &mut r);
        let y = random_image(mask.len(), 8, &mut r);
        let v = random_image(8, 8, &mut r);
        let g = gradient(&op, &x, y.view(), &mask, &cfg).unwrap();
        let h = 1e-6;
        let f = |z: &Array2<Complex64>| objective(&op, z, y.view(), &mask, &cfg).unwrap();
        let fd = (f(&(&x + &v.mapv(|z| z * h))) - f(&(&x - &v.mapv(|z| z * h)))) / (2.0 * h);
        let analytic = inner(g.view(), v.view()).re;
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-12));
    }

    let op = FourierOp::new(32, 32);
    let run_cfg = CsConfig {
        alpha_wavelet: 0.01,
        alpha_tv: 0.01,
        max_iters: 40,
        ..CsConfig::default()
    };
    let mut increases = 0;
    let mut steps = 0;
    for seed in 0..10 {
        let mut r = rng(400 + seed);
        let mask = random_rows(32, &mut r);
        let truth = random_image(32, 32, &mut r);
        let y = op.forward(truth.view(), &mask).unwrap();
        let res = reconstruct_frame(&op, y.view(), &mask, &run_cfg, None).unwrap();
        for w in res.trace.windows(2) {
            steps += 1;
            increases += usize::from(w[1].objective > w[0].objective);
        }
    }
    report(
        3,
        "solver correctness",
        worst < 1e-4 && increases == 0 && steps > 0,
        &format!("max gradient rel error {worst:.2e}, {increases} increases over {steps} accepted steps"),
    );
}

#[test]
fn criterion_04_rca_correctness() {
    let mut r = rng(4);
    let dim = 6;
    let chunklets: Vec<Vec<Array1<f64>>> = (0..5)
        .map(|_| (0..12).map(|_| Array1::from_shape_fn(dim, |_| r.gen::<f64>() * 2.0 - 1.0)).collect())
        .collect();
    let cs = ChunkletSet::new((0..5).collect(), chunklets).unwrap();
    let c = within_chunklet_covariance(&cs);
    let m = rca_fit(&cs, Ridge::Value(0.0)).unwrap();
    let wcw = m.w().dot(&c).dot(&m.w().t());
    let whiten_err = (&wcw - &Array2::<f64>::eye(dim)).mapv(|v| v * v).sum().sqrt();

    let hand = ChunkletSet::new(
        vec![0, 1],
        vec![
            vec![array![1.0, 0.0], array![-1.0, 0.0]],
            vec![array![0.0, 2.0], array![0.0, -2.0]],
        ],
    )
    .unwrap();
    let hc = within_chunklet_covariance(&hand);
    let hm = rca_fit(&hand, Ridge::Value(0.0)).unwrap();
    let expect_c = array![[0.5, 0.0], [0.0, 2.0]];
    let expect_w = array![[2f64.sqrt(), 0.0], [0.0, 1.0 / 2f64.sqrt()]];
    let hand_err = (&hc - &expect_c)
        .iter()
        .chain((hm.w() - &expect_w).iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    report(
        4,
        "RCA correctness",
        whiten_err < 1e-8 && hand_err < 1e-12,
        &format!("||WCW^T - I||_F = {whiten_err:.2e}, hand case error {hand_err:.2e}"),
    );
}

#[test]
fn criterion_05_metric_l2_consistency() {
    let mut r = rng(5);
    let mut agree = 0;
    for _ in 0..1000 {
        let k = r.gen_range(2..20);
        let t = r.gen_range(2..12);
        let mut atoms = random_image(k, t, &mut r);
        for mut row in atoms.outer_iter_mut() {
            let n = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            row.mapv_inplace(|z| z / n);
        }
        let params = (0..k)
            .map(|i| AtomParams {
                t1: 100.0 + i as f64,
                t2: 10.0,
                b0: 0.0,
            })
            .collect();
        let dict = Dictionary::from_parts(atoms, params, vec![1.0; k]).unwrap();
        let q = random_image(1, t, &mut r);
        let q: Vec<Complex64> = q.iter().cloned().collect();
        let id = MahalanobisMetric::identity(2 * t);
        agree += usize::from(match_l2(&q, &dict).unwrap().atom == match_metric(&q, &dict, &id).unwrap().atom);
    }
    report(5, "metric/L2 consistency", agree == 1000, &format!("{agree}/1000 identical atoms"));
}

#[test]
fn criterion_06_sampling_property() {
    let m = draw_mask_sequence(256, 16, 6, 500, 4.0, 6).unwrap();
    let center: std::collections::HashSet<usize> = m.center.iter().cloned().collect();
    let violations: usize = m
        .frames
        .windows(2)
        .map(|w| w[1].iter().filter(|r| w[0].contains(r) && !center.contains(r)).count())
        .sum();
    let m0 = draw_mask_sequence(256, 16, 0, 500, 4.0, 6).unwrap();
    let shared: usize = m0
        .frames
        .windows(2)
        .map(|w| w[1].iter().filter(|r| w[0].contains(r)).count())
        .sum();
    report(
        6,
        "sampling strategy property",
        violations == 0 && shared == 0 && center.len() == 6,
        &format!("{violations} overlaps outside the center (c = 6), {shared} overlaps with c = 0"),
    );
}

#[test]
fn criterion_07_end_to_end_directional() {
    let start = Instant::now();
    let mut cfg = aligned_config();
    cfg.methods = vec![Method::Mrf, Method::CsmrfMl];
    let shared = prepare(&cfg).unwrap();
    let runs: Vec<SeedRun> = SEEDS.iter().map(|&s| run_seed(&cfg, &shared, s).unwrap()).collect();
    let secs = start.elapsed().as_secs_f64();
    let mut gaps = Vec::new();
    for kind in [MapKind::T1, MapKind::T2, MapKind::B0] {
        let ml = mean_of(&runs, |r| psnr_of(r, Method::CsmrfMl, kind));
        let mrf = mean_of(&runs, |r| psnr_of(r, Method::Mrf, kind));
        gaps.push((kind, ml, mrf, ml - mrf));
    }
    let detail = gaps
        .iter()
        .map(|(k, ml, mrf, g)| format!("{} {ml:.2} vs {mrf:.2} ({g:+.2} dB)", k.name()))
        .collect::<Vec<_>>()
        .join(", ");
    let pass = gaps.iter().all(|g| g.3 >= 2.0) && secs < 900.0;
    report(7, "end-to-end directional", pass, &format!("{detail}; {secs:.0} s"));
}

/// Noisy runs shared by the metric-benefit and noise-robustness criteria.
fn noisy_runs() -> &'static Vec<SeedRun> {
    static RUNS: OnceLock<Vec<SeedRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut cfg = aligned_config();
        cfg.noise_psnr = Some(19.1);
        cfg.methods = vec![Method::Mrf, Method::Csmrf, Method::CsmrfMl, Method::Blip];
        let shared = prepare(&cfg).unwrap();
        SEEDS.iter().map(|&s| run_seed(&cfg, &shared, s).unwrap()).collect()
    })
}

#[test]
fn criterion_08_metric_benefit() {
    let runs = noisy_runs();
    let per_seed: Vec<(f64, f64)> = runs
        .iter()
        .map(|r| (r.accuracy(Method::CsmrfMl).unwrap(), r.accuracy(Method::Csmrf).unwrap()))
        .collect();
    let ml = mean_of(runs, |r| r.accuracy(Method::CsmrfMl).unwrap());
    let l2 = mean_of(runs, |r| r.accuracy(Method::Csmrf).unwrap());
    let t1_ml = mean_of(runs, |r| psnr_of(r, Method::CsmrfMl, MapKind::T1));
    let t1_l2 = mean_of(runs, |r| psnr_of(r, Method::Csmrf, MapKind::T1));
    let pass = per_seed.iter().all(|(a, b)| a >= b);
    report(
        8,
        "metric benefit",
        pass,
        &format!("accuracy learned {ml:.3} vs L2 {l2:.3}; T1 PSNR {t1_ml:.2} vs {t1_l2:.2} dB"),
    );
}

#[test]
fn criterion_09_noise_robustness() {
    let runs = noisy_runs();
    let ml = mean_of(runs, |r| psnr_of(r, Method::CsmrfMl, MapKind::T2));
    let mrf = mean_of(runs, |r| psnr_of(r, Method::Mrf, MapKind::T2));
    let blip = mean_of(runs, |r| psnr_of(r, Method::Blip, MapKind::T2));
    report(
        9,
        "noise robustness",
        ml - mrf >= 1.0,
        &format!("T2 PSNR csmrf_ml {ml:.2} vs mrf {mrf:.2} ({:+.2} dB); blip {blip:.2}", ml - mrf),
    );
}

#[test]
fn criterion_10_blip_sanity() {
    let cfg = aligned_config();
    let shared = prepare(&cfg).unwrap();
    let truth = make_slice(&cfg, &shared, 1, true).unwrap();
    let full = csmrf::kspace::acquire(&truth.images, &full_masks(cfg.rows, cfg.sequence.length), 0.0, 0).unwrap();
    let one = PipelineConfig {
        blip_iters: 1,
        ..cfg.pipeline.clone()
    };
    let blip = run_blip(&full, &shared.dict, &one).unwrap();
    let oracle = run_oracle(&full, &shared.dict, &cfg.pipeline).unwrap();
    let same_atoms = blip.atoms == oracle.atoms;
    let map_err = MapKind::ALL
        .iter()
        .flat_map(|&k| blip.maps.get(k).iter().zip(oracle.maps.get(k).iter()).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
        .fold(0.0f64, f64::max);

    let meas = measure(&cfg, &truth, Strategy::Epi, 1).unwrap();
    let ratio = meas.masks.sampling_ratio();
    let est = run_blip(&meas, &shared.dict, &cfg.pipeline).unwrap();
    let worst_rise = est.residuals.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let pass = same_atoms && map_err < 1e-9 && worst_rise <= 1e-9 && (ratio - 0.0625).abs() < 1e-12;
    report(
        10,
        "BLIP sanity",
        pass,
        &format!(
            "full-mask max map difference {map_err:.2e}; residual {:.4} -> {:.4} over {} steps at {:.2}% rows, largest rise {worst_rise:.2e}",
            est.residuals[0],
            est.residuals.last().unwrap(),
            est.residuals.len() - 1,
            ratio * 100.0
        ),
    );
}

fn run_bytes(threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let mut cfg = ExperimentConfig::default();
        cfg.rows = 32;
        cfg.cols = 32;
        cfg.sequence.length = 100;
        cfg.sampling.epi_factor = 8;
        cfg.noise_sigma = 0.01;
        cfg.methods = Method::ALL.to_vec();
        let shared = prepare(&cfg).unwrap();
        let run = run_seed(&cfg, &shared, 3).unwrap();
        let mut bytes = Vec::new();
        for (_, est) in &run.estimates {
            for kind in MapKind::ALL {
                bytes.extend(encode_real_map(est.maps.get(kind)));
            }
            bytes.extend(encode_int_map(&est.atoms));
        }
        bytes
    })
}

#[test]
fn criterion_11_determinism() {
    let reference = run_bytes(1);
    let mismatched: Vec<usize> = [1, 2, 3, 4].into_iter().filter(|&n| run_bytes(n) != reference).collect();
    report(
        11,
        "determinism",
        mismatched.is_empty(),
        &format!("{} map bytes compared at 1-4 threads, mismatching thread counts {mismatched:?}", reference.len()),
    );
}
