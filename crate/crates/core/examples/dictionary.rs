//! Flip-angle schedule, single-voxel Bloch simulation and the desk-scale
//! dictionary.
//!
//! cargo run --release --example dictionary

use csmrf::dictionary::{build_dictionary, build_grid, simulate_fingerprint, DictionaryOptions, GridSpec};
use csmrf::phantom::TissueTable;
use csmrf::sequence::{generate_sequence, SequenceSpec};

fn main() -> csmrf::Result<()> {
    let seq = generate_sequence(&SequenceSpec::default(), 0)?;
    println!("frames {}; first flip angles {:.1?}", seq.len(), &seq.fa_deg[..6]);

    // white matter, and the same tissue 100 Hz / 200 Hz off resonance
    let wm = simulate_fingerprint(500.0, 70.0, 0.0, &seq)?;
    let half = simulate_fingerprint(500.0, 70.0, 100.0, &seq)?;
    let full = simulate_fingerprint(500.0, 70.0, 200.0, &seq)?;
    let diff = |a: &[_], b: &[_], sign: f64| {
        a.iter()
            .zip(b)
            .map(|(x, y): (&csmrf::Complex64, &csmrf::Complex64)| (x - y * sign).norm())
            .fold(0.0, f64::max)
    };
    println!("|s(0) - s(200 Hz)|max = {:.2e}", diff(&wm, &full, 1.0));
    println!("|s(0) + s(100 Hz)|max = {:.2e}", diff(&wm, &half, -1.0));
    for t in [0, 1, 10, 100, 299] {
        println!("  t={t:<3} |s| = {:.4}", wm[t].norm());
    }

    let grid = build_grid(&GridSpec::Desk)?.with_tissues(&TissueTable::brain());
    let dict = build_dictionary(&grid, &seq, DictionaryOptions::default())?;
    println!(
        "desk grid {} x {} x {}: {} atoms ({} dropped with T2 > T1)",
        grid.t1_values.len(),
        grid.t2_values.len(),
        grid.b0_values.len(),
        dict.len(),
        grid.full_size() - dict.len()
    );
    let k = dict.len() / 2;
    println!("atom {k}: {:?}, raw norm {:.3}", dict.params(k), dict.norm(k));
    Ok(())
}
