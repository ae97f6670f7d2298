//! Synthesizes a labelled slice, perturbs the tissue parameters and renders
//! the four ground-truth maps as PGM images.
//!
//! cargo run --release --example phantom -- [out_dir] [seed]

use csmrf::io::{export_pgm, DisplayRange};
use csmrf::phantom::{build_parameter_maps, synth_label_map, MapKind, NoiseSpec, TissueTable};

fn main() -> csmrf::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/phantom".into());
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let table = TissueTable::brain();
    let labels = synth_label_map(64, 64, seed)?;
    labels.write(format!("{out}/labels.mrfm"))?;

    println!("{:<14} {:>7} {:>7} {:>6} {:>7} {:>8}", "tissue", "T1", "T2", "B0", "rho", "voxels");
    for t in table.entries() {
        let n = labels.labels.iter().filter(|&&l| l == t.label).count();
        println!("{:<14} {:>7} {:>7} {:>6} {:>7} {:>8}", t.name, t.t1, t.t2, t.b0, t.density, n);
    }

    let maps = build_parameter_maps(&labels, &table, &NoiseSpec::default(), seed)?;
    for kind in MapKind::ALL {
        let m = maps.get(kind);
        let range = DisplayRange::of(m);
        export_pgm(m, range, format!("{out}/{}.pgm", kind.name()))?;
        println!("{:>8}: [{:.1}, {:.1}]", kind.name(), range.lo, range.hi);
    }
    println!("wrote {out}");
    Ok(())
}
