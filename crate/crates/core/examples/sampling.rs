//! Row-wise Cartesian undersampling: the time-dependent scheme, its
//! independent baseline and shifted EPI masks.
//!
//! cargo run --release --example sampling

use std::collections::HashSet;

use csmrf::sampling::{draw_epi_masks, draw_independent_masks, draw_mask_sequence, init_probability, MaskSequence};

fn overlap_outside_center(m: &MaskSequence) -> usize {
    let center: HashSet<_> = m.center.iter().collect();
    m.frames
        .windows(2)
        .map(|w| {
            let prev: HashSet<_> = w[0].iter().collect();
            w[1].iter().filter(|r| prev.contains(r) && !center.contains(r)).count()
        })
        .sum()
}

fn row_usage(m: &MaskSequence) -> Vec<usize> {
    let mut n = vec![0; m.n_rows];
    for f in &m.frames {
        for &r in f {
            n[r] += 1;
        }
    }
    n
}

fn main() -> csmrf::Result<()> {
    let p = init_probability(64, 4, 1.0)?;
    println!("sampling probability: edge {:.4}, center {:.4}", p[0], p[32]);

    let td = draw_mask_sequence(64, 4, 2, 300, 1.0, 7)?;
    let ind = draw_independent_masks(64, 4, 1.0, 300, 7)?;
    let epi = draw_epi_masks(64, 16, 300, 7)?;
    for (name, m) in [("time-dependent", &td), ("independent", &ind), ("epi", &epi)] {
        let used = row_usage(m);
        println!(
            "{name:<15} ratio {:.4}  repeats outside center {:>4}  rows never sampled {:>2}",
            m.sampling_ratio(),
            overlap_outside_center(m),
            used.iter().filter(|&&n| n == 0).count()
        );
    }
    println!("first frames (time-dependent): {:?}", &td.frames[..4]);
    println!("center rows: {:?}", td.center);

    // the paper-scale draw: 256 rows, 16 per frame, 6 shared center rows
    let big = draw_mask_sequence(256, 16, 6, 500, 4.0, 1)?;
    println!("256-row draw: repeats outside center {}", overlap_outside_center(&big));
    Ok(())
}
