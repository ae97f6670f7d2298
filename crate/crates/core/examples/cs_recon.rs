//! Compressed-sensing reconstruction of single frames: zero-filled adjoint
//! against the wavelet + finite-difference regularized solve, on a
//! piecewise-constant (unperturbed) phantom.
//!
//! cargo run --release --example cs_recon

use csmrf::csrecon::{reconstruct_frame, CsConfig};
use csmrf::kspace::{acquire, norm, render_ground_truth, FourierOp};
use csmrf::phantom::{build_parameter_maps, synth_label_map, NoiseSpec, TissueTable};
use csmrf::sampling::draw_mask_sequence;
use csmrf::sequence::{generate_sequence, SequenceSpec};

fn main() -> csmrf::Result<()> {
    let table = TissueTable::brain();
    let labels = synth_label_map(64, 64, 3)?;
    let maps = build_parameter_maps(&labels, &table, &NoiseSpec::none(), 3)?;
    let seq = generate_sequence(&SequenceSpec { length: 40, ..SequenceSpec::default() }, 0)?;
    let truth = render_ground_truth(&maps, &seq)?;
    let masks = draw_mask_sequence(64, 16, 4, 40, 1.0, 3)?;
    let meas = acquire(&truth, &masks, 0.0, 0)?;
    let op = FourierOp::new(64, 64);
    let alphas = [1e-2, 1e-1, 3e-1];

    println!("relative error per frame; CS columns by alpha {alphas:?}");
    println!("frame   |x|    adjoint        cs");
    for t in [5, 15, 25, 39] {
        let x = truth.frame(t);
        let rel = |a: &ndarray::Array2<csmrf::Complex64>| norm((a - &x).view()) / norm(x);
        let adj = op.adjoint(meas.y[t].view(), &masks.frames[t])?;
        let mut line = format!("{t:>5} {:>6.2} {:>9.3} ", norm(x), rel(&adj));
        for a in alphas {
            let cfg = CsConfig {
                alpha_wavelet: a,
                alpha_tv: a,
                max_iters: 60,
                ..CsConfig::default()
            };
            let r = reconstruct_frame(&op, meas.y[t].view(), &masks.frames[t], &cfg, None)?;
            line += &format!("{:>9.3}", rel(&r.image));
        }
        println!("{line}");
    }
    Ok(())
}
