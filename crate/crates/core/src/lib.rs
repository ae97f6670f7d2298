//! Magnetic resonance fingerprinting (MRF) toolkit.
//!
//! The crate covers the full simulation and estimation loop:
//!
//! * [`phantom`]: segmented label maps and per-voxel T1/T2/B0/density maps,
//! * [`sequence`]: randomized flip-angle / TR schedules,
//! * [`dictionary`]: IR-bSSFP Bloch simulation and the normalized fingerprint dictionary,
//! * [`sampling`]: row-wise Cartesian undersampling masks (time-dependent,
//!   independent variable-density and shifted EPI),
//! * [`kspace`]: the undersampled unitary Fourier operator and measurement synthesis,
//! * [`csrecon`]: per-frame compressed-sensing reconstruction (wavelet + finite
//!   differences, nonlinear conjugate gradient),
//! * [`metric`]: Relevant Component Analysis for a Mahalanobis matching metric,
//! * [`matching`]: dictionary matching, parameter and proton-density retrieval,
//! * [`pipeline`]: the CS + metric-learning estimator and the MRF / BLIP baselines,
//! * [`eval`]: PSNR / SSIM scoring and multi-seed aggregation,
//! * [`io`], [`config`], [`cli`], [`study`]: file formats, experiment configuration
//!   and the stage runners used by the `csmrf` binary.

pub mod cli;
pub mod config;
pub mod csrecon;
pub mod dictionary;
pub mod eval;
mod error;
pub mod io;
pub mod kspace;
pub mod matching;
pub mod metric;
pub mod phantom;
pub mod pipeline;
pub mod sampling;
pub mod sequence;
pub mod study;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Seeded RNG used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

pub(crate) fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
