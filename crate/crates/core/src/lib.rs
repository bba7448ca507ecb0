//! Distance-covariance fairness penalties and the tooling around them:
//! statistics and their gradients, a small MLP, penalized training,
//! fairness metrics, data loading and experiment drivers.

pub mod dataio;
pub mod experiments;
pub mod fairtrain;
pub mod grad;
pub mod metrics;
pub mod nn;
pub mod stats;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Derives an independent child seed from a master seed and a path of
/// integers (e.g. `[trial, n_index]`), via splitmix64 mixing.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}
