//! Output shuffling and what it buys: keyed permutations, the shuffle-model
//! DP bound, packing-noise measurement, and runnable reconstruction attacks
//! against a linear layer under each shuffling regime.

mod attacks;
mod dp;
mod noise;
mod permutation;

pub use attacks::{
    attack_inoutshuffle, attack_noshuffle, attack_outshuffle, multiset_orderings, InOutRecovery, LinearOracle,
    NoShuffleRecovery, OutShuffleRecovery, ShuffleMode,
};
pub use dp::{dp_amplify, dp_condition_bound, estimate_local_dp, DpBound, DpParams, LocalDpEstimate};
pub use noise::{noise_histogram, packed_noise, write_histogram_csv, HistogramBin, NoiseReport};
pub use permutation::{derive_permutation, Permutation, ShuffleSeed};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DpError {
    #[error("amplification bound inapplicable: eps0 = {eps0} exceeds ln(n / (16 ln(2/delta))) = {max}")]
    Inapplicable { eps0: f64, max: f64 },
    #[error("invalid DP parameters: {0}")]
    Invalid(String),
}
