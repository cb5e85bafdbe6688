//! Homomorphic trace, per-coefficient extraction and fast packing.
//!
//! Extraction turns one ciphertext of `m(X)` (plus the client-supplied
//! automorphism powers at level `γ`) into ciphertexts whose full trace is a
//! single coefficient of `m`. Packing then runs the remaining tower stages
//! while rotating partial results into slot positions, so the tower work is
//! shared across all values of a pack group.

mod extract;
mod pack;
mod powers;
mod trace;

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::crypto::CryptoError;
use crate::ring::{RingError, RingParams};

pub use extract::partial_extract;
pub use pack::{fast_pack, pack_factor, pack_rows, slot_positions, unpack_values};
pub use powers::{client_powers, extraction_exponents, PowerBundle, MAX_GAMMA};
pub use trace::{fast_trace_homomorphic, trace_cost};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PackError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("extraction level {0} unsupported (0..=2, and at most α)")]
    Gamma(u32),
    #[error("packing level {beta} outside 1..={max}")]
    Beta { beta: u32, max: u32 },
    #[error("expected {expected} ciphertexts, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("bundle lacks power m(X^{0})")]
    MissingPower(usize),
    #[error("bundle has unexpected power m(X^{0})")]
    UnexpectedPower(usize),
    #[error("cannot extract {requested} coefficients from a ring of degree {n}")]
    TooManyOutputs { requested: usize, n: usize },
}

/// Key-switch accounting, shared across worker threads.
#[derive(Debug, Default)]
pub struct KsCounter {
    total_key_switches: AtomicU64,
    packed_coefficients: AtomicU64,
}

impl KsCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_switches(&self, k: u64) {
        self.total_key_switches.fetch_add(k, Ordering::Relaxed);
    }

    pub fn add_packed(&self, k: u64) {
        self.packed_coefficients.fetch_add(k, Ordering::Relaxed);
    }

    pub fn key_switches(&self) -> u64 {
        self.total_key_switches.load(Ordering::Relaxed)
    }

    pub fn packed(&self) -> u64 {
        self.packed_coefficients.load(Ordering::Relaxed)
    }

    /// Switches per packed coefficient, `0` when nothing was packed.
    pub fn per_coefficient(&self) -> f64 {
        let p = self.packed();
        if p == 0 {
            0.0
        } else {
            self.key_switches() as f64 / p as f64
        }
    }
}

pub(crate) fn check_gamma(params: &RingParams, gamma: u32) -> Result<(), PackError> {
    if gamma > MAX_GAMMA || gamma > params.alpha() {
        return Err(PackError::Gamma(gamma));
    }
    Ok(())
}

pub(crate) fn check_beta(params: &RingParams, beta: u32) -> Result<(), PackError> {
    let max = params.alpha().saturating_sub(1);
    if beta == 0 || beta > max {
        return Err(PackError::Beta { beta, max });
    }
    Ok(())
}

/// Default packing level `α − 1`.
pub fn default_beta(params: &RingParams) -> u32 {
    params.alpha() - 1
}

/// Average number of key switches per packed coefficient for one full pack
/// group, derived from the tower schedule.
pub fn expected_switches_per_coefficient(params: &RingParams, gamma: u32, beta: u32) -> Result<f64, PackError> {
    check_gamma(params, gamma)?;
    check_beta(params, beta)?;
    let slots = pack_factor(params, beta);
    let mut total = 0usize;
    for k in gamma + 1..=params.alpha() {
        let live = match k {
            1 => slots,
            k if k <= beta => params.t_pow(beta - k + 1),
            _ => 1,
        };
        total += live * trace_cost(params, k, k - 1)?;
    }
    Ok(total as f64 / slots as f64)
}
