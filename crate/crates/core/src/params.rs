//! Scheme parameter sets and their validation.

use serde::{Deserialize, Serialize};

use crate::crypto::{GadgetParams, KeyDistribution};
use crate::ring::RingParams;
use crate::trace_pack::{check_beta, check_gamma};
use crate::{Error, Result};

/// Everything both parties must agree on for one session.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FheParams {
    pub t: usize,
    pub alpha: u32,
    /// `b`, with plaintext modulus `p = 2^b`.
    pub precision_bits: u32,
    /// Fresh-noise standard deviation `Δ` (torus units).
    pub delta: f64,
    pub base: u64,
    pub levels: u32,
    pub gamma: u32,
    pub beta: u32,
    #[serde(default)]
    pub key_dist: KeyDistribution,
}

impl FheParams {
    /// Preset for accumulator width `b ∈ {8, 12, 16}` at extraction level
    /// `gamma`, with `β = α − 1`.
    pub fn preset(b: u32, gamma: u32) -> Result<Self> {
        let (t, alpha, delta_log2, (base, levels)) = match (b, gamma) {
            (8, _) => (3, 7, -36, (512, 3)),
            (12, 0) => (7, 4, -51, (4096, 3)),
            (12, _) => (7, 4, -51, (65536, 2)),
            (16, 0) => (5, 5, -51, (310, 5)),
            (16, _) => (5, 5, -51, (310, 4)),
            _ => return Err(Error::Config(format!("no preset for b = {b} (use 8, 12 or 16)"))),
        };
        let p = Self {
            t,
            alpha,
            precision_bits: b,
            delta: 2f64.powi(delta_log2),
            base,
            levels,
            gamma,
            beta: alpha - 1,
            key_dist: KeyDistribution::Binary,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn ring(&self) -> Result<RingParams> {
        Ok(RingParams::new(self.t, self.alpha)?)
    }

    pub fn gadget(&self) -> Result<GadgetParams> {
        Ok(GadgetParams::new(self.base, self.levels)?)
    }

    pub fn validate(&self) -> Result<()> {
        let ring = self.ring()?;
        self.gadget()?;
        if !(2..=16).contains(&self.precision_bits) {
            return Err(Error::Config(format!("precision_b = {} outside 2..=16", self.precision_bits)));
        }
        if !(self.delta.is_finite() && self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("delta_noise = {} must lie in (0, 1/2)", self.delta)));
        }
        check_gamma(&ring, self.gamma).map_err(|e| Error::Config(e.to_string()))?;
        check_beta(&ring, self.beta).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn with_gamma(mut self, gamma: u32) -> Result<Self> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_beta(mut self, beta: u32) -> Result<Self> {
        self.beta = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.t.pow(self.alpha)
    }

    pub fn n(&self) -> usize {
        self.t.pow(self.alpha - 1) * (self.t - 1)
    }

    /// Wire size of one ciphertext block entry: `2M` values of 8 bytes.
    pub fn ciphertext_bytes(&self) -> usize {
        16 * self.m()
    }
}

/// Parses `2^-36`, `2^(-36)` or a plain float.
pub fn parse_delta(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Config(format!("cannot parse noise level {s:?}"));
    if let Some(exp) = s.strip_prefix("2^") {
        let exp = exp.trim_start_matches('(').trim_end_matches(')');
        let e: i32 = exp.trim().parse().map_err(|_| bad())?;
        return Ok(2f64.powi(e));
    }
    s.parse::<f64>().map_err(|_| bad())
}
