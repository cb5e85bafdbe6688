use std::collections::BTreeMap;

use super::{check_gamma, PackError};
use crate::crypto::RlweCiphertext;
use crate::ring::tower::lemma_stage_reps;
use crate::ring::{RingParams, RingPoly};

/// Highest supported extraction level.
pub const MAX_GAMMA: u32 = 2;

/// Exponents `d` whose ciphertexts `Enc(m(X^d))` feed the extraction sum at
/// level `γ`, ascending: `{1}`, `{1..t−1}` or `{j(kt+1) mod M}`.
pub fn extraction_exponents(params: &RingParams, gamma: u32) -> Result<Vec<usize>, PackError> {
    check_gamma(params, gamma)?;
    let mut out = vec![1usize];
    for k in 1..=gamma {
        let reps = lemma_stage_reps(params, k);
        out = out.iter().flat_map(|&x| reps.iter().map(move |&r| x * r % params.m())).collect();
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Plaintext powers the client computes at level `γ`: nothing for `γ = 0`,
/// otherwise `(d, m(X^d))` for every extraction exponent (the `d = 1` entry
/// is `m` itself and travels as the bundle's base ciphertext).
pub fn client_powers(params: &RingParams, m: &RingPoly, gamma: u32) -> Result<Vec<(usize, RingPoly)>, PackError> {
    if gamma == 0 {
        check_gamma(params, gamma)?;
        return Ok(Vec::new());
    }
    extraction_exponents(params, gamma)?.into_iter().map(|d| Ok((d, m.automorphism(params, d as i64)?))).collect()
}

/// Encrypted extraction input for one chunk: `Enc(m)` and, for `γ ≥ 1`,
/// `Enc(m(X^d))` for every non-trivial extraction exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerBundle {
    gamma: u32,
    base: RlweCiphertext,
    powers: BTreeMap<usize, RlweCiphertext>,
}

impl PowerBundle {
    /// Validates that `powers` holds exactly the non-trivial exponents.
    pub fn new(
        params: &RingParams,
        gamma: u32,
        base: RlweCiphertext,
        powers: BTreeMap<usize, RlweCiphertext>,
    ) -> Result<Self, PackError> {
        let want = extraction_exponents(params, gamma)?;
        for &d in powers.keys() {
            if d == 1 || want.binary_search(&d).is_err() {
                return Err(PackError::UnexpectedPower(d));
            }
        }
        if let Some(&d) = want.iter().find(|&&d| d != 1 && !powers.contains_key(&d)) {
            return Err(PackError::MissingPower(d));
        }
        Ok(Self { gamma, base, powers })
    }

    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn base(&self) -> &RlweCiphertext {
        &self.base
    }

    /// `Enc(m(X^d))`; `d = 1` is the base ciphertext.
    pub fn power(&self, d: usize) -> Option<&RlweCiphertext> {
        if d == 1 {
            Some(&self.base)
        } else {
            self.powers.get(&d)
        }
    }

    pub fn powers(&self) -> &BTreeMap<usize, RlweCiphertext> {
        &self.powers
    }

    /// Ciphertexts the client uploads for this chunk.
    pub fn ciphertext_count(&self) -> usize {
        1 + self.powers.len()
    }

    /// All ciphertexts in ascending exponent order, base first.
    pub fn ciphertexts(&self) -> impl Iterator<Item = (usize, &RlweCiphertext)> {
        std::iter::once((1, &self.base)).chain(self.powers.iter().map(|(&d, c)| (d, c)))
    }
}
