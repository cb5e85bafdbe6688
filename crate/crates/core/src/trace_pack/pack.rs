use rayon::prelude::*;

use super::trace::apply_stage;
use super::{check_beta, check_gamma, KsCounter, PackError};
use crate::crypto::{KeySwitcher, RlweCiphertext};
use crate::ring::{RingParams, RingPoly, SparsePoly};

/// Values per packed ciphertext: `t^{β−1}(t−1)`.
pub fn pack_factor(params: &RingParams, beta: u32) -> usize {
    params.t_pow(beta - 1) * (params.t() - 1)
}

/// Coefficient index holding packed value `i`: `i·M/t^β`.
pub fn slot_positions(params: &RingParams, beta: u32) -> Vec<usize> {
    let stride = params.t_pow(params.alpha() - beta);
    (0..pack_factor(params, beta)).map(|i| i * stride).collect()
}

/// Reads the first `count` packed values out of a decrypted polynomial.
pub fn unpack_values(params: &RingParams, beta: u32, plain: &RingPoly, count: usize, p_bits: u32) -> Vec<i64> {
    slot_positions(params, beta).into_iter().take(count).map(|pos| plain.coeffs()[pos].decode(p_bits)).collect()
}

fn rotate(params: &RingParams, ct: &RlweCiphertext, shift: usize) -> RlweCiphertext {
    if shift == 0 {
        ct.clone()
    } else {
        ct.mul_sparse(params, &SparsePoly::new(params, [(shift as i64, 1)]))
    }
}

fn stage_all(
    ks: &KeySwitcher,
    cur: Vec<Option<RlweCiphertext>>,
    k: u32,
    counter: &KsCounter,
) -> Result<Vec<Option<RlweCiphertext>>, PackError> {
    cur.into_par_iter().map(|c| c.map(|ct| apply_stage(ks, &ct, k, counter)).transpose()).collect()
}

/// Packs one group of extracted ciphertexts (`None` marks padding) into a
/// single ciphertext whose slot `i` holds the value extracted by input `i`.
///
/// Level `k` first runs tower stage `k` on every live ciphertext (skipped
/// for `k ≤ γ`, where extraction already summed it), then for `k ≤ β`
/// merges `t` (or `t−1` at `k = 1`) ciphertexts with rotations by
/// `X^{e·M/t^k}`. Those rotations are fixed by every higher stage, so each
/// stage above `k` runs once per merged ciphertext.
pub fn fast_pack(
    ks: &KeySwitcher,
    cts: Vec<Option<RlweCiphertext>>,
    gamma: u32,
    beta: u32,
    counter: &KsCounter,
) -> Result<RlweCiphertext, PackError> {
    let params = *ks.context().params();
    check_gamma(&params, gamma)?;
    check_beta(&params, beta)?;
    let expected = pack_factor(&params, beta);
    if cts.len() != expected {
        return Err(PackError::InputCount { expected, got: cts.len() });
    }
    let live = cts.iter().filter(|c| c.is_some()).count() as u64;
    let (t, m) = (params.t(), params.m());
    let mut cur = cts;
    for k in 1..=params.alpha() {
        if k > gamma {
            cur = stage_all(ks, cur, k, counter)?;
        }
        if k <= beta {
            let width = if k == 1 { t - 1 } else { t };
            let rest = cur.len() / width;
            let step = m / params.t_pow(k);
            let mut next = Vec::with_capacity(rest);
            for r in 0..rest {
                let mut acc: Option<RlweCiphertext> = None;
                for e in 0..width {
                    if let Some(ct) = &cur[e * rest + r] {
                        let rot = rotate(&params, ct, e * step);
                        match &mut acc {
                            Some(a) => a.add_assign(&rot)?,
                            None => acc = Some(rot),
                        }
                    }
                }
                next.push(acc);
            }
            cur = next;
        }
    }
    counter.add_packed(live);
    debug_assert_eq!(cur.len(), 1);
    Ok(cur.pop().flatten().unwrap_or_else(|| RlweCiphertext::zero(&params)))
}

/// Packs any number of extracted ciphertexts, padding the last group.
pub fn pack_rows(
    ks: &KeySwitcher,
    rows: Vec<RlweCiphertext>,
    gamma: u32,
    beta: u32,
    counter: &KsCounter,
) -> Result<Vec<RlweCiphertext>, PackError> {
    check_beta(ks.context().params(), beta)?;
    let factor = pack_factor(ks.context().params(), beta);
    let mut groups: Vec<Vec<Option<RlweCiphertext>>> = Vec::new();
    let mut it = rows.into_iter().peekable();
    while it.peek().is_some() {
        let mut g: Vec<Option<RlweCiphertext>> = it.by_ref().take(factor).map(Some).collect();
        g.resize(factor, None);
        groups.push(g);
    }
    groups.into_par_iter().map(|g| fast_pack(ks, g, gamma, beta, counter)).collect()
}
