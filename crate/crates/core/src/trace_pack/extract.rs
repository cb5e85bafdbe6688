use rayon::prelude::*;

use super::{extraction_exponents, PackError, PowerBundle};
use crate::crypto::RlweCiphertext;
use crate::ring::{accumulate_shifted, fold_phi, RingContext, RingPoly, Torus};

/// Extraction of the first `count` coefficients of the chunk in `bundle`.
///
/// Output `i` encrypts `k_M · Σ_d m(X^d)·(M Ω̄*_i)(X^d)` over the level-`γ`
/// exponents, with `k_M = M^{-1} mod p`. Its remaining tower trace (stages
/// `γ+1..α`) is coefficient `i` of `m`. No key switches are spent here.
pub fn partial_extract(
    ctx: &RingContext,
    bundle: &PowerBundle,
    count: usize,
    p_bits: u32,
) -> Result<Vec<RlweCiphertext>, PackError> {
    let params = *ctx.params();
    let n = params.n();
    if count > n {
        return Err(PackError::TooManyOutputs { requested: count, n });
    }
    let exps = extraction_exponents(&params, bundle.gamma())?;
    let inputs: Vec<(usize, &RlweCiphertext)> = exps
        .iter()
        .map(|&d| bundle.power(d).map(|c| (d, c)).ok_or(PackError::MissingPower(d)))
        .collect::<Result<_, _>>()?;
    for (_, c) in &inputs {
        if c.a.coeffs().len() != n {
            return Err(crate::crypto::CryptoError::ParamsMismatch.into());
        }
    }
    let k_m = ctx.dual().inverse_m(p_bits);
    let dual = ctx.dual();
    let hint =
        inputs.iter().map(|(_, c)| c.noise_hint()).try_fold(0.0f64, |acc, h| h.map(|s| acc + s * s)).map(|v| v.sqrt());

    let out = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut acc_a = vec![Torus::ZERO; params.m()];
            let mut acc_b = vec![Torus::ZERO; params.m()];
            let mut weight = 0f64;
            for &(d, ct) in &inputs {
                for &(e, c) in dual.scaled(i).automorphism(&params, d).terms() {
                    let coef = c * k_m;
                    accumulate_shifted(&mut acc_a, ct.a.coeffs(), e, coef);
                    accumulate_shifted(&mut acc_b, ct.b.coeffs(), e, coef);
                    weight = weight.max((coef as f64).abs());
                }
            }
            fold_phi(&params, &mut acc_a);
            fold_phi(&params, &mut acc_b);
            acc_a.truncate(n);
            acc_b.truncate(n);
            let a = RingPoly::from_coeffs(&params, acc_a).expect("length N");
            let b = RingPoly::from_coeffs(&params, acc_b).expect("length N");
            RlweCiphertext::new(a, b).with_noise_hint(hint.map(|s| s * weight * 2f64.sqrt()))
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{decrypt, encrypt, phase, KeyDistribution, SecretKey};
    use crate::ring::tower::lemma_stage_reps;
    use crate::ring::{sum_automorphisms, RingParams};
    use crate::trace_pack::client_powers;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeMap;

    fn bundle_for(ctx: &RingContext, sk: &SecretKey, m: &RingPoly, gamma: u32, rng: &mut ChaCha20Rng) -> PowerBundle {
        let p = ctx.params();
        let base = encrypt(ctx, sk, m, 2f64.powi(-36), rng).unwrap();
        let mut powers = BTreeMap::new();
        for (d, q) in client_powers(p, m, gamma).unwrap() {
            if d != 1 {
                powers.insert(d, encrypt(ctx, sk, &q, 2f64.powi(-36), rng).unwrap());
            }
        }
        PowerBundle::new(p, gamma, base, powers).unwrap()
    }

    /// `Σ_{k=1}^{t−1} Σ_{j} P(X^{k(jt+1)})` truncated to the first `gamma`
    /// stages, written out per the level-1 and level-2 sums.
    fn lemma_sum(p: &RingParams, prod: impl Fn(usize) -> RingPoly, gamma: u32) -> RingPoly {
        let mut ds = vec![1usize];
        if gamma >= 1 {
            ds = (1..p.t()).collect();
        }
        if gamma >= 2 {
            ds = ds.iter().flat_map(|&k| (0..p.t()).map(move |j| k * (j * p.t() + 1) % p.m())).collect();
        }
        ds.iter().fold(RingPoly::zero(p), |acc, &d| acc.add(&prod(d)))
    }

    #[test]
    fn extraction_matches_lemma_sums_at_27() {
        let ctx = RingContext::for_ring(3, 3).unwrap();
        let p = *ctx.params();
        let sk = SecretKey::generate(&p, KeyDistribution::Binary, 12);
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let bits = 8;
        let k_m = ctx.dual().inverse_m(bits);
        assert_eq!((k_m * 27).rem_euclid(256), 1);
        for gamma in 0..=2u32 {
            for _ in 0..5 {
                let v: Vec<i64> = (0..p.n()).map(|_| rng.gen_range(-128..128)).collect();
                let m = RingPoly::from_messages(&p, &v, bits).unwrap();
                let b = bundle_for(&ctx, &sk, &m, gamma, &mut rng);
                let outs = partial_extract(&ctx, &b, p.n(), bits).unwrap();
                for (i, out) in outs.iter().enumerate() {
                    // m(X^d)·(MΩ̄*_i)(X^d) through canonical products
                    let w = ctx.dual().scaled_canonical(i);
                    let prod = |d: usize| {
                        let md = m.automorphism(&p, d as i64).unwrap();
                        md.mul_int(&p, &w.automorphism(&p, d as i64).unwrap()).scale(k_m)
                    };
                    let want = lemma_sum(&p, prod, gamma);
                    assert_eq!(decrypt(&ctx, &sk, out, bits).unwrap(), want, "γ={gamma} i={i}");
                    // the remaining stages finish the trace: coefficient i of m
                    let full =
                        (gamma + 1..=3).fold(want, |acc, k| sum_automorphisms(&p, &acc, &lemma_stage_reps(&p, k)));
                    assert_eq!(full.coeffs()[0], m.coeffs()[i]);
                    assert!(full.coeffs()[1..].iter().all(|c| *c == Torus::ZERO));
                }
            }
        }
    }

    #[test]
    fn zero_message_and_limits() {
        let ctx = RingContext::for_ring(3, 3).unwrap();
        let p = *ctx.params();
        let sk = SecretKey::generate(&p, KeyDistribution::Binary, 14);
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let b = bundle_for(&ctx, &sk, &RingPoly::zero(&p), 1, &mut rng);
        for out in partial_extract(&ctx, &b, 10, 8).unwrap() {
            assert!(decrypt(&ctx, &sk, &out, 8).unwrap().is_zero());
            assert!(phase(&ctx, &sk, &out).unwrap().coeffs().iter().all(|c| c.to_f64().abs() < 1e-6));
        }
        assert!(matches!(partial_extract(&ctx, &b, 19, 8), Err(PackError::TooManyOutputs { .. })));
    }
}
