use super::{KsCounter, PackError};
use crate::crypto::{KeySwitcher, RlweCiphertext};
use crate::ring::tower::{check_levels, homomorphic_stage, homomorphic_stage_cost};
use crate::ring::RingParams;

/// Key switches needed to trace one ciphertext from `from` down to `to`.
pub fn trace_cost(params: &RingParams, from: u32, to: u32) -> Result<usize, PackError> {
    check_levels(params, from, to)?;
    Ok((to + 1..=from).map(|k| homomorphic_stage_cost(params, k)).sum())
}

/// Applies tower stage `k` homomorphically.
pub(crate) fn apply_stage(
    ks: &KeySwitcher,
    ct: &RlweCiphertext,
    k: u32,
    counter: &KsCounter,
) -> Result<RlweCiphertext, PackError> {
    let mut cur = ct.clone();
    for sub in homomorphic_stage(ks.context().params(), k) {
        let mut acc = cur.clone();
        for &d in &sub {
            acc.add_assign(&ks.apply_automorphism(&cur, d)?)?;
        }
        counter.add_switches(sub.len() as u64);
        cur = acc;
    }
    Ok(cur)
}

/// Homomorphic partial trace `Tr_{K_from/K_to}` built from the tower stages.
/// With `from = α, to = 0` this is the full trace.
pub fn fast_trace_homomorphic(
    ks: &KeySwitcher,
    ct: &RlweCiphertext,
    from: u32,
    to: u32,
    counter: &KsCounter,
) -> Result<RlweCiphertext, PackError> {
    check_levels(ks.context().params(), from, to)?;
    let mut cur = ct.clone();
    for k in to + 1..=from {
        cur = apply_stage(ks, &cur, k, counter)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{decrypt, encrypt, GadgetParams, KeyDistribution, KeySwitchKeySet, SecretKey};
    use crate::ring::tower::{partial_trace_staged, prime_factors, tower_automorphisms};
    use crate::ring::{trace_direct, RingContext, RingPoly, Torus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::sync::Arc;

    fn switcher(t: usize, a: u32, seed: u64) -> (Arc<RingContext>, SecretKey, KeySwitcher) {
        let ctx = RingContext::for_ring(t, a).unwrap();
        let sk = SecretKey::generate(ctx.params(), KeyDistribution::Binary, seed);
        let mut rng = ChaCha20Rng::seed_from_u64(seed + 1);
        let idx = tower_automorphisms(ctx.params(), 0);
        let g = GadgetParams::new(512, 3).unwrap();
        let ksk = KeySwitchKeySet::generate(&ctx, &sk, &idx, g, 2f64.powi(-36), &mut rng).unwrap();
        let ks = KeySwitcher::new(ctx.clone(), Arc::new(ksk)).unwrap();
        (ctx, sk, ks)
    }

    /// `(α−1)(t−1) + Σ_{ℓ | t−1 prime, with multiplicity} (ℓ−1)`.
    fn closed_form(t: usize, a: u32) -> usize {
        (a as usize - 1) * (t - 1) + prime_factors(t - 1).iter().map(|l| l - 1).sum::<usize>()
    }

    #[test]
    fn full_trace_cost_formula() {
        assert_eq!(closed_form(3, 7), 13);
        for (t, a) in [(3usize, 3u32), (3, 7), (5, 5), (7, 4), (13, 2)] {
            let p = RingParams::new(t, a).unwrap();
            assert_eq!(trace_cost(&p, a, 0).unwrap(), closed_form(t, a), "{t}^{a}");
        }
    }

    fn check_trace(t: usize, a: u32, trials: usize) {
        let (ctx, sk, ks) = switcher(t, a, 40 + a as u64);
        let p = *ctx.params();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let bits = 8;
        for _ in 0..trials {
            let v: Vec<i64> = (0..p.n()).map(|_| rng.gen_range(-128..128)).collect();
            let m = RingPoly::from_messages(&p, &v, bits).unwrap();
            let ct = encrypt(&ctx, &sk, &m, 2f64.powi(-36), &mut rng).unwrap();
            let counter = KsCounter::new();
            let out = fast_trace_homomorphic(&ks, &ct, a, 0, &counter).unwrap();
            assert_eq!(counter.key_switches() as usize, closed_form(t, a));
            let direct = trace_direct(&p, &m);
            let got = decrypt(&ctx, &sk, &out, bits).unwrap();
            assert_eq!(got, direct);
            assert!(got.coeffs()[1..].iter().all(|&c| c == Torus::ZERO));
        }
    }

    #[test]
    fn fast_trace_matches_direct_at_27() {
        check_trace(3, 3, 100);
    }

    #[test]
    fn fast_trace_matches_direct_at_3_7() {
        check_trace(3, 7, 100);
    }

    #[test]
    fn partial_levels_and_identity() {
        let (ctx, sk, ks) = switcher(3, 3, 3);
        let p = *ctx.params();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let v: Vec<i64> = (0..p.n()).map(|_| rng.gen_range(-20..20)).collect();
        let m = RingPoly::from_messages(&p, &v, 8).unwrap();
        let ct = encrypt(&ctx, &sk, &m, 2f64.powi(-36), &mut rng).unwrap();
        let counter = KsCounter::new();
        assert_eq!(fast_trace_homomorphic(&ks, &ct, 2, 2, &counter).unwrap(), ct);
        assert_eq!(counter.key_switches(), 0);
        for (from, to) in [(3u32, 1u32), (3, 2), (2, 0), (1, 0)] {
            let c = KsCounter::new();
            let out = fast_trace_homomorphic(&ks, &ct, from, to, &c).unwrap();
            assert_eq!(c.key_switches() as usize, trace_cost(&p, from, to).unwrap());
            let want = partial_trace_staged(&p, &m, from, to).unwrap();
            assert_eq!(decrypt(&ctx, &sk, &out, 8).unwrap(), want);
        }
        assert!(fast_trace_homomorphic(&ks, &ct, 1, 2, &counter).is_err());
    }
}
