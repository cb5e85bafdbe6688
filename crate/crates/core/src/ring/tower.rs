//! The tower `Q = K_0 ⊂ K_1 ⊂ … ⊂ K_α = K` with `K_k = Q(ζ_{t^k})`.
//!
//! Stage `k` sums over coset representatives of `H_{k−1}/H_k`, where `H_k`
//! is the subgroup of units congruent to 1 mod `t^k`. Any product of one
//! representative set per stage enumerates the whole Galois group, so the
//! stages commute and their composition is the full trace.

use super::{sum_automorphisms, Coeff, Poly, RingError, RingParams};

pub(crate) fn check_levels(params: &RingParams, from: u32, to: u32) -> Result<(), RingError> {
    if to > from || from > params.alpha() {
        return Err(RingError::Levels { from, to, alpha: params.alpha() });
    }
    Ok(())
}

/// Cleartext representatives for stage `k`: `{1, …, t−1}` for `k = 1` and
/// `{1 + j·t^{k−1} : 0 ≤ j < t}` above.
pub fn lemma_stage_reps(params: &RingParams, k: u32) -> Vec<usize> {
    assert!(k >= 1 && k <= params.alpha(), "stage {k} outside tower");
    let (t, m) = (params.t(), params.m());
    if k == 1 {
        (1..t).collect()
    } else {
        let step = params.t_pow(k - 1);
        (0..t).map(|j| (1 + j * step) % m).collect()
    }
}

/// Prime factors of `n` in ascending order, with multiplicity.
pub fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        while n % d == 0 {
            out.push(d);
            n /= d;
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    r
}

/// Smallest primitive root modulo the prime `t`.
pub fn primitive_root(t: usize) -> usize {
    let factors = prime_factors(t - 1);
    (2..t)
        .find(|&g| factors.iter().all(|&f| pow_mod(g as u64, ((t - 1) / f) as u64, t as u64) != 1))
        .expect("every prime has a primitive root")
}

/// A unit of order exactly `t−1` modulo `M` (a Teichmüller lift of a
/// primitive root mod `t`). Its powers form a complement of `H_1`.
pub fn teichmuller_unit(params: &RingParams) -> usize {
    let g = primitive_root(params.t()) as u64;
    pow_mod(g, params.m_sub() as u64, params.m() as u64) as usize
}

/// One factor of the first-stage sum: `Σ_{a<length} σ_{step^a}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubgroupStage {
    pub step: usize,
    pub length: usize,
}

/// First-stage trace factored along the primes of `t−1`: with
/// `t−1 = ℓ_1 ⋯ ℓ_r` ascending, sub-stage `s` uses step `ω^{ℓ_1⋯ℓ_{s−1}}`.
pub fn first_stage_factors(params: &RingParams) -> Vec<SubgroupStage> {
    let m = params.m() as u64;
    let omega = teichmuller_unit(params) as u64;
    let mut prefix = 1u64;
    prime_factors(params.t() - 1)
        .into_iter()
        .map(|l| {
            let st = SubgroupStage { step: pow_mod(omega, prefix, m) as usize, length: l };
            prefix *= l as u64;
            st
        })
        .collect()
}

/// The automorphism sub-stages used homomorphically for stage `k`. Each
/// inner list is a set of non-identity indices `D`; the sub-stage maps
/// `x ↦ x + Σ_{d∈D} σ_d(x)`, costing `|D|` key switches.
pub fn homomorphic_stage(params: &RingParams, k: u32) -> Vec<Vec<usize>> {
    assert!(k >= 1 && k <= params.alpha(), "stage {k} outside tower");
    let m = params.m() as u64;
    if k == 1 {
        first_stage_factors(params)
            .into_iter()
            .map(|s| (1..s.length).map(|a| pow_mod(s.step as u64, a as u64, m) as usize).collect())
            .collect()
    } else {
        vec![lemma_stage_reps(params, k)[1..].to_vec()]
    }
}

/// Key-switch cost of stage `k` on one ciphertext.
pub fn homomorphic_stage_cost(params: &RingParams, k: u32) -> usize {
    homomorphic_stage(params, k).iter().map(Vec::len).sum()
}

/// Every automorphism index needed to run stages `above+1 ..= α`
/// homomorphically, ascending and deduplicated.
pub fn tower_automorphisms(params: &RingParams, above: u32) -> Vec<usize> {
    let mut out: Vec<usize> =
        (above + 1..=params.alpha()).flat_map(|k| homomorphic_stage(params, k).into_iter().flatten()).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Cleartext mirror of the homomorphic stage sequence (first stage through
/// the Teichmüller factors). Agrees with [`super::partial_trace_direct`]
/// whenever the input lies in `K_from`, and always for the full trace.
pub fn partial_trace_staged<C: Coeff>(
    params: &RingParams,
    p: &Poly<C>,
    from: u32,
    to: u32,
) -> Result<Poly<C>, RingError> {
    check_levels(params, from, to)?;
    let mut cur = p.clone();
    for k in (to + 1..=from).rev() {
        for sub in homomorphic_stage(params, k) {
            let mut ds = vec![1usize];
            ds.extend(sub);
            cur = sum_automorphisms(params, &cur, &ds);
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{partial_trace_direct, trace_direct, IntPoly};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    #[test]
    fn factorization() {
        assert_eq!(prime_factors(1), Vec::<usize>::new());
        assert_eq!(prime_factors(6), vec![2, 3]);
        assert_eq!(prime_factors(4), vec![2, 2]);
        assert_eq!(prime_factors(12), vec![2, 2, 3]);
    }

    #[test]
    fn teichmuller_order() {
        for (t, a) in [(3, 7), (5, 5), (7, 4), (11, 2)] {
            let p = RingParams::new(t, a).unwrap();
            let w = teichmuller_unit(&p) as u64;
            let m = p.m() as u64;
            assert_eq!(pow_mod(w, (t - 1) as u64, m), 1);
            for f in prime_factors(t - 1) {
                assert_ne!(pow_mod(w, ((t - 1) / f) as u64, m), 1);
            }
        }
    }

    fn product_set(params: &RingParams, stages: &[Vec<usize>]) -> Vec<usize> {
        let mut acc = vec![1usize];
        for s in stages {
            acc = acc.iter().flat_map(|&x| s.iter().map(move |&y| x * y % params.m())).collect();
        }
        acc
    }

    #[test]
    fn stage_products_cover_group_once() {
        for (t, a) in [(3, 4), (5, 3), (7, 3)] {
            let p = RingParams::new(t, a).unwrap();
            let units: BTreeSet<usize> = p.units().collect();
            let lemma: Vec<Vec<usize>> = (1..=a).map(|k| lemma_stage_reps(&p, k)).collect();
            let prod = product_set(&p, &lemma);
            assert_eq!(prod.len(), p.n());
            assert_eq!(prod.into_iter().collect::<BTreeSet<_>>(), units);

            let mut staged = Vec::new();
            for k in 1..=a {
                for sub in homomorphic_stage(&p, k) {
                    let mut s = vec![1];
                    s.extend(sub);
                    staged.push(s);
                }
            }
            let prod = product_set(&p, &staged);
            assert_eq!(prod.len(), p.n());
            assert_eq!(prod.into_iter().collect::<BTreeSet<_>>(), units);
        }
    }

    #[test]
    fn full_trace_cost_formula() {
        // (α−1)(t−1) + Σ(ℓ−1) over the prime factors of t−1
        for (t, a, expect) in [(3, 7, 13), (5, 5, 18), (7, 4, 21), (3, 3, 5)] {
            let p = RingParams::new(t, a).unwrap();
            let cost: usize = (1..=a).map(|k| homomorphic_stage_cost(&p, k)).sum();
            assert_eq!(cost, expect);
            assert!(tower_automorphisms(&p, 0).len() <= a as usize * (t - 1));
        }
    }

    #[test]
    fn staged_full_trace_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (t, a) in [(3, 3), (5, 2), (7, 2)] {
            let p = RingParams::new(t, a).unwrap();
            for _ in 0..20 {
                let x = IntPoly::from_coeffs(&p, (0..p.n()).map(|_| rng.gen_range(-99..99)).collect()).unwrap();
                let tr = trace_direct(&p, &x);
                assert_eq!(partial_trace_staged(&p, &x, a, 0).unwrap(), tr);
                assert_eq!(partial_trace_direct(&p, &x, a, 0).unwrap(), tr);
            }
        }
    }
}
