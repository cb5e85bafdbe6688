//! The trace-dual basis of the power basis.
//!
//! `Ω̄*_i` is defined by `Tr(X^j · Ω̄*_i) = δ_ij`, so `Tr(P · Ω̄*_i)` is the
//! `i`-th coefficient of `P`. The Gram matrix `Tr(X^{j+k})` only has entries
//! where `j + k ≡ 0 mod M/t`, which splits the `N×N` system into `M/t`
//! independent `(t−1)×(t−1)` blocks; each is solved over the rationals.
//!
//! The scaled elements `M·Ω̄*_i` are integral. In canonical form they can
//! have up to `t−1` non-zero coefficients, but modulo `X^M − 1` (adding a
//! multiple of `X^r Φ_M`) each has at most two, which is what the sparse
//! extraction multiplies by.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{IntPoly, Poly, RingError, RingParams, RingPoly, SparsePoly, Torus};

#[derive(Clone, Debug)]
pub struct DualBasis {
    params: RingParams,
    /// `M·Ω̄*_i` modulo `X^M − 1`, at most two terms each.
    scaled: Vec<SparsePoly>,
    /// Canonical non-zero coefficients of `M·Ω̄*_i` as (position, value).
    canonical: Vec<Vec<(usize, i64)>>,
}

fn invert(mut a: Vec<Vec<BigRational>>) -> Option<Vec<Vec<BigRational>>> {
    let n = a.len();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] = &a[col][j] / &p;
            inv[col][j] = &inv[col][j] / &p;
        }
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for j in 0..n {
                let x = &f * &a[col][j];
                a[r][j] -= x;
                let y = &f * &inv[col][j];
                inv[r][j] -= y;
            }
        }
    }
    Some(inv)
}

/// Most frequent value of a small slice (ties broken by first occurrence).
fn mode(values: &[i64]) -> i64 {
    let mut best = (values[0], 0usize);
    for &v in values {
        let c = values.iter().filter(|&&x| x == v).count();
        if c > best.1 {
            best = (v, c);
        }
    }
    best.0
}

impl DualBasis {
    /// Solves for the dual basis exactly and validates integrality, the
    /// two-term sparse form and the encryption mask identity.
    pub fn compute(params: &RingParams) -> Result<Self, RingError> {
        let (t, m, n, ms) = (params.t(), params.m(), params.n(), params.m_sub());
        let big_m = BigRational::from_integer(BigInt::from(m));
        let mut scaled = vec![SparsePoly::default(); n];
        let mut canonical = vec![Vec::new(); n];

        for r in 0..ms {
            let rp = (ms - r) % ms;
            let gram: Vec<Vec<BigRational>> = (0..t - 1)
                .map(|a| {
                    (0..t - 1)
                        .map(|b| {
                            let e = r + a * ms + rp + b * ms;
                            BigRational::from_integer(BigInt::from(params.monomial_trace(e)))
                        })
                        .collect()
                })
                .collect();
            let inv = invert(gram).ok_or_else(|| RingError::DualBasis(format!("singular block {r}")))?;
            for a in 0..t - 1 {
                let i = r + a * ms;
                // class values at positions rp + b·ms, b = 0..t−1 (the last is
                // the position folded away by Φ_M, hence zero canonically)
                let mut vals = vec![0i64; t];
                for b in 0..t - 1 {
                    let w = &inv[b][a] * &big_m;
                    if !w.is_integer() {
                        return Err(RingError::DualBasis(format!("M·Ω̄*_{i} has non-integer coefficient {w}")));
                    }
                    vals[b] =
                        w.to_integer().to_i64().ok_or_else(|| RingError::DualBasis("coefficient overflow".into()))?;
                    if vals[b] != 0 {
                        canonical[i].push((rp + b * ms, vals[b]));
                    }
                }
                let lambda = -mode(&vals);
                let terms: Vec<(i64, i64)> =
                    vals.iter().enumerate().map(|(b, &v)| ((rp + b * ms) as i64, v + lambda)).collect();
                let lift = SparsePoly::new(params, terms);
                if lift.terms().len() > 2 {
                    return Err(RingError::DualBasis(format!(
                        "M·Ω̄*_{i} has {} terms modulo X^M - 1",
                        lift.terms().len()
                    )));
                }
                scaled[i] = lift;
            }
        }

        let basis = Self { params: *params, scaled, canonical };
        basis.validate_lifts()?;
        basis.validate_mask_terms()?;
        Ok(basis)
    }

    fn validate_lifts(&self) -> Result<(), RingError> {
        for i in 0..self.params.n() {
            if self.scaled[i].to_canonical(&self.params) != self.scaled_canonical(i) {
                return Err(RingError::DualBasis(format!("lift of element {i} does not reduce back")));
            }
        }
        Ok(())
    }

    /// Checks `M·Ω*_0 · U_i = M·Ω*_i` for every `i`, where `Ω*_i` is the
    /// complex conjugate of `Ω̄*_i` and `U_i` is [`Self::mask_term`].
    fn validate_mask_terms(&self) -> Result<(), RingError> {
        let p = &self.params;
        let conj = p.m() - 1;
        let omega0 = self.scaled[0].automorphism(p, conj);
        for i in 0..p.n() {
            let lhs = omega0.mul(p, &self.mask_term(i)).to_canonical(p);
            let rhs = self.scaled[i].automorphism(p, conj).to_canonical(p);
            if lhs != rhs {
                return Err(RingError::DualBasis(format!("mask identity fails at {i}")));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    /// `M·Ω̄*_i` as a sparse polynomial modulo `X^M − 1`.
    pub fn scaled(&self, i: usize) -> &SparsePoly {
        &self.scaled[i]
    }

    /// Canonical `M·Ω̄*_i`.
    pub fn scaled_canonical(&self, i: usize) -> IntPoly {
        let mut c = vec![0i64; self.params.n()];
        for &(pos, v) in &self.canonical[i] {
            c[pos] = v;
        }
        Poly { coeffs: c }
    }

    /// `Ω̄*_i` with exact rational coefficients.
    pub fn element(&self, i: usize) -> Vec<BigRational> {
        let m = BigInt::from(self.params.m());
        self.scaled_canonical(i).coeffs().iter().map(|&c| BigRational::new(BigInt::from(c), m.clone())).collect()
    }

    /// `(Ω*_0)^{-1} · Ω*_i`, which equals `Σ_{j ≤ a} X^{r + j·M/t}` for
    /// `i = r + a·M/t`.
    pub fn mask_term(&self, i: usize) -> SparsePoly {
        let ms = self.params.m_sub();
        let (r, a) = (i % ms, i / ms);
        SparsePoly::new(&self.params, (0..=a).map(|j| ((r + j * ms) as i64, 1)))
    }

    /// `Σ_i coords_i · (Ω*_0)^{-1}Ω*_i` in `O(N)` via per-class suffix sums.
    pub fn mask_combine(&self, coords: &[Torus]) -> RingPoly {
        let (t, ms, n) = (self.params.t(), self.params.m_sub(), self.params.n());
        assert_eq!(coords.len(), n);
        let mut out = vec![Torus::ZERO; n];
        for r in 0..ms {
            let mut acc = Torus::ZERO;
            for a in (0..t - 1).rev() {
                acc += coords[r + a * ms];
                out[r + a * ms] = acc;
            }
        }
        Poly { coeffs: out }
    }

    /// `M^{-1} mod 2^p_bits` as the representative in `(−p/2, p/2]`.
    pub fn inverse_m(&self, p_bits: u32) -> i64 {
        inverse_mod_pow2(self.params.m() as u64, p_bits)
    }
}

/// Inverse of an odd `x` modulo `2^bits`, signed representative in
/// `(−2^{bits−1}, 2^{bits−1}]`.
pub fn inverse_mod_pow2(x: u64, bits: u32) -> i64 {
    assert!(x % 2 == 1 && (1..=62).contains(&bits));
    // Newton iteration doubles the number of correct low bits each step
    let mut y: u64 = 1;
    for _ in 0..6 {
        y = y.wrapping_mul(2u64.wrapping_sub(x.wrapping_mul(y)));
    }
    let p = 1i64 << bits;
    let v = (y as i64) & (p - 1);
    if v > p / 2 {
        v - p
    } else {
        v
    }
}

/// `M·X^j·Ω̄*_i` summed over the full group, computed by folding. Exposed
/// for the extraction identity checks.
pub fn scaled_pairing(params: &RingParams, p: &IntPoly, dual: &DualBasis, i: usize) -> i64 {
    let prod = p.mul_sparse(params, dual.scaled(i));
    let tr = super::trace_direct(params, &prod);
    debug_assert!(tr.coeffs()[1..].iter().all(|&c| c == 0));
    tr.coeffs()[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::trace_direct;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis(t: usize, a: u32) -> DualBasis {
        DualBasis::compute(&RingParams::new(t, a).unwrap()).unwrap()
    }

    #[test]
    fn duality_exact_at_27() {
        let d = basis(3, 3);
        let p = *d.params();
        let m = p.m() as i64;
        for i in 0..p.n() {
            for j in 0..p.n() {
                // M·Tr(X^j Ω̄*_i) through an actual product and the direct trace
                let prod = IntPoly::monomial(&p, j as i64, 1).mul_int(&p, &d.scaled_canonical(i));
                let tr = trace_direct(&p, &prod);
                assert!(tr.coeffs()[1..].iter().all(|&c| c == 0));
                assert_eq!(tr.coeffs()[0], if i == j { m } else { 0 }, "i={i} j={j}");
            }
        }
    }

    #[test]
    fn structure_at_table_sizes() {
        for (t, a) in [(3, 3), (3, 7), (5, 5), (7, 4)] {
            let d = basis(t, a);
            let p = *d.params();
            for i in 0..p.n() {
                let s = d.scaled(i);
                assert!(!s.terms().is_empty() && s.terms().len() <= 2);
                assert!(d.element(i).iter().all(|c| (c * BigRational::from_integer(p.m().into())).is_integer()));
            }
        }
    }

    #[test]
    fn sampled_duality_at_large_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = basis(5, 5);
        let p = *d.params();
        for _ in 0..40 {
            let i = rng.gen_range(0..p.n());
            let j = if rng.gen_bool(0.5) { i } else { rng.gen_range(0..p.n()) };
            let x = IntPoly::monomial(&p, j as i64, 1);
            let v = scaled_pairing(&p, &x, &d, i);
            assert_eq!(v, if i == j { p.m() as i64 } else { 0 });
        }
    }

    #[test]
    fn pairing_extracts_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (t, a) in [(3, 3), (5, 2), (7, 2)] {
            let d = basis(t, a);
            let p = *d.params();
            let x = IntPoly::from_coeffs(&p, (0..p.n()).map(|_| rng.gen_range(-500..500)).collect()).unwrap();
            for i in 0..p.n() {
                assert_eq!(scaled_pairing(&p, &x, &d, i), p.m() as i64 * x.coeffs()[i]);
            }
        }
    }

    #[test]
    fn modular_inverse() {
        for (m, bits) in [(2187u64, 8u32), (2401, 12), (3125, 16), (27, 8)] {
            let k = inverse_mod_pow2(m, bits);
            let p = 1i64 << bits;
            assert_eq!((k * m as i64).rem_euclid(p), 1);
            assert!(k > -p / 2 && k <= p / 2);
        }
    }

    #[test]
    fn mask_combine_matches_terms() {
        let d = basis(5, 2);
        let p = *d.params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let coords: Vec<Torus> = (0..p.n()).map(|_| Torus::from_raw(rng.gen())).collect();
        let mut expect = vec![Torus::ZERO; p.n()];
        for (i, &c) in coords.iter().enumerate() {
            for &(pos, k) in d.mask_term(i).terms() {
                expect[pos] += c * k;
            }
        }
        assert_eq!(d.mask_combine(&coords).coeffs(), &expect[..]);
    }
}
