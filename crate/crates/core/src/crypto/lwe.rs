use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{CryptoError, GaussianSampler, KeyDistribution};
use crate::ring::Torus;

/// LWE secret `s ∈ S^n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LweSecretKey {
    s: Vec<i64>,
}

/// LWE ciphertext `(a, b)` with `b = ⟨s, a⟩ + μ + e`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LweCiphertext {
    pub a: Vec<Torus>,
    pub b: Torus,
}

impl LweSecretKey {
    pub fn generate(n: usize, dist: KeyDistribution, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self { s: (0..n).map(|_| dist.sample(&mut rng)).collect() }
    }

    pub fn from_coeffs(s: Vec<i64>) -> Self {
        Self { s }
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.s
    }

    pub fn dimension(&self) -> usize {
        self.s.len()
    }

    fn dot(&self, a: &[Torus]) -> Torus {
        a.iter().zip(&self.s).fold(Torus::ZERO, |acc, (&x, &s)| acc + x * s)
    }

    pub fn encrypt(&self, msg: Torus, delta: f64, rng: &mut impl RngCore) -> Result<LweCiphertext, CryptoError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(CryptoError::BadNoise(delta));
        }
        let a: Vec<Torus> = (0..self.s.len()).map(|_| Torus::from_raw(rng.next_u64())).collect();
        let e = GaussianSampler::new().torus(delta, rng);
        let b = self.dot(&a) + msg + e;
        Ok(LweCiphertext { a, b })
    }

    pub fn phase(&self, ct: &LweCiphertext) -> Result<Torus, CryptoError> {
        if ct.a.len() != self.s.len() {
            return Err(CryptoError::Shape(format!("LWE dimension {} vs key {}", ct.a.len(), self.s.len())));
        }
        Ok(ct.b - self.dot(&ct.a))
    }

    pub fn decrypt(&self, ct: &LweCiphertext, p_bits: u32) -> Result<i64, CryptoError> {
        Ok(self.phase(ct)?.decode(p_bits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn roundtrip_and_body_equation() {
        let sk = LweSecretKey::generate(1458, KeyDistribution::Binary, 4);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m: i64 = rng.gen_range(-128..128);
            let ct = sk.encrypt(Torus::from_message(m, 8), 2f64.powi(-36), &mut rng).unwrap();
            assert_eq!(sk.decrypt(&ct, 8).unwrap(), m);
            // recompute the dot product independently on raw numerators
            let mut dot = 0u64;
            for (a, &s) in ct.a.iter().zip(sk.coeffs()) {
                dot = dot.wrapping_add(a.raw().wrapping_mul(s as u64));
            }
            let e = ct.b - Torus::from_raw(dot) - Torus::from_message(m, 8);
            assert!(e.to_f64().abs() < 1e-9);
        }
    }

    #[test]
    fn zero_key_exposes_message() {
        let sk = LweSecretKey::from_coeffs(vec![0; 16]);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let ct = sk.encrypt(Torus::from_message(3, 8), 0.0, &mut rng).unwrap();
        assert_eq!(ct.b, Torus::from_message(3, 8));
    }
}
