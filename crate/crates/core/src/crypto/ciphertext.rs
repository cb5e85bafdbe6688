use crate::ring::{IntPoly, RingParams, RingPoly, SparsePoly};

use super::CryptoError;

/// RLWE ciphertext `(a, b)` with `b = s·a + μ + e`.
///
/// `noise_hint` is an advisory standard-deviation estimate in torus units;
/// it never affects computation.
#[derive(Clone, Debug)]
pub struct RlweCiphertext {
    pub a: RingPoly,
    pub b: RingPoly,
    noise_hint: Option<f64>,
}

impl PartialEq for RlweCiphertext {
    fn eq(&self, o: &Self) -> bool {
        self.a == o.a && self.b == o.b
    }
}

impl Eq for RlweCiphertext {}

fn combine(x: Option<f64>, y: Option<f64>) -> Option<f64> {
    Some(x?.hypot(y?))
}

impl RlweCiphertext {
    pub fn new(a: RingPoly, b: RingPoly) -> Self {
        Self { a, b, noise_hint: None }
    }

    /// Noiseless encryption `(0, μ)`, valid under every key.
    pub fn trivial(msg: RingPoly) -> Self {
        let a = msg.scale(0);
        Self { a, b: msg, noise_hint: Some(0.0) }
    }

    pub fn zero(params: &RingParams) -> Self {
        Self::trivial(RingPoly::zero(params))
    }

    pub fn noise_hint(&self) -> Option<f64> {
        self.noise_hint
    }

    pub fn with_noise_hint(mut self, hint: Option<f64>) -> Self {
        self.noise_hint = hint;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    fn check(&self, o: &Self) -> Result<(), CryptoError> {
        if self.a.coeffs().len() != o.a.coeffs().len() {
            return Err(CryptoError::ParamsMismatch);
        }
        Ok(())
    }

    pub fn add(&self, o: &Self) -> Result<Self, CryptoError> {
        self.check(o)?;
        Ok(Self { a: self.a.add(&o.a), b: self.b.add(&o.b), noise_hint: combine(self.noise_hint, o.noise_hint) })
    }

    pub fn sub(&self, o: &Self) -> Result<Self, CryptoError> {
        self.check(o)?;
        Ok(Self { a: self.a.sub(&o.a), b: self.b.sub(&o.b), noise_hint: combine(self.noise_hint, o.noise_hint) })
    }

    pub fn add_assign(&mut self, o: &Self) -> Result<(), CryptoError> {
        self.check(o)?;
        self.a.add_assign(&o.a);
        self.b.add_assign(&o.b);
        self.noise_hint = combine(self.noise_hint, o.noise_hint);
        Ok(())
    }

    pub fn neg(&self) -> Self {
        Self { a: self.a.neg(), b: self.b.neg(), noise_hint: self.noise_hint }
    }

    pub fn scale(&self, k: i64) -> Self {
        Self {
            a: self.a.scale(k),
            b: self.b.scale(k),
            noise_hint: self.noise_hint.map(|s| s * k.unsigned_abs() as f64),
        }
    }

    pub fn mul_sparse(&self, params: &RingParams, m: &SparsePoly) -> Self {
        let norm = m.terms().iter().map(|&(_, c)| (c * c) as f64).sum::<f64>().sqrt();
        Self {
            a: self.a.mul_sparse(params, m),
            b: self.b.mul_sparse(params, m),
            noise_hint: self.noise_hint.map(|s| s * norm),
        }
    }

    /// Product with a cleartext integer polynomial.
    pub fn mul_int(&self, params: &RingParams, m: &IntPoly) -> Self {
        let norm = m.coeffs().iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
        Self {
            a: self.a.mul_int(params, m),
            b: self.b.mul_int(params, m),
            noise_hint: self.noise_hint.map(|s| s * norm),
        }
    }

    /// Applies `X ↦ X^d` to both components. The result encrypts `μ(X^d)`
    /// under `s(X^d)` and needs a key switch to return to `s`.
    pub fn automorphism(&self, params: &RingParams, d: usize) -> Result<Self, CryptoError> {
        Ok(Self {
            a: self.a.automorphism(params, d as i64)?,
            b: self.b.automorphism(params, d as i64)?,
            noise_hint: self.noise_hint,
        })
    }
}
