use std::f64::consts::TAU;
use std::sync::OnceLock;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{CryptoError, RlweCiphertext};
use crate::ring::{cyclotomic_reduce, IntPoly, RingContext, RingParams, RingPoly, Torus, TORUS_MODULUS};

/// Support of the secret-key coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyDistribution {
    #[default]
    Binary,
    Ternary,
}

impl KeyDistribution {
    pub(crate) fn sample(self, rng: &mut impl RngCore) -> i64 {
        match self {
            KeyDistribution::Binary => (rng.next_u32() & 1) as i64,
            KeyDistribution::Ternary => rng.gen_range(-1..=1),
        }
    }

    pub fn contains(self, v: i64) -> bool {
        match self {
            KeyDistribution::Binary => v == 0 || v == 1,
            KeyDistribution::Ternary => (-1..=1).contains(&v),
        }
    }
}

/// Box–Muller normal sampler with grid rounding to multiples of `1/q`.
#[derive(Debug, Default)]
pub struct GaussianSampler {
    spare: Option<f64>,
}

impl GaussianSampler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn standard(&mut self, rng: &mut impl RngCore) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - rng.gen::<f64>();
        let u2 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        self.spare = Some(r * (TAU * u2).sin());
        r * (TAU * u2).cos()
    }

    /// A torus sample of `N(0, σ²)` rounded to the grid.
    pub fn torus(&mut self, sigma: f64, rng: &mut impl RngCore) -> Torus {
        if sigma == 0.0 {
            return Torus::ZERO;
        }
        let x = self.standard(rng) * sigma * TORUS_MODULUS as f64;
        Torus::from_signed(x.round() as i64)
    }
}

/// RLWE secret `s(X)` with coefficients in the configured key set.
#[derive(Debug)]
pub struct SecretKey {
    params: RingParams,
    dist: KeyDistribution,
    coeffs: Vec<i64>,
    spectrum: OnceLock<Vec<u64>>,
}

impl Clone for SecretKey {
    fn clone(&self) -> Self {
        Self { params: self.params, dist: self.dist, coeffs: self.coeffs.clone(), spectrum: OnceLock::new() }
    }
}

impl SecretKey {
    /// Deterministic key generation from a 64-bit seed.
    pub fn generate(params: &RingParams, dist: KeyDistribution, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self::generate_with(params, dist, &mut rng)
    }

    pub fn generate_with(params: &RingParams, dist: KeyDistribution, rng: &mut impl RngCore) -> Self {
        let coeffs = (0..params.n()).map(|_| dist.sample(rng)).collect();
        Self { params: *params, dist, coeffs, spectrum: OnceLock::new() }
    }

    pub fn from_coeffs(params: &RingParams, dist: KeyDistribution, coeffs: Vec<i64>) -> Result<Self, CryptoError> {
        if coeffs.len() != params.n() {
            return Err(CryptoError::Shape(format!("expected {} key coefficients, got {}", params.n(), coeffs.len())));
        }
        if let Some(&bad) = coeffs.iter().find(|&&c| !dist.contains(c)) {
            return Err(CryptoError::Shape(format!("coefficient {bad} outside the {dist:?} key set")));
        }
        Ok(Self { params: *params, dist, coeffs, spectrum: OnceLock::new() })
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn distribution(&self) -> KeyDistribution {
        self.dist
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn as_poly(&self) -> IntPoly {
        IntPoly::from_coeffs(&self.params, self.coeffs.clone()).expect("length checked at construction")
    }

    /// `s(X^d)` in canonical form.
    pub fn automorphism(&self, d: usize) -> Result<IntPoly, CryptoError> {
        Ok(self.as_poly().automorphism(&self.params, d as i64)?)
    }

    fn spectrum(&self, ctx: &RingContext) -> &[u64] {
        self.spectrum.get_or_init(|| ctx.ntt().forward_small(&self.coeffs))
    }

    /// `s · v` reduced modulo `Φ_M`.
    pub fn mul_torus(&self, ctx: &RingContext, v: &RingPoly) -> RingPoly {
        let n = self.params.n();
        let lin = ctx.ntt().mul_small_torus(self.spectrum(ctx), v.coeffs(), 2 * n - 1);
        cyclotomic_reduce(&self.params, &lin)
    }
}

fn check_ring(ctx: &RingContext, sk: &SecretKey) -> Result<(), CryptoError> {
    if ctx.params() != sk.params() {
        return Err(CryptoError::ParamsMismatch);
    }
    Ok(())
}

/// Encryption with caller-chosen dual-basis coordinates `a*` and `e*`:
/// `a = Σ a*_i U_i`, `b = s·a + μ + Σ e*_i U_i` with
/// `U_i = (Ω*_0)^{-1}Ω*_i`.
pub fn encrypt_with_parts(
    ctx: &RingContext,
    sk: &SecretKey,
    msg: &RingPoly,
    a_star: &[Torus],
    e_star: &[Torus],
) -> Result<RlweCiphertext, CryptoError> {
    check_ring(ctx, sk)?;
    let a = ctx.dual().mask_combine(a_star);
    let e = ctx.dual().mask_combine(e_star);
    let b = sk.mul_torus(ctx, &a).add(msg).add(&e);
    Ok(RlweCiphertext::new(a, b))
}

/// Fresh RLWE encryption of `msg` with dual-weighted Gaussian noise of
/// standard deviation `delta`.
pub fn encrypt(
    ctx: &RingContext,
    sk: &SecretKey,
    msg: &RingPoly,
    delta: f64,
    rng: &mut impl RngCore,
) -> Result<RlweCiphertext, CryptoError> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(CryptoError::BadNoise(delta));
    }
    let n = ctx.params().n();
    let a_star: Vec<Torus> = (0..n).map(|_| Torus::from_raw(rng.next_u64())).collect();
    let mut g = GaussianSampler::new();
    let e_star: Vec<Torus> = (0..n).map(|_| g.torus(delta, rng)).collect();
    let ct = encrypt_with_parts(ctx, sk, msg, &a_star, &e_star)?;
    let t = ctx.params().t() as f64;
    Ok(ct.with_noise_hint(Some(delta * (t - 1.0).sqrt())))
}

/// `b − s·a`, the noisy plaintext.
pub fn phase(ctx: &RingContext, sk: &SecretKey, ct: &RlweCiphertext) -> Result<RingPoly, CryptoError> {
    check_ring(ctx, sk)?;
    Ok(ct.b.sub(&sk.mul_torus(ctx, &ct.a)))
}

/// Decrypts and rounds every coefficient to the nearest multiple of `1/p`.
pub fn decrypt(ctx: &RingContext, sk: &SecretKey, ct: &RlweCiphertext, p_bits: u32) -> Result<RingPoly, CryptoError> {
    let ph = phase(ctx, sk, ct)?;
    let coeffs = ph.coeffs().iter().map(|c| Torus::from_message(c.decode(p_bits), p_bits)).collect();
    Ok(RingPoly::from_coeffs(ctx.params(), coeffs)?)
}
