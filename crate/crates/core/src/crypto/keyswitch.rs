use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use rand::RngCore;

use super::{encrypt, CryptoError, GadgetParams, RlweCiphertext, SecretKey};
use crate::ring::ntt::TorusSpectrum;
use crate::ring::{cyclotomic_reduce, RingContext, RingParams, RingPoly, Torus};

/// Gadget encryptions `RLWE_s(s(X^d)/D^j)`, `j = 1..l`, for one index `d`.
#[derive(Debug)]
pub struct AutomorphismKey {
    d: usize,
    levels: Vec<RlweCiphertext>,
    spectra: OnceLock<Vec<(TorusSpectrum, TorusSpectrum)>>,
}

impl Clone for AutomorphismKey {
    fn clone(&self) -> Self {
        Self { d: self.d, levels: self.levels.clone(), spectra: OnceLock::new() }
    }
}

impl AutomorphismKey {
    pub fn index(&self) -> usize {
        self.d
    }

    pub fn levels(&self) -> &[RlweCiphertext] {
        &self.levels
    }

    fn spectra(&self, ctx: &RingContext) -> &[(TorusSpectrum, TorusSpectrum)] {
        self.spectra.get_or_init(|| {
            self.levels
                .iter()
                .map(|ct| (ctx.ntt().forward_torus(ct.a.coeffs()), ctx.ntt().forward_torus(ct.b.coeffs())))
                .collect()
        })
    }
}

/// Key-switching material for a set of automorphism indices.
#[derive(Debug, Clone)]
pub struct KeySwitchKeySet {
    params: RingParams,
    gadget: GadgetParams,
    delta: f64,
    keys: BTreeMap<usize, AutomorphismKey>,
}

impl KeySwitchKeySet {
    /// Largest index set the protocol ever needs: `α(t−1)`.
    pub fn index_limit(params: &RingParams) -> usize {
        params.alpha() as usize * (params.t() - 1)
    }

    pub fn generate(
        ctx: &RingContext,
        sk: &SecretKey,
        indices: &[usize],
        gadget: GadgetParams,
        delta: f64,
        rng: &mut impl RngCore,
    ) -> Result<Self, CryptoError> {
        let params = *ctx.params();
        let mut raw = Vec::with_capacity(indices.len());
        for &d in indices {
            let d = params.unit_residue(d as i64)?;
            let sd = sk.automorphism(d)?;
            let mut levels = Vec::with_capacity(gadget.levels() as usize);
            for j in 1..=gadget.levels() {
                let coeffs: Vec<Torus> = sd.coeffs().iter().map(|&c| gadget.scaled(c, j)).collect();
                let msg = RingPoly::from_coeffs(&params, coeffs)?;
                levels.push(encrypt(ctx, sk, &msg, delta, rng)?);
            }
            raw.push((d, levels));
        }
        Self::from_parts(&params, gadget, delta, raw)
    }

    /// Reassembles a key set (e.g. after transport), validating its shape.
    pub fn from_parts(
        params: &RingParams,
        gadget: GadgetParams,
        delta: f64,
        parts: Vec<(usize, Vec<RlweCiphertext>)>,
    ) -> Result<Self, CryptoError> {
        let mut keys = BTreeMap::new();
        for (d, levels) in parts {
            let d = params.unit_residue(d as i64)?;
            if levels.len() != gadget.levels() as usize {
                return Err(CryptoError::Shape(format!(
                    "index {d}: {} levels, gadget needs {}",
                    levels.len(),
                    gadget.levels()
                )));
            }
            if levels.iter().any(|ct| ct.a.coeffs().len() != params.n() || ct.b.coeffs().len() != params.n()) {
                return Err(CryptoError::Shape(format!("index {d}: ciphertext of wrong degree")));
            }
            keys.insert(d, AutomorphismKey { d, levels, spectra: OnceLock::new() });
        }
        let limit = Self::index_limit(params);
        if keys.len() > limit {
            return Err(CryptoError::TooManyKeys { got: keys.len(), limit });
        }
        Ok(Self { params: *params, gadget, delta, keys })
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn gadget(&self) -> GadgetParams {
        self.gadget
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn indices(&self) -> Vec<usize> {
        self.keys.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, d: usize) -> Result<&AutomorphismKey, CryptoError> {
        self.keys.get(&d).ok_or(CryptoError::MissingKey(d))
    }

    pub fn iter(&self) -> impl Iterator<Item = &AutomorphismKey> {
        self.keys.values()
    }

    /// Advisory standard deviation added by one key switch.
    pub fn switch_noise_std(&self) -> f64 {
        let n = self.params.n() as f64;
        let l = self.gadget.levels() as f64;
        let base = self.gadget.base() as f64;
        let fresh = self.delta * (self.params.t() as f64 - 1.0).sqrt();
        let digit_var = base * base / 12.0;
        let rounding = 1.0 / (2.0 * base.powf(l));
        (l * n * digit_var * fresh * fresh + n * rounding * rounding / 6.0).sqrt()
    }
}

/// Homomorphic automorphisms under one secret key.
#[derive(Debug, Clone)]
pub struct KeySwitcher {
    ctx: Arc<RingContext>,
    keys: Arc<KeySwitchKeySet>,
}

impl KeySwitcher {
    pub fn new(ctx: Arc<RingContext>, keys: Arc<KeySwitchKeySet>) -> Result<Self, CryptoError> {
        if ctx.params() != keys.params() {
            return Err(CryptoError::ParamsMismatch);
        }
        Ok(Self { ctx, keys })
    }

    /// Precomputes every key's spectra up front, so the first switch with
    /// each key does not pay for the transforms.
    pub fn warm(&self) {
        use rayon::prelude::*;
        let keys: Vec<&AutomorphismKey> = self.keys.iter().collect();
        keys.par_iter().for_each(|k| {
            k.spectra(&self.ctx);
        });
    }

    pub fn context(&self) -> &Arc<RingContext> {
        &self.ctx
    }

    pub fn keys(&self) -> &Arc<KeySwitchKeySet> {
        &self.keys
    }

    /// Converts `ct`, valid under `s(X^d)`, into a ciphertext of the same
    /// plaintext under `s(X)`:
    /// `(a', b') ↦ (−Σ g_j α_j, b' − Σ g_j β_j)` with `g = decompose(a')`.
    pub fn key_switch(&self, ct: &RlweCiphertext, d: usize) -> Result<RlweCiphertext, CryptoError> {
        let key = self.keys.get(d)?;
        let plan = self.ctx.ntt();
        let params = self.ctx.params();
        let n = params.n();
        let spectra = key.spectra(&self.ctx);
        let digits = self.keys.gadget.decompose(ct.a.coeffs());
        let mut acc_a = TorusSpectrum::zeros(plan.len());
        let mut acc_b = TorusSpectrum::zeros(plan.len());
        for (dig, (sa, sb)) in digits.iter().zip(spectra) {
            let dh = plan.forward_small(dig);
            acc_a.add_product(&dh, sa);
            acc_b.add_product(&dh, sb);
        }
        let a = cyclotomic_reduce(params, &plan.finish_torus(acc_a, 2 * n - 1));
        let b = cyclotomic_reduce(params, &plan.finish_torus(acc_b, 2 * n - 1));
        let hint = ct.noise_hint().map(|s| s.hypot(self.keys.switch_noise_std()));
        Ok(RlweCiphertext::new(a.neg(), ct.b.sub(&b)).with_noise_hint(hint))
    }

    /// `Enc_s(μ) ↦ Enc_s(μ(X^d))`: ring automorphism followed by a switch.
    pub fn apply_automorphism(&self, ct: &RlweCiphertext, d: usize) -> Result<RlweCiphertext, CryptoError> {
        let d = self.ctx.params().unit_residue(d as i64)?;
        self.key_switch(&ct.automorphism(self.ctx.params(), d)?, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{decrypt, phase, KeyDistribution};
    use crate::ring::tower::tower_automorphisms;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn setup(
        t: usize,
        a: u32,
        base: u64,
        l: u32,
        delta: f64,
        idx: &[usize],
    ) -> (Arc<RingContext>, SecretKey, KeySwitcher) {
        let ctx = RingContext::for_ring(t, a).unwrap();
        let sk = SecretKey::generate(ctx.params(), KeyDistribution::Binary, 77);
        let mut rng = ChaCha20Rng::seed_from_u64(78);
        let ks =
            KeySwitchKeySet::generate(&ctx, &sk, idx, GadgetParams::new(base, l).unwrap(), delta, &mut rng).unwrap();
        let sw = KeySwitcher::new(ctx.clone(), Arc::new(ks)).unwrap();
        (ctx, sk, sw)
    }

    #[test]
    fn key_components_decrypt_to_scaled_key() {
        let idx = [2usize, 4];
        let (ctx, sk, sw) = setup(3, 3, 512, 3, 2f64.powi(-36), &idx);
        assert_eq!(sw.keys().indices(), idx.to_vec());
        for key in sw.keys().iter() {
            assert_eq!(key.levels().len(), 3);
            let sd = sk.automorphism(key.index()).unwrap();
            for (j, ct) in key.levels().iter().enumerate() {
                let ph = phase(&ctx, &sk, ct).unwrap();
                for (x, &c) in ph.coeffs().iter().zip(sd.coeffs()) {
                    let expect = sw.keys().gadget().scaled(c, j as u32 + 1);
                    assert!((*x - expect).to_f64().abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_indices() {
        let ctx = RingContext::for_ring(3, 3).unwrap();
        let sk = SecretKey::generate(ctx.params(), KeyDistribution::Binary, 1);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let g = GadgetParams::new(512, 3).unwrap();
        assert!(KeySwitchKeySet::generate(&ctx, &sk, &[3], g, 1e-10, &mut rng).is_err());
        let too_many: Vec<usize> = ctx.params().units().take(7).collect();
        assert!(matches!(
            KeySwitchKeySet::generate(&ctx, &sk, &too_many, g, 1e-10, &mut rng),
            Err(CryptoError::TooManyKeys { .. })
        ));
    }

    #[test]
    fn homomorphic_automorphisms_at_3_7() {
        let ctx = RingContext::for_ring(3, 7).unwrap();
        let idx = tower_automorphisms(ctx.params(), 0);
        let (ctx, sk, sw) = setup(3, 7, 512, 3, 2f64.powi(-36), &idx);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for trial in 0..100 {
            let d = idx[trial % idx.len()];
            let v: Vec<i64> = (0..ctx.params().n()).map(|_| rng.gen_range(-128..128)).collect();
            let m = RingPoly::from_messages(ctx.params(), &v, 8).unwrap();
            let ct = encrypt(&ctx, &sk, &m, 2f64.powi(-36), &mut rng).unwrap();
            let out = sw.apply_automorphism(&ct, d).unwrap();
            let expect = m.automorphism(ctx.params(), d as i64).unwrap();
            assert_eq!(decrypt(&ctx, &sk, &out, 8).unwrap(), expect, "d = {d}");
        }
    }

    #[test]
    fn identity_and_composition() {
        let (ctx, sk, sw) = setup(5, 3, 310, 5, 2f64.powi(-51), &[1, 2, 4, 26]);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let v: Vec<i64> = (0..ctx.params().n()).map(|_| rng.gen_range(-1000..1000)).collect();
        let m = RingPoly::from_messages(ctx.params(), &v, 16).unwrap();
        let ct = encrypt(&ctx, &sk, &m, 2f64.powi(-51), &mut rng).unwrap();
        let same = sw.apply_automorphism(&ct, 1).unwrap();
        assert_eq!(decrypt(&ctx, &sk, &same, 16).unwrap(), m);
        let twice = sw.apply_automorphism(&sw.apply_automorphism(&ct, 2).unwrap(), 26).unwrap();
        let expect = m.automorphism(ctx.params(), 52).unwrap();
        assert_eq!(decrypt(&ctx, &sk, &twice, 16).unwrap(), expect);
        assert!(matches!(sw.apply_automorphism(&ct, 7), Err(CryptoError::MissingKey(7))));
        assert!(twice.noise_hint().unwrap() > ct.noise_hint().unwrap());
    }
}
