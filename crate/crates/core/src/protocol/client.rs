use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{ModelMetadata, ProtocolError, RoundRequest, RoundResponse, SessionId, SetupRequest, SetupResponse};
use crate::crypto::{decrypt, encrypt, phase, KeySwitchKeySet, SecretKey};
use crate::model::{activation_apply, softmax, ActivationKind};
use crate::params::FheParams;
use crate::ring::tower::tower_automorphisms;
use crate::ring::{RingContext, RingParams, RingPoly};
use crate::trace_pack::{client_powers, unpack_values, PowerBundle};

#[derive(Clone, Debug, PartialEq)]
pub struct FinalScores {
    pub scores: Vec<i64>,
    pub probabilities: Vec<f64>,
    pub argmax: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RoundOutcome {
    /// Activated state for the next round, in the server's shuffled order.
    Next(Vec<i64>),
    Final(FinalScores),
}

/// The key holder. Drives rounds strictly in order.
pub struct ClientSession {
    params: FheParams,
    ring: RingParams,
    ctx: Arc<RingContext>,
    sk: SecretKey,
    rng: ChaCha20Rng,
    session: Option<(SessionId, ModelMetadata)>,
    round: u32,
}

impl ClientSession {
    pub fn new(params: FheParams, seed: u64) -> crate::Result<Self> {
        params.validate()?;
        let ring = params.ring()?;
        let ctx = RingContext::get(ring)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sk = SecretKey::generate_with(&ring, params.key_dist, &mut rng);
        Ok(Self { params, ring, ctx, sk, rng, session: None, round: 1 })
    }

    pub fn params(&self) -> &FheParams {
        &self.params
    }

    pub fn context(&self) -> &Arc<RingContext> {
        &self.ctx
    }

    pub fn secret_key(&self) -> &SecretKey {
        &self.sk
    }

    pub fn session_id(&self) -> Option<SessionId> {
        self.session.as_ref().map(|(s, _)| *s)
    }

    pub fn metadata(&self) -> Option<&ModelMetadata> {
        self.session.as_ref().map(|(_, m)| m)
    }

    /// Next round this client will send.
    pub fn round(&self) -> u32 {
        self.round
    }

    /// Automorphism indices the server needs to pack at this `γ`.
    pub fn key_indices(&self) -> Vec<usize> {
        tower_automorphisms(&self.ring, self.params.gamma)
    }

    /// Generates the key-switching keys for the hello.
    pub fn setup_request(&mut self) -> Result<SetupRequest, ProtocolError> {
        let keys = KeySwitchKeySet::generate(
            &self.ctx,
            &self.sk,
            &self.key_indices(),
            self.params.gadget().map_err(|e| ProtocolError::SetupRefused(e.to_string()))?,
            self.params.delta,
            &mut self.rng,
        )?;
        Ok(SetupRequest { params: self.params, keys })
    }

    pub fn accept_setup(&mut self, resp: SetupResponse) -> Result<(), ProtocolError> {
        resp.metadata.check()?;
        if resp.metadata.params != self.params {
            return Err(ProtocolError::SetupRefused("server answered with different parameters".into()));
        }
        self.session = Some((resp.session_id, resp.metadata));
        self.round = 1;
        Ok(())
    }

    fn active(&self) -> Result<(SessionId, &ModelMetadata), ProtocolError> {
        self.session.as_ref().map(|(s, m)| (*s, m)).ok_or(ProtocolError::NotSetUp)
    }

    /// Splits `v` into `N`-sized chunks (zero-padded) and encrypts each
    /// chunk together with its automorphism powers.
    pub fn prepare_round(&mut self, v: &[i64]) -> Result<RoundRequest, ProtocolError> {
        let (sid, md) = self.active()?;
        let meta = md.round(self.round).ok_or(ProtocolError::SessionFinished(md.round_count()))?;
        if v.len() != meta.input_len {
            return Err(ProtocolError::InputLength { expected: meta.input_len, got: v.len() });
        }
        let n = self.ring.n();
        let (gamma, bits, delta) = (self.params.gamma, self.params.precision_bits, self.params.delta);
        let mut bundles = Vec::with_capacity(v.len().div_ceil(n));
        for chunk in v.chunks(n) {
            let msg = RingPoly::from_messages(&self.ring, chunk, bits).map_err(crate::crypto::CryptoError::from)?;
            let base = encrypt(&self.ctx, &self.sk, &msg, delta, &mut self.rng)?;
            let mut powers = BTreeMap::new();
            for (d, p) in client_powers(&self.ring, &msg, gamma)? {
                if d != 1 {
                    powers.insert(d, encrypt(&self.ctx, &self.sk, &p, delta, &mut self.rng)?);
                }
            }
            bundles.push(PowerBundle::new(&self.ring, gamma, base, powers)?);
        }
        Ok(RoundRequest { session_id: sid, round: self.round, bundles })
    }

    fn check_response(&self, resp: &RoundResponse) -> Result<usize, ProtocolError> {
        let (sid, md) = self.active()?;
        if resp.session_id != sid {
            return Err(ProtocolError::UnknownSession(super::session_hex(&resp.session_id)));
        }
        if resp.round != self.round {
            return Err(ProtocolError::StaleRound { expected: self.round, got: resp.round });
        }
        let out_len = md.round(self.round).ok_or(ProtocolError::SessionFinished(md.round_count()))?.output_len;
        let expected = md.packed_count(out_len);
        if resp.packed.len() != expected {
            return Err(ProtocolError::CountMismatch { expected, got: resp.packed.len() });
        }
        Ok(out_len)
    }

    /// Raw noisy phases of the packed ciphertexts (for noise audits).
    pub fn phases(&self, resp: &RoundResponse) -> Result<Vec<RingPoly>, ProtocolError> {
        self.check_response(resp)?;
        Ok(resp.packed.iter().map(|ct| phase(&self.ctx, &self.sk, ct)).collect::<Result<_, _>>()?)
    }

    /// Decrypts the round's linear outputs, in slot order, padding dropped.
    pub fn decode_outputs(&self, resp: &RoundResponse) -> Result<Vec<i64>, ProtocolError> {
        let out_len = self.check_response(resp)?;
        let factor = crate::trace_pack::pack_factor(&self.ring, self.params.beta);
        let bits = self.params.precision_bits;
        let mut vals = Vec::with_capacity(out_len);
        for (j, ct) in resp.packed.iter().enumerate() {
            let plain = decrypt(&self.ctx, &self.sk, ct, bits)?;
            let take = (out_len - j * factor).min(factor);
            vals.extend(unpack_values(&self.ring, self.params.beta, &plain, take, bits));
        }
        Ok(vals)
    }

    /// Decrypts, applies the round's activation and advances the round.
    pub fn finish_round(&mut self, resp: &RoundResponse) -> Result<RoundOutcome, ProtocolError> {
        let y = self.decode_outputs(resp)?;
        let (_, md) = self.active()?;
        let spec = md.round(self.round).expect("checked").activation;
        let last = self.round == md.round_count();
        self.round += 1;
        if last {
            debug_assert_eq!(spec.kind, ActivationKind::Softmax);
            let probabilities = softmax(&y, spec.eta);
            let argmax = crate::model::argmax(&y);
            return Ok(RoundOutcome::Final(FinalScores { scores: y, probabilities, argmax }));
        }
        Ok(RoundOutcome::Next(activation_apply(&y, &spec)?))
    }
}
