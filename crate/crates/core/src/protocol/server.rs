use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::{
    session_hex, ModelMetadata, ProtocolError, RoundRequest, RoundResponse, SessionId, SetupRequest, SetupResponse,
};
use crate::confidentiality::{derive_permutation, ShuffleSeed};
use crate::crypto::{KeySwitchKeySet, KeySwitcher, RlweCiphertext};
use crate::model::{CtMatrix, EncryptedRound, QuantModel};
use crate::params::FheParams;
use crate::ring::tower::tower_automorphisms;
use crate::ring::{RingContext, RingPoly, Torus};
use crate::trace_pack::{extraction_exponents, pack_rows, partial_extract, KsCounter, PowerBundle};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// Worker threads for round processing; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Seeds session ids and the shuffle master secret; `None` draws both
    /// from the operating system.
    pub seed: Option<u64>,
    /// Parked sessions older than this are dropped by [`Server::sweep`].
    pub session_timeout: Duration,
    /// Leaves round outputs unshuffled. Only for oracle-exact tests of
    /// intermediate values; it voids the server's weight confidentiality.
    pub insecure_disable_shuffle: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { threads: None, seed: None, session_timeout: Duration::from_secs(300), insecure_disable_shuffle: false }
    }
}

/// Timings and key-switch counts of one server round.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RoundStats {
    pub extract: Duration,
    pub linear: Duration,
    pub pack: Duration,
    pub key_switches: u64,
    pub packed: u64,
}

impl RoundStats {
    pub fn total(&self) -> Duration {
        self.extract + self.linear + self.pack
    }
}

struct ServerSession {
    metadata: ModelMetadata,
    ctx: Arc<RingContext>,
    ks: KeySwitcher,
    /// Extraction of a noiseless `1/p`: adding `k` copies after extraction
    /// adds `k` to the packed value (bias rows).
    unit: Vec<Torus>,
    next_round: u32,
    last_seen: Instant,
}

/// Holds the model and every live session. Sessions are independent; a
/// session's rounds are serialized by its own lock.
pub struct Server {
    model: QuantModel,
    lowered: Vec<EncryptedRound>,
    config: ServerConfig,
    shuffle: ShuffleSeed,
    rng: Mutex<ChaCha20Rng>,
    sessions: Mutex<HashMap<SessionId, Arc<Mutex<ServerSession>>>>,
    pool: Option<rayon::ThreadPool>,
}

impl Server {
    pub fn new(model: QuantModel, config: ServerConfig) -> crate::Result<Self> {
        let lowered = model.lower()?;
        let mut rng = match config.seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_rng(OsRng).map_err(|e| crate::Error::Config(format!("entropy: {e}")))?,
        };
        let shuffle = ShuffleSeed::random(&mut rng);
        let pool = match config.threads {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?,
            ),
            None => None,
        };
        Ok(Self { model, lowered, config, shuffle, rng: Mutex::new(rng), sessions: Mutex::new(HashMap::new()), pool })
    }

    pub fn model(&self) -> &QuantModel {
        &self.model
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("registry lock").len()
    }

    /// Drops sessions idle for longer than the configured timeout.
    pub fn sweep(&self) -> usize {
        let timeout = self.config.session_timeout;
        let mut reg = self.sessions.lock().expect("registry lock");
        let before = reg.len();
        reg.retain(|_, s| s.lock().map(|s| s.last_seen.elapsed() <= timeout).unwrap_or(false));
        before - reg.len()
    }

    pub fn close(&self, sid: &SessionId) -> bool {
        self.sessions.lock().expect("registry lock").remove(sid).is_some()
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    pub fn setup(&self, req: SetupRequest) -> Result<SetupResponse, ProtocolError> {
        let refuse = |s: String| ProtocolError::SetupRefused(s);
        let params: FheParams = req.params;
        params.validate().map_err(|e| refuse(e.to_string()))?;
        if params.precision_bits < self.model.accumulator_bits {
            return Err(refuse(format!(
                "precision b = {} below the model's accumulator width {}",
                params.precision_bits, self.model.accumulator_bits
            )));
        }
        let ring = params.ring().map_err(|e| refuse(e.to_string()))?;
        let keys: KeySwitchKeySet = req.keys;
        if *keys.params() != ring || Some(keys.gadget()) != params.gadget().ok() {
            return Err(refuse("key-switching keys do not match the parameters".into()));
        }
        let limit = KeySwitchKeySet::index_limit(&ring);
        if keys.len() > limit {
            return Err(refuse(format!("{} key indices, limit {limit}", keys.len())));
        }
        let have = keys.indices();
        if let Some(d) = tower_automorphisms(&ring, params.gamma).into_iter().find(|d| have.binary_search(d).is_err()) {
            return Err(refuse(format!("missing key-switching key for index {d}")));
        }
        let ctx = RingContext::get(ring).map_err(|e| refuse(e.to_string()))?;
        let metadata = ModelMetadata::from_model(&self.model, params)?;
        let unit = unit_row(&ctx, &params)?;
        let ks = KeySwitcher::new(ctx.clone(), Arc::new(keys))?;
        self.install(|| ks.warm());
        let mut reg = self.sessions.lock().expect("registry lock");
        let sid = loop {
            let mut sid = [0u8; 16];
            self.rng.lock().expect("rng lock").fill_bytes(&mut sid);
            if !reg.contains_key(&sid) {
                break sid;
            }
        };
        reg.insert(
            sid,
            Arc::new(Mutex::new(ServerSession {
                metadata: metadata.clone(),
                ctx,
                ks,
                unit,
                next_round: 1,
                last_seen: Instant::now(),
            })),
        );
        Ok(SetupResponse { session_id: sid, metadata })
    }

    pub fn session_params(&self, sid: &SessionId) -> Option<FheParams> {
        let s = self.sessions.lock().expect("registry lock").get(sid).cloned()?;
        let p = s.lock().expect("session lock").metadata.params;
        Some(p)
    }

    /// Expected next round of a session.
    pub fn expected_round(&self, sid: &SessionId) -> Option<u32> {
        let s = self.sessions.lock().expect("registry lock").get(sid).cloned()?;
        let r = s.lock().expect("session lock").next_round;
        Some(r)
    }

    /// Applies the session and round-order checks without doing any work.
    pub fn check_round(&self, sid: &SessionId, round: u32) -> Result<(), ProtocolError> {
        let session = self
            .sessions
            .lock()
            .expect("registry lock")
            .get(sid)
            .cloned()
            .ok_or_else(|| ProtocolError::UnknownSession(session_hex(sid)))?;
        let s = session.lock().expect("session lock");
        let total = s.metadata.round_count();
        if s.next_round > total {
            return Err(ProtocolError::SessionFinished(total));
        }
        if round != s.next_round {
            return Err(ProtocolError::StaleRound { expected: s.next_round, got: round });
        }
        Ok(())
    }

    pub fn round(&self, req: &RoundRequest) -> Result<RoundResponse, ProtocolError> {
        self.round_with_stats(req).map(|(r, _)| r)
    }

    pub fn round_with_stats(&self, req: &RoundRequest) -> Result<(RoundResponse, RoundStats), ProtocolError> {
        let session = self
            .sessions
            .lock()
            .expect("registry lock")
            .get(&req.session_id)
            .cloned()
            .ok_or_else(|| ProtocolError::UnknownSession(session_hex(&req.session_id)))?;
        let mut s = session.lock().expect("session lock");
        s.last_seen = Instant::now();
        let total = s.metadata.round_count();
        if s.next_round > total {
            return Err(ProtocolError::SessionFinished(total));
        }
        if req.round != s.next_round {
            return Err(ProtocolError::StaleRound { expected: s.next_round, got: req.round });
        }
        let r = req.round;
        let sref: &ServerSession = &s;
        let (packed, stats) = self.install(|| self.process(sref, req))?;
        s.next_round += 1;
        Ok((RoundResponse { session_id: req.session_id, round: r, packed }, stats))
    }

    fn process(
        &self,
        s: &ServerSession,
        req: &RoundRequest,
    ) -> Result<(Vec<RlweCiphertext>, RoundStats), ProtocolError> {
        let r = req.round;
        let md = &s.metadata;
        let params = md.params;
        let ring = *s.ctx.params();
        let meta = md.round(r).expect("round checked");
        let (e_in, e_out) = (meta.input_len, meta.output_len);
        let chunks = md.chunks(e_in);
        if req.bundles.len() != chunks {
            return Err(ProtocolError::CountMismatch { expected: chunks, got: req.bundles.len() });
        }
        for (j, b) in req.bundles.iter().enumerate() {
            if b.gamma() != params.gamma {
                return Err(ProtocolError::MalformedBundle(format!(
                    "chunk {j} has level {} not {}",
                    b.gamma(),
                    params.gamma
                )));
            }
            if b.ciphertexts().any(|(_, c)| c.a.coeffs().len() != ring.n() || c.b.coeffs().len() != ring.n()) {
                return Err(ProtocolError::MalformedBundle(format!("chunk {j} has ciphertexts of the wrong degree")));
            }
        }
        let mut stats = RoundStats::default();

        let t0 = Instant::now();
        let n = ring.n();
        let extracted: Vec<Vec<RlweCiphertext>> = req
            .bundles
            .par_iter()
            .enumerate()
            .map(|(j, b)| partial_extract(&s.ctx, b, (e_in - j * n).min(n), params.precision_bits))
            .collect::<Result<_, _>>()?;
        let rows: Vec<RlweCiphertext> = extracted.into_iter().flatten().collect();
        let mut input = CtMatrix::from_ciphertexts(&ring, &rows)?;
        if r > 1 && !self.config.insecure_disable_shuffle {
            let prev = derive_permutation(&self.shuffle, &req.session_id, r - 1, e_in);
            input = input.gather_rows(&prev.unshuffle_sources())?;
        }
        stats.extract = t0.elapsed();

        let t1 = Instant::now();
        let mut out = self.lowered[(r - 1) as usize].evaluate(input, &s.unit)?;
        if r < md.round_count() && !self.config.insecure_disable_shuffle {
            let sigma = derive_permutation(&self.shuffle, &req.session_id, r, e_out);
            out = out.gather_rows(&sigma.shuffle_sources())?;
        }
        stats.linear = t1.elapsed();

        let t2 = Instant::now();
        let counter = KsCounter::new();
        let packed = pack_rows(&s.ks, out.ciphertexts(), params.gamma, params.beta, &counter)?;
        stats.pack = t2.elapsed();
        stats.key_switches = counter.key_switches();
        stats.packed = counter.packed();
        Ok((packed, stats))
    }

    /// The permutation this server applies to round `r` outputs of a
    /// session (identity when shuffling is disabled or on the last round).
    pub fn round_permutation(&self, sid: &SessionId, r: u32, size: usize) -> crate::confidentiality::Permutation {
        let last = self.lowered.len() as u32;
        if self.config.insecure_disable_shuffle || r == 0 || r >= last {
            return crate::confidentiality::Permutation::identity(size);
        }
        derive_permutation(&self.shuffle, sid, r, size)
    }
}

/// Row `0` of the extraction of a trivial encryption of the constant `1/p`.
pub(crate) fn unit_row(ctx: &RingContext, params: &FheParams) -> Result<Vec<Torus>, ProtocolError> {
    let ring = *ctx.params();
    let one = RingPoly::constant(&ring, Torus::from_message(1, params.precision_bits));
    let base = RlweCiphertext::trivial(one.clone());
    let powers = extraction_exponents(&ring, params.gamma)?
        .into_iter()
        .filter(|&d| d != 1)
        .map(|d| (d, RlweCiphertext::trivial(one.clone())))
        .collect();
    let bundle = PowerBundle::new(&ring, params.gamma, base, powers)?;
    let row = partial_extract(ctx, &bundle, 1, params.precision_bits)?;
    Ok(CtMatrix::from_ciphertexts(&ring, &row)?.row(0).to_vec())
}
