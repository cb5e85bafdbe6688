//! Timing and traffic instrumentation.
//!
//! [`bench_model`] runs whole sessions in process, timing each client and
//! server phase and counting the exact bytes the wire format would carry.
//! Rows serialize to CSV with the columns of [`BenchRow`]; the latency
//! projection adds `bytes / bandwidth` to measured compute time for a set
//! of hypothetical link speeds.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::crypto::{decrypt, encrypt, KeySwitchKeySet, KeySwitcher, SecretKey};
use crate::model::toy::random_input;
use crate::model::QuantModel;
use crate::params::FheParams;
use crate::protocol::{ClientSession, RoundOutcome, RoundStats, Server, ServerConfig};
use crate::ring::tower::tower_automorphisms;
use crate::ring::{RingContext, RingPoly};
use crate::trace_pack::{
    client_powers, pack_factor, pack_rows, partial_extract, unpack_values, KsCounter, PowerBundle,
};
use crate::transport::messages::{
    encode_round_request, encode_round_response, encode_setup_request, encode_setup_response,
};

/// Link speeds for the latency projection, in MB/s (10^6 bytes).
pub const BANDWIDTHS_MB_S: [f64; 8] = [0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Client key generation and setup exchange.
    Setup,
    Encrypt,
    Extract,
    Linear,
    Pack,
    Decrypt,
    /// Sum of the three server phases.
    Server,
    /// Setup plus every round, end to end without network time.
    Total,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::Setup,
        Phase::Encrypt,
        Phase::Extract,
        Phase::Linear,
        Phase::Pack,
        Phase::Decrypt,
        Phase::Server,
        Phase::Total,
    ];
}

/// One CSV row: mean seconds per inference for one phase. Byte columns
/// are per inference: `setup` carries the setup frames, `total` all
/// frames, and every other phase the round frames only.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub model: String,
    pub b: u32,
    pub gamma: u32,
    pub beta: u32,
    pub phase: Phase,
    pub seconds: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionRow {
    pub model: String,
    pub b: u32,
    pub gamma: u32,
    pub beta: u32,
    pub bandwidth_mb_s: f64,
    pub compute_seconds: f64,
    pub transfer_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, Default)]
struct Totals {
    setup: Duration,
    encrypt: Duration,
    decrypt: Duration,
    server: RoundStats,
    setup_up: u64,
    setup_down: u64,
    round_up: u64,
    round_down: u64,
}

fn add_stats(a: &mut RoundStats, b: &RoundStats) {
    a.extract += b.extract;
    a.linear += b.linear;
    a.pack += b.pack;
    a.key_switches += b.key_switches;
    a.packed += b.packed;
}

/// Benchmarks `inferences` sessions on random inputs. `threads` sizes the
/// server's worker pool (`1` gives clean single-threaded timings).
pub fn bench_model(
    model: &QuantModel,
    params: FheParams,
    threads: usize,
    inferences: usize,
    seed: u64,
) -> crate::Result<Vec<BenchRow>> {
    let server = Arc::new(Server::new(
        model.clone(),
        ServerConfig { threads: Some(threads), seed: Some(seed), ..Default::default() },
    )?);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xbe7c);
    let mut tot = Totals::default();
    let runs = inferences.max(1);
    for k in 0..runs {
        let input = random_input(model, &mut rng);
        let t = Instant::now();
        let mut client = ClientSession::new(params, seed.wrapping_add(k as u64 + 1))?;
        let req = client.setup_request()?;
        let up = encode_setup_request(&req)?.encoded_len() as u64;
        let resp = server.setup(req)?;
        let down = encode_setup_response(&resp).encoded_len() as u64;
        client.accept_setup(resp)?;
        tot.setup += t.elapsed();
        tot.setup_up += up;
        tot.setup_down += down;
        let mut v = input;
        loop {
            let t = Instant::now();
            let req = client.prepare_round(&v)?;
            tot.encrypt += t.elapsed();
            tot.round_up += encode_round_request(&req, &params)?.encoded_len() as u64;
            let (resp, stats) = server.round_with_stats(&req)?;
            add_stats(&mut tot.server, &stats);
            tot.round_down += encode_round_response(&resp, &params)?.encoded_len() as u64;
            let t = Instant::now();
            let out = client.finish_round(&resp)?;
            tot.decrypt += t.elapsed();
            match out {
                RoundOutcome::Next(next) => v = next,
                RoundOutcome::Final(_) => break,
            }
        }
        if let Some(sid) = client.session_id() {
            server.close(&sid);
        }
    }
    let n = runs as f64;
    let s = &tot.server;
    let total = tot.setup + tot.encrypt + tot.decrypt + s.total();
    let (ru, rd) = (tot.round_up / runs as u64, tot.round_down / runs as u64);
    let (su, sd) = (tot.setup_up / runs as u64, tot.setup_down / runs as u64);
    Ok(Phase::ALL
        .iter()
        .map(|&phase| {
            let (d, up, down) = match phase {
                Phase::Setup => (tot.setup, su, sd),
                Phase::Encrypt => (tot.encrypt, ru, rd),
                Phase::Extract => (s.extract, ru, rd),
                Phase::Linear => (s.linear, ru, rd),
                Phase::Pack => (s.pack, ru, rd),
                Phase::Decrypt => (tot.decrypt, ru, rd),
                Phase::Server => (s.total(), ru, rd),
                Phase::Total => (total, su + ru, sd + rd),
            };
            BenchRow {
                model: model.name.clone(),
                b: params.precision_bits,
                gamma: params.gamma,
                beta: params.beta,
                phase,
                seconds: d.as_secs_f64() / n,
                bytes_up: up,
                bytes_down: down,
                threads,
            }
        })
        .collect())
}

/// End-to-end latency at each bandwidth: the `total` row's seconds plus
/// all exchanged bytes over the link speed.
pub fn project_latency(rows: &[BenchRow], bandwidths_mb_s: &[f64]) -> Vec<ProjectionRow> {
    rows.iter()
        .filter(|r| r.phase == Phase::Total)
        .flat_map(|r| {
            bandwidths_mb_s.iter().map(move |&bw| {
                let transfer = (r.bytes_up + r.bytes_down) as f64 / (bw * 1e6);
                ProjectionRow {
                    model: r.model.clone(),
                    b: r.b,
                    gamma: r.gamma,
                    beta: r.beta,
                    bandwidth_mb_s: bw,
                    compute_seconds: r.seconds,
                    transfer_seconds: transfer,
                    total_seconds: r.seconds + transfer,
                }
            })
        })
        .collect()
}

pub fn write_csv<T: Serialize>(out: impl Write, rows: &[T]) -> crate::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| crate::Error::Config(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Times the pack phase alone on `groups` completely filled groups of
/// `t^{β−1}(t−1)` extracted ciphertexts. Toy-model rounds fill only a few
/// slots of a group, which hides most of what higher `γ` saves; this is
/// the dense case the per-coefficient key-switch counts describe.
pub fn bench_full_pack(params: FheParams, groups: usize, threads: usize, seed: u64) -> crate::Result<BenchRow> {
    Ok(full_pack(params, groups, threads, seed)?.row)
}

/// Outcome of [`full_pack`]: the timing row plus the key-switch count and
/// how many packed values failed to decrypt to their input.
#[derive(Clone, Debug)]
pub struct FullPack {
    pub row: BenchRow,
    pub key_switches: u64,
    pub packed: u64,
    pub mismatches: usize,
}

impl FullPack {
    pub fn switches_per_coefficient(&self) -> f64 {
        self.key_switches as f64 / self.packed.max(1) as f64
    }
}

/// [`bench_full_pack`] with the counters and a decryption check.
pub fn full_pack(params: FheParams, groups: usize, threads: usize, seed: u64) -> crate::Result<FullPack> {
    params.validate()?;
    let ring = params.ring()?;
    let ctx = RingContext::get(ring)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sk = SecretKey::generate_with(&ring, params.key_dist, &mut rng);
    let keys = KeySwitchKeySet::generate(
        &ctx,
        &sk,
        &tower_automorphisms(&ring, params.gamma),
        params.gadget()?,
        params.delta,
        &mut rng,
    )?;
    let ks = KeySwitcher::new(ctx.clone(), Arc::new(keys))?;
    ks.warm();
    let bits = params.precision_bits;
    let count = groups.max(1) * pack_factor(&ring, params.beta);
    let half = 1i64 << (bits - 1);
    let values: Vec<i64> = (0..count).map(|_| rng.gen_range(-half..half)).collect();
    let mut rows = Vec::with_capacity(count);
    let mut bundles = 0u64;
    for chunk in values.chunks(ring.n()) {
        let msg = RingPoly::from_messages(&ring, chunk, bits)?;
        let base = encrypt(&ctx, &sk, &msg, params.delta, &mut rng)?;
        let mut powers = std::collections::BTreeMap::new();
        for (d, p) in client_powers(&ring, &msg, params.gamma)? {
            if d != 1 {
                powers.insert(d, encrypt(&ctx, &sk, &p, params.delta, &mut rng)?);
            }
        }
        let bundle = PowerBundle::new(&ring, params.gamma, base, powers)?;
        bundles += bundle.ciphertext_count() as u64;
        rows.extend(partial_extract(&ctx, &bundle, chunk.len(), bits)?);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?;
    let counter = KsCounter::new();
    let t = Instant::now();
    let packed = pool.install(|| pack_rows(&ks, rows, params.gamma, params.beta, &counter))?;
    let seconds = t.elapsed().as_secs_f64();
    let factor = pack_factor(&ring, params.beta);
    let mut mismatches = 0;
    for (ct, want) in packed.iter().zip(values.chunks(factor)) {
        let got = unpack_values(&ring, params.beta, &decrypt(&ctx, &sk, ct, bits)?, factor, bits);
        mismatches += got.iter().zip(want).filter(|(a, b)| a != b).count();
    }
    let row = BenchRow {
        model: format!("full-pack-x{}", groups.max(1)),
        b: bits,
        gamma: params.gamma,
        beta: params.beta,
        phase: Phase::Pack,
        seconds,
        bytes_up: bundles * params.ciphertext_bytes() as u64,
        bytes_down: packed.len() as u64 * params.ciphertext_bytes() as u64,
        threads,
    };
    Ok(FullPack { row, key_switches: counter.key_switches(), packed: counter.packed(), mismatches })
}

/// Mean wall time of one server round over `reps` repetitions of round 1,
/// each on a fresh session, with a pool of `threads` workers.
pub fn time_server_round(
    model: &QuantModel,
    params: FheParams,
    threads: usize,
    reps: usize,
    seed: u64,
) -> crate::Result<Duration> {
    let server =
        Server::new(model.clone(), ServerConfig { threads: Some(threads), seed: Some(seed), ..Default::default() })?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut client = ClientSession::new(params, seed)?;
    let setup = client.setup_request()?;
    let input = random_input(model, &mut rng);
    let mut total = Duration::ZERO;
    for _ in 0..reps.max(1) {
        let resp = server.setup(setup.clone())?;
        let sid = resp.session_id;
        let mut c = ClientSession::new(params, seed)?;
        c.accept_setup(resp)?;
        let req = c.prepare_round(&input)?;
        let t = Instant::now();
        server.round(&req)?;
        total += t.elapsed();
        server.close(&sid);
    }
    Ok(total / reps.max(1) as u32)
}
