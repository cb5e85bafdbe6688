//! Noise measurement harnesses. Both need knowledge only a test bench has
//! (the secret key and the plaintext oracle at once).

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::{ClientSession, DirectLink, ProtocolError, RoundOutcome, Server, ServerLink};
use crate::confidentiality::packed_noise;
use crate::crypto::{encrypt, phase, KeySwitchKeySet, KeySwitcher, SecretKey};
use crate::params::FheParams;
use crate::ring::tower::tower_automorphisms;
use crate::ring::{RingContext, RingPoly};
use crate::trace_pack::{
    client_powers, pack_factor, pack_rows, partial_extract, slot_positions, KsCounter, PowerBundle,
};

/// Encrypts `count` uniform values from the full plaintext range, runs
/// them through extraction and packing, and returns the torus noise of
/// every packed coefficient.
pub fn pack_noise_samples(params: &FheParams, count: usize, seed: u64) -> crate::Result<Vec<f64>> {
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
    let bits = params.precision_bits;
    let half = 1i64 << (bits - 1);
    let values: Vec<i64> = (0..count).map(|_| rng.gen_range(-half..half)).collect();
    let n = ring.n();
    let seeds: Vec<u64> = (0..count.div_ceil(n)).map(|_| rng.gen()).collect();
    // one bundle per chunk, each with its own stream so chunks run in parallel
    let rows: Vec<Vec<_>> = values
        .par_chunks(n)
        .zip(seeds)
        .map(|(chunk, s)| -> crate::Result<_> {
            let mut rng = ChaCha20Rng::seed_from_u64(s);
            let msg = RingPoly::from_messages(&ring, chunk, bits)?;
            let base = encrypt(&ctx, &sk, &msg, params.delta, &mut rng)?;
            let mut powers = BTreeMap::new();
            for (d, p) in client_powers(&ring, &msg, params.gamma)? {
                if d != 1 {
                    powers.insert(d, encrypt(&ctx, &sk, &p, params.delta, &mut rng)?);
                }
            }
            let bundle = PowerBundle::new(&ring, params.gamma, base, powers)?;
            Ok(partial_extract(&ctx, &bundle, chunk.len(), bits)?)
        })
        .collect::<crate::Result<_>>()?;
    let counter = KsCounter::new();
    let packed = pack_rows(&ks, rows.into_iter().flatten().collect(), params.gamma, params.beta, &counter)?;
    let factor = pack_factor(&ring, params.beta);
    let slots = slot_positions(&ring, params.beta);
    let noise = packed
        .par_iter()
        .zip(values.par_chunks(factor))
        .map(|(ct, vals)| -> crate::Result<Vec<f64>> {
            let ph = phase(&ctx, &sk, ct)?;
            Ok(packed_noise(&ph, &slots[..vals.len()], vals, bits))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(noise.into_iter().flatten().collect())
}

/// Runs a full session and measures, for every round, the noise of each
/// packed coefficient against the cleartext oracle's linear outputs
/// (permuted the way the server permuted them).
pub fn session_noise(server: &Server, client: &mut ClientSession, input: &[i64]) -> crate::Result<Vec<Vec<f64>>> {
    let oracle = server.model().forward(input)?;
    let mut link = DirectLink::new(server);
    if client.session_id().is_none() {
        let req = client.setup_request()?;
        let resp = link.setup(&req)?;
        client.accept_setup(resp)?;
    }
    let sid = client.session_id().ok_or(ProtocolError::NotSetUp)?;
    let ring = client.context().params().to_owned();
    let (bits, beta) = (client.params().precision_bits, client.params().beta);
    let factor = pack_factor(&ring, beta);
    let slots = slot_positions(&ring, beta);
    let mut v = input.to_vec();
    let mut per_round = Vec::new();
    loop {
        let r = client.round();
        let req = client.prepare_round(&v)?;
        let resp = link.round(&req)?;
        let want = &oracle.pre_activations[(r - 1) as usize];
        let sigma = server.round_permutation(&sid, r, want.len());
        let want = sigma.shuffle(want);
        let noise: Vec<f64> = client
            .phases(&resp)?
            .iter()
            .zip(want.chunks(factor))
            .flat_map(|(ph, vals)| packed_noise(ph, &slots[..vals.len()], vals, bits))
            .collect();
        per_round.push(noise);
        match client.finish_round(&resp)? {
            RoundOutcome::Next(next) => v = next,
            RoundOutcome::Final(_) => return Ok(per_round),
        }
    }
}
