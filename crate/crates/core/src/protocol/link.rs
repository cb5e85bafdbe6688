use std::time::{Duration, Instant};

use super::{
    ClientSession, FinalScores, ProtocolError, RoundOutcome, RoundRequest, RoundResponse, Server, SetupRequest,
    SetupResponse,
};

/// Bytes moved in each direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Traffic {
    pub up: u64,
    pub down: u64,
}

/// A way to reach a server: in process, over a loopback channel, or TCP.
pub trait ServerLink {
    fn setup(&mut self, req: &SetupRequest) -> crate::Result<SetupResponse>;
    fn round(&mut self, req: &RoundRequest) -> crate::Result<RoundResponse>;
    fn traffic(&self) -> Traffic;
}

/// Direct calls into a [`Server`]; traffic counts ciphertext payload only.
pub struct DirectLink<'a> {
    server: &'a Server,
    traffic: Traffic,
}

impl<'a> DirectLink<'a> {
    pub fn new(server: &'a Server) -> Self {
        Self { server, traffic: Traffic::default() }
    }
}

impl ServerLink for DirectLink<'_> {
    fn setup(&mut self, req: &SetupRequest) -> crate::Result<SetupResponse> {
        Ok(self.server.setup(req.clone())?)
    }

    fn round(&mut self, req: &RoundRequest) -> crate::Result<RoundResponse> {
        let size = self.server.session_params(&req.session_id).map(|p| p.ciphertext_bytes()).unwrap_or(0) as u64;
        self.traffic.up += size * req.bundles.iter().map(|b| b.ciphertext_count() as u64).sum::<u64>();
        let resp = self.server.round(req)?;
        self.traffic.down += size * resp.packed.len() as u64;
        Ok(resp)
    }

    fn traffic(&self) -> Traffic {
        self.traffic
    }
}

/// Outcome of one full session, with client-side timings.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceReport {
    pub result: FinalScores,
    pub setup: Duration,
    /// Encrypt time per round.
    pub encrypt: Vec<Duration>,
    /// Round-trip time per round (server work plus transport).
    pub remote: Vec<Duration>,
    /// Decrypt and activation time per round.
    pub decrypt: Vec<Duration>,
    pub traffic: Traffic,
}

/// Runs setup (unless already done) and every round.
pub fn run_inference(
    link: &mut dyn ServerLink,
    client: &mut ClientSession,
    input: &[i64],
) -> crate::Result<InferenceReport> {
    let t = Instant::now();
    if client.session_id().is_none() {
        let req = client.setup_request()?;
        let resp = link.setup(&req)?;
        client.accept_setup(resp)?;
    }
    let setup = t.elapsed();
    let md = client.metadata().ok_or(ProtocolError::NotSetUp)?;
    let [lo, hi] = md.input_range;
    if let Some((index, &value)) = input.iter().enumerate().find(|(_, &v)| v < lo || v > hi) {
        return Err(crate::model::ModelError::InputRange { index, value, lo, hi }.into());
    }
    let (mut encrypt, mut remote, mut decrypt) = (Vec::new(), Vec::new(), Vec::new());
    let mut v = input.to_vec();
    loop {
        let t0 = Instant::now();
        let req = client.prepare_round(&v)?;
        encrypt.push(t0.elapsed());
        let t1 = Instant::now();
        let resp = link.round(&req)?;
        remote.push(t1.elapsed());
        let t2 = Instant::now();
        let out = client.finish_round(&resp)?;
        decrypt.push(t2.elapsed());
        match out {
            RoundOutcome::Next(next) => v = next,
            RoundOutcome::Final(result) => {
                return Ok(InferenceReport { result, setup, encrypt, remote, decrypt, traffic: link.traffic() })
            }
        }
    }
}
