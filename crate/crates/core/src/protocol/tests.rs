use super::*;
use crate::crypto::{decrypt, KeyDistribution};
use crate::model::toy::{random_input, toy_model};
use crate::model::{ActivationKind, ActivationSpec, FullyConnected, Layer, QuantModel, Round};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn small_params(gamma: u32) -> FheParams {
    FheParams {
        t: 3,
        alpha: 4,
        precision_bits: 8,
        delta: 2f64.powi(-36),
        base: 512,
        levels: 3,
        gamma,
        beta: 3,
        key_dist: KeyDistribution::Binary,
    }
}

fn identity(n: usize) -> FullyConnected {
    let mut weights = vec![0; n * n];
    for i in 0..n {
        weights[i * n + i] = 1;
    }
    FullyConnected { inputs: n, outputs: n, weights, bias: vec![0; n] }
}

/// Two identity rounds over `n` values in `[0, 15]`.
pub(crate) fn identity_model(n: usize) -> QuantModel {
    QuantModel {
        name: "id".into(),
        input_shape: [1, 1, n],
        input_range: [0, 15],
        accumulator_bits: 8,
        weight_bits: 2,
        activation_bits: 4,
        rounds: vec![
            Round {
                layers: vec![Layer::FullyConnected(identity(n))],
                activation: ActivationSpec { kind: ActivationKind::Relu, eta: 1.0, clip: [0, 15] },
            },
            Round {
                layers: vec![Layer::FullyConnected(identity(n))],
                activation: ActivationSpec { kind: ActivationKind::Softmax, eta: 1.0, clip: [0, 0] },
            },
        ],
    }
}

pub(crate) fn cfg(shuffle: bool) -> ServerConfig {
    ServerConfig { seed: Some(9), insecure_disable_shuffle: !shuffle, ..Default::default() }
}

fn connect(server: &Server, params: FheParams, seed: u64) -> ClientSession {
    let mut c = ClientSession::new(params, seed).unwrap();
    let req = c.setup_request().unwrap();
    c.accept_setup(server.setup(req).unwrap()).unwrap();
    c
}

#[test]
fn identity_round_returns_input_without_shuffle() {
    let server = Server::new(identity_model(20), cfg(false)).unwrap();
    let mut c = connect(&server, small_params(0), 1);
    let x: Vec<i64> = (0..20).map(|i| (i * 7) % 16).collect();
    let req = c.prepare_round(&x).unwrap();
    assert_eq!(req.bundles.len(), 1);
    // the uploaded base ciphertext decrypts to the state vector
    let plain = decrypt(c.context(), c.secret_key(), req.bundles[0].base(), 8).unwrap().decode(8);
    assert_eq!(&plain[..20], &x[..]);
    assert!(plain[20..].iter().all(|&v| v == 0));
    let resp = server.round(&req).unwrap();
    assert_eq!(c.decode_outputs(&resp).unwrap(), x);
    assert_eq!(server.expected_round(&c.session_id().unwrap()), Some(2));
}

#[test]
fn shuffle_permutes_intermediate_outputs() {
    let server = Server::new(identity_model(40), cfg(true)).unwrap();
    let mut c = connect(&server, small_params(1), 2);
    let x: Vec<i64> = (0..40).map(|i| i % 16).collect();
    let resp = server.round(&c.prepare_round(&x).unwrap()).unwrap();
    let got = c.decode_outputs(&resp).unwrap();
    assert_ne!(got, x);
    let sigma = server.round_permutation(&c.session_id().unwrap(), 1, 40);
    assert_eq!(got, sigma.shuffle(&x));
    // the last round is unshuffled, and undoes nothing visible: scores = x
    let next = match c.finish_round(&resp).unwrap() {
        RoundOutcome::Next(v) => v,
        other => panic!("{other:?}"),
    };
    let resp = server.round(&c.prepare_round(&next).unwrap()).unwrap();
    match c.finish_round(&resp).unwrap() {
        RoundOutcome::Final(f) => {
            assert_eq!(f.scores, x);
            assert!((f.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn chunking_spans_multiple_ciphertexts() {
    // N = 54 at M = 81: 55 values need two chunks; 18 slots per packed
    // ciphertext at β = 3 need four outputs
    let server = Server::new(identity_model(55), cfg(false)).unwrap();
    let mut c = connect(&server, small_params(2), 3);
    let x: Vec<i64> = (0..55).map(|i| (i * 5) % 16).collect();
    let req = c.prepare_round(&x).unwrap();
    assert_eq!(req.bundles.len(), 2);
    assert_eq!(req.bundles[0].ciphertext_count(), 6);
    let resp = server.round(&req).unwrap();
    assert_eq!(resp.packed.len(), 4);
    assert_eq!(c.decode_outputs(&resp).unwrap(), x);
    assert!(matches!(c.prepare_round(&x[..54]), Err(ProtocolError::InputLength { expected: 55, got: 54 })));
}

#[test]
fn session_rules() {
    let server = Server::new(identity_model(8), cfg(true)).unwrap();
    let mut a = connect(&server, small_params(0), 4);
    let b = connect(&server, small_params(0), 5);
    assert_ne!(a.session_id(), b.session_id());
    assert_eq!(server.session_count(), 2);
    let x = vec![1i64; 8];
    let r1 = a.prepare_round(&x).unwrap();
    let resp = server.round(&r1).unwrap();
    // replaying round 1 after it completed
    assert!(matches!(server.round(&r1), Err(ProtocolError::StaleRound { expected: 2, got: 1 })));
    let mut skip = r1.clone();
    skip.round = 3;
    assert!(matches!(server.round(&skip), Err(ProtocolError::StaleRound { .. })));
    let mut other = r1.clone();
    other.session_id = [0xee; 16];
    assert!(matches!(server.round(&other), Err(ProtocolError::UnknownSession(_))));
    // a response for another session or round is refused client-side
    let mut wrong = resp.clone();
    wrong.round = 2;
    assert!(matches!(a.decode_outputs(&wrong), Err(ProtocolError::StaleRound { .. })));
    let v = match a.finish_round(&resp).unwrap() {
        RoundOutcome::Next(v) => v,
        other => panic!("{other:?}"),
    };
    let mut r2 = a.prepare_round(&v).unwrap();
    r2.bundles.push(r2.bundles[0].clone());
    assert!(matches!(server.round(&r2), Err(ProtocolError::CountMismatch { expected: 1, got: 2 })));
    r2.bundles.pop();
    server.round(&r2).unwrap();
    assert!(matches!(server.round(&r2), Err(ProtocolError::SessionFinished(2))));
    assert!(server.close(&b.session_id().unwrap()));
    assert_eq!(server.session_count(), 1);
}

#[test]
fn setup_validation() {
    let server = Server::new(identity_model(8), cfg(true)).unwrap();
    let mut c = ClientSession::new(small_params(0), 6).unwrap();
    let good = c.setup_request().unwrap();
    assert!(good.keys.len() <= KeySwitchKeySet::index_limit(&good.params.ring().unwrap()));
    // keys made for γ = 1 lack the first tower stage needed at γ = 0
    let mut c1 = ClientSession::new(small_params(1), 6).unwrap();
    let mut fewer = c1.setup_request().unwrap();
    fewer.params.gamma = 0;
    assert!(matches!(server.setup(fewer), Err(ProtocolError::SetupRefused(_))));
    let mut low = good.clone();
    low.params.precision_bits = 6;
    assert!(matches!(server.setup(low), Err(ProtocolError::SetupRefused(_))));
    let mut gadget = good.clone();
    gadget.params.base = 256;
    assert!(matches!(server.setup(gadget), Err(ProtocolError::SetupRefused(_))));
    let resp = server.setup(good).unwrap();
    let mut md = resp.metadata.clone();
    md.params.delta *= 2.0;
    assert!(c.accept_setup(SetupResponse { session_id: resp.session_id, metadata: md }).is_err());
    assert!(matches!(
        ClientSession::new(small_params(0), 1).unwrap().prepare_round(&[0; 8]),
        Err(ProtocolError::NotSetUp)
    ));
}

#[test]
fn residual_and_bias_survive_shuffling() {
    // round 2 adds its own input back after a biased dense layer
    let fc = FullyConnected {
        inputs: 6,
        outputs: 6,
        weights: (0..36).map(|i| [(1), (-1), 0, 1][i % 4]).collect(),
        bias: vec![2, -1, 0, 3, -2, 1],
    };
    let model = QuantModel {
        name: "res".into(),
        input_shape: [1, 1, 6],
        input_range: [0, 3],
        accumulator_bits: 8,
        weight_bits: 2,
        activation_bits: 3,
        rounds: vec![
            Round {
                layers: vec![Layer::FullyConnected(fc.clone())],
                activation: ActivationSpec { kind: ActivationKind::Relu, eta: 2.0, clip: [0, 7] },
            },
            Round {
                layers: vec![Layer::FullyConnected(fc), Layer::ResidualAdd { from: -1 }],
                activation: ActivationSpec { kind: ActivationKind::Softmax, eta: 1.0, clip: [0, 0] },
            },
        ],
    };
    let server = Server::new(model.clone(), cfg(true)).unwrap();
    for (seed, x) in [[0, 1, 2, 3, 3, 1], [3, 3, 3, 0, 0, 0], [1, 0, 2, 0, 3, 0]].iter().enumerate() {
        let mut c = ClientSession::new(small_params(seed as u32 % 3), seed as u64).unwrap();
        let mut link = DirectLink::new(&server);
        let rep = run_inference(&mut link, &mut c, x).unwrap();
        assert_eq!(rep.result.scores, model.forward(x).unwrap().scores);
        assert_eq!(rep.encrypt.len(), 2);
        let md = c.metadata().unwrap();
        assert_eq!(rep.traffic.up, (md.upload_bytes(1) + md.upload_bytes(2)) as u64);
        assert_eq!(rep.traffic.down, (md.download_bytes(1) + md.download_bytes(2)) as u64);
    }
}

#[test]
fn toy_model_matches_oracle_at_preset() {
    let model = toy_model(8, 1).unwrap();
    let server = Server::new(model.clone(), ServerConfig { seed: Some(1), ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut client = ClientSession::new(FheParams::preset(8, 1).unwrap(), 3).unwrap();
    let mut link = DirectLink::new(&server);
    let x = random_input(&model, &mut rng);
    let rep = run_inference(&mut link, &mut client, &x).unwrap();
    let want = model.forward(&x).unwrap();
    assert_eq!(rep.result.scores, want.scores);
    assert_eq!(rep.result.argmax, want.argmax());
}

#[test]
fn session_noise_is_within_bound() {
    let model = identity_model(30);
    let server = Server::new(model, cfg(true)).unwrap();
    let mut c = ClientSession::new(small_params(1), 11).unwrap();
    let x: Vec<i64> = (0..30).map(|i| i % 16).collect();
    let noise = session_noise(&server, &mut c, &x).unwrap();
    assert_eq!(noise.len(), 2);
    let bound = 1.0 / 512.0;
    assert!(noise.iter().flatten().all(|v| v.abs() < bound));
    let samples = pack_noise_samples(&small_params(0), 100, 2).unwrap();
    assert_eq!(samples.len(), 100);
    assert!(samples.iter().all(|v| v.abs() < bound));
}
