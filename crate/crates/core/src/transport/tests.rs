use std::sync::Arc;

use super::messages::*;
use super::wire::{decode, encode};
use super::*;
use crate::protocol::tests::{cfg, identity_model, small_params};
use crate::protocol::{run_inference, ClientSession, DirectLink, Server, ServerLink};

fn handler(shuffle: bool, n: usize) -> FrameHandler {
    FrameHandler::new(Arc::new(Server::new(identity_model(n), cfg(shuffle)).unwrap()))
}

#[test]
fn setup_request_survives_the_wire() {
    let mut c = ClientSession::new(small_params(1), 2).unwrap();
    let req = c.setup_request().unwrap();
    let f = encode_setup_request(&req).unwrap();
    let back = decode_setup_request(&decode(&encode(&f), DEFAULT_MAX_FRAME).unwrap().payload).unwrap();
    assert_eq!(back.params, req.params);
    assert_eq!(back.keys.indices(), req.keys.indices());
    for (x, y) in back.keys.iter().zip(req.keys.iter()) {
        assert_eq!(x.levels(), y.levels());
    }
    let mut short = f.payload.clone();
    short.pop();
    assert!(decode_setup_request(&short).is_err());
}

#[test]
fn loopback_matches_direct_and_counts_frames() {
    let h = handler(true, 30);
    let x: Vec<i64> = (0..30).map(|i| (i * 11) % 16).collect();
    let mut direct_client = ClientSession::new(small_params(1), 8).unwrap();
    let direct = run_inference(&mut DirectLink::new(h.server()), &mut direct_client, &x).unwrap();
    let mut link = loopback(h.clone());
    let mut c = ClientSession::new(small_params(1), 8).unwrap();
    let report = run_inference(&mut link, &mut c, &x).unwrap();
    assert_eq!(report.result, direct.result);
    // identity rounds: final scores are the input itself
    assert_eq!(report.result.scores, x);

    // independent byte count: header + payload per frame
    let p = small_params(1);
    let ct = 16 * p.m() as u64;
    let keys = c.key_indices().len() as u64;
    let params_json = serde_json::to_string(&p).unwrap().len() as u64;
    let setup_up = 35 + 4 + params_json + 4 + keys * (4 + 9 + p.levels as u64 * ct);
    let md = c.metadata().unwrap();
    let setup_down = 35 + md.to_json().len() as u64;
    let per_bundle = 9 + 2 * ct; // γ = 1 at t = 3: base and one power
    let round_up = 35 + 4 + per_bundle;
    let round_down = 35 + 9 + 2 * ct; // 30 values, 18 per packed ciphertext
    assert_eq!(link.traffic().up, setup_up + 2 * round_up);
    assert_eq!(link.traffic().down, setup_down + 2 * round_down);
}

#[test]
fn server_answers_bad_frames_with_errors() {
    let h = handler(true, 8);
    let mut link = loopback(h.clone());
    let mut c = ClientSession::new(small_params(0), 3).unwrap();
    let req = c.setup_request().unwrap();
    c.accept_setup(link.setup(&req).unwrap()).unwrap();
    let sid = c.session_id().unwrap();
    let round1 = c.prepare_round(&[2; 8]).unwrap();
    let frame = encode_round_request(&round1, c.params()).unwrap();
    assert_eq!(link.exchange(&frame).unwrap().msg_type, MsgType::RoundResp);

    let code = |f: Frame| {
        assert_eq!(f.msg_type, MsgType::Error);
        ErrorCode::from_u16(decode_error(&f.payload).unwrap().0).unwrap()
    };
    // replaying the round-1 frame after it was answered
    let replay = link.exchange(&frame).unwrap();
    assert_eq!((replay.session_id, replay.round), (sid, 1));
    assert_eq!(code(replay), ErrorCode::StaleRound);
    let mut other = frame.clone();
    other.session_id = [0x11; 16];
    assert_eq!(code(link.exchange(&other).unwrap()), ErrorCode::UnknownSession);
    let mut weird = encode(&frame);
    weird[6] = 77;
    let f = decode(&link.channel_mut().call_bytes(weird).unwrap(), DEFAULT_MAX_FRAME).unwrap();
    assert_eq!(f.session_id, sid);
    assert_eq!(code(f), ErrorCode::UnknownType);
    let garbage = link.channel_mut().call_bytes(b"not a frame at all, not even close".to_vec()).unwrap();
    assert_eq!(code(decode(&garbage, DEFAULT_MAX_FRAME).unwrap()), ErrorCode::Malformed);
    let resp_as_req = Frame::new(MsgType::RoundResp, sid, 2, vec![]);
    assert_eq!(code(link.exchange(&resp_as_req).unwrap()), ErrorCode::Malformed);
    // a round-2 frame with a truncated payload, then a good one still works
    let mut bad = frame.clone();
    bad.round = 2;
    bad.payload.truncate(bad.payload.len() - 3);
    assert_eq!(code(link.exchange(&bad).unwrap()), ErrorCode::Malformed);
    assert_eq!(h.server().expected_round(&sid), Some(2));
    let mut bad_setup = encode_setup_request(&req).unwrap();
    bad_setup.payload[10] ^= 0xff;
    assert!(matches!(code(link.exchange(&bad_setup).unwrap()), ErrorCode::Malformed | ErrorCode::SetupRefused));

    // the typed client surfaces refusals as remote errors
    let err = link.round(&round1).unwrap_err();
    match err {
        crate::Error::Wire(w) => assert_eq!(w.remote_code(), Some(ErrorCode::StaleRound)),
        other => panic!("{other}"),
    }
}

#[test]
fn tcp_serves_concurrent_sessions() {
    let h = handler(true, 24);
    let addr = spawn_server("127.0.0.1:0", h.clone()).unwrap();
    let threads: Vec<_> = (0..3u64)
        .map(|k| {
            std::thread::spawn(move || {
                let mut link = connect(addr).unwrap();
                let mut c = ClientSession::new(small_params(k as u32 % 2), 20 + k).unwrap();
                let x: Vec<i64> = (0..24).map(|i| ((i as u64 * 3 + k) % 16) as i64).collect();
                let r = run_inference(&mut link, &mut c, &x).unwrap();
                assert_eq!(r.result.scores, x);
                r.traffic
            })
        })
        .collect();
    for t in threads {
        let traffic = t.join().unwrap();
        assert!(traffic.up > traffic.down);
    }
    assert_eq!(h.server().session_count(), 3);

    // an undelimitable frame gets an error and the connection is closed
    let mut raw = TcpChannel::connect(addr).unwrap();
    let mut f = encode(&Frame::new(MsgType::RoundReq, [0; 16], 1, vec![]));
    f[0] = b'X';
    std::io::Write::write_all(raw.stream_mut(), &f).unwrap();
    let reply = wire::read_frame(raw.stream_mut(), DEFAULT_MAX_FRAME).unwrap().unwrap();
    assert_eq!(reply.msg_type, MsgType::Error);
    assert!(wire::read_frame(raw.stream_mut(), DEFAULT_MAX_FRAME).unwrap().is_none());
}

#[test]
fn oversized_frames_are_refused_before_reading() {
    let h = handler(false, 8).with_max_frame(1024);
    let mut link = loopback(h);
    let mut c = ClientSession::new(small_params(0), 4).unwrap();
    let req = c.setup_request().unwrap();
    let err = link.setup(&req).unwrap_err();
    assert!(err.to_string().contains("frame limit"), "{err}");
}
