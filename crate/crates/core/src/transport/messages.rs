//! Payload codecs for the five frame types.

use std::collections::BTreeMap;

use super::wire::{decode_block, encode_block, Cursor, Frame, MsgType};
use super::WireError;
use crate::crypto::{KeySwitchKeySet, RlweCiphertext};
use crate::params::FheParams;
use crate::protocol::{
    ModelMetadata, ProtocolError, RoundRequest, RoundResponse, SessionId, SetupRequest, SetupResponse,
};
use crate::trace_pack::{extraction_exponents, PowerBundle};

/// Error codes carried by `ERROR` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    Malformed = 1,
    StaleRound = 2,
    UnknownSession = 3,
    SetupRefused = 4,
    UnknownType = 5,
    SessionFinished = 6,
    Internal = 7,
    Version = 8,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<Self> {
        Some(match v {
            1 => Self::Malformed,
            2 => Self::StaleRound,
            3 => Self::UnknownSession,
            4 => Self::SetupRefused,
            5 => Self::UnknownType,
            6 => Self::SessionFinished,
            7 => Self::Internal,
            8 => Self::Version,
            _ => return None,
        })
    }

    /// Classifies a server-side failure for the wire.
    pub fn of(err: &crate::Error) -> Self {
        use crate::Error as E;
        match err {
            E::Protocol(ProtocolError::StaleRound { .. }) => Self::StaleRound,
            E::Protocol(ProtocolError::UnknownSession(_)) => Self::UnknownSession,
            E::Protocol(ProtocolError::SessionFinished(_)) => Self::SessionFinished,
            E::Protocol(ProtocolError::SetupRefused(_)) => Self::SetupRefused,
            E::Protocol(
                ProtocolError::MalformedBundle(_)
                | ProtocolError::CountMismatch { .. }
                | ProtocolError::InputLength { .. },
            ) => Self::Malformed,
            E::Wire(WireError::UnknownType(_) | WireError::UnknownTypeIn { .. }) => Self::UnknownType,
            E::Wire(WireError::Version(_)) => Self::Version,
            E::Wire(_) | E::Crypto(_) | E::Pack(_) | E::Config(_) => Self::Malformed,
            _ => Self::Internal,
        }
    }
}

pub fn error_frame(session_id: SessionId, round: u32, code: ErrorCode, message: &str) -> Frame {
    let mut p = Vec::with_capacity(2 + message.len());
    p.extend_from_slice(&(code as u16).to_le_bytes());
    p.extend_from_slice(message.as_bytes());
    Frame::new(MsgType::Error, session_id, round, p)
}

/// `(code, message)`; an unrecognised code is kept raw.
pub fn decode_error(payload: &[u8]) -> Result<(u16, String), WireError> {
    let mut c = Cursor::new(payload);
    let code = c.u16()?;
    let msg = std::str::from_utf8(c.rest()).map_err(|_| WireError::Malformed("error message is not UTF-8".into()))?;
    Ok((code, msg.to_owned()))
}

fn json_field(out: &mut Vec<u8>, text: &str) {
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
}

pub fn encode_setup_request(req: &SetupRequest) -> Result<Frame, WireError> {
    let ring = req.params.ring().map_err(|e| WireError::Malformed(e.to_string()))?;
    let mut p = Vec::new();
    json_field(&mut p, &serde_json::to_string(&req.params).map_err(|e| WireError::Json(e.to_string()))?);
    p.extend_from_slice(&(req.keys.len() as u32).to_le_bytes());
    for key in req.keys.iter() {
        p.extend_from_slice(&(key.index() as u32).to_le_bytes());
        encode_block(&mut p, &ring, req.params.gamma as u8, &key.levels().iter().collect::<Vec<_>>());
    }
    Ok(Frame::new(MsgType::SetupReq, [0; 16], 0, p))
}

pub fn decode_setup_request(payload: &[u8]) -> Result<SetupRequest, WireError> {
    let mut c = Cursor::new(payload);
    let len = c.u32()? as usize;
    let text =
        std::str::from_utf8(c.take(len)?).map_err(|_| WireError::Malformed("parameters are not UTF-8".into()))?;
    let params: FheParams = serde_json::from_str(text).map_err(|e| WireError::Json(e.to_string()))?;
    params.validate().map_err(|e| WireError::Malformed(e.to_string()))?;
    let ring = params.ring().map_err(|e| WireError::Malformed(e.to_string()))?;
    let gadget = params.gadget().map_err(|e| WireError::Malformed(e.to_string()))?;
    let count = c.u32()? as usize;
    let limit = KeySwitchKeySet::index_limit(&ring);
    if count > limit {
        return Err(WireError::Malformed(format!("{count} key-switching keys, limit {limit}")));
    }
    let mut parts = Vec::with_capacity(count);
    for _ in 0..count {
        let d = c.u32()? as usize;
        let (levels, gamma) = decode_block(&mut c, &ring)?;
        if u32::from(gamma) != params.gamma {
            return Err(WireError::Malformed(format!("key block tagged γ = {gamma}, parameters say {}", params.gamma)));
        }
        parts.push((d, levels));
    }
    c.finish()?;
    let keys = KeySwitchKeySet::from_parts(&ring, gadget, params.delta, parts)
        .map_err(|e| WireError::Malformed(e.to_string()))?;
    Ok(SetupRequest { params, keys })
}

pub fn encode_setup_response(resp: &SetupResponse) -> Frame {
    Frame::new(MsgType::SetupResp, resp.session_id, 0, resp.metadata.to_json().into_bytes())
}

pub fn decode_setup_response(frame: &Frame) -> Result<SetupResponse, WireError> {
    let text = std::str::from_utf8(&frame.payload).map_err(|_| WireError::Malformed("metadata is not UTF-8".into()))?;
    let metadata = ModelMetadata::from_json(text).map_err(|e| WireError::Malformed(e.to_string()))?;
    Ok(SetupResponse { session_id: frame.session_id, metadata })
}

pub fn encode_round_request(req: &RoundRequest, params: &FheParams) -> Result<Frame, WireError> {
    let ring = params.ring().map_err(|e| WireError::Malformed(e.to_string()))?;
    let mut p = Vec::new();
    p.extend_from_slice(&(req.bundles.len() as u32).to_le_bytes());
    for b in &req.bundles {
        let cts: Vec<&RlweCiphertext> = b.ciphertexts().map(|(_, c)| c).collect();
        encode_block(&mut p, &ring, b.gamma() as u8, &cts);
    }
    Ok(Frame::new(MsgType::RoundReq, req.session_id, req.round, p))
}

pub fn decode_round_request(frame: &Frame, params: &FheParams) -> Result<RoundRequest, WireError> {
    let ring = params.ring().map_err(|e| WireError::Malformed(e.to_string()))?;
    let mut c = Cursor::new(&frame.payload);
    let count = c.u32()? as usize;
    let exps = extraction_exponents(&ring, params.gamma).map_err(|e| WireError::Malformed(e.to_string()))?;
    // each bundle needs at least its 9-byte block frame, so `count` is bounded by the payload
    if count > frame.payload.len() / 9 {
        return Err(WireError::Malformed(format!("{count} bundles cannot fit in {} bytes", frame.payload.len())));
    }
    let mut bundles = Vec::with_capacity(count);
    for j in 0..count {
        let (cts, gamma) = decode_block(&mut c, &ring)?;
        if u32::from(gamma) != params.gamma {
            return Err(WireError::Malformed(format!("bundle {j} tagged γ = {gamma}, session uses {}", params.gamma)));
        }
        if cts.len() != exps.len() {
            return Err(WireError::Malformed(format!(
                "bundle {j} has {} ciphertexts, level needs {}",
                cts.len(),
                exps.len()
            )));
        }
        let mut it = exps.iter().copied().zip(cts);
        let (_, base) = it.next().expect("exponent set contains 1");
        let powers: BTreeMap<usize, RlweCiphertext> = it.collect();
        bundles.push(
            PowerBundle::new(&ring, params.gamma, base, powers).map_err(|e| WireError::Malformed(e.to_string()))?,
        );
    }
    c.finish()?;
    Ok(RoundRequest { session_id: frame.session_id, round: frame.round, bundles })
}

pub fn encode_round_response(resp: &RoundResponse, params: &FheParams) -> Result<Frame, WireError> {
    let ring = params.ring().map_err(|e| WireError::Malformed(e.to_string()))?;
    let mut p = Vec::new();
    encode_block(&mut p, &ring, params.gamma as u8, &resp.packed.iter().collect::<Vec<_>>());
    Ok(Frame::new(MsgType::RoundResp, resp.session_id, resp.round, p))
}

pub fn decode_round_response(frame: &Frame, params: &FheParams) -> Result<RoundResponse, WireError> {
    let ring = params.ring().map_err(|e| WireError::Malformed(e.to_string()))?;
    let mut c = Cursor::new(&frame.payload);
    let (packed, _) = decode_block(&mut c, &ring)?;
    c.finish()?;
    Ok(RoundResponse { session_id: frame.session_id, round: frame.round, packed })
}
