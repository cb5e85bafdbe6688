use std::sync::Arc;

use super::messages::*;
use super::wire::{decode, encode, Frame, MsgType, DEFAULT_MAX_FRAME};
use super::WireError;
use crate::protocol::{session_hex, ProtocolError, Server};

/// Turns request frames into response frames for a shared [`Server`].
/// Every failure becomes an `ERROR` frame; nothing here panics on input.
#[derive(Clone)]
pub struct FrameHandler {
    server: Arc<Server>,
    max_frame: u64,
}

impl FrameHandler {
    pub fn new(server: Arc<Server>) -> Self {
        Self { server, max_frame: DEFAULT_MAX_FRAME }
    }

    pub fn with_max_frame(mut self, max_frame: u64) -> Self {
        self.max_frame = max_frame;
        self
    }

    pub fn max_frame(&self) -> u64 {
        self.max_frame
    }

    pub fn server(&self) -> &Arc<Server> {
        &self.server
    }

    /// Full byte-level exchange: decode, dispatch, encode.
    pub fn handle_bytes(&self, bytes: &[u8]) -> Vec<u8> {
        encode(&self.handle_decoded(decode(bytes, self.max_frame)))
    }

    pub fn handle_decoded(&self, frame: Result<Frame, WireError>) -> Frame {
        match frame {
            Ok(f) => self.handle(&f),
            Err(WireError::UnknownTypeIn { msg_type, session_id, round }) => {
                error_frame(session_id, round, ErrorCode::UnknownType, &format!("unknown message type {msg_type}"))
            }
            Err(e) => {
                let err = crate::Error::from(e);
                error_frame([0; 16], 0, ErrorCode::of(&err), &err.to_string())
            }
        }
    }

    pub fn handle(&self, f: &Frame) -> Frame {
        let out = match f.msg_type {
            MsgType::SetupReq => self.setup(f),
            MsgType::RoundReq => self.round(f),
            other => Err(WireError::Malformed(format!("{other:?} is not a request")).into()),
        };
        out.unwrap_or_else(|e| error_frame(f.session_id, f.round, ErrorCode::of(&e), &e.to_string()))
    }

    fn setup(&self, f: &Frame) -> crate::Result<Frame> {
        self.server.sweep();
        let req = decode_setup_request(&f.payload)?;
        let resp = self.server.setup(req)?;
        Ok(encode_setup_response(&resp))
    }

    fn round(&self, f: &Frame) -> crate::Result<Frame> {
        let params = self
            .server
            .session_params(&f.session_id)
            .ok_or_else(|| ProtocolError::UnknownSession(session_hex(&f.session_id)))?;
        // refuse stale frames before paying for payload decoding
        self.server.check_round(&f.session_id, f.round)?;
        let req = decode_round_request(f, &params)?;
        let resp = self.server.round(&req)?;
        Ok(encode_round_response(&resp, &params)?)
    }
}
