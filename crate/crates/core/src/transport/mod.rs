//! Binary framing over loopback channels and TCP.
//!
//! Every message is one frame (see [`wire`]). The server side is a
//! stateless [`FrameHandler`] over a shared [`Server`](crate::protocol::Server);
//! all session state lives in the server's registry, so any number of
//! connections may serve the same sessions.

mod handler;
mod link;
pub mod messages;
pub mod wire;

pub use handler::FrameHandler;
pub use link::{
    connect, loopback, serve, serve_connection, spawn_server, FrameChannel, FramedLink, LoopbackChannel, LoopbackLink,
    TcpChannel, TcpLink,
};
pub use messages::ErrorCode;
pub use wire::{Frame, MsgType, DEFAULT_MAX_FRAME, HEADER_LEN, MAGIC, VERSION};

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    Version(u16),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("unknown message type {msg_type} in round {round}")]
    UnknownTypeIn { msg_type: u8, session_id: [u8; 16], round: u32 },
    #[error("payload of {len} bytes exceeds the {max}-byte frame limit")]
    Oversized { len: u64, max: u64 },
    #[error("truncated: needed {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("json: {0}")]
    Json(String),
    #[error("expected a {expected:?} frame, got {got:?}")]
    UnexpectedType { expected: MsgType, got: MsgType },
    #[error("mismatched response: {0}")]
    Mismatch(String),
    #[error("server error {code}: {message}")]
    Remote { code: u16, message: String },
    #[error("connection closed")]
    Closed,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl WireError {
    /// The server's error code, when this is a remote refusal.
    pub fn remote_code(&self) -> Option<ErrorCode> {
        match self {
            WireError::Remote { code, .. } => ErrorCode::from_u16(*code),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests;
