use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::thread;

use super::handler::FrameHandler;
use super::messages::*;
use super::wire::{decode, encode, read_frame, write_frame, Frame, MsgType, DEFAULT_MAX_FRAME};
use super::WireError;
use crate::params::FheParams;
use crate::protocol::{RoundRequest, RoundResponse, ServerLink, SetupRequest, SetupResponse, Traffic};

/// One request frame out, one response frame back.
pub trait FrameChannel {
    fn call(&mut self, req: &Frame) -> Result<Frame, WireError>;
}

/// Speaks the protocol over any [`FrameChannel`]; traffic is the sum of
/// encoded frame lengths in each direction.
pub struct FramedLink<C> {
    channel: C,
    params: Option<FheParams>,
    traffic: Traffic,
}

impl<C: FrameChannel> FramedLink<C> {
    pub fn new(channel: C) -> Self {
        Self { channel, params: None, traffic: Traffic::default() }
    }

    pub fn channel_mut(&mut self) -> &mut C {
        &mut self.channel
    }

    /// Sends a raw frame, counting its bytes. Tests use this to replay or
    /// forge frames.
    pub fn exchange(&mut self, req: &Frame) -> Result<Frame, WireError> {
        self.traffic.up += req.encoded_len() as u64;
        let resp = self.channel.call(req)?;
        self.traffic.down += resp.encoded_len() as u64;
        Ok(resp)
    }

    fn expect(&self, resp: Frame, want: MsgType, req: &Frame) -> Result<Frame, WireError> {
        if resp.msg_type == MsgType::Error {
            let (code, message) = decode_error(&resp.payload)?;
            return Err(WireError::Remote { code, message });
        }
        if resp.msg_type != want {
            return Err(WireError::UnexpectedType { expected: want, got: resp.msg_type });
        }
        if want == MsgType::RoundResp && (resp.session_id != req.session_id || resp.round != req.round) {
            return Err(WireError::Mismatch(format!(
                "response for round {} of another exchange (sent round {})",
                resp.round, req.round
            )));
        }
        Ok(resp)
    }
}

impl<C: FrameChannel> ServerLink for FramedLink<C> {
    fn setup(&mut self, req: &SetupRequest) -> crate::Result<SetupResponse> {
        let f = encode_setup_request(req)?;
        let resp = self.exchange(&f)?;
        let resp = self.expect(resp, MsgType::SetupResp, &f)?;
        let out = decode_setup_response(&resp)?;
        self.params = Some(req.params);
        Ok(out)
    }

    fn round(&mut self, req: &RoundRequest) -> crate::Result<RoundResponse> {
        let params = self.params.ok_or(crate::protocol::ProtocolError::NotSetUp)?;
        let f = encode_round_request(req, &params)?;
        let resp = self.exchange(&f)?;
        let resp = self.expect(resp, MsgType::RoundResp, &f)?;
        Ok(decode_round_response(&resp, &params)?)
    }

    fn traffic(&self) -> Traffic {
        self.traffic
    }
}

type Job = (Vec<u8>, mpsc::Sender<Vec<u8>>);

/// In-process channel: frames are encoded to bytes, handed to a worker
/// thread that owns the handler, and decoded again on return.
pub struct LoopbackChannel {
    tx: mpsc::Sender<Job>,
    max_frame: u64,
}

impl LoopbackChannel {
    pub fn spawn(handler: FrameHandler) -> Self {
        let max_frame = handler.max_frame();
        let (tx, rx) = mpsc::channel::<Job>();
        thread::spawn(move || {
            for (bytes, reply) in rx {
                let _ = reply.send(handler.handle_bytes(&bytes));
            }
        });
        Self { tx, max_frame }
    }

    /// Sends raw bytes; lets tests inject frames no encoder would produce.
    pub fn call_bytes(&mut self, bytes: Vec<u8>) -> Result<Vec<u8>, WireError> {
        let (reply_tx, reply_rx) = mpsc::channel();
        self.tx.send((bytes, reply_tx)).map_err(|_| WireError::Closed)?;
        reply_rx.recv().map_err(|_| WireError::Closed)
    }
}

impl FrameChannel for LoopbackChannel {
    fn call(&mut self, req: &Frame) -> Result<Frame, WireError> {
        let bytes = self.call_bytes(encode(req))?;
        decode(&bytes, self.max_frame)
    }
}

pub type LoopbackLink = FramedLink<LoopbackChannel>;

pub fn loopback(handler: FrameHandler) -> LoopbackLink {
    FramedLink::new(LoopbackChannel::spawn(handler))
}

pub struct TcpChannel {
    stream: TcpStream,
    max_frame: u64,
}

impl TcpChannel {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, WireError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream, max_frame: DEFAULT_MAX_FRAME })
    }

    pub fn with_max_frame(mut self, max_frame: u64) -> Self {
        self.max_frame = max_frame;
        self
    }

    pub fn stream_mut(&mut self) -> &mut TcpStream {
        &mut self.stream
    }
}

impl FrameChannel for TcpChannel {
    fn call(&mut self, req: &Frame) -> Result<Frame, WireError> {
        write_frame(&mut self.stream, req)?;
        read_frame(&mut self.stream, self.max_frame)?.ok_or(WireError::Closed)
    }
}

pub type TcpLink = FramedLink<TcpChannel>;

pub fn connect(addr: impl ToSocketAddrs) -> Result<TcpLink, WireError> {
    Ok(FramedLink::new(TcpChannel::connect(addr)?))
}

/// Serves one connection until the peer closes it. A frame that cannot be
/// delimited (bad magic, oversized, truncated) gets an `ERROR` reply and
/// ends the connection, since the stream position is then unknown.
pub fn serve_connection(handler: &FrameHandler, mut stream: TcpStream) -> Result<(), WireError> {
    stream.set_nodelay(true)?;
    loop {
        match read_frame(&mut stream, handler.max_frame()) {
            Ok(None) => return Ok(()),
            Ok(Some(f)) => write_frame(&mut stream, &handler.handle(&f))?,
            Err(WireError::Io(e)) => return Err(e.into()),
            Err(e @ WireError::UnknownTypeIn { .. }) => write_frame(&mut stream, &handler.handle_decoded(Err(e)))?,
            Err(e) => {
                let _ = write_frame(&mut stream, &handler.handle_decoded(Err(e)));
                return Ok(());
            }
        }
    }
}

/// Accepts connections forever, one thread each, all sharing the server.
pub fn serve(listener: TcpListener, handler: FrameHandler) -> Result<(), WireError> {
    for stream in listener.incoming() {
        let stream = stream?;
        let h = handler.clone();
        thread::spawn(move || {
            if let Err(e) = serve_connection(&h, stream) {
                eprintln!("connection ended: {e}");
            }
        });
    }
    Ok(())
}

/// Binds and serves on a background thread; returns the bound address.
pub fn spawn_server(addr: impl ToSocketAddrs, handler: FrameHandler) -> Result<SocketAddr, WireError> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    thread::spawn(move || serve(listener, handler));
    Ok(local)
}
