//! Frame layout (all integers little-endian):
//!
//! ```text
//! magic "SFHR" | version u16 | type u8 | session id [16] | round u32 | payload_len u64 | payload
//! ```
//!
//! A ciphertext block is `M u32 | count u32 | count × 2M u64 | γ u8`; each
//! ciphertext is its `a` then `b` polynomial, each `N` torus numerators
//! followed by `M − N` zero words.

use std::io::{Read, Write};

use super::WireError;
use crate::crypto::RlweCiphertext;
use crate::ring::{RingParams, RingPoly, Torus, TORUS_MODULUS};

pub const MAGIC: [u8; 4] = *b"SFHR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 35;
pub const DEFAULT_MAX_FRAME: u64 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    SetupReq = 1,
    SetupResp = 2,
    RoundReq = 3,
    RoundResp = 4,
    Error = 5,
}

impl TryFrom<u8> for MsgType {
    type Error = WireError;

    fn try_from(v: u8) -> Result<Self, WireError> {
        Ok(match v {
            1 => MsgType::SetupReq,
            2 => MsgType::SetupResp,
            3 => MsgType::RoundReq,
            4 => MsgType::RoundResp,
            5 => MsgType::Error,
            other => return Err(WireError::UnknownType(other)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub version: u16,
    pub msg_type: MsgType,
    pub session_id: [u8; 16],
    pub round: u32,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, session_id: [u8; 16], round: u32, payload: Vec<u8>) -> Self {
        Self { version: VERSION, msg_type, session_id, round, payload }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

fn header_bytes(f: &Frame) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4..6].copy_from_slice(&f.version.to_le_bytes());
    h[6] = f.msg_type as u8;
    h[7..23].copy_from_slice(&f.session_id);
    h[23..27].copy_from_slice(&f.round.to_le_bytes());
    h[27..35].copy_from_slice(&(f.payload.len() as u64).to_le_bytes());
    h
}

pub fn encode(f: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(f.encoded_len());
    out.extend_from_slice(&header_bytes(f));
    out.extend_from_slice(&f.payload);
    out
}

/// Parsed header fields; the type byte is kept raw so a server can answer
/// unknown types with an error that still names the session.
struct Header {
    version: u16,
    msg_type: u8,
    session_id: [u8; 16],
    round: u32,
    len: u64,
}

fn parse_header(h: &[u8; HEADER_LEN], max_frame: u64) -> Result<Header, WireError> {
    if h[..4] != MAGIC {
        return Err(WireError::BadMagic([h[0], h[1], h[2], h[3]]));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != VERSION {
        return Err(WireError::Version(version));
    }
    let len = u64::from_le_bytes(h[27..35].try_into().expect("8 bytes"));
    if len > max_frame.saturating_sub(HEADER_LEN as u64) {
        return Err(WireError::Oversized { len, max: max_frame });
    }
    Ok(Header {
        version,
        msg_type: h[6],
        session_id: h[7..23].try_into().expect("16 bytes"),
        round: u32::from_le_bytes(h[23..27].try_into().expect("4 bytes")),
        len,
    })
}

fn finish(h: Header, payload: Vec<u8>) -> Result<Frame, WireError> {
    let msg_type = MsgType::try_from(h.msg_type).map_err(|_| WireError::UnknownTypeIn {
        msg_type: h.msg_type,
        session_id: h.session_id,
        round: h.round,
    })?;
    Ok(Frame { version: h.version, msg_type, session_id: h.session_id, round: h.round, payload })
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode(bytes: &[u8], max_frame: u64) -> Result<Frame, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated { needed: HEADER_LEN, got: bytes.len() });
    }
    let h = parse_header(bytes[..HEADER_LEN].try_into().expect("header"), max_frame)?;
    let total = HEADER_LEN + h.len as usize;
    if bytes.len() < total {
        return Err(WireError::Truncated { needed: total, got: bytes.len() });
    }
    if bytes.len() > total {
        return Err(WireError::Trailing(bytes.len() - total));
    }
    let payload = bytes[HEADER_LEN..].to_vec();
    finish(h, payload)
}

/// Reads one frame from a stream. `Ok(None)` on a clean end of stream
/// before any header byte.
pub fn read_frame(r: &mut impl Read, max_frame: u64) -> Result<Option<Frame>, WireError> {
    let mut h = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut h[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(WireError::Truncated { needed: HEADER_LEN, got }),
            Ok(k) => got += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let h = parse_header(&h, max_frame)?;
    let mut payload = vec![0u8; h.len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            WireError::Truncated { needed: HEADER_LEN + h.len as usize, got: HEADER_LEN }
        }
        _ => e.into(),
    })?;
    finish(h, payload).map(Some)
}

pub fn write_frame(w: &mut impl Write, f: &Frame) -> Result<(), WireError> {
    w.write_all(&header_bytes(f))?;
    w.write_all(&f.payload)?;
    w.flush()?;
    Ok(())
}

/// Bounds-checked little-endian reader over a payload.
pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(WireError::Truncated { needed: self.pos.saturating_add(n), got: self.buf.len() })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    pub(crate) fn finish(&self) -> Result<(), WireError> {
        if self.pos != self.buf.len() {
            return Err(WireError::Trailing(self.buf.len() - self.pos));
        }
        Ok(())
    }
}

pub fn encode_block(out: &mut Vec<u8>, params: &RingParams, gamma: u8, cts: &[&RlweCiphertext]) {
    let (m, n) = (params.m(), params.n());
    out.reserve(9 + cts.len() * 16 * m);
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(cts.len() as u32).to_le_bytes());
    for ct in cts {
        for poly in [&ct.a, &ct.b] {
            for c in poly.coeffs() {
                out.extend_from_slice(&c.raw().to_le_bytes());
            }
            out.resize(out.len() + 8 * (m - n), 0);
        }
    }
    out.push(gamma);
}

/// Reads one block; rejects a ring mismatch, values at or above `2^53`,
/// and non-zero padding.
pub(crate) fn decode_block(cur: &mut Cursor<'_>, params: &RingParams) -> Result<(Vec<RlweCiphertext>, u8), WireError> {
    let (m, n) = (params.m(), params.n());
    let got_m = cur.u32()? as usize;
    if got_m != m {
        return Err(WireError::Malformed(format!("ciphertext block for M = {got_m}, session uses M = {m}")));
    }
    let count = cur.u32()? as usize;
    let need = count.checked_mul(16 * m).ok_or_else(|| WireError::Malformed("block size overflows".into()))?;
    let data = cur.take(need)?;
    let mut words = data.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8")));
    let mut cts = Vec::with_capacity(count);
    for _ in 0..count {
        let mut poly = || -> Result<RingPoly, WireError> {
            let coeffs: Vec<Torus> = words
                .by_ref()
                .take(n)
                .map(|w| {
                    if w >= TORUS_MODULUS {
                        Err(WireError::Malformed(format!("torus value {w:#x} has bits above 2^53")))
                    } else {
                        Ok(Torus::from_raw(w))
                    }
                })
                .collect::<Result<_, _>>()?;
            if words.by_ref().take(m - n).any(|w| w != 0) {
                return Err(WireError::Malformed("non-zero padding in ciphertext".into()));
            }
            RingPoly::from_coeffs(params, coeffs).map_err(|e| WireError::Malformed(e.to_string()))
        };
        let a = poly()?;
        let b = poly()?;
        cts.push(RlweCiphertext::new(a, b));
    }
    let gamma = cur.u8()?;
    Ok((cts, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng) -> Frame {
        let types = [MsgType::SetupReq, MsgType::SetupResp, MsgType::RoundReq, MsgType::RoundResp, MsgType::Error];
        let mut sid = [0u8; 16];
        rng.fill_bytes(&mut sid);
        let mut payload = vec![0u8; rng.gen_range(0..600)];
        rng.fill_bytes(&mut payload);
        Frame::new(types[rng.gen_range(0..5)], sid, rng.gen(), payload)
    }

    #[test]
    fn header_layout_is_fixed() {
        let f = Frame::new(MsgType::RoundReq, [0xab; 16], 0x0102_0304, vec![9, 8, 7]);
        let b = encode(&f);
        assert_eq!(b.len(), 38);
        assert_eq!(&b[..4], b"SFHR");
        assert_eq!(&b[4..7], &[1, 0, 3]);
        assert_eq!(&b[23..27], &[4, 3, 2, 1]);
        assert_eq!(&b[27..35], &[3, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[35..], &[9, 8, 7]);
        let empty = Frame::new(MsgType::SetupReq, [0; 16], 0, vec![]);
        assert_eq!(decode(&encode(&empty), DEFAULT_MAX_FRAME).unwrap(), empty);
    }

    #[test]
    fn fuzz_roundtrip_and_rejections() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let f = random_frame(&mut rng);
            let b = encode(&f);
            assert_eq!(decode(&b, DEFAULT_MAX_FRAME).unwrap(), f);
            let mut stream = std::io::Cursor::new(b.clone());
            assert_eq!(read_frame(&mut stream, DEFAULT_MAX_FRAME).unwrap().unwrap(), f);
            assert!(read_frame(&mut stream, DEFAULT_MAX_FRAME).unwrap().is_none());
            let cut = rng.gen_range(0..b.len());
            assert!(matches!(decode(&b[..cut], DEFAULT_MAX_FRAME), Err(WireError::Truncated { .. })));
            // flipping any single byte never panics
            let mut bad = b.clone();
            let i = rng.gen_range(0..bad.len());
            bad[i] ^= 1 << rng.gen_range(0..8);
            let _ = decode(&bad, DEFAULT_MAX_FRAME);
        }
        let mut b = encode(&Frame::new(MsgType::Error, [0; 16], 1, vec![1; 100]));
        assert!(matches!(decode(&b, 120), Err(WireError::Oversized { len: 100, max: 120 })));
        b[0] = b'X';
        assert!(matches!(decode(&b, DEFAULT_MAX_FRAME), Err(WireError::BadMagic(_))));
        let mut v = encode(&Frame::new(MsgType::Error, [0; 16], 1, vec![]));
        v[4] = 2;
        assert!(matches!(decode(&v, DEFAULT_MAX_FRAME), Err(WireError::Version(2))));
        let mut t = encode(&Frame::new(MsgType::Error, [3; 16], 7, vec![]));
        t[6] = 42;
        assert!(matches!(decode(&t, DEFAULT_MAX_FRAME), Err(WireError::UnknownTypeIn { msg_type: 42, round: 7, .. })));
        let mut extra = encode(&Frame::new(MsgType::Error, [0; 16], 1, vec![]));
        extra.push(0);
        assert!(matches!(decode(&extra, DEFAULT_MAX_FRAME), Err(WireError::Trailing(1))));
    }

    #[test]
    fn blocks_roundtrip_bit_exact() {
        let params = RingParams::new(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let count = rng.gen_range(0..4);
            let cts: Vec<RlweCiphertext> = (0..count)
                .map(|_| {
                    let mut p = || {
                        RingPoly::from_coeffs(&params, (0..18).map(|_| Torus::from_raw(rng.gen())).collect()).unwrap()
                    };
                    RlweCiphertext::new(p(), p())
                })
                .collect();
            let gamma = rng.gen_range(0..3);
            let mut buf = Vec::new();
            encode_block(&mut buf, &params, gamma, &cts.iter().collect::<Vec<_>>());
            assert_eq!(buf.len(), 9 + count * 16 * 27);
            let mut cur = Cursor::new(&buf);
            let (back, g) = decode_block(&mut cur, &params).unwrap();
            cur.finish().unwrap();
            assert_eq!((back, g), (cts.clone(), gamma));
            let mut again = Vec::new();
            encode_block(&mut again, &params, gamma, &cts.iter().collect::<Vec<_>>());
            assert_eq!(again, buf);
            if count > 0 {
                let mut pad = buf.clone();
                pad[8 + 8 * 20] = 1; // inside the first a-padding
                assert!(decode_block(&mut Cursor::new(&pad), &params).is_err());
                let mut high = buf.clone();
                high[8 + 7] = 0x80; // top byte of the first word
                assert!(decode_block(&mut Cursor::new(&high), &params).is_err());
            }
        }
        let mut buf = Vec::new();
        encode_block(&mut buf, &params, 0, &[]);
        assert!(decode_block(&mut Cursor::new(&buf), &RingParams::new(3, 2).unwrap()).is_err());
    }
}
