//! C ABI over `hyfhe-core`.
//!
//! Every function returns a [`HyfheStatus`]; on failure the message is kept
//! per thread and read with [`hyfhe_last_error`]. Models and sessions are
//! opaque heap handles released with their `_free` function. Output
//! arrays are caller-allocated: pass the capacity, get the count written
//! (or, with `HYFHE_BUFFER_TOO_SMALL`, the count required).

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use hyfhe_core::confidentiality::{derive_permutation, dp_amplify, DpError, DpParams, ShuffleSeed};
use hyfhe_core::model::toy::toy_model;
use hyfhe_core::model::{load_model, ModelError, QuantModel};
use hyfhe_core::params::FheParams;
use hyfhe_core::protocol::{run_inference, ClientSession, Server, ServerConfig, ServerLink};
use hyfhe_core::transport::{connect, loopback, FrameHandler};
use hyfhe_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HyfheStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Model = 4,
    Crypto = 5,
    Protocol = 6,
    Wire = 7,
    /// The amplification bound's precondition does not hold.
    DpInapplicable = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut v: Vec<u8> = msg.bytes().filter(|&b| b != 0).collect();
        v.push(0);
        *e.borrow_mut() = v;
    });
}

fn status_of(err: &Error) -> HyfheStatus {
    match err {
        Error::Io(_) | Error::Model(ModelError::Io(_)) => HyfheStatus::Io,
        Error::Model(_) => HyfheStatus::Model,
        Error::Ring(_) | Error::Crypto(_) | Error::Pack(_) => HyfheStatus::Crypto,
        Error::Protocol(_) => HyfheStatus::Protocol,
        Error::Wire(_) => HyfheStatus::Wire,
        Error::Dp(DpError::Inapplicable { .. }) => HyfheStatus::DpInapplicable,
        Error::Dp(_) | Error::Config(_) => HyfheStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (HyfheStatus, String)>) -> HyfheStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HyfheStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            HyfheStatus::Panic
        }
    }
}

trait Fail<T> {
    fn fail(self) -> Result<T, (HyfheStatus, String)>;
}

impl<T, E: Into<Error>> Fail<T> for Result<T, E> {
    fn fail(self) -> Result<T, (HyfheStatus, String)> {
        self.map_err(|e| {
            let e: Error = e.into();
            (status_of(&e), e.to_string())
        })
    }
}

fn null(what: &str) -> (HyfheStatus, String) {
    (HyfheStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (HyfheStatus, String) {
    (HyfheStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (HyfheStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (HyfheStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `data` out; reports the required count through `written`.
unsafe fn write_out<T: Copy>(
    data: &[T],
    out: *mut T,
    cap: usize,
    written: *mut usize,
) -> Result<(), (HyfheStatus, String)> {
    if !written.is_null() {
        *written = data.len();
    }
    if data.len() > cap {
        return Err((HyfheStatus::BufferTooSmall, format!("need room for {} values, have {cap}", data.len())));
    }
    if !data.is_empty() {
        if out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
    }
    Ok(())
}

/// A loaded quantized model.
pub struct HyfheModel {
    model: QuantModel,
}

/// A client bound to a server (in process or remote). Each inference
/// opens a fresh protocol session with newly generated keys.
pub struct HyfheSession {
    link: Box<dyn ServerLink>,
    params: FheParams,
    seed: u64,
    count: u64,
    input_len: Option<usize>,
}

/// Copies the calling thread's last error message (NUL-terminated) into
/// `buf`. Returns the buffer size needed, including the terminator; `0`
/// when no error has been recorded.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 && !e.is_empty() {
            let n = e.len().min(cap);
            ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, n);
            *buf.add(n - 1) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hyfhe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a model from its JSON manifest (the weights blob is read from
/// next to it).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_model_load(path: *const c_char, out: *mut *mut HyfheModel) -> HyfheStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = load_model(str_arg(path, "path")?).fail()?;
        *out = Box::into_raw(Box::new(HyfheModel { model }));
        Ok(())
    })
}

/// Builds the built-in toy CNN for accumulator width `b` (8, 12 or 16).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_model_toy(b: u32, seed: u64, out: *mut *mut HyfheModel) -> HyfheStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = toy_model(b, seed).fail()?;
        *out = Box::into_raw(Box::new(HyfheModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_model_free(model: *mut HyfheModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input length, or `0` for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_model_input_len(model: *const HyfheModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.input_len())
}

/// Cleartext integer forward pass (the oracle the encrypted path matches).
///
/// # Safety
/// `model` must be live; `input` valid for `len` values; `scores` valid
/// for `cap` values; `written` null or writable.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_model_forward(
    model: *const HyfheModel,
    input: *const i64,
    len: usize,
    scores: *mut i64,
    cap: usize,
    written: *mut usize,
) -> HyfheStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let x = slice_arg(input, len, "input")?;
        let f = m.model.forward(x).fail()?;
        write_out(&f.scores, scores, cap, written)
    })
}

fn session_params(b: u32, gamma: u32) -> Result<FheParams, (HyfheStatus, String)> {
    FheParams::preset(b, gamma).fail()
}

/// Starts an in-process server for `model` (the handle may be freed
/// afterwards) and a client using the preset for `(b, gamma)`.
///
/// # Safety
/// `model` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_session_local(
    model: *const HyfheModel,
    b: u32,
    gamma: u32,
    seed: u64,
    out: *mut *mut HyfheSession,
) -> HyfheStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let params = session_params(b, gamma)?;
        let server = Server::new(m.model.clone(), ServerConfig { seed: Some(seed), ..Default::default() }).fail()?;
        let link = loopback(FrameHandler::new(Arc::new(server)));
        let s = HyfheSession { link: Box::new(link), params, seed, count: 0, input_len: Some(m.model.input_len()) };
        *out = Box::into_raw(Box::new(s));
        Ok(())
    })
}

/// Connects to a remote server at `addr` (`host:port`).
///
/// # Safety
/// `addr` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_session_connect(
    addr: *const c_char,
    b: u32,
    gamma: u32,
    seed: u64,
    out: *mut *mut HyfheSession,
) -> HyfheStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = session_params(b, gamma)?;
        let link = connect(str_arg(addr, "addr")?).fail()?;
        *out = Box::into_raw(Box::new(HyfheSession { link: Box::new(link), params, seed, count: 0, input_len: None }));
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_session_free(session: *mut HyfheSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// One encrypted inference. Writes the final integer scores and, when
/// `argmax` is non-null, the predicted class.
///
/// # Safety
/// `session` must be live and not used concurrently; pointer arguments as
/// for [`hyfhe_model_forward`].
#[no_mangle]
pub unsafe extern "C" fn hyfhe_session_infer(
    session: *mut HyfheSession,
    input: *const i64,
    len: usize,
    scores: *mut i64,
    cap: usize,
    written: *mut usize,
    argmax: *mut usize,
) -> HyfheStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        let x = slice_arg(input, len, "input")?;
        if let Some(n) = s.input_len {
            if n != len {
                return Err(invalid(format!("input has {len} values, model takes {n}")));
            }
        }
        s.count += 1;
        let mut client = ClientSession::new(s.params, s.seed.wrapping_add(s.count)).fail()?;
        let report = run_inference(s.link.as_mut(), &mut client, x).fail()?;
        if !argmax.is_null() {
            *argmax = report.result.argmax;
        }
        write_out(&report.result.scores, scores, cap, written)
    })
}

/// Shuffle-model amplification: `(eps0, delta0)`-local reports from `n`
/// users give `(eps, delta_total)` central privacy at target `delta`.
///
/// # Safety
/// `eps` and `delta_total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_dp_amplify(
    eps0: f64,
    delta0: f64,
    n: u64,
    delta: f64,
    eps: *mut f64,
    delta_total: *mut f64,
) -> HyfheStatus {
    guard(|| {
        if eps.is_null() || delta_total.is_null() {
            return Err(null("output"));
        }
        let bound = dp_amplify(&DpParams { eps0, delta0, n, delta }).fail()?;
        *eps = bound.eps;
        *delta_total = bound.delta_total;
        Ok(())
    })
}

/// The permutation images `σ(0..size)` for a round, from a 32-byte master
/// secret and a 16-byte session id.
///
/// # Safety
/// `master` must point to 32 bytes, `session_id` to 16, `out` to `size`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn hyfhe_derive_permutation(
    master: *const u8,
    session_id: *const u8,
    round: u32,
    size: usize,
    out: *mut u32,
) -> HyfheStatus {
    guard(|| {
        let m: [u8; 32] = slice_arg(master, 32, "master")?.try_into().expect("32 bytes");
        let sid: [u8; 16] = slice_arg(session_id, 16, "session_id")?.try_into().expect("16 bytes");
        if size > u32::MAX as usize {
            return Err(invalid("size exceeds u32 range"));
        }
        let p = derive_permutation(&ShuffleSeed::from_bytes(m), &sid, round, size);
        let images: Vec<u32> = p.images().iter().map(|&i| i as u32).collect();
        write_out(&images, out, size, ptr::null_mut())
    })
}
