use std::ffi::{c_char, CStr, CString};
use std::ptr;

use hyfhe_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let need = unsafe { hyfhe_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(need > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn toy() -> *mut HyfheModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { hyfhe_model_toy(8, 1, &mut m) }, HyfheStatus::Ok);
    m
}

#[test]
fn encrypted_inference_matches_the_cleartext_forward() {
    let m = toy();
    let n = unsafe { hyfhe_model_input_len(m) };
    let input: Vec<i64> = (0..n as i64).map(|i| (i * 7) % 4).collect();
    let mut plain = [0i64; 16];
    let mut count = 0usize;
    let s = unsafe { hyfhe_model_forward(m, input.as_ptr(), n, plain.as_mut_ptr(), plain.len(), &mut count) };
    assert_eq!(s, HyfheStatus::Ok);
    assert!(count > 0);

    let mut sess = ptr::null_mut();
    assert_eq!(unsafe { hyfhe_session_local(m, 8, 2, 9, &mut sess) }, HyfheStatus::Ok);
    unsafe { hyfhe_model_free(m) };
    for _ in 0..2 {
        let mut enc = [0i64; 16];
        let (mut got, mut arg) = (0usize, usize::MAX);
        let s =
            unsafe { hyfhe_session_infer(sess, input.as_ptr(), n, enc.as_mut_ptr(), enc.len(), &mut got, &mut arg) };
        assert_eq!(s, HyfheStatus::Ok, "{}", last_error());
        assert_eq!(&enc[..got], &plain[..count]);
        let best = (0..count).max_by_key(|&i| (plain[i], std::cmp::Reverse(i))).unwrap();
        assert_eq!(plain[arg], plain[best]);
    }
    // wrong length and a too-small buffer
    let s = unsafe {
        hyfhe_session_infer(sess, input.as_ptr(), n - 1, ptr::null_mut(), 0, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(s, HyfheStatus::InvalidArgument);
    assert!(last_error().contains("model takes"));
    let mut need = 0usize;
    let s = unsafe { hyfhe_session_infer(sess, input.as_ptr(), n, ptr::null_mut(), 0, &mut need, ptr::null_mut()) };
    assert_eq!(s, HyfheStatus::BufferTooSmall);
    assert_eq!(need, count);
    unsafe { hyfhe_session_free(sess) };
}

#[test]
fn errors_are_reported_per_call() {
    let mut m = ptr::null_mut();
    let path = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { hyfhe_model_load(path.as_ptr(), &mut m) }, HyfheStatus::Io);
    assert!(m.is_null());
    assert_eq!(unsafe { hyfhe_model_load(ptr::null(), &mut m) }, HyfheStatus::NullPointer);
    assert_eq!(last_error(), "path is null");
    assert_eq!(unsafe { hyfhe_model_toy(10, 1, &mut m) }, HyfheStatus::Model);
    let mut sess = ptr::null_mut();
    let model = toy();
    assert_eq!(unsafe { hyfhe_session_local(model, 8, 3, 0, &mut sess) }, HyfheStatus::InvalidArgument);
    unsafe { hyfhe_model_free(model) };
    assert_eq!(unsafe { hyfhe_model_input_len(ptr::null()) }, 0);
    unsafe { hyfhe_model_free(ptr::null_mut()) };
    unsafe { hyfhe_session_free(ptr::null_mut()) };
    // truncated copy still terminates
    let mut small = [1 as c_char; 4];
    let need = unsafe { hyfhe_last_error(small.as_mut_ptr(), small.len()) };
    assert!(need > 4);
    assert_eq!(small[3], 0);
}

#[test]
fn dp_and_permutations() {
    let (mut eps, mut dt) = (0.0, 0.0);
    assert_eq!(unsafe { hyfhe_dp_amplify(1.0, 1e-5, 1_000_000, 1e-6, &mut eps, &mut dt) }, HyfheStatus::Ok);
    // same closed form evaluated here
    let (n, e0) = (1e6f64, 1f64.exp());
    let want = (1.0 + (e0 - 1.0) / (e0 + 1.0) * (8.0 * (e0 * (4e6f64).ln()).sqrt() / n.sqrt() + 8.0 * e0 / n)).ln();
    assert!((eps - want).abs() < 1e-12, "{eps} vs {want}");
    assert!((dt - (1e-6 + (want.exp() + 1.0) * (1.0 + (-1f64).exp() / 2.0) * n * 1e-5)).abs() < 1e-9);
    assert_eq!(unsafe { hyfhe_dp_amplify(9.0, 0.0, 1000, 1e-6, &mut eps, &mut dt) }, HyfheStatus::DpInapplicable);

    let master = [7u8; 32];
    let sid = [3u8; 16];
    let mut a = [0u32; 64];
    let mut b = [0u32; 64];
    assert_eq!(
        unsafe { hyfhe_derive_permutation(master.as_ptr(), sid.as_ptr(), 1, 64, a.as_mut_ptr()) },
        HyfheStatus::Ok
    );
    assert_eq!(
        unsafe { hyfhe_derive_permutation(master.as_ptr(), sid.as_ptr(), 1, 64, b.as_mut_ptr()) },
        HyfheStatus::Ok
    );
    assert_eq!(a, b);
    let mut sorted = a;
    sorted.sort_unstable();
    assert!(sorted.iter().enumerate().all(|(i, &v)| v == i as u32));
    assert_eq!(
        unsafe { hyfhe_derive_permutation(master.as_ptr(), sid.as_ptr(), 2, 64, b.as_mut_ptr()) },
        HyfheStatus::Ok
    );
    assert_ne!(a, b);
    assert_eq!(
        unsafe { hyfhe_derive_permutation(ptr::null(), sid.as_ptr(), 1, 64, b.as_mut_ptr()) },
        HyfheStatus::NullPointer
    );
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(hyfhe_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
