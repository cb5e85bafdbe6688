//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "hyfhe.h"

#define CHECK(x) do { if ((x) != HYFHE_STATUS_OK) { char e[256]; hyfhe_last_error(e, sizeof e); fprintf(stderr, "%s: %s\n", #x, e); return 1; } } while (0)

int main(void) {
    HyfheModel *m = NULL;
    CHECK(hyfhe_model_toy(8, 1, &m));
    size_t n = hyfhe_model_input_len(m);
    int64_t x[1024];
    for (size_t i = 0; i < n; i++) x[i] = (int64_t)(i % 3);
    int64_t plain[16], enc[16];
    size_t np = 0, ne = 0, arg = 0;
    CHECK(hyfhe_model_forward(m, x, n, plain, 16, &np));
    HyfheSession *s = NULL;
    CHECK(hyfhe_session_local(m, 8, 1, 5, &s));
    CHECK(hyfhe_session_infer(s, x, n, enc, 16, &ne, &arg));
    if (np != ne || memcmp(plain, enc, np * sizeof(int64_t)) != 0) { fprintf(stderr, "mismatch\n"); return 2; }
    if (hyfhe_model_load(NULL, &m) != HYFHE_STATUS_NULL_POINTER) return 3;
    hyfhe_session_free(s);
    hyfhe_model_free(m);
    printf("ok %zu\n", ne);
    return 0;
}
"#;

fn artifacts_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = artifacts_dir().join("libhyfhe_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
