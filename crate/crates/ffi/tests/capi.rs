use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sdhawkes_ffi::*;

const MODEL: &str = r#"{"event_labels":["e"],"state_labels":["0","1"],"nu":[1.0],
"alpha":[[[0.0],[1.0]]],"beta":[[[4.0],[4.0]]],"phi":[[[0.5,0.5],[0.5,0.5]]]}"#;

fn load(json: &str) -> (SdhStatus, *mut SdhModel) {
    let c = CString::new(json).unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { sdh_model_from_json(c.as_ptr(), &mut m) };
    (st, m)
}

fn last_error() -> String {
    let p = sdh_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn model_round_trip_and_dims() {
    let (st, m) = load(MODEL);
    assert_eq!(st, SdhStatus::Ok);
    let (mut de, mut dx) = (0, 0);
    assert_eq!(unsafe { sdh_model_dims(m, &mut de, &mut dx) }, SdhStatus::Ok);
    assert_eq!((de, dx), (1, 2));
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { sdh_model_to_json(m, &mut s) }, SdhStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { sdh_string_free(s) };
    let (st, m2) = load(&text);
    assert_eq!(st, SdhStatus::Ok);
    let mut rho = 0.0;
    assert_eq!(unsafe { sdh_spectral_radius(m2, 1, &mut rho) }, SdhStatus::Ok);
    assert_eq!(rho, 0.25);
    unsafe {
        sdh_model_free(m);
        sdh_model_free(m2);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let (st, m) = load("{not json");
    assert_eq!(st, SdhStatus::Parse);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    let bad_phi = MODEL.replace("[0.5,0.5],[0.5,0.5]", "[0.5,0.6],[0.5,0.5]");
    let (st, _) = load(&bad_phi);
    assert_eq!(st, SdhStatus::InvalidModel);
    assert!(last_error().contains("row sum"), "{}", last_error());

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sdh_model_from_json(ptr::null(), &mut out) }, SdhStatus::NullPointer);
    let mut rho = 0.0;
    assert_eq!(unsafe { sdh_spectral_radius(ptr::null(), 0, &mut rho) }, SdhStatus::NullPointer);

    // a successful call clears the message
    let (st, m) = load(MODEL);
    assert_eq!(st, SdhStatus::Ok);
    assert!(sdh_last_error_message().is_null());
    unsafe { sdh_model_free(m) };
}

#[test]
fn simulate_and_evaluate() {
    let (_, m) = load(MODEL);
    let mut seq = ptr::null_mut();
    assert_eq!(unsafe { sdh_simulate(m, 50.0, 3, 0, &mut seq) }, SdhStatus::Ok);
    let n = unsafe { sdh_sequence_len(seq) };
    assert!(n > 0);
    let (mut t, mut e, mut x) = (0.0, 9, 9);
    assert_eq!(unsafe { sdh_sequence_get(seq, 0, &mut t, &mut e, &mut x) }, SdhStatus::Ok);
    assert!(t > 0.0 && e == 0 && x < 2);
    assert_eq!(unsafe { sdh_sequence_get(seq, n, &mut t, &mut e, &mut x) }, SdhStatus::InvalidArgument);

    let mut ll = SdhLogLikelihood::default();
    assert_eq!(unsafe { sdh_log_likelihood(m, seq, &mut ll) }, SdhStatus::Ok);
    assert!((ll.total - (ll.transition_term + ll.l_plus - ll.l_minus)).abs() < 1e-9);
    assert!((ll.transition_term - n as f64 * 0.5f64.ln()).abs() < 1e-9);

    let mut lam = [0.0];
    assert_eq!(unsafe { sdh_intensity_at(m, seq, 25.0, lam.as_mut_ptr(), 1) }, SdhStatus::Ok);
    assert!(lam[0] >= 1.0);
    let mut two = [0.0; 2];
    assert_eq!(unsafe { sdh_intensity_at(m, seq, 25.0, two.as_mut_ptr(), 2) }, SdhStatus::InvalidArgument);

    let mut fitted = ptr::null_mut();
    let mut value = 0.0;
    assert_eq!(unsafe { sdh_fit(seq, 1, 2, 1, 5, &mut fitted, &mut value) }, SdhStatus::Ok);
    let mut at_fit = SdhLogLikelihood::default();
    unsafe { sdh_log_likelihood(fitted, seq, &mut at_fit) };
    assert!((at_fit.total - value).abs() < 1e-9);
    assert!(value >= ll.total - 1e-9);
    unsafe {
        sdh_model_free(fitted);
        sdh_sequence_free(seq);
        sdh_model_free(m);
    }
}

#[test]
fn sequence_from_arrays() {
    let times = [0.5, 1.0, 2.0];
    let events = [0usize, 0, 0];
    let states = [1usize, 0, 1];
    let mut seq = ptr::null_mut();
    let st = unsafe { sdh_sequence_new(times.as_ptr(), events.as_ptr(), states.as_ptr(), 3, 0, 0.0, 3.0, &mut seq) };
    assert_eq!(st, SdhStatus::Ok);
    assert_eq!(unsafe { sdh_sequence_len(seq) }, 3);
    unsafe { sdh_sequence_free(seq) };

    let unsorted = [1.0, 0.5];
    let st = unsafe { sdh_sequence_new(unsorted.as_ptr(), events.as_ptr(), states.as_ptr(), 2, 0, 0.0, 3.0, &mut seq) };
    assert_eq!(st, SdhStatus::InvalidArgument);

    let st = unsafe { sdh_sequence_new(ptr::null(), ptr::null(), ptr::null(), 0, 0, 0.0, 1.0, &mut seq) };
    assert_eq!(st, SdhStatus::Ok);
    assert_eq!(unsafe { sdh_sequence_len(seq) }, 0);
    unsafe { sdh_sequence_free(seq) };
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(sdh_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/sdhawkes.h");
    std::fs::read_to_string(path).expect("header is generated by the build script")
}

#[test]
fn header_declares_the_api() {
    let h = header();
    for name in [
        "typedef struct SdhModel SdhModel;",
        "typedef struct SdhSequence SdhSequence;",
        "SDH_STATUS_OK = 0",
        "SDH_STATUS_PANIC = 8",
        "sdh_model_from_json(",
        "sdh_sequence_new(",
        "sdh_log_likelihood(",
        "sdh_intensity_at(",
        "sdh_fit(",
        "sdh_last_error_message(",
    ] {
        assert!(h.contains(name), "header lacks `{name}`");
    }
}

/// Compiles and runs a C program against the header and the static library,
/// when a C compiler and the library are present.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libsdhawkes_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or {} missing", lib.display());
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "sdhawkes.h"
int main(void) {
    const char *json = "{\"event_labels\":[\"a\",\"b\"],\"state_labels\":[\"x\"],\"nu\":[1,1],"
        "\"alpha\":[[[0.5,0.2]],[[0.2,0.5]]],\"beta\":[[[1,1]],[[1,1]]],\"phi\":[[[1]],[[1]]]}";
    SdhModel *m = NULL;
    if (sdh_model_from_json(json, &m) != SDH_STATUS_OK) { puts(sdh_last_error_message()); return 1; }
    double rho = 0;
    if (sdh_spectral_radius(m, 0, &rho) != SDH_STATUS_OK) return 2;
    printf("%.12f\n", rho);
    sdh_model_free(m);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.700000000000");
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sdhawkes-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
