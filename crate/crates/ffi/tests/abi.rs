use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use isac_cr_ffi::*;

fn params() -> IsacParams {
    let mut p = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { isac_params_default(p.as_mut_ptr()) }, IsacStatus::Ok);
    unsafe { p.assume_init() }
}

fn last_error() -> String {
    let e = isac_last_error();
    assert!(!e.is_null());
    unsafe { CStr::from_ptr(e) }.to_string_lossy().into_owned()
}

fn channel(p: &IsacParams) -> *mut IsacChannel {
    let mut ch = ptr::null_mut();
    let los = 0.1 * std::f64::consts::PI;
    assert_eq!(unsafe { isac_channel_rician(p, los, los, &mut ch) }, IsacStatus::Ok);
    ch
}

#[test]
fn trace_solve_round_trip() {
    let p = params();
    assert_eq!(p.m_tx, 8);
    let ch = channel(&p);
    assert_eq!(unsafe { isac_channel_rank(ch) }, 6);

    let mut min = 0.0;
    assert_eq!(unsafe { isac_crb_min(&p, IsacScenario::Trace as i32, &mut min) }, IsacStatus::Ok);
    // equal power on every antenna
    let m = p.m_tx as f64;
    let want = p.noise_sense * p.n_rx_sense as f64 * m * m / (p.cpi_len as f64 * p.power);
    assert!((min - want).abs() < 1e-12 * want);

    let gamma = 2.0 * min;
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { isac_solve(&p, ch, IsacScenario::Trace as i32, gamma, &mut out) }, IsacStatus::Ok);
    let rate = unsafe { isac_outcome_rate(out) };
    let crb = unsafe { isac_outcome_crb(out, IsacScenario::Trace as i32) };
    assert!(rate > 0.0 && rate.is_finite());
    assert!(crb <= gamma * (1.0 + 1e-6));

    let n = unsafe { isac_outcome_dim(out) };
    assert_eq!(n, 8);
    let mut buf = vec![0.0; 2 * n * n];
    assert_eq!(unsafe { isac_outcome_covariance(out, buf.as_mut_ptr(), buf.len() - 1) }, IsacStatus::BufferTooSmall);
    assert_eq!(unsafe { isac_outcome_covariance(out, buf.as_mut_ptr(), buf.len()) }, IsacStatus::Ok);
    let trace: f64 = (0..n).map(|i| buf[2 * (i * n + i)]).sum();
    assert!(trace <= p.power * (1.0 + 1e-9) && trace > 0.99 * p.power);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (2 * (i * n + j), 2 * (j * n + i));
            assert!((buf[a] - buf[b]).abs() < 1e-9 && (buf[a + 1] + buf[b + 1]).abs() < 1e-9);
        }
    }

    let json = unsafe { isac_outcome_to_json(out) };
    assert!(!json.is_null());
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { isac_string_free(json) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((v["rate"].as_f64().unwrap() - rate).abs() < 1e-12 * rate);
    assert_eq!(v["q"].as_array().unwrap().len(), 2 * n * n);

    unsafe {
        isac_outcome_free(out);
        isac_channel_free(ch);
    }
}

#[test]
fn point_solve_from_an_explicit_matrix() {
    let mut p = params();
    p.m_tx = 2;
    p.n_rx_comm = 2;
    p.n_rx_sense = 2;
    p.power = 10.0;
    // both rows [1, i]
    let data = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
    let mut ch = ptr::null_mut();
    assert_eq!(unsafe { isac_channel_from_matrix(2, 2, data.as_ptr(), &mut ch) }, IsacStatus::Ok);
    assert_eq!(unsafe { isac_channel_rank(ch) }, 1);

    let mut min = 0.0;
    assert_eq!(unsafe { isac_crb_min(&p, IsacScenario::Point as i32, &mut min) }, IsacStatus::Ok);
    let mut out = ptr::null_mut();
    let status = unsafe { isac_solve(&p, ch, IsacScenario::Point as i32, 3.0 * min, &mut out) };
    assert!(matches!(status, IsacStatus::Ok | IsacStatus::MaxIterations), "{status:?} {}", last_error());
    // a rank-one channel with squared singular value 4 caps the rate at log2(1 + 4P)
    let rate = unsafe { isac_outcome_rate(out) };
    assert!(rate > 0.0 && rate <= (1.0 + 4.0 * p.power).log2() + 1e-9);
    assert!(unsafe { isac_outcome_crb(out, IsacScenario::Point as i32) } <= 3.0 * min * (1.0 + 1e-6));
    unsafe {
        isac_outcome_free(out);
        isac_channel_free(ch);
    }
}

#[test]
fn errors_set_status_and_message() {
    let p = params();
    let ch = channel(&p);
    let mut out = ptr::dangling_mut();

    assert_eq!(unsafe { isac_solve(&p, ch, 9, 1.0, &mut out) }, IsacStatus::InvalidParams);
    assert!(out.is_null());
    assert!(last_error().contains("scenario"));

    let mut min = 0.0;
    unsafe { isac_crb_min(&p, IsacScenario::MaxEig as i32, &mut min) };
    assert_eq!(unsafe { isac_solve(&p, ch, IsacScenario::MaxEig as i32, 0.5 * min, &mut out) }, IsacStatus::Infeasible);
    assert!(out.is_null());
    assert!(last_error().contains("below minimum"));

    let mut bad = p;
    bad.m_tx = 1;
    assert_eq!(unsafe { isac_solve(&bad, ch, 2, 1.0, &mut out) }, IsacStatus::InvalidParams);
    assert!(last_error().contains("m_tx"));

    let mut small = p;
    small.m_tx = 4;
    assert_eq!(unsafe { isac_solve(&small, ch, 2, 1.0, &mut out) }, IsacStatus::InvalidParams);

    assert_eq!(unsafe { isac_solve(ptr::null(), ch, 2, 1.0, &mut out) }, IsacStatus::NullPointer);
    assert_eq!(unsafe { isac_params_default(ptr::null_mut()) }, IsacStatus::NullPointer);
    assert!(unsafe { isac_outcome_rate(ptr::null()) }.is_nan());
    assert!(unsafe { isac_outcome_to_json(ptr::null()) }.is_null());
    unsafe {
        isac_outcome_free(ptr::null_mut());
        isac_channel_free(ch);
    }
}

#[test]
fn header_declares_the_exported_api() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/isac_cr.h")).unwrap();
    for name in [
        "isac_params_default",
        "isac_channel_rician",
        "isac_channel_from_matrix",
        "isac_solve",
        "isac_outcome_covariance",
        "isac_outcome_to_json",
        "isac_string_free",
        "isac_last_error",
        "ISAC_STATUS_INFEASIBLE",
        "ISAC_SCENARIO_LOG_DET",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    // compile-check the header when a C compiler is around
    if let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", &format!("{dir}/include/isac_cr.h")])
        .status()
    {
        assert!(status.success());
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let dir = env!("CARGO_MANIFEST_DIR");
    // test binaries live in <target>/<profile>/deps, the library one level up
    let exe = std::env::current_exe().unwrap();
    let lib_dir: PathBuf = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    if !lib_dir.join("libisac_cr_ffi.a").exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(format!("{dir}/tests/c/smoke.c"))
        .arg(format!("-I{dir}/include"))
        .arg(lib_dir.join("libisac_cr_ffi.a"))
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&bin).output().unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let rate: f64 = String::from_utf8_lossy(&run.stdout).trim().parse().unwrap();
    assert!(rate > 0.0);
}
