use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use mtc_core::fixtures::{anomaly_fixtures, lwt_linearizable, lwt_not_linearizable};
use mtc_core::lwt::LwtOp;
use mtc_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mtc_last_error_message()) }.to_str().unwrap().to_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { mtc_string_free(p) };
    s
}

fn parse(text: &str) -> *mut MtcHistory {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mtc_history_parse(c(text).as_ptr(), &mut h) }, MtcStatus::Ok);
    h
}

#[test]
fn fixture_verdicts_match_core() {
    for f in anomaly_fixtures() {
        let h = parse(&f.history.to_jsonl());
        for (level, core) in [(MtcLevel::Ser, mtc_core::Level::Ser), (MtcLevel::Si, mtc_core::Level::Si)] {
            let mut v = ptr::null_mut();
            assert_eq!(unsafe { mtc_check(h, level, &mut v) }, MtcStatus::Ok);
            let expected = mtc_core::check(&f.history, core).unwrap();
            assert_eq!(unsafe { mtc_verdict_ok(v) }, expected.ok, "{}", f.slug);
            assert_eq!(take_string(unsafe { mtc_verdict_json(v) }), expected.to_json());
            unsafe { mtc_verdict_free(v) };
        }
        unsafe { mtc_history_free(h) };
    }
}

#[test]
fn screen_json() {
    let thin = anomaly_fixtures().remove(0);
    let h = parse(&thin.history.to_jsonl());
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mtc_screen_json(h, &mut out) }, MtcStatus::Ok);
    let json = take_string(out);
    assert!(json.starts_with("[{\"kind\":\"ThinAirRead\""), "{json}");
    unsafe { mtc_history_free(h) };
}

#[test]
fn error_codes() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mtc_history_parse(ptr::null(), &mut h) }, MtcStatus::ErrNull);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { mtc_history_parse(c("{").as_ptr(), ptr::null_mut()) }, MtcStatus::ErrNull);
    assert_eq!(unsafe { mtc_history_parse(c("{not json").as_ptr(), &mut h) }, MtcStatus::ErrParse);
    assert!(last_error().starts_with("line 1"));
    assert!(h.is_null());

    let bad_utf8 = [0xffu8, 0];
    assert_eq!(unsafe { mtc_history_parse(bad_utf8.as_ptr().cast(), &mut h) }, MtcStatus::ErrUtf8);

    assert_eq!(unsafe { mtc_history_load(c("/nonexistent/h.jsonl").as_ptr(), &mut h) }, MtcStatus::ErrIo);

    // Untimed history at SSER, and a general transaction.
    let h = parse(&anomaly_fixtures()[12].history.to_jsonl());
    let mut v = ptr::null_mut();
    assert_eq!(unsafe { mtc_check(h, MtcLevel::Sser, &mut v) }, MtcStatus::ErrInput);
    assert!(v.is_null());
    unsafe { mtc_history_free(h) };
    let gt = parse(r#"{"id":1,"session":"a","status":"committed","ops":[{"t":"w","k":"x","v":1}]}"#);
    assert_eq!(unsafe { mtc_check(gt, MtcLevel::Ser, &mut v) }, MtcStatus::ErrInput);
    unsafe { mtc_history_free(gt) };

    assert_eq!(unsafe { mtc_check(ptr::null(), MtcLevel::Ser, &mut v) }, MtcStatus::ErrNull);
    assert!(!unsafe { mtc_verdict_ok(ptr::null()) });
    assert!(unsafe { mtc_verdict_json(ptr::null()) }.is_null());
    assert_eq!(unsafe { mtc_history_txn_count(ptr::null()) }, 0);
    unsafe {
        mtc_history_free(ptr::null_mut());
        mtc_verdict_free(ptr::null_mut());
        mtc_lwt_free(ptr::null_mut());
        mtc_string_free(ptr::null_mut());
    }

    // A successful call clears the message.
    let h = parse(&anomaly_fixtures()[0].history.to_jsonl());
    assert_eq!(last_error(), "");
    unsafe { mtc_history_free(h) };
}

#[test]
fn load_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.jsonl");
    std::fs::write(&path, anomaly_fixtures()[13].history.to_jsonl()).unwrap();
    let mut h = ptr::null_mut();
    let p = c(path.to_str().unwrap());
    assert_eq!(unsafe { mtc_history_load(p.as_ptr(), &mut h) }, MtcStatus::Ok);
    assert_eq!(unsafe { mtc_history_txn_count(h) }, 2);
    unsafe { mtc_history_free(h) };
}

#[test]
fn lwt_round_trip() {
    for (ops, ok) in [(lwt_linearizable(), true), (lwt_not_linearizable(), false)] {
        let mut l = ptr::null_mut();
        assert_eq!(unsafe { mtc_lwt_parse(c(&LwtOp::to_jsonl(&ops)).as_ptr(), &mut l) }, MtcStatus::Ok);
        let mut v = ptr::null_mut();
        assert_eq!(unsafe { mtc_lwt_check(l, &mut v) }, MtcStatus::Ok);
        assert_eq!(unsafe { mtc_verdict_ok(v) }, ok);
        let json = take_string(unsafe { mtc_verdict_json(v) });
        assert!(json.starts_with("{\"level\":\"lin\""));
        unsafe {
            mtc_verdict_free(v);
            mtc_lwt_free(l);
        }
    }
    let mut l = ptr::null_mut();
    let bad = c(r#"{"k":"x","t":"rw","exp":1,"new":1,"start":1,"finish":2}"#);
    assert_eq!(unsafe { mtc_lwt_parse(bad.as_ptr(), &mut l) }, MtcStatus::ErrParse);
}

#[test]
fn version() {
    let v = unsafe { CStr::from_ptr(mtc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(manifest_dir().join("include/mtc.h")).unwrap();
    for name in [
        "mtc_last_error_message",
        "mtc_version",
        "mtc_history_parse",
        "mtc_history_load",
        "mtc_history_free",
        "mtc_history_txn_count",
        "mtc_check",
        "mtc_screen_json",
        "mtc_lwt_parse",
        "mtc_lwt_free",
        "mtc_lwt_check",
        "mtc_verdict_ok",
        "mtc_verdict_json",
        "mtc_verdict_free",
        "mtc_string_free",
        "typedef struct MtcHistory MtcHistory;",
        "MTC_STATUS_ERR_PANIC = 6",
        "MTC_LEVEL_SI = 2",
    ] {
        assert!(header.contains(name), "{name} missing from mtc.h");
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        panic!("no C compiler found (tried $CC, cc, gcc, clang)");
    };
    // target/<profile>/deps/abi-*  ->  target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libmtc_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(manifest_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("0 {\"level\":\"si\",\"ok\":false"));
}

fn which_cc() -> Result<String, ()> {
    let candidates = std::env::var("CC").into_iter().chain(["cc", "gcc", "clang"].map(String::from));
    for cc in candidates {
        if Command::new(&cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc);
        }
    }
    Err(())
}
