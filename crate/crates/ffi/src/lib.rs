//! C ABI for the isolation checkers.
//!
//! Every fallible function returns an [`MtcStatus`] and writes its result
//! through an out-pointer. On failure a description is available from
//! [`mtc_last_error_message`] on the same thread. Handles are opaque and must
//! be released with their matching `*_free` function; strings returned by the
//! library are released with [`mtc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mtc_core::check::{check, CheckError, Level, Verdict};
use mtc_core::history::History;
use mtc_core::lwt::{verify_all, LwtOp};
use mtc_core::screen;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    ErrNull = 1,
    /// A string argument was not valid UTF-8.
    ErrUtf8 = 2,
    /// The input text could not be parsed.
    ErrParse = 3,
    /// The input parsed but cannot be checked at the requested level.
    ErrInput = 4,
    /// A file could not be read.
    ErrIo = 5,
    /// The library panicked; the handle arguments are still valid.
    ErrPanic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtcLevel {
    Sser = 0,
    Ser = 1,
    Si = 2,
}

impl From<MtcLevel> for Level {
    fn from(l: MtcLevel) -> Self {
        match l {
            MtcLevel::Sser => Level::Sser,
            MtcLevel::Ser => Level::Ser,
            MtcLevel::Si => Level::Si,
        }
    }
}

/// A parsed transactional history.
pub struct MtcHistory(History);

/// A parsed set of lightweight-transaction operations.
pub struct MtcLwt(Vec<LwtOp>);

/// The outcome of a check.
pub struct MtcVerdict(Verdict);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("interior nul bytes removed"));
}

fn guard(f: impl FnOnce() -> Result<(), (MtcStatus, String)>) -> MtcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MtcStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MtcStatus::ErrPanic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MtcStatus, String)> {
    if p.is_null() {
        return Err((MtcStatus::ErrNull, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (MtcStatus::ErrUtf8, format!("{what}: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (MtcStatus, String)> {
    p.as_ref().ok_or_else(|| (MtcStatus::ErrNull, format!("{what} is null")))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), (MtcStatus, String)> {
    if p.is_null() {
        Err((MtcStatus::ErrNull, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message describing the last failed call on this thread, or an empty
/// string. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn mtc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mtc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON-lines history.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtc_history_parse(jsonl: *const c_char, out: *mut *mut MtcHistory) -> MtcStatus {
    guard(|| {
        out_arg(out, "out")?;
        let text = str_arg(jsonl, "jsonl")?;
        let h = History::from_jsonl(text).map_err(|e| (MtcStatus::ErrParse, e.to_string()))?;
        *out = Box::into_raw(Box::new(MtcHistory(h)));
        Ok(())
    })
}

/// Reads and parses a JSON-lines history file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtc_history_load(path: *const c_char, out: *mut *mut MtcHistory) -> MtcStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|e| (MtcStatus::ErrIo, format!("{path}: {e}")))?;
        let h = History::from_jsonl(&text).map_err(|e| (MtcStatus::ErrParse, format!("{path}: {e}")))?;
        *out = Box::into_raw(Box::new(MtcHistory(h)));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtc_history_free(h: *mut MtcHistory) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of recorded transactions, committed or aborted, excluding the
/// initial one. Returns 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mtc_history_txn_count(h: *const MtcHistory) -> usize {
    h.as_ref().map_or(0, |h| h.0.txns().len() - 1)
}

/// Validates, screens and checks `h` at `level`. A history that is not made
/// of mini-transactions, or lacks timestamps for `MTC_LEVEL_SSER`, yields
/// `MTC_STATUS_ERR_INPUT`.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtc_check(h: *const MtcHistory, level: MtcLevel, out: *mut *mut MtcVerdict) -> MtcStatus {
    guard(|| {
        out_arg(out, "out")?;
        let h = ref_arg(h, "history")?;
        let v = check(&h.0, level.into()).map_err(|e: CheckError| (MtcStatus::ErrInput, e.to_string()))?;
        *out = Box::into_raw(Box::new(MtcVerdict(v)));
        Ok(())
    })
}

/// Preflight anomalies of `h` as a JSON array. Free the string with
/// [`mtc_string_free`].
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtc_screen_json(h: *const MtcHistory, out: *mut *mut c_char) -> MtcStatus {
    guard(|| {
        out_arg(out, "out")?;
        let h = ref_arg(h, "history")?;
        let json = serde_json::to_string(&screen(&h.0)).expect("anomalies serialize");
        *out = into_c_string(json);
        Ok(())
    })
}

/// Parses JSON-lines LWT operations.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtc_lwt_parse(jsonl: *const c_char, out: *mut *mut MtcLwt) -> MtcStatus {
    guard(|| {
        out_arg(out, "out")?;
        let text = str_arg(jsonl, "jsonl")?;
        let ops = LwtOp::from_jsonl(text).map_err(|e| (MtcStatus::ErrParse, e.to_string()))?;
        *out = Box::into_raw(Box::new(MtcLwt(ops)));
        Ok(())
    })
}

/// # Safety
/// `l` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtc_lwt_free(l: *mut MtcLwt) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Checks linearizability of every object in `l`.
///
/// # Safety
/// `l` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtc_lwt_check(l: *const MtcLwt, out: *mut *mut MtcVerdict) -> MtcStatus {
    guard(|| {
        out_arg(out, "out")?;
        let l = ref_arg(l, "lwt")?;
        *out = Box::into_raw(Box::new(MtcVerdict(verify_all(l.0.iter().cloned()))));
        Ok(())
    })
}

/// Whether the verdict passed. False for a null handle.
///
/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mtc_verdict_ok(v: *const MtcVerdict) -> bool {
    v.as_ref().is_some_and(|v| v.0.ok)
}

/// The verdict as JSON, or null for a null handle. Free the string with
/// [`mtc_string_free`].
///
/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mtc_verdict_json(v: *const MtcVerdict) -> *mut c_char {
    match v.as_ref() {
        Some(v) => into_c_string(v.0.to_json()),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `v` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtc_verdict_free(v: *mut MtcVerdict) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
