//! C ABI for loading an `atlstm` checkpoint and scoring window samples.
//!
//! Models are opaque handles created by [`atlstm_model_load`] and released
//! with [`atlstm_model_free`]. Every fallible call returns an
//! [`AtlstmStatus`]; on failure [`atlstm_last_error`] describes the most
//! recent error on the calling thread. Samples cross the boundary as the
//! JSON objects written by `atlstm prep` (one line of `train.jsonl`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use atlstm::corpus::WindowSample;
use atlstm::model::{AtLstmModel, ModelError};
use atlstm::training::{load_checkpoint, TrainError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtlstmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    BadCheckpoint = 4,
    InvalidSample = 5,
    Numeric = 6,
    Panic = 7,
}

/// A loaded model. Opaque to C.
pub struct AtlstmModel {
    model: AtLstmModel,
    vocab_hash: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: AtlstmStatus, msg: impl Into<String>) -> AtlstmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> AtlstmStatus) -> AtlstmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AtlstmStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AtlstmStatus> {
    if p.is_null() {
        return Err(fail(AtlstmStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AtlstmStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn model_status(e: &ModelError) -> AtlstmStatus {
    match e {
        ModelError::Tensor(_) => AtlstmStatus::Numeric,
        _ => AtlstmStatus::InvalidSample,
    }
}

/// Loads a checkpoint file. On success `*out` receives a handle that must be
/// released with [`atlstm_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn atlstm_model_load(path: *const c_char, out: *mut *mut AtlstmModel) -> AtlstmStatus {
    guard(|| {
        if out.is_null() {
            return fail(AtlstmStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_checkpoint(Path::new(path)) {
            Ok(ck) => {
                let vocab_hash = CString::new(ck.vocab_hash).unwrap_or_default();
                *out = Box::into_raw(Box::new(AtlstmModel {
                    model: ck.model,
                    vocab_hash,
                }));
                AtlstmStatus::Ok
            }
            Err(TrainError::Io { path, source }) => fail(AtlstmStatus::Io, format!("{}: {source}", path.display())),
            Err(e) => fail(AtlstmStatus::BadCheckpoint, e.to_string()),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`atlstm_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn atlstm_model_free(model: *mut AtlstmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trainable scalars, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atlstm_model_param_count(model: *const AtlstmModel) -> u64 {
    model.as_ref().map_or(0, |m| m.model.param_count() as u64)
}

/// Days per window the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atlstm_model_window(model: *const AtlstmModel) -> u32 {
    model.as_ref().map_or(0, |m| m.model.hyper().window as u32)
}

/// Vocabulary fingerprint stored in the checkpoint. The string lives as long
/// as the handle; null for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atlstm_model_vocab_hash(model: *const AtlstmModel) -> *const c_char {
    model.as_ref().map_or(ptr::null(), |m| m.vocab_hash.as_ptr())
}

/// Scores one window sample given as JSON, writing the up and down
/// probabilities.
///
/// # Safety
/// `model` must be a live handle, `sample_json` a NUL-terminated string and
/// `p_up` / `p_down` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn atlstm_model_predict_json(
    model: *const AtlstmModel,
    sample_json: *const c_char,
    p_up: *mut f64,
    p_down: *mut f64,
) -> AtlstmStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(AtlstmStatus::NullArgument, "model is null");
        };
        if p_up.is_null() || p_down.is_null() {
            return fail(AtlstmStatus::NullArgument, "output pointer is null");
        }
        let text = match str_arg(sample_json, "sample_json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let sample: WindowSample = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(AtlstmStatus::InvalidSample, format!("sample JSON: {e}")),
        };
        match m.model.predict(&sample) {
            Ok(p) => {
                *p_up = p.p_up;
                *p_down = p.p_down;
                AtlstmStatus::Ok
            }
            Err(e) => fail(model_status(&e), e.to_string()),
        }
    })
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn atlstm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, NUL-terminated and static.
#[no_mangle]
pub extern "C" fn atlstm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
