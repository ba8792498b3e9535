//! C interface to the `ubnn` engines.
//!
//! Networks and forests are opaque handles created by a `*_load` or
//! `*_from_bytes` call and released with the matching `*_free`. Every
//! fallible call returns a [`UbnStatus`]; on failure a description is kept
//! per thread and can be read with [`ubn_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ubnn::model::{format, Network};
use ubnn::rf::{self, Forest};

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UbnStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// The file could not be read.
    Io = 2,
    /// The bytes are not a valid model or forest.
    Format = 3,
    /// Input length or an output buffer does not match the model.
    Shape = 4,
    /// The path is not valid UTF-8.
    InvalidPath = 5,
    /// Internal error; the handle is left unchanged.
    Panic = 6,
}

/// A loaded binary neural network.
pub struct UbnNetwork(Network);

/// A loaded random forest.
pub struct UbnForest(Forest);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: UbnStatus, message: impl Into<String>) -> UbnStatus {
    set_error(message.into());
    status
}

fn guard(f: impl FnOnce() -> UbnStatus) -> UbnStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(UbnStatus::Panic, "internal panic"))
}

fn format_status(e: format::FormatError) -> UbnStatus {
    match e {
        format::FormatError::Io(e) => fail(UbnStatus::Io, e.to_string()),
        e => fail(UbnStatus::Format, format!("{e} (code {})", e.code())),
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, UbnStatus> {
    if path.is_null() {
        return Err(fail(UbnStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(UbnStatus::InvalidPath, "path is not UTF-8"))
}

unsafe fn bytes_arg<'a>(data: *const u8, len: usize) -> Result<&'a [u8], UbnStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(UbnStatus::NullPointer, "data is null"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn ubn_status_message(status: UbnStatus) -> *const c_char {
    let s: &'static CStr = match status {
        UbnStatus::Ok => c"ok",
        UbnStatus::NullPointer => c"null pointer argument",
        UbnStatus::Io => c"i/o error",
        UbnStatus::Format => c"malformed or invalid model file",
        UbnStatus::Shape => c"input or buffer size does not match the model",
        UbnStatus::InvalidPath => c"path is not valid UTF-8",
        UbnStatus::Panic => c"internal error",
    };
    s.as_ptr()
}

/// Description of the last failure on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ubn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a `UBN1` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ubn_network_load(path: *const c_char, out: *mut *mut UbnNetwork) -> UbnStatus {
    guard(|| {
        if out.is_null() {
            return fail(UbnStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match format::load(path) {
            Ok(net) => {
                store(out, UbnNetwork(net));
                UbnStatus::Ok
            }
            Err(e) => format_status(e),
        }
    })
}

/// Parses `UBN1` bytes.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ubn_network_from_bytes(data: *const u8, len: usize, out: *mut *mut UbnNetwork) -> UbnStatus {
    guard(|| {
        if out.is_null() {
            return fail(UbnStatus::NullPointer, "out is null");
        }
        let bytes = match bytes_arg(data, len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        match format::from_bytes(bytes) {
            Ok(net) => {
                store(out, UbnNetwork(net));
                UbnStatus::Ok
            }
            Err(e) => format_status(e),
        }
    })
}

/// # Safety
/// `net` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ubn_network_free(net: *mut UbnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input window shape: `timesteps * channels` int8 values, time-major.
///
/// # Safety
/// `net` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ubn_network_input_shape(
    net: *const UbnNetwork,
    timesteps: *mut usize,
    channels: *mut usize,
) -> UbnStatus {
    if net.is_null() || timesteps.is_null() || channels.is_null() {
        return fail(UbnStatus::NullPointer, "null argument");
    }
    let spec = (*net).0.input();
    *timesteps = spec.timesteps;
    *channels = spec.channels;
    UbnStatus::Ok
}

/// Number of output classes, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ubn_network_num_classes(net: *const UbnNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.n_classes())
}

/// Classifies one window of `len` int8 values. Writes the class to
/// `class_out` and, when `scores` is not null, the `n_scores` Q16.16 class
/// scores (`n_scores` must equal the class count).
///
/// # Safety
/// `input` must point to `len` values, `scores` to `n_scores` slots, and
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ubn_network_predict(
    net: *const UbnNetwork,
    input: *const i8,
    len: usize,
    class_out: *mut usize,
    scores: *mut i64,
    n_scores: usize,
) -> UbnStatus {
    guard(|| {
        let Some(net) = net.as_ref() else {
            return fail(UbnStatus::NullPointer, "network is null");
        };
        if input.is_null() || class_out.is_null() {
            return fail(UbnStatus::NullPointer, "null argument");
        }
        if !scores.is_null() && n_scores != net.0.n_classes() {
            return fail(UbnStatus::Shape, format!("scores holds {n_scores} entries, network has {} classes", net.0.n_classes()));
        }
        let values = std::slice::from_raw_parts(input, len);
        match net.0.classify(values) {
            Ok(trace) => {
                *class_out = trace.class;
                if !scores.is_null() {
                    std::slice::from_raw_parts_mut(scores, n_scores).copy_from_slice(&trace.scores);
                }
                UbnStatus::Ok
            }
            Err(e) => fail(UbnStatus::Shape, e.to_string()),
        }
    })
}

/// Loads a `URF1` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ubn_forest_load(path: *const c_char, out: *mut *mut UbnForest) -> UbnStatus {
    guard(|| {
        if out.is_null() {
            return fail(UbnStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match rf::format::load(path) {
            Ok(f) => {
                store(out, UbnForest(f));
                UbnStatus::Ok
            }
            Err(e) => format_status(e),
        }
    })
}

/// Parses `URF1` bytes.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ubn_forest_from_bytes(data: *const u8, len: usize, out: *mut *mut UbnForest) -> UbnStatus {
    guard(|| {
        if out.is_null() {
            return fail(UbnStatus::NullPointer, "out is null");
        }
        let bytes = match bytes_arg(data, len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        match rf::format::from_bytes(bytes) {
            Ok(f) => {
                store(out, UbnForest(f));
                UbnStatus::Ok
            }
            Err(e) => format_status(e),
        }
    })
}

/// # Safety
/// `forest` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ubn_forest_free(forest: *mut UbnForest) {
    if !forest.is_null() {
        drop(Box::from_raw(forest));
    }
}

/// # Safety
/// `forest` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ubn_forest_num_features(forest: *const UbnForest) -> usize {
    forest.as_ref().map_or(0, |f| f.0.n_features())
}

/// # Safety
/// `forest` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ubn_forest_num_classes(forest: *const UbnForest) -> usize {
    forest.as_ref().map_or(0, |f| f.0.n_classes())
}

/// Classifies one vector of quantized features.
///
/// # Safety
/// `features` must point to `len` values and `forest` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ubn_forest_predict(
    forest: *const UbnForest,
    features: *const i8,
    len: usize,
    class_out: *mut usize,
) -> UbnStatus {
    guard(|| {
        let Some(forest) = forest.as_ref() else {
            return fail(UbnStatus::NullPointer, "forest is null");
        };
        if features.is_null() || class_out.is_null() {
            return fail(UbnStatus::NullPointer, "null argument");
        }
        match forest.0.predict(std::slice::from_raw_parts(features, len)) {
            Ok(c) => {
                *class_out = c;
                UbnStatus::Ok
            }
            Err(e @ rf::RfError::FeatureCount { .. }) => fail(UbnStatus::Shape, e.to_string()),
            Err(e) => fail(UbnStatus::Format, e.to_string()),
        }
    })
}

/// Extracts features from a raw 32 x 3 window (time-major), quantizes them
/// and classifies.
///
/// # Safety
/// `window` must point to `len` values and `forest` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ubn_forest_predict_window(
    forest: *const UbnForest,
    window: *const i32,
    len: usize,
    class_out: *mut usize,
) -> UbnStatus {
    guard(|| {
        let Some(forest) = forest.as_ref() else {
            return fail(UbnStatus::NullPointer, "forest is null");
        };
        if window.is_null() || class_out.is_null() {
            return fail(UbnStatus::NullPointer, "null argument");
        }
        match forest.0.classify_window(std::slice::from_raw_parts(window, len)) {
            Ok(c) => {
                *class_out = c;
                UbnStatus::Ok
            }
            Err(e @ (rf::RfError::FeatureCount { .. } | rf::RfError::WindowShape { .. })) => fail(UbnStatus::Shape, e.to_string()),
            Err(e) => fail(UbnStatus::Format, e.to_string()),
        }
    })
}
