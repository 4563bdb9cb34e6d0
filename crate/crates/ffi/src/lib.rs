//! C ABI for the augforget toolkit.
//!
//! The surface covers what a host language needs to run the weight-space
//! mitigation on its own models and to score gradient interference: an
//! opaque model handle with checkpoint I/O and flat parameter access, the
//! interference metrics (sign discrepancy, cosine alignment, linear CKA),
//! and the drift/mask/merge primitives over raw f64 buffers.
//!
//! Conventions: every function returns an [`AfStatus`]; results are written
//! through out-pointers. Buffers are caller-allocated. Matrices are
//! row-major. Handles are created and released only by this library.

use augforget::cli::{load_checkpoint, save_checkpoint};
use augforget::diagnostics;
use augforget::error::Error;
use augforget::mitigation;
use augforget::model::{GradientVector, ModelState};
use augforget::numerics::{Matrix, Rng};
use std::ffi::{c_char, CStr};
use std::path::Path;

/// Status code returned by every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A parameter was outside its valid range.
    InvalidArgument = 2,
    /// Buffer lengths or shapes disagree.
    LengthMismatch = 3,
    /// Cosine alignment was requested on a zero-norm vector.
    ZeroNorm = 4,
    /// File I/O failed.
    IoError = 5,
    /// A checkpoint was malformed (magic, version, or size).
    BadFormat = 6,
    /// A path was not valid UTF-8.
    BadPath = 7,
}

fn status_of(err: &Error) -> AfStatus {
    match err {
        Error::ZeroNorm { .. } => AfStatus::ZeroNorm,
        Error::Io { .. } => AfStatus::IoError,
        Error::CheckpointMagic { .. }
        | Error::CheckpointVersion { .. }
        | Error::CheckpointTruncated { .. }
        | Error::CheckpointSize { .. } => AfStatus::BadFormat,
        Error::ShapeMismatch { .. } | Error::LengthMismatch { .. } => AfStatus::LengthMismatch,
        _ => AfStatus::InvalidArgument,
    }
}

/// Opaque classifier handle.
pub struct AfModel {
    inner: ModelState,
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn af_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Short static name for a status code; do not free.
#[no_mangle]
pub extern "C" fn af_status_name(status: AfStatus) -> *const c_char {
    let name: &'static str = match status {
        AfStatus::Ok => "ok\0",
        AfStatus::NullPointer => "null pointer\0",
        AfStatus::InvalidArgument => "invalid argument\0",
        AfStatus::LengthMismatch => "length mismatch\0",
        AfStatus::ZeroNorm => "zero norm\0",
        AfStatus::IoError => "io error\0",
        AfStatus::BadFormat => "bad format\0",
        AfStatus::BadPath => "bad path\0",
    };
    name.as_ptr() as *const c_char
}

unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

unsafe fn slice_arg_mut<'a, T>(ptr: *mut T, len: usize) -> Option<&'a mut [T]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(ptr, len))
    }
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, AfStatus> {
    if ptr.is_null() {
        return Err(AfStatus::NullPointer);
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(Path::new)
        .map_err(|_| AfStatus::BadPath)
}

/// Creates a He-initialized model from `n_sizes` layer widths and a seed.
///
/// # Safety
/// `layer_sizes` must point to `n_sizes` readable u32 values and `out` must
/// be a valid pointer; the returned handle must be released with
/// [`af_model_free`].
#[no_mangle]
pub unsafe extern "C" fn af_model_new(
    layer_sizes: *const u32,
    n_sizes: usize,
    seed: u64,
    out: *mut *mut AfModel,
) -> AfStatus {
    if out.is_null() {
        return AfStatus::NullPointer;
    }
    let Some(sizes) = slice_arg(layer_sizes, n_sizes) else {
        return AfStatus::NullPointer;
    };
    let sizes: Vec<usize> = sizes.iter().map(|&s| s as usize).collect();
    match ModelState::init(&sizes, &mut Rng::from_seed(seed)) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(AfModel { inner }));
            AfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Loads a model from a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer; the
/// returned handle must be released with [`af_model_free`].
#[no_mangle]
pub unsafe extern "C" fn af_model_load(path: *const c_char, out: *mut *mut AfModel) -> AfStatus {
    if out.is_null() {
        return AfStatus::NullPointer;
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_checkpoint(path) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(AfModel { inner }));
            AfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Writes the model to a checkpoint file.
///
/// # Safety
/// `model` must be a live handle from this library and `path` a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn af_model_save(model: *const AfModel, path: *const c_char) -> AfStatus {
    let Some(model) = model.as_ref() else {
        return AfStatus::NullPointer;
    };
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match save_checkpoint(path, &model.inner) {
        Ok(()) => AfStatus::Ok,
        Err(e) => status_of(&e),
    }
}

/// Reports the total parameter count N.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn af_model_param_count(model: *const AfModel, out: *mut usize) -> AfStatus {
    let Some(model) = model.as_ref() else {
        return AfStatus::NullPointer;
    };
    if out.is_null() {
        return AfStatus::NullPointer;
    }
    *out = model.inner.param_count();
    AfStatus::Ok
}

/// Copies the canonical flat parameters into `buf` (length must equal N).
///
/// # Safety
/// `model` must be a live handle; `buf` must point to `len` writable f64s.
#[no_mangle]
pub unsafe extern "C" fn af_model_get_params(
    model: *const AfModel,
    buf: *mut f64,
    len: usize,
) -> AfStatus {
    let Some(model) = model.as_ref() else {
        return AfStatus::NullPointer;
    };
    let Some(buf) = slice_arg_mut(buf, len) else {
        return AfStatus::NullPointer;
    };
    if len != model.inner.param_count() {
        return AfStatus::LengthMismatch;
    }
    buf.copy_from_slice(&model.inner.flat_params());
    AfStatus::Ok
}

/// Overwrites the model parameters from `buf` (length must equal N).
///
/// # Safety
/// `model` must be a live handle; `buf` must point to `len` readable f64s.
#[no_mangle]
pub unsafe extern "C" fn af_model_set_params(
    model: *mut AfModel,
    buf: *const f64,
    len: usize,
) -> AfStatus {
    let Some(model) = model.as_mut() else {
        return AfStatus::NullPointer;
    };
    let Some(buf) = slice_arg(buf, len) else {
        return AfStatus::NullPointer;
    };
    match model.inner.set_flat_params(buf) {
        Ok(()) => AfStatus::Ok,
        Err(e) => status_of(&e),
    }
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or a handle produced by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn af_model_free(model: *mut AfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fraction of coordinates whose gradient signs differ (zero is its own
/// sign).
///
/// # Safety
/// `g1` and `g2` must point to `len` readable f64s; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_sign_discrepancy(
    g1: *const f64,
    g2: *const f64,
    len: usize,
    out: *mut f64,
) -> AfStatus {
    let (Some(a), Some(b)) = (slice_arg(g1, len), slice_arg(g2, len)) else {
        return AfStatus::NullPointer;
    };
    if out.is_null() {
        return AfStatus::NullPointer;
    }
    let ga = GradientVector::new(a.to_vec(), "ffi");
    let gb = GradientVector::new(b.to_vec(), "ffi");
    match diagnostics::sign_discrepancy(&ga, &gb) {
        Ok(v) => {
            *out = v;
            AfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Cosine similarity between two gradients; fails on zero-norm input.
///
/// # Safety
/// `g1` and `g2` must point to `len` readable f64s; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_cosine_alignment(
    g1: *const f64,
    g2: *const f64,
    len: usize,
    out: *mut f64,
) -> AfStatus {
    let (Some(a), Some(b)) = (slice_arg(g1, len), slice_arg(g2, len)) else {
        return AfStatus::NullPointer;
    };
    if out.is_null() {
        return AfStatus::NullPointer;
    }
    let ga = GradientVector::new(a.to_vec(), "ffi");
    let gb = GradientVector::new(b.to_vec(), "ffi");
    match diagnostics::cosine_alignment(&ga, &gb) {
        Ok(v) => {
            *out = v;
            AfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Linear CKA between two row-major feature matrices sharing `rows` probe
/// rows.
///
/// # Safety
/// `x` must point to `rows * x_cols` readable f64s, `y` to `rows * y_cols`;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_linear_cka(
    x: *const f64,
    rows: usize,
    x_cols: usize,
    y: *const f64,
    y_cols: usize,
    out: *mut f64,
) -> AfStatus {
    let (Some(xs), Some(ys)) = (slice_arg(x, rows * x_cols), slice_arg(y, rows * y_cols)) else {
        return AfStatus::NullPointer;
    };
    if out.is_null() {
        return AfStatus::NullPointer;
    }
    let build = |data: &[f64], cols: usize| Matrix::from_vec(rows, cols, data.to_vec());
    let (mx, my) = match (build(xs, x_cols), build(ys, y_cols)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return AfStatus::LengthMismatch,
    };
    match diagnostics::linear_cka(&mx, &my) {
        Ok(v) => {
            *out = v;
            AfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Per-parameter absolute drift |theta - theta_s|.
///
/// # Safety
/// `theta` and `theta_s` must point to `len` readable f64s; `out` must point
/// to `len` writable f64s.
#[no_mangle]
pub unsafe extern "C" fn af_drift(
    theta: *const f64,
    theta_s: *const f64,
    len: usize,
    out: *mut f64,
) -> AfStatus {
    let (Some(a), Some(b)) = (slice_arg(theta, len), slice_arg(theta_s, len)) else {
        return AfStatus::NullPointer;
    };
    let Some(out) = slice_arg_mut(out, len) else {
        return AfStatus::NullPointer;
    };
    match mitigation::drift(a, b) {
        Ok(d) => {
            out.copy_from_slice(&d);
            AfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Writes the 0/1 mask selecting the top p% drift entries into `out_mask`.
///
/// # Safety
/// `d` must point to `len` readable f64s; `out_mask` to `len` writable
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn af_top_p_mask(
    d: *const f64,
    len: usize,
    p: f64,
    out_mask: *mut u8,
) -> AfStatus {
    let Some(d) = slice_arg(d, len) else {
        return AfStatus::NullPointer;
    };
    let Some(out) = slice_arg_mut(out_mask, len) else {
        return AfStatus::NullPointer;
    };
    match mitigation::top_p_mask(d, p) {
        Ok(mask) => {
            out.copy_from_slice(mask.bits());
            AfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Selective averaging: masked coordinates become (theta + theta_s)/2,
/// unmasked pass through.
///
/// # Safety
/// `theta`, `theta_s`, and `mask` must point to `len` readable elements;
/// `out` must point to `len` writable f64s.
#[no_mangle]
pub unsafe extern "C" fn af_selective_merge(
    theta: *const f64,
    theta_s: *const f64,
    mask: *const u8,
    len: usize,
    out: *mut f64,
) -> AfStatus {
    let (Some(a), Some(b)) = (slice_arg(theta, len), slice_arg(theta_s, len)) else {
        return AfStatus::NullPointer;
    };
    let Some(bits) = slice_arg(mask, len) else {
        return AfStatus::NullPointer;
    };
    let Some(out) = slice_arg_mut(out, len) else {
        return AfStatus::NullPointer;
    };
    let mask = match mitigation::MergeMask::from_bits(bits.to_vec()) {
        Ok(m) => m,
        Err(e) => return status_of(&e),
    };
    match mitigation::selective_merge(a, b, &mask) {
        Ok(v) => {
            out.copy_from_slice(&v);
            AfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// One full merge tick in place: ranks |theta - theta_s|, averages the top
/// p% of `theta` toward `theta_s`, then refreshes `theta_s` to the merged
/// weights (the scheduler's snapshot rule).
///
/// # Safety
/// `theta` and `theta_s` must point to `len` writable f64s.
#[no_mangle]
pub unsafe extern "C" fn af_merge_by_drift(
    theta: *mut f64,
    theta_s: *mut f64,
    len: usize,
    p: f64,
) -> AfStatus {
    let Some(theta) = slice_arg_mut(theta, len) else {
        return AfStatus::NullPointer;
    };
    let Some(theta_s) = slice_arg_mut(theta_s, len) else {
        return AfStatus::NullPointer;
    };
    let merged = mitigation::drift(theta, theta_s)
        .and_then(|d| mitigation::top_p_mask(&d, p))
        .and_then(|mask| mitigation::selective_merge(theta, theta_s, &mask));
    match merged {
        Ok(v) => {
            theta.copy_from_slice(&v);
            theta_s.copy_from_slice(&v);
            AfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_handle_round_trip() {
        unsafe {
            let sizes = [6u32, 4, 3];
            let mut handle: *mut AfModel = std::ptr::null_mut();
            assert_eq!(
                af_model_new(sizes.as_ptr(), 3, 9, &mut handle),
                AfStatus::Ok
            );
            let mut n = 0usize;
            assert_eq!(af_model_param_count(handle, &mut n), AfStatus::Ok);
            assert_eq!(n, 6 * 4 + 4 + 4 * 3 + 3);

            let mut params = vec![0.0; n];
            assert_eq!(
                af_model_get_params(handle, params.as_mut_ptr(), n),
                AfStatus::Ok
            );
            params[0] = 42.0;
            assert_eq!(
                af_model_set_params(handle, params.as_ptr(), n),
                AfStatus::Ok
            );
            let mut back = vec![0.0; n];
            assert_eq!(
                af_model_get_params(handle, back.as_mut_ptr(), n),
                AfStatus::Ok
            );
            assert_eq!(back[0], 42.0);
            af_model_free(handle);
        }
    }

    #[test]
    fn null_and_length_errors() {
        unsafe {
            let mut out = 0.0;
            assert_eq!(
                af_sign_discrepancy(std::ptr::null(), std::ptr::null(), 3, &mut out),
                AfStatus::NullPointer
            );
            let z = [0.0; 3];
            let g = [1.0, -1.0, 0.5];
            assert_eq!(
                af_cosine_alignment(g.as_ptr(), z.as_ptr(), 3, &mut out),
                AfStatus::ZeroNorm
            );
            let mut handle: *mut AfModel = std::ptr::null_mut();
            let sizes = [5u32];
            assert_eq!(
                af_model_new(sizes.as_ptr(), 1, 0, &mut handle),
                AfStatus::InvalidArgument
            );
        }
    }

    #[test]
    fn merge_primitives_match_direct_calls() {
        unsafe {
            let theta = [1.0, 2.0, 3.0, 4.0];
            let snap = [0.0, 0.0, 0.0, 0.0];
            let mut d = [0.0; 4];
            assert_eq!(
                af_drift(theta.as_ptr(), snap.as_ptr(), 4, d.as_mut_ptr()),
                AfStatus::Ok
            );
            assert_eq!(d, [1.0, 2.0, 3.0, 4.0]);

            let mut mask = [9u8; 4];
            assert_eq!(
                af_top_p_mask(d.as_ptr(), 4, 50.0, mask.as_mut_ptr()),
                AfStatus::Ok
            );
            assert_eq!(mask, [0, 0, 1, 1]);

            let mut merged = [0.0; 4];
            assert_eq!(
                af_selective_merge(
                    theta.as_ptr(),
                    snap.as_ptr(),
                    mask.as_ptr(),
                    4,
                    merged.as_mut_ptr()
                ),
                AfStatus::Ok
            );
            assert_eq!(merged, [1.0, 2.0, 1.5, 2.0]);

            let mut live = theta;
            let mut snapshot = snap;
            assert_eq!(
                af_merge_by_drift(live.as_mut_ptr(), snapshot.as_mut_ptr(), 4, 100.0),
                AfStatus::Ok
            );
            assert_eq!(live, [0.5, 1.0, 1.5, 2.0]);
            assert_eq!(live, snapshot);
        }
    }

    #[test]
    fn checkpoint_io_through_the_ffi() {
        unsafe {
            let dir = std::env::temp_dir().join("augforget_ffi_test");
            std::fs::create_dir_all(&dir).unwrap();
            let path = dir.join("m.ckpt");
            let cpath = std::ffi::CString::new(path.to_str().unwrap()).unwrap();

            let sizes = [8u32, 5, 2];
            let mut handle: *mut AfModel = std::ptr::null_mut();
            assert_eq!(af_model_new(sizes.as_ptr(), 3, 77, &mut handle), AfStatus::Ok);
            assert_eq!(af_model_save(handle, cpath.as_ptr()), AfStatus::Ok);

            let mut loaded: *mut AfModel = std::ptr::null_mut();
            assert_eq!(af_model_load(cpath.as_ptr(), &mut loaded), AfStatus::Ok);
            let mut n = 0usize;
            af_model_param_count(loaded, &mut n);
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            af_model_get_params(handle, a.as_mut_ptr(), n);
            af_model_get_params(loaded, b.as_mut_ptr(), n);
            assert_eq!(a, b);

            af_model_free(handle);
            af_model_free(loaded);
            let missing = std::ffi::CString::new("/nonexistent/x.ckpt").unwrap();
            let mut h: *mut AfModel = std::ptr::null_mut();
            assert_eq!(af_model_load(missing.as_ptr(), &mut h), AfStatus::IoError);
        }
    }
}
