//! C ABI over the neurowf library.
//!
//! Every function returns an [`NwfStatus`]. On failure a message is kept in
//! thread-local storage and can be read with [`nwf_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use neurowf::classifier::Label;
use neurowf::cli::bundle::ModelBundle;
use neurowf::error::Error;
use neurowf::quantiles::{estimate_quantile_function, QuantileFunction, QuantileSettings};
use neurowf::wasserstein_frechet::{wasserstein_distance, CovariateVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NwfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InsufficientData = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NwfLabel {
    Control = 0,
    Mtbi = 1,
}

impl From<Label> for NwfLabel {
    fn from(l: Label) -> Self {
        match l {
            Label::Control => NwfLabel::Control,
            Label::Mtbi => NwfLabel::Mtbi,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NwfDecision {
    pub label: NwfLabel,
    /// Distance to the control prototype.
    pub d1: f64,
    /// Distance to the mTBI prototype.
    pub d2: f64,
    pub k: f64,
}

/// Quantile function on the 1025-level grid.
pub struct NwfQuantile(QuantileFunction);

/// Fitted model bundle.
pub struct NwfModel(ModelBundle);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NwfStatus {
    match e {
        Error::InvalidInput(_) | Error::Json(_) | Error::Csv(_) => NwfStatus::InvalidInput,
        Error::InsufficientData(_) | Error::SingularCovariance | Error::RankDeficient => {
            NwfStatus::InsufficientData
        }
        Error::Numerical(_) => NwfStatus::Numerical,
        Error::Io { .. } => NwfStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NwfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NwfStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is NULL"));
            NwfStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            NwfStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

/// # Safety
/// `p` must be NULL only when `len == 0`; otherwise it must point to `len` readable values.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    Ok(std::slice::from_raw_parts(non_null(p, what)?, len))
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn nwf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn nwf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of quantile levels in every quantile function (1025).
#[no_mangle]
pub extern "C" fn nwf_quantile_levels() -> usize {
    neurowf::quantiles::N_LEVELS
}

/// Estimates a quantile function from raw samples.
/// `n_grid` must be a power of two; pass 0 for the defaults (4096 bins,
/// padding 0.1).
///
/// # Safety
/// `samples` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nwf_quantile_estimate(
    samples: *const f64,
    n: usize,
    n_grid: usize,
    pad_fraction: f64,
    out: *mut *mut NwfQuantile,
) -> NwfStatus {
    guard(|| {
        let out = non_null(out, "out")? as *mut *mut NwfQuantile;
        *out = ptr::null_mut();
        let xs = slice(samples, n, "samples")?;
        let settings = if n_grid == 0 {
            QuantileSettings::default()
        } else {
            QuantileSettings {
                n_grid,
                pad_fraction,
                ..QuantileSettings::default()
            }
        };
        let (q, _) = estimate_quantile_function(xs, &settings)?;
        *out = Box::into_raw(Box::new(NwfQuantile(q)));
        Ok(())
    })
}

/// Wraps caller-provided nondecreasing values on the standard grid.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nwf_quantile_from_values(
    values: *const f64,
    len: usize,
    out: *mut *mut NwfQuantile,
) -> NwfStatus {
    guard(|| {
        let out = non_null(out, "out")? as *mut *mut NwfQuantile;
        *out = ptr::null_mut();
        let v = slice(values, len, "values")?.to_vec();
        let q = QuantileFunction::on_standard_grid(v)?;
        if !q.is_nondecreasing() {
            return Err(Error::InvalidInput("quantile values must be nondecreasing".into()).into());
        }
        *out = Box::into_raw(Box::new(NwfQuantile(q)));
        Ok(())
    })
}

/// Copies the quantile values into `dst`, which must hold `nwf_quantile_levels()` doubles.
///
/// # Safety
/// `q` must be a live handle; `dst` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nwf_quantile_values(
    q: *const NwfQuantile,
    dst: *mut f64,
    len: usize,
) -> NwfStatus {
    guard(|| {
        let q = &*non_null(q, "q")?;
        let dst = non_null(dst, "dst")? as *mut f64;
        if len != q.0.len() {
            return Err(Error::InvalidInput(format!(
                "destination holds {len} values, quantile has {}",
                q.0.len()
            ))
            .into());
        }
        ptr::copy_nonoverlapping(q.0.values.as_ptr(), dst, len);
        Ok(())
    })
}

/// 2-Wasserstein distance between two quantile functions.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nwf_wasserstein_distance(
    a: *const NwfQuantile,
    b: *const NwfQuantile,
    out: *mut f64,
) -> NwfStatus {
    guard(|| {
        let a = &*non_null(a, "a")?;
        let b = &*non_null(b, "b")?;
        let out = non_null(out, "out")? as *mut f64;
        *out = wasserstein_distance(&a.0, &b.0)?;
        Ok(())
    })
}

/// # Safety
/// `q` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nwf_quantile_free(q: *mut NwfQuantile) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Loads a model bundle written by `neurowf fit`.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nwf_model_load(path: *const c_char, out: *mut *mut NwfModel) -> NwfStatus {
    guard(|| {
        let out = non_null(out, "out")? as *mut *mut NwfModel;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(non_null(path, "path")?)
            .to_str()
            .map_err(|_| Error::InvalidInput("path is not UTF-8".into()))?;
        let m = ModelBundle::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(NwfModel(m)));
        Ok(())
    })
}

/// Parses a model bundle from JSON bytes.
///
/// # Safety
/// `json` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nwf_model_from_json(
    json: *const u8,
    len: usize,
    out: *mut *mut NwfModel,
) -> NwfStatus {
    guard(|| {
        let out = non_null(out, "out")? as *mut *mut NwfModel;
        *out = ptr::null_mut();
        let bytes = std::slice::from_raw_parts(non_null(json, "json")?, len);
        let m = ModelBundle::from_json(bytes)?;
        *out = Box::into_raw(Box::new(NwfModel(m)));
        Ok(())
    })
}

/// Selected decision threshold `k`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nwf_model_threshold(model: *const NwfModel, out: *mut f64) -> NwfStatus {
    guard(|| {
        let m = &*non_null(model, "model")?;
        *(non_null(out, "out")? as *mut f64) = m.0.k;
        Ok(())
    })
}

/// Covariate dimension expected by [`nwf_model_classify`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nwf_model_covariate_dim(model: *const NwfModel, out: *mut usize) -> NwfStatus {
    guard(|| {
        let m = &*non_null(model, "model")?;
        *(non_null(out, "out")? as *mut usize) = m.0.control.dim();
        Ok(())
    })
}

/// Classifies one subject given its quantile function and covariates.
///
/// # Safety
/// `model` and `q` must be live handles; `covariates` must point to `p`
/// readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nwf_model_classify(
    model: *const NwfModel,
    q: *const NwfQuantile,
    covariates: *const f64,
    p: usize,
    out: *mut NwfDecision,
) -> NwfStatus {
    guard(|| {
        let m = &*non_null(model, "model")?;
        let q = &*non_null(q, "q")?;
        let out = non_null(out, "out")? as *mut NwfDecision;
        let z = CovariateVector(slice(covariates, p, "covariates")?.to_vec());
        let d = m.0.classify(&q.0, &z)?;
        *out = NwfDecision {
            label: d.label.into(),
            d1: d.d1,
            d2: d.d2,
            k: d.k,
        };
        Ok(())
    })
}

/// Estimates the subject's quantile function with the model's settings, then classifies.
///
/// # Safety
/// `model` must be a live handle; `samples` must point to `n` readable
/// doubles and `covariates` to `p`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nwf_model_classify_samples(
    model: *const NwfModel,
    samples: *const f64,
    n: usize,
    covariates: *const f64,
    p: usize,
    out: *mut NwfDecision,
) -> NwfStatus {
    guard(|| {
        let m = &*non_null(model, "model")?;
        let xs = slice(samples, n, "samples")?;
        let (q, _) = estimate_quantile_function(xs, &m.0.quantile_settings)?;
        let z = CovariateVector(slice(covariates, p, "covariates")?.to_vec());
        let out = non_null(out, "out")? as *mut NwfDecision;
        let d = m.0.classify(&q, &z)?;
        *out = NwfDecision {
            label: d.label.into(),
            d1: d.d1,
            d2: d.d2,
            k: d.k,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nwf_model_free(model: *mut NwfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
