//! C ABI over the `ssdgm` library.
//!
//! Models are opaque handles created by `ssdgm_model_load` or
//! `ssdgm_model_parse` and released with `ssdgm_model_free`. Every fallible
//! call returns an [`SsdgmStatus`]; on failure `ssdgm_last_error` returns a
//! message for the calling thread. Arrays are row-major `double` buffers
//! owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ssdgm::model::{load_checkpoint, parse_checkpoint, Method, TrainedModel};
use ssdgm::nn::DenseArray;
use ssdgm::predictor::{gibbs_predict_batch, predict_dnn_batch, Averaging, PredictConfig};
use ssdgm::rng::{stream, Stream};
use ssdgm::Error;

/// Opaque trained model.
pub struct SsdgmModel {
    inner: TrainedModel,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsdgmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Dimension = 5,
    Numeric = 6,
    Unsupported = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsdgmMethod {
    Dnn = 0,
    Sslpe = 1,
    Sslapd = 2,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: SsdgmStatus, msg: impl Into<String>) -> SsdgmStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> SsdgmStatus {
    let status = match &e {
        Error::Dimension { .. } => SsdgmStatus::Dimension,
        Error::Usage(_) => SsdgmStatus::InvalidArgument,
        Error::Numeric(_) => SsdgmStatus::Numeric,
        Error::Parse { .. } => SsdgmStatus::Parse,
        Error::Io { .. } => SsdgmStatus::Io,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> SsdgmStatus) -> SsdgmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == SsdgmStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(SsdgmStatus::Panic, "internal panic"),
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, SsdgmStatus> {
    if p.is_null() {
        return Err(fail(SsdgmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SsdgmStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn store(out: *mut *mut SsdgmModel, model: TrainedModel) {
    *out = Box::into_raw(Box::new(SsdgmModel { inner: model }));
}

/// Message describing the last failure on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ssdgm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ssdgm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssdgm_model_load(path: *const c_char, out: *mut *mut SsdgmModel) -> SsdgmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SsdgmStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match c_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_checkpoint(path) {
            Ok(m) => {
                store(out, m);
                SsdgmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Parses checkpoint text into `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssdgm_model_parse(text: *const c_char, out: *mut *mut SsdgmModel) -> SsdgmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SsdgmStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match c_str(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_checkpoint(text, "<memory>") {
            Ok(m) => {
                store(out, m);
                SsdgmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssdgm_model_free(model: *mut SsdgmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssdgm_model_num_classes(model: *const SsdgmModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_classes())
}

/// Input dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssdgm_model_input_dim(model: *const SsdgmModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.input_dim())
}

/// Latent dimension, or 0 for the baseline and null handles.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssdgm_model_latent_dim(model: *const SsdgmModel) -> usize {
    match model.as_ref().map(|m| &m.inner) {
        Some(TrainedModel::Generative(g)) => g.dims().d_z,
        _ => 0,
    }
}

/// Writes the model's method to `*out`.
///
/// # Safety
/// `model` must be null or a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ssdgm_model_method(model: *const SsdgmModel, out: *mut SsdgmMethod) -> SsdgmStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), out.is_null()) else {
            return fail(SsdgmStatus::NullPointer, "model or out is null");
        };
        *out = match m.inner.method() {
            Method::Dnn => SsdgmMethod::Dnn,
            Method::Sslpe => SsdgmMethod::Sslpe,
            Method::Sslapd => SsdgmMethod::Sslapd,
        };
        SsdgmStatus::Ok
    })
}

/// Predictive class probabilities for `n` points.
///
/// `x` holds `n * input_dim` values and `out_probs` receives
/// `n * num_classes`. Generative models run `chains` Gibbs chains of
/// `gibbs_steps` sweeps seeded by `seed`; `vote` selects label voting over
/// probability averaging. The baseline ignores the sampling arguments.
///
/// # Safety
/// Buffers must hold the sizes above; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssdgm_predict(
    model: *const SsdgmModel,
    x: *const f64,
    n: usize,
    gibbs_steps: usize,
    chains: usize,
    seed: u64,
    vote: bool,
    out_probs: *mut f64,
) -> SsdgmStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(SsdgmStatus::NullPointer, "model is null");
        };
        if n == 0 {
            return SsdgmStatus::Ok;
        }
        if x.is_null() || out_probs.is_null() {
            return fail(SsdgmStatus::NullPointer, "x or out_probs is null");
        }
        let (d, k) = (m.inner.input_dim(), m.inner.num_classes());
        let xs = std::slice::from_raw_parts(x, n * d);
        let xs = match DenseArray::matrix(n, d, xs.to_vec()) {
            Ok(a) => a,
            Err(e) => return from_error(e),
        };
        let cfg = PredictConfig {
            gibbs_steps,
            chains,
            seed,
            averaging: if vote { Averaging::LabelVote } else { Averaging::ProbabilityMean },
            keep_trace: false,
        };
        let probs = match &m.inner {
            TrainedModel::Generative(g) => gibbs_predict_batch(g, &xs, &cfg).map(|r| r.into_iter().map(|p| p.probs).collect()),
            TrainedModel::Baseline(b) => predict_dnn_batch(b, &xs),
        };
        let probs: Vec<_> = match probs {
            Ok(p) => p,
            Err(e) => return from_error(e),
        };
        let out = std::slice::from_raw_parts_mut(out_probs, n * k);
        for (row, p) in out.chunks_exact_mut(k).zip(&probs) {
            row.copy_from_slice(p.probs());
        }
        SsdgmStatus::Ok
    })
}

/// Draws `n` ancestral samples from a generative model.
///
/// `out_x` receives `n * input_dim` values, `out_y` `n` labels, and
/// `out_z`, if not null, `n * latent_dim` values.
///
/// # Safety
/// Buffers must hold the sizes above; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssdgm_generate(
    model: *const SsdgmModel,
    n: usize,
    seed: u64,
    out_x: *mut f64,
    out_y: *mut usize,
    out_z: *mut f64,
) -> SsdgmStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(SsdgmStatus::NullPointer, "model is null");
        };
        let TrainedModel::Generative(g) = &m.inner else {
            return fail(SsdgmStatus::Unsupported, "the baseline has no generative model");
        };
        if n == 0 {
            return SsdgmStatus::Ok;
        }
        if out_x.is_null() || out_y.is_null() {
            return fail(SsdgmStatus::NullPointer, "out_x or out_y is null");
        }
        let samples = match g.generate(n, &mut stream(seed, Stream::Generate)) {
            Ok(s) => s,
            Err(e) => return from_error(e),
        };
        let (d, dz) = (g.dims().d_x, g.dims().d_z);
        let xs = std::slice::from_raw_parts_mut(out_x, n * d);
        let ys = std::slice::from_raw_parts_mut(out_y, n);
        for (i, s) in samples.iter().enumerate() {
            xs[i * d..(i + 1) * d].copy_from_slice(&s.x);
            ys[i] = s.y;
        }
        if !out_z.is_null() {
            let zs = std::slice::from_raw_parts_mut(out_z, n * dz);
            for (i, s) in samples.iter().enumerate() {
                zs[i * dz..(i + 1) * dz].copy_from_slice(&s.z);
            }
        }
        SsdgmStatus::Ok
    })
}
