//! C ABI over the edgenet inference runtime.
//!
//! Every function returns an [`EdgenetStatus`]; on failure the message is
//! available from [`edgenet_last_error`] on the same thread. Models are
//! opaque handles created by [`edgenet_model_load`] and released with
//! [`edgenet_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use edgenet::lstm::{self, NetError, NetworkParams};
use edgenet::metrics::{self, ConfusionMatrix, MetricsError};
use edgenet::quantizer::{quantize_model, QuantConfig, QuantError};
use edgenet::store::{self, ModelKind, StoreError, StoredModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgenetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    SingleClass = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgenetModelKind {
    Dense = 0,
    Sparse = 1,
    Quantized = 2,
}

/// Ratios in `[0, 1]`; `degenerate` is 1 when some denominator was zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EdgenetMetrics {
    pub accuracy: f64,
    pub far: f64,
    pub precision: f64,
    pub detection_rate: f64,
    pub f1: f64,
    pub degenerate: u8,
}

/// Loaded model with its float inference weights.
pub struct EdgenetModel {
    kind: ModelKind,
    net: NetworkParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(EdgenetStatus, String);

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::Io(_) => EdgenetStatus::Io,
            _ => EdgenetStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<NetError> for Failure {
    fn from(e: NetError) -> Self {
        Failure(EdgenetStatus::DimensionMismatch, e.to_string())
    }
}

impl From<QuantError> for Failure {
    fn from(e: QuantError) -> Self {
        Failure(EdgenetStatus::Format, e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        let status = match e {
            MetricsError::SingleClassInput => EdgenetStatus::SingleClass,
            _ => EdgenetStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EdgenetStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EdgenetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EdgenetStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EdgenetStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(EdgenetStatus::InvalidArgument, format!("`{what}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn edgenet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn edgenet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file. On success `*out` owns a handle that must be passed
/// to `edgenet_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn edgenet_model_load(path: *const c_char, out: *mut *mut EdgenetModel) -> EdgenetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = store::load_model(&path_arg(path, "path")?)?;
        let handle = EdgenetModel {
            kind: model.kind(),
            net: model.inference_params()?,
        };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `edgenet_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn edgenet_model_free(model: *mut EdgenetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of values one record must contain; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edgenet_model_input_len(model: *const EdgenetModel) -> usize {
    model.as_ref().map_or(0, |m| m.net.arch.record_len())
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn edgenet_model_kind(model: *const EdgenetModel, out: *mut EdgenetModelKind) -> EdgenetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = match m.kind {
            ModelKind::Dense => EdgenetModelKind::Dense,
            ModelKind::Sparse => EdgenetModelKind::Sparse,
            ModelKind::Quantized => EdgenetModelKind::Quantized,
        };
        Ok(())
    })
}

/// Scores `n_rows` records stored row-major in `values`
/// (`n_rows * edgenet_model_input_len` doubles) into `out_probs`.
///
/// # Safety
/// `values` must hold `n_rows * row_len` doubles and `out_probs` `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn edgenet_model_predict(
    model: *const EdgenetModel,
    values: *const f64,
    n_rows: usize,
    row_len: usize,
    out_probs: *mut f64,
) -> EdgenetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let expected = m.net.arch.record_len();
        if row_len != expected {
            return Err(NetError::DimensionMismatch { expected, got: row_len }.into());
        }
        let total = n_rows
            .checked_mul(row_len)
            .ok_or_else(|| Failure(EdgenetStatus::InvalidArgument, "input size overflows".into()))?;
        let values = slice_arg(values, total, "values")?;
        if n_rows > 0 && out_probs.is_null() {
            return Err(null("out_probs"));
        }
        for (i, row) in values.chunks(row_len.max(1)).take(n_rows).enumerate() {
            *out_probs.add(i) = lstm::predict_proba(&m.net, row)?;
        }
        Ok(())
    })
}

/// Writes an int8 copy of a dense or sparse model file using the default
/// quantization range.
///
/// # Safety
/// Both paths must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn edgenet_quantize_file(input: *const c_char, output: *const c_char) -> EdgenetStatus {
    guard(|| {
        let (input, output) = (path_arg(input, "input")?, path_arg(output, "output")?);
        let cfg = QuantConfig::default();
        let qm = match store::load_model(&input)? {
            StoredModel::Dense(net) => quantize_model(&net, &cfg, None)?,
            StoredModel::Sparse { net, mask } => quantize_model(&net, &cfg, Some(&mask))?,
            StoredModel::Quantized(q) => q,
        };
        store::save_quantized(&qm, &output)?;
        Ok(())
    })
}

/// Detection metrics from confusion counts.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn edgenet_metrics(tp: u64, tn: u64, fp: u64, fn_: u64, out: *mut EdgenetMetrics) -> EdgenetStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = metrics::metrics_from_confusion(&ConfusionMatrix { tp, tn, fp, fn_ });
        *out = EdgenetMetrics {
            accuracy: r.accuracy,
            far: r.far,
            precision: r.precision,
            detection_rate: r.detection_rate,
            f1: r.f1,
            degenerate: u8::from(r.degenerate),
        };
        Ok(())
    })
}

/// Area under the ROC curve of `scores` against 0/1 `labels`.
///
/// # Safety
/// `scores` and `labels` must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn edgenet_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> EdgenetStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let scores = slice_arg(scores, n, "scores")?;
        let labels = slice_arg(labels, n, "labels")?;
        *out = metrics::roc_curve(scores, labels)?.auc;
        Ok(())
    })
}
