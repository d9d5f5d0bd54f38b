//! C ABI for the edgehst detector.
//!
//! Every fallible function returns an [`EhStatus`]; on failure a message is
//! available from [`eh_last_error`] on the same thread. Handles are opaque and
//! must be released with their `_free` function. Strings returned by the
//! library are owned by the caller and released with [`eh_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use edgehst::metrics;
use edgehst::pipeline::{Forests, Pipeline, PipelineConfig};
use edgehst::threshold;
use edgehst::{EncoderModel, Error, TemporalEdge, TemporalGraph, Timestamp};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidData = 4,
    OutOfOrder = 5,
    VersionMismatch = 6,
    Io = 7,
    UndefinedMetric = 8,
    StaticMode = 9,
    Internal = 10,
    Panic = 11,
}

/// One scored edge.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct EhScore {
    pub seq: u64,
    pub score: f64,
    pub source_term: f64,
    pub dest_term: f64,
    pub edge_term: f64,
    pub cache_hit: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct EhThreshold {
    pub tau_star: f64,
    pub objective: f64,
    pub left_size: u64,
    pub right_size: u64,
    pub degenerate: bool,
}

/// Opaque streaming detector.
pub struct EhPipeline {
    inner: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EhStatus {
    match e {
        Error::Stream { source, .. } => status_of(source),
        Error::Config(_) | Error::Untrained | Error::DimensionMismatch { .. } => {
            EhStatus::InvalidConfig
        }
        Error::Monotonicity { .. } => EhStatus::OutOfOrder,
        Error::Version { .. } => EhStatus::VersionMismatch,
        Error::Io { .. } => EhStatus::Io,
        Error::UndefinedMetric(_) => EhStatus::UndefinedMetric,
        Error::StaticMode => EhStatus::StaticMode,
        Error::Internal(_) => EhStatus::Internal,
        _ => EhStatus::InvalidData,
    }
}

fn fail(status: EhStatus, msg: impl Into<String>) -> EhStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), EhStatus>) -> EhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EhStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(EhStatus::Panic, "panic inside edgehst"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, EhStatus>;
}

impl<T> OrStatus<T> for edgehst::Result<T> {
    fn or_status(self) -> Result<T, EhStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, EhStatus> {
    if p.is_null() {
        return Err(fail(EhStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(EhStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], EhStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(EhStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, EhStatus> {
    // SAFETY: non-null pointers are required by the caller contract to be
    // valid and writable.
    unsafe { p.as_mut() }.ok_or_else(|| fail(EhStatus::NullPointer, format!("`{name}` is null")))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn eh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn eh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a detector from a serialized model and forests.
///
/// `config_json` may be null for the default pipeline configuration. The
/// detector starts with an empty graph; feed history with
/// [`eh_pipeline_observe`].
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eh_pipeline_new(
    model_json: *const c_char,
    forests_json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut EhPipeline,
) -> EhStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = EncoderModel::from_json(str_arg(model_json, "model_json")?).or_status()?;
        let forests = Forests::from_json(str_arg(forests_json, "forests_json")?).or_status()?;
        let config = if config_json.is_null() {
            PipelineConfig {
                mode: forests.mode(),
                forest: forests.node.params,
                ..PipelineConfig::default()
            }
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(Error::from)
                .or_status()?
        };
        let inner = Pipeline::new(model, forests, TemporalGraph::new(), config).or_status()?;
        *out = Box::into_raw(Box::new(EhPipeline { inner }));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from [`eh_pipeline_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eh_pipeline_free(p: *mut EhPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

unsafe fn edge_arg(
    source: *const c_char,
    destination: *const c_char,
    timestamp: Timestamp,
) -> Result<TemporalEdge, EhStatus> {
    Ok(TemporalEdge::new(
        str_arg(source, "source")?,
        str_arg(destination, "destination")?,
        timestamp,
    ))
}

fn pipeline_arg<'a>(p: *mut EhPipeline) -> Result<&'a mut Pipeline, EhStatus> {
    out_arg(p, "pipeline").map(|h| &mut h.inner)
}

/// Adds a history edge to the graph without scoring it.
///
/// # Safety
/// `p` must be a live handle; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn eh_pipeline_observe(
    p: *mut EhPipeline,
    source: *const c_char,
    destination: *const c_char,
    timestamp: i64,
) -> EhStatus {
    guard(|| {
        let pipeline = pipeline_arg(p)?;
        let edge = edge_arg(source, destination, Timestamp::Int(timestamp))?;
        pipeline.warm_up([&edge]).or_status()
    })
}

unsafe fn process(
    p: *mut EhPipeline,
    edge: Result<TemporalEdge, EhStatus>,
    out: *mut EhScore,
) -> Result<(), EhStatus> {
    let pipeline = pipeline_arg(p)?;
    let out = out_arg(out, "out")?;
    let r = pipeline.process_edge(&edge?).or_status()?;
    *out = EhScore {
        seq: r.seq as u64,
        score: r.score,
        source_term: r.components.source,
        dest_term: r.components.destination,
        edge_term: r.components.edge,
        cache_hit: r.cache_hit,
    };
    Ok(())
}

/// Inserts and scores one edge with an integer timestamp.
///
/// # Safety
/// `p` must be a live handle; strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eh_pipeline_process(
    p: *mut EhPipeline,
    source: *const c_char,
    destination: *const c_char,
    timestamp: i64,
    out: *mut EhScore,
) -> EhStatus {
    guard(|| {
        process(
            p,
            edge_arg(source, destination, Timestamp::Int(timestamp)),
            out,
        )
    })
}

/// Same as [`eh_pipeline_process`] with a real-valued timestamp.
///
/// # Safety
/// See [`eh_pipeline_process`].
#[no_mangle]
pub unsafe extern "C" fn eh_pipeline_process_real(
    p: *mut EhPipeline,
    source: *const c_char,
    destination: *const c_char,
    timestamp: f64,
    out: *mut EhScore,
) -> EhStatus {
    guard(|| {
        if !timestamp.is_finite() {
            return Err(fail(EhStatus::InvalidData, "timestamp is not finite"));
        }
        process(
            p,
            edge_arg(source, destination, Timestamp::Real(timestamp)),
            out,
        )
    })
}

/// Serializes the current forests (including any dynamic updates).
/// The returned string is released with [`eh_string_free`].
///
/// # Safety
/// `p` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eh_pipeline_forests_json(
    p: *mut EhPipeline,
    out: *mut *mut c_char,
) -> EhStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let json = pipeline_arg(p)?.forests().to_json().or_status()?;
        *out = CString::new(json)
            .map_err(|_| fail(EhStatus::Internal, "forest JSON contains NUL"))?
            .into_raw();
        Ok(())
    })
}

/// Number of nodes in the detector's graph.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eh_pipeline_node_count(p: *const EhPipeline) -> u64 {
    p.as_ref().map_or(0, |h| h.inner.graph().node_count() as u64)
}

/// # Safety
/// `scores` and `labels` must each hold `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eh_roc_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> EhStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let l = slice_arg(labels, n, "labels")?;
        *out_arg(out, "out")? = metrics::roc_auc(s, l).or_status()?;
        Ok(())
    })
}

/// # Safety
/// `scores` and `labels` must each hold `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eh_average_precision(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> EhStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let l = slice_arg(labels, n, "labels")?;
        *out_arg(out, "out")? = metrics::average_precision(s, l).or_status()?;
        Ok(())
    })
}

/// Fits the minimum weighted Gini threshold on labeled scores.
///
/// # Safety
/// `scores` and `labels` must each hold `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eh_fit_threshold(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut EhThreshold,
) -> EhStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let l = slice_arg(labels, n, "labels")?;
        let data: Vec<(f64, u8)> = s.iter().copied().zip(l.iter().copied()).collect();
        let r = threshold::fit_threshold(&data).or_status()?;
        *out_arg(out, "out")? = EhThreshold {
            tau_star: r.tau_star,
            objective: r.objective,
            left_size: r.partition_sizes.0 as u64,
            right_size: r.partition_sizes.1 as u64,
            degenerate: r.degenerate,
        };
        Ok(())
    })
}

/// Writes `score > tau` as 0/1 into `out_labels`.
///
/// # Safety
/// `scores` and `out_labels` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn eh_classify(
    scores: *const f64,
    n: usize,
    tau: f64,
    out_labels: *mut u8,
) -> EhStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        if n > 0 && out_labels.is_null() {
            return Err(fail(EhStatus::NullPointer, "`out_labels` is null"));
        }
        for (i, &v) in s.iter().enumerate() {
            *out_labels.add(i) = u8::from(v > tau);
        }
        Ok(())
    })
}
