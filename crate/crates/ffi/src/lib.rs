//! C ABI over the planning engine and its evaluation toolkit.
//!
//! Conventions:
//! - every fallible call returns a [`CogplanStatus`]; on failure the message
//!   is available from [`cogplan_last_error`] on the same thread;
//! - strings handed out by the library are NUL-terminated UTF-8 and must be
//!   released with [`cogplan_string_free`];
//! - handles are opaque and released with their matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cogplan_core::evalkit::{self, build_report, EvalError, ExactMatcher, MetricsConfig, SentenceExtractor};
use cogplan_core::harness::{dataset_stats, load_dataset, BenchSample, DatasetError, HarnessError, Runtime, Settings};
use cogplan_core::{run_plan, MultimodalQuery, PlanError, PlanTrace};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CogplanStatus {
    Ok = 0,
    /// A null pointer or non-UTF-8 string was passed.
    InvalidArgument = 1,
    /// Input was well-formed but rejected (bad config, unknown ids, ...).
    Validation = 2,
    /// The expert or search backend failed.
    Backend = 3,
    Io = 4,
    /// Malformed JSON, JSONL or TOML.
    Parse = 5,
    /// A bug: the library panicked.
    Internal = 6,
}

/// Opaque planner handle.
pub struct CogplanPlanner {
    settings: Settings,
    runtime: Runtime,
}

/// Opaque handle to a loaded benchmark dataset.
pub struct CogplanDataset {
    samples: Vec<BenchSample>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CogplanStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(CogplanStatus::InvalidArgument, msg.into())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match &e {
            HarnessError::Validation(_) => CogplanStatus::Validation,
            HarnessError::Backend(_) => CogplanStatus::Backend,
            HarnessError::Dataset(d) => return Failure::from_dataset(d, e.to_string()),
            HarnessError::Eval(EvalError::UnknownSamples(_)) => CogplanStatus::Validation,
            HarnessError::Eval(_) => CogplanStatus::Backend,
        };
        Failure(status, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        HarnessError::from(e).into()
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        Failure(CogplanStatus::Validation, e.to_string())
    }
}

impl Failure {
    fn from_dataset(e: &DatasetError, msg: String) -> Self {
        let status = match e {
            DatasetError::Io { .. } => CogplanStatus::Io,
            DatasetError::Schema { .. } => CogplanStatus::Parse,
            DatasetError::DuplicateId { .. } | DatasetError::Empty => CogplanStatus::Validation,
        };
        Failure(status, msg)
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("NUL bytes replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic for `cogplan_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CogplanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            CogplanStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal error: the library panicked");
            CogplanStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::invalid(format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::invalid(format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NUL bytes replaced").into_raw()
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn cogplan_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn cogplan_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a planner from TOML settings. `config_toml` may be null for the
/// defaults; relative paths in it resolve against `base_dir` (null: the
/// working directory). Environment overrides apply as in the CLI.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cogplan_planner_new(
    config_toml: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut CogplanPlanner,
) -> CogplanStatus {
    guard(|| {
        let raw = opt_str_arg(config_toml, "config_toml")?.unwrap_or("");
        let base = opt_str_arg(base_dir, "base_dir")?.unwrap_or(".");
        let env = |name: &str| std::env::var(name).ok();
        let mut settings = Settings::from_toml(raw, Path::new(base)).map_err(|e| match e {
            HarnessError::Validation(msg) if msg.starts_with("config: TOML") => Failure(CogplanStatus::Parse, msg),
            other => other.into(),
        })?;
        settings.apply_env(env);
        let runtime = Runtime::build(&settings, env)?;
        let handle = Box::into_raw(Box::new(CogplanPlanner { settings, runtime }));
        write_out(out, handle, "out").inspect_err(|_| drop(Box::from_raw(handle)))
    })
}

/// Plans and answers one query. `query_json` is an object
/// `{"id": ..., "text": ..., "image": optional locator}`; on success (and on a
/// backend failure, status `Backend`) `*out_trace_json` receives the trace.
///
/// # Safety
/// `planner` must be a live handle; `query_json` NUL-terminated; `out_trace_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cogplan_planner_run(
    planner: *const CogplanPlanner,
    query_json: *const c_char,
    out_trace_json: *mut *mut c_char,
) -> CogplanStatus {
    guard(|| {
        let planner = planner.as_ref().ok_or_else(|| Failure::invalid("planner is null"))?;
        if out_trace_json.is_null() {
            return Err(Failure::invalid("out_trace_json is null"));
        }
        let query: MultimodalQuery = serde_json::from_str(str_arg(query_json, "query_json")?)
            .map_err(|e| Failure(CogplanStatus::Parse, format!("query_json: {e}")))?;
        let backends = planner.runtime.backends(true)?;
        let trace: PlanTrace = run_plan(query, &planner.settings.planner, backends)?;
        let error = trace.error.clone().filter(|_| trace.failed());
        out_trace_json.write(into_c_string(trace.to_json_line()));
        match error {
            Some(msg) => Err(Failure(CogplanStatus::Backend, msg)),
            None => Ok(()),
        }
    })
}

/// # Safety
/// `planner` must be null or a handle from `cogplan_planner_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cogplan_planner_free(planner: *mut CogplanPlanner) {
    if !planner.is_null() {
        drop(Box::from_raw(planner));
    }
}

/// Token-level F1 between a prediction and a reference.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogplan_token_f1(pred: *const c_char, gold: *const c_char, out: *mut f64) -> CogplanStatus {
    guard(|| write_out(out, evalkit::token_f1(str_arg(pred, "pred")?, str_arg(gold, "gold")?), "out"))
}

/// ROUGE-L F-measure.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogplan_rouge_l(pred: *const c_char, gold: *const c_char, out: *mut f64) -> CogplanStatus {
    guard(|| write_out(out, evalkit::rouge_l(str_arg(pred, "pred")?, str_arg(gold, "gold")?), "out"))
}

/// Sentence BLEU against `n_refs` references.
///
/// # Safety
/// `refs` must point to `n_refs` NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogplan_bleu(
    pred: *const c_char,
    refs: *const *const c_char,
    n_refs: usize,
    out: *mut f64,
) -> CogplanStatus {
    guard(|| {
        let pred = str_arg(pred, "pred")?;
        if refs.is_null() && n_refs > 0 {
            return Err(Failure::invalid("refs is null"));
        }
        let refs: Vec<&str> = (0..n_refs)
            .map(|i| str_arg(*refs.add(i), "refs[i]"))
            .collect::<Result<_, _>>()?;
        write_out(out, evalkit::bleu(pred, &refs), "out")
    })
}

/// Loads a JSONL benchmark dataset; image paths resolve against its directory.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogplan_dataset_load(path: *const c_char, out: *mut *mut CogplanDataset) -> CogplanStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let samples = load_dataset(Path::new(path)).map_err(|e| {
            let msg = e.to_string();
            Failure::from_dataset(&e, msg)
        })?;
        let handle = Box::into_raw(Box::new(CogplanDataset { samples }));
        write_out(out, handle, "out").inspect_err(|_| drop(Box::from_raw(handle)))
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cogplan_dataset_len(dataset: *const CogplanDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.samples.len())
}

/// Dataset statistics as a JSON object.
///
/// # Safety
/// `dataset` must be a live handle; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cogplan_dataset_stats_json(
    dataset: *const CogplanDataset,
    out_json: *mut *mut c_char,
) -> CogplanStatus {
    guard(|| {
        let dataset = dataset.as_ref().ok_or_else(|| Failure::invalid("dataset is null"))?;
        let stats = dataset_stats(&dataset.samples).map_err(|e| {
            let msg = e.to_string();
            Failure::from_dataset(&e, msg)
        })?;
        let json = serde_json::to_string(&stats).expect("stats serialize");
        write_out(out_json, into_c_string(json), "out_json")
    })
}

/// # Safety
/// `dataset` must be null or a handle from `cogplan_dataset_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cogplan_dataset_free(dataset: *mut CogplanDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Scores JSONL traces against a dataset with sentence claims and exact
/// matching, writing the metric report as JSON. `label` may be null.
///
/// # Safety
/// `dataset` must be a live handle; strings NUL-terminated; `out_report_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cogplan_evaluate(
    dataset: *const CogplanDataset,
    traces_jsonl: *const c_char,
    label: *const c_char,
    out_report_json: *mut *mut c_char,
) -> CogplanStatus {
    guard(|| {
        let dataset = dataset.as_ref().ok_or_else(|| Failure::invalid("dataset is null"))?;
        let label = opt_str_arg(label, "label")?.unwrap_or("").to_string();
        let traces = str_arg(traces_jsonl, "traces_jsonl")?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<PlanTrace>(l)
                    .map_err(|e| Failure(CogplanStatus::Parse, format!("traces line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = MetricsConfig { extractor: &SentenceExtractor, matcher: &ExactMatcher, label };
        let report = build_report(&traces, &dataset.samples, &cfg)?;
        let json = serde_json::to_string(&report).expect("report serializes");
        write_out(out_report_json, into_c_string(json), "out_report_json")
    })
}
