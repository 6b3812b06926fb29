//! C ABI over the devminer core.
//!
//! Conventions: every fallible function returns a [`DmStatus`] and writes
//! results through out-pointers. On failure a message is kept per thread and
//! can be read with [`dm_last_error`]. Strings returned as `char *` are owned
//! by the caller and must be released with [`dm_string_free`]. Handles are
//! opaque and released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use devminer::ingest::{ingest_repository, IngestOptions, RepositorySummary, SourceFormat};
use devminer::labeling::{cohens_kappa, label_scripts, read_labels_jsonl};
use devminer::metrics::{metric_table, table_from_csv, table_to_csv, Dataset, MetricOptions, MetricVector};
use devminer::pipeline::{run_pipeline, AtStage, FailureKind, PipelineConfig, PipelineError, Stage};
use devminer::stats::{cliffs_delta_value, mann_whitney_one_sided, Direction};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Unreadable or malformed input.
    Input = 4,
    /// A computation stage failed.
    Stage = 5,
    /// Configuration rejected.
    Validation = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Expected direction of a one-sided test.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmDirection {
    DefectiveGreater = 0,
    NeutralGreater = 1,
}

/// A commit history loaded from a repository or log export.
pub struct DmHistory {
    summary: RepositorySummary,
}

/// Activity metric rows, one per script.
pub struct DmMetricTable {
    rows: Vec<MetricVector>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: DmStatus, msg: impl Into<String>) -> DmStatus {
    set_error(msg);
    status
}

fn from_pipeline(e: PipelineError) -> DmStatus {
    let status = match e.kind {
        FailureKind::Input => DmStatus::Input,
        FailureKind::Stage => DmStatus::Stage,
        FailureKind::Validation => DmStatus::Validation,
    };
    fail(status, e.to_string())
}

/// Runs `f`, converting panics into [`DmStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), DmStatus>) -> DmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DmStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(DmStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, DmStatus> {
    if p.is_null() {
        return Err(fail(DmStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DmStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], DmStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(DmStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, DmStatus> {
    p.as_mut().ok_or_else(|| fail(DmStatus::NullPointer, format!("{name} is null")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, DmStatus> {
    p.as_ref().ok_or_else(|| fail(DmStatus::NullPointer, format!("{name} is null")))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn dm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a history. `format` is `"jsonl"` (a log export) or `"git"` (a
/// repository directory); NULL means `"jsonl"`. Only `.pp` files count as
/// IaC scripts.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_history_load(
    source: *const c_char,
    format: *const c_char,
    out: *mut *mut DmHistory,
) -> DmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let source = PathBuf::from(str_arg(source, "source")?);
        let format = match if format.is_null() { "jsonl" } else { str_arg(format, "format")? } {
            "jsonl" => SourceFormat::Jsonl,
            "git" => SourceFormat::Git,
            other => return Err(fail(DmStatus::InvalidArgument, format!("unknown format {other:?}"))),
        };
        let summary =
            ingest_repository(&source, format, &IngestOptions::default()).at(Stage::Ingest).map_err(from_pipeline)?;
        *out = Box::into_raw(Box::new(DmHistory { summary }));
        Ok(())
    })
}

/// Number of commits in the history; 0 for NULL.
///
/// # Safety
/// `history` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_history_commit_count(history: *const DmHistory) -> usize {
    history.as_ref().map_or(0, |h| h.summary.commits.len())
}

/// Number of IaC scripts seen in the history; 0 for NULL.
///
/// # Safety
/// `history` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_history_iac_file_count(history: *const DmHistory) -> usize {
    history.as_ref().map_or(0, |h| h.summary.iac_files)
}

/// # Safety
/// `history` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dm_history_free(history: *mut DmHistory) {
    if !history.is_null() {
        drop(Box::from_raw(history));
    }
}

/// Computes the metric table from a history and a JSON-lines label file.
///
/// # Safety
/// `history` must be a live handle; `labels_path` NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dm_metric_table_compute(
    history: *const DmHistory,
    labels_path: *const c_char,
    normalize_edge_betweenness: bool,
    out: *mut *mut DmMetricTable,
) -> DmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let history = handle(history, "history")?;
        let labels = read_labels_jsonl(&PathBuf::from(str_arg(labels_path, "labels_path")?))
            .at(Stage::Label)
            .map_err(from_pipeline)?;
        let commits = history.summary.commits.clone();
        let iac = Default::default();
        let classes = label_scripts(&labels, &commits, &iac).at(Stage::Label).map_err(from_pipeline)?;
        let rows = metric_table(
            &Dataset { commits, classes, iac },
            MetricOptions {
                normalize_edge_betweenness,
            },
        )
        .at(Stage::Metrics)
        .map_err(from_pipeline)?;
        *out = Box::into_raw(Box::new(DmMetricTable { rows }));
        Ok(())
    })
}

/// Loads a metric table from CSV as written by `devminer metrics`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_metric_table_load_csv(path: *const c_char, out: *mut *mut DmMetricTable) -> DmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let file = std::fs::File::open(path).map_err(|e| fail(DmStatus::Input, format!("{path}: {e}")))?;
        let rows = table_from_csv(file).at(Stage::Metrics).map_err(from_pipeline)?;
        *out = Box::into_raw(Box::new(DmMetricTable { rows }));
        Ok(())
    })
}

/// Number of rows; 0 for NULL.
///
/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_metric_table_len(table: *const DmMetricTable) -> usize {
    table.as_ref().map_or(0, |t| t.rows.len())
}

unsafe fn row_of<'a>(table: *const DmMetricTable, row: usize) -> Result<&'a MetricVector, DmStatus> {
    let t = handle(table, "table")?;
    t.rows
        .get(row)
        .ok_or_else(|| fail(DmStatus::OutOfRange, format!("row {row} of {}", t.rows.len())))
}

/// Reads one metric by column name (`developers`, `disjointness`,
/// `highest_contrib`, `minors`, `norm_commit_size`, `scatteredness`,
/// `unfocused`, `size_loc`, `age_months`). Undefined values read as NaN.
///
/// # Safety
/// `table` must be a live handle; `metric` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_metric_table_value(
    table: *const DmMetricTable,
    row: usize,
    metric: *const c_char,
    out: *mut f64,
) -> DmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = row_of(table, row)?;
        let name = str_arg(metric, "metric")?;
        const KNOWN: [&str; 9] = [
            "developers",
            "disjointness",
            "highest_contrib",
            "minors",
            "norm_commit_size",
            "scatteredness",
            "unfocused",
            "size_loc",
            "age_months",
        ];
        if !KNOWN.contains(&name) {
            return Err(fail(DmStatus::InvalidArgument, format!("unknown metric {name:?}")));
        }
        *out = r.metric(name).unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Script path of a row, or NULL on error. Free with [`dm_string_free`].
///
/// # Safety
/// `table` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_metric_table_script(table: *const DmMetricTable, row: usize) -> *mut c_char {
    let mut s = ptr::null_mut();
    guard(|| {
        s = owned_string(row_of(table, row)?.script_path.clone());
        Ok(())
    });
    s
}

/// # Safety
/// `table` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_metric_table_is_defective(
    table: *const DmMetricTable,
    row: usize,
    out: *mut bool,
) -> DmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = row_of(table, row)?.is_defective;
        Ok(())
    })
}

/// The table as CSV, or NULL for a NULL handle. Free with [`dm_string_free`].
///
/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_metric_table_to_csv(table: *const DmMetricTable) -> *mut c_char {
    match table.as_ref() {
        Some(t) => owned_string(table_to_csv(&t.rows)),
        None => {
            set_error("table is null");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `table` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dm_metric_table_free(table: *mut DmMetricTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// One-sided Mann-Whitney U test. `u_out` receives U of the defective
/// sample, `p_out` the p-value. Either out-pointer may be NULL.
///
/// # Safety
/// Arrays must hold at least the given number of elements.
#[no_mangle]
pub unsafe extern "C" fn dm_mann_whitney(
    defective: *const f64,
    n_defective: usize,
    neutral: *const f64,
    n_neutral: usize,
    direction: DmDirection,
    u_out: *mut f64,
    p_out: *mut f64,
) -> DmStatus {
    guard(|| {
        let x = slice_arg(defective, n_defective, "defective")?;
        let y = slice_arg(neutral, n_neutral, "neutral")?;
        let dir = match direction {
            DmDirection::DefectiveGreater => Direction::DefectiveGreater,
            DmDirection::NeutralGreater => Direction::NeutralGreater,
        };
        let r = mann_whitney_one_sided("ffi", x, y, dir).map_err(|e| fail(DmStatus::InvalidArgument, e.to_string()))?;
        if let Some(u) = u_out.as_mut() {
            *u = r.u_statistic;
        }
        if let Some(p) = p_out.as_mut() {
            *p = r.p_value;
        }
        Ok(())
    })
}

/// Cliff's delta of `x` against `y`.
///
/// # Safety
/// Arrays must hold at least the given number of elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_cliffs_delta(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    out: *mut f64,
) -> DmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let x = slice_arg(x, nx, "x")?;
        let y = slice_arg(y, ny, "y")?;
        *out = cliffs_delta_value(x, y).map_err(|e| fail(DmStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Cohen's kappa for two raters' yes/no ratings of `n` items.
///
/// # Safety
/// Both arrays must hold `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_cohens_kappa(a: *const bool, b: *const bool, n: usize, out: *mut f64) -> DmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let a = slice_arg(a, n, "a")?;
        let b = slice_arg(b, n, "b")?;
        *out = cohens_kappa(a, b).map_err(|e| fail(DmStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Runs the whole pipeline from a TOML configuration file.
///
/// # Safety
/// `config_path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dm_run_pipeline(config_path: *const c_char) -> DmStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(config_path, "config_path")?);
        let cfg = PipelineConfig::load(&path).map_err(from_pipeline)?;
        run_pipeline(&cfg).map_err(from_pipeline)?;
        Ok(())
    })
}
