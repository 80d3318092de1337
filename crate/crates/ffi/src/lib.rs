//! C ABI over the kurosawa library.
//!
//! Conventions:
//! - Every fallible function returns a [`KurosawaStatus`]; `KUROSAWA_STATUS_OK`
//!   is zero.
//! - Strings cross the boundary as NUL-terminated UTF-8. Strings returned
//!   through `out` parameters are owned by the caller and must be released
//!   with [`kurosawa_string_free`].
//! - Structured values are exchanged as JSON text.
//! - On failure, [`kurosawa_last_error`] returns a description for the
//!   calling thread, valid until that thread's next call into the library.
//! - Handles are opaque and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use serde_json::Value;

use kurosawa::config::ServiceConfig;
use kurosawa::dataset::{finetune_jsonl, Dataset, DatasetError, DatasetRecord, IngestMode};
use kurosawa::metrics::{metric_report, perplexity};
use kurosawa::plot::validate_annotated_plot;
use kurosawa::screenplay::{decode_tagged, encode_tagged, parse_script, DecodeMode};
use kurosawa::store::{ItemKind, StoreError};
use kurosawa::text::{GenreVocabulary, Scene};
use kurosawa::workbench::{ExportTarget, PlotRequest, RatingRequest, SceneRequest, Workbench, WorkbenchError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KurosawaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    /// The input was read but failed a domain check.
    ValidationFailed = 4,
    BackendFailure = 5,
    NotFound = 6,
    StorageFailure = 7,
    Panic = 99,
}

/// Workbench bound to a data directory.
pub struct KurosawaWorkbench {
    inner: Workbench,
}

/// In-memory dataset under construction.
pub struct KurosawaDataset {
    inner: Dataset,
    vocab: GenreVocabulary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(KurosawaStatus, String);

impl From<WorkbenchError> for Fail {
    fn from(e: WorkbenchError) -> Self {
        let status = if e.is_backend_failure() {
            KurosawaStatus::BackendFailure
        } else {
            match &e {
                WorkbenchError::Store(StoreError::NotFound { .. }) => KurosawaStatus::NotFound,
                WorkbenchError::Store(_) => KurosawaStatus::StorageFailure,
                _ => KurosawaStatus::ValidationFailed,
            }
        };
        Fail(status, e.to_string())
    }
}

fn invalid(e: impl std::fmt::Display) -> Fail {
    Fail(KurosawaStatus::ValidationFailed, e.to_string())
}

fn bad_json(e: serde_json::Error) -> Fail {
    Fail(KurosawaStatus::InvalidJson, e.to_string())
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, recording failures and converting panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KurosawaStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KurosawaStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            KurosawaStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(KurosawaStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(KurosawaStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// # Safety
/// `out` must be null or valid for a pointer write.
unsafe fn write_out(out: *mut *mut c_char, text: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(KurosawaStatus::NullArgument, "out is null".into()));
    }
    let c = CString::new(text).map_err(|_| invalid("output contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn write_json(out: *mut *mut c_char, value: &impl serde::Serialize) -> Result<(), Fail> {
    write_out(out, serde_json::to_string(value).map_err(bad_json)?)
}

/// Description of the calling thread's last failure, or null when the last
/// call succeeded. Owned by the library.
#[no_mangle]
pub extern "C" fn kurosawa_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a plain-text screenplay with the default layout. Writes the
/// parsed script as JSON.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_parse_script(text: *const c_char, out: *mut *mut c_char) -> KurosawaStatus {
    guard(|| {
        let text = read_str(text, "text")?;
        let parsed = parse_script(text, &Default::default()).map_err(invalid)?;
        write_json(out, &parsed)
    })
}

/// Encodes a scene given as JSON into tagged text.
///
/// # Safety
/// `scene_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_encode_scene(scene_json: *const c_char, out: *mut *mut c_char) -> KurosawaStatus {
    guard(|| {
        let scene: Scene = serde_json::from_str(read_str(scene_json, "scene_json")?).map_err(bad_json)?;
        write_out(out, encode_tagged(&scene).map_err(invalid)?)
    })
}

/// Decodes tagged scene text. Writes `{"scene": ..., "warnings": [...]}`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_decode_scene(text: *const c_char, strict: bool, out: *mut *mut c_char) -> KurosawaStatus {
    guard(|| {
        let mode = if strict { DecodeMode::Strict } else { DecodeMode::Lenient };
        let decoded = decode_tagged(read_str(text, "text")?, mode).map_err(invalid)?;
        write_json(out, &decoded)
    })
}

/// Validates an act-annotated plot. The report is written in every case;
/// the status is `VALIDATION_FAILED` when it holds errors.
///
/// # Safety
/// `annotated` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_validate_plot(annotated: *const c_char, out: *mut *mut c_char) -> KurosawaStatus {
    guard(|| {
        let report = validate_annotated_plot(read_str(annotated, "annotated")?);
        write_json(out, &report)?;
        match report.errors.first() {
            None => Ok(()),
            Some(e) => Err(invalid(e)),
        }
    })
}

/// Computes the metric report for
/// `{"candidates": [...], "references": [...], "logprobs": [[...], ...]?}`.
///
/// # Safety
/// `request_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_metric_report(request_json: *const c_char, out: *mut *mut c_char) -> KurosawaStatus {
    guard(|| {
        let mut req: Value = serde_json::from_str(read_str(request_json, "request_json")?).map_err(bad_json)?;
        let mut take = |key: &str| req.get_mut(key).map(Value::take).unwrap_or(Value::Null);
        let candidates: Vec<String> = serde_json::from_value(take("candidates")).map_err(bad_json)?;
        let references: Vec<String> = serde_json::from_value(take("references")).map_err(bad_json)?;
        let logprobs: Option<Vec<Vec<f64>>> = serde_json::from_value(take("logprobs")).map_err(bad_json)?;
        let report = metric_report(&candidates, &references, logprobs.as_deref()).map_err(invalid)?;
        write_json(out, &report)
    })
}

/// Perplexity of `len` natural-log token probabilities.
///
/// # Safety
/// `logprobs` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_perplexity(logprobs: *const f64, len: usize, out: *mut f64) -> KurosawaStatus {
    guard(|| {
        if out.is_null() || (logprobs.is_null() && len > 0) {
            return Err(Fail(KurosawaStatus::NullArgument, "null pointer".into()));
        }
        let values = if len == 0 { &[][..] } else { std::slice::from_raw_parts(logprobs, len) };
        *out = perplexity(values).map_err(invalid)?;
        Ok(())
    })
}

/// Opens a workbench. `config_toml` may be null for defaults; `data_dir`,
/// when non-null, overrides the configured directory. Environment
/// variables apply as for the command-line tool.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_workbench_open(
    config_toml: *const c_char,
    data_dir: *const c_char,
    out: *mut *mut KurosawaWorkbench,
) -> KurosawaStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(KurosawaStatus::NullArgument, "out is null".into()));
        }
        let mut config = if config_toml.is_null() {
            ServiceConfig::default()
        } else {
            let text = read_str(config_toml, "config_toml")?;
            ServiceConfig::from_toml(text, std::path::Path::new("<config_toml>")).map_err(invalid)?
        };
        config.apply_env(|k| std::env::var(k).ok()).map_err(invalid)?;
        if !data_dir.is_null() {
            config.data_dir = PathBuf::from(read_str(data_dir, "data_dir")?);
        }
        let inner = Workbench::open(config).map_err(|e| Fail(KurosawaStatus::StorageFailure, e.to_string()))?;
        *out = Box::into_raw(Box::new(KurosawaWorkbench { inner }));
        Ok(())
    })
}

/// # Safety
/// `wb` must be null or a handle from [`kurosawa_workbench_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_workbench_free(wb: *mut KurosawaWorkbench) {
    if !wb.is_null() {
        drop(Box::from_raw(wb));
    }
}

unsafe fn workbench<'a>(wb: *const KurosawaWorkbench) -> Result<&'a Workbench, Fail> {
    wb.as_ref()
        .map(|w| &w.inner)
        .ok_or(Fail(KurosawaStatus::NullArgument, "workbench is null".into()))
}

/// Generates and stores a plot. `request_json` has the fields of the HTTP
/// request body. Writes the stored item.
///
/// # Safety
/// `wb` must be a live handle; `request_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_workbench_generate_plot(
    wb: *const KurosawaWorkbench,
    request_json: *const c_char,
    out: *mut *mut c_char,
) -> KurosawaStatus {
    guard(|| {
        let wb = workbench(wb)?;
        let req: PlotRequest = serde_json::from_str(read_str(request_json, "request_json")?).map_err(bad_json)?;
        write_json(out, &wb.generate_plot(&req)?)
    })
}

/// Generates and stores a scene. Writes the stored item.
///
/// # Safety
/// `wb` must be a live handle; `request_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_workbench_generate_scene(
    wb: *const KurosawaWorkbench,
    request_json: *const c_char,
    out: *mut *mut c_char,
) -> KurosawaStatus {
    guard(|| {
        let wb = workbench(wb)?;
        let req: SceneRequest = serde_json::from_str(read_str(request_json, "request_json")?).map_err(bad_json)?;
        write_json(out, &wb.generate_scene(&req)?)
    })
}

/// # Safety
/// `wb` must be a live handle; `id` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_workbench_get_item(
    wb: *const KurosawaWorkbench,
    id: *const c_char,
    out: *mut *mut c_char,
) -> KurosawaStatus {
    guard(|| {
        let wb = workbench(wb)?;
        write_json(out, &wb.get(read_str(id, "id")?)?)
    })
}

/// Stores a rating given as `{"item_id", "rater_id"?, "scores"}`.
///
/// # Safety
/// `wb` must be a live handle; `request_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_workbench_add_rating(
    wb: *const KurosawaWorkbench,
    request_json: *const c_char,
    out: *mut *mut c_char,
) -> KurosawaStatus {
    guard(|| {
        let wb = workbench(wb)?;
        let req: RatingRequest = serde_json::from_str(read_str(request_json, "request_json")?).map_err(bad_json)?;
        write_json(out, &wb.add_rating(req)?)
    })
}

/// Likert summary over stored ratings, optionally restricted to items of
/// `kind` (`plot_generation` or `scene_generation`; null for all).
///
/// # Safety
/// `wb` must be a live handle; `kind` null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_workbench_rating_summary(
    wb: *const KurosawaWorkbench,
    kind: *const c_char,
    out: *mut *mut c_char,
) -> KurosawaStatus {
    guard(|| {
        let wb = workbench(wb)?;
        let kind = if kind.is_null() {
            None
        } else {
            let k = read_str(kind, "kind")?;
            Some(ItemKind::parse(k).ok_or_else(|| invalid(format!("unknown kind `{k}`")))?)
        };
        let summary = wb.rating_summary(kind, None).map_err(|e| match e {
            WorkbenchError::Metric(m) => Fail(KurosawaStatus::NotFound, m.to_string()),
            other => other.into(),
        })?;
        write_json(out, &summary)
    })
}

/// Creates an empty in-memory dataset with the default genre vocabulary.
///
/// # Safety
/// `name` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_dataset_new(name: *const c_char, out: *mut *mut KurosawaDataset) -> KurosawaStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        if out.is_null() {
            return Err(Fail(KurosawaStatus::NullArgument, "out is null".into()));
        }
        *out = Box::into_raw(Box::new(KurosawaDataset {
            inner: Dataset::new(name),
            vocab: GenreVocabulary::default(),
        }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from [`kurosawa_dataset_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_dataset_free(ds: *mut KurosawaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_dataset_len(ds: *const KurosawaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Adds one record given as JSON. Writes the warnings array (empty in
/// strict mode) when `out_warnings` is non-null.
///
/// # Safety
/// `ds` must be a live handle; `record_json` NUL-terminated; `out_warnings`
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_dataset_add_record(
    ds: *mut KurosawaDataset,
    record_json: *const c_char,
    lenient: bool,
    out_warnings: *mut *mut c_char,
) -> KurosawaStatus {
    guard(|| {
        let ds = ds
            .as_mut()
            .ok_or(Fail(KurosawaStatus::NullArgument, "dataset is null".into()))?;
        let record: DatasetRecord = serde_json::from_str(read_str(record_json, "record_json")?).map_err(bad_json)?;
        let mode = if lenient { IngestMode::Lenient } else { IngestMode::Strict };
        let warnings = ds
            .inner
            .add_record(record, mode, &ds.vocab)
            .map_err(|e: DatasetError| invalid(e))?;
        if !out_warnings.is_null() {
            write_json(out_warnings, &warnings)?;
        }
        Ok(())
    })
}

/// Fine-tune JSONL export for `profile` (O, AS, AL, ASG, ALG or `scene`)
/// with the default delimiters.
///
/// # Safety
/// `ds` must be a live handle; `profile` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kurosawa_dataset_export(
    ds: *const KurosawaDataset,
    profile: *const c_char,
    out: *mut *mut c_char,
) -> KurosawaStatus {
    guard(|| {
        let ds = ds
            .as_ref()
            .ok_or(Fail(KurosawaStatus::NullArgument, "dataset is null".into()))?;
        let p = read_str(profile, "profile")?;
        let target = ExportTarget::parse(p).ok_or_else(|| invalid(format!("unknown profile `{p}`")))?;
        let format = Default::default();
        let records = match target {
            ExportTarget::Plot(id) => ds.inner.export_finetune(&id.profile(), &format),
            ExportTarget::Scene => ds.inner.export_scene_finetune(&format),
        }
        .map_err(invalid)?;
        write_out(out, finetune_jsonl(&records, target.label(), &format))
    })
}
