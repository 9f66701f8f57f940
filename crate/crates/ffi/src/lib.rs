//! C ABI for the anonymixer core: opaque handles over datasets and cluster
//! assignments, status-code error reporting with a thread-local message, and
//! a one-call entry point for the full pipeline.
//!
//! Conventions:
//! - Every fallible function returns [`AnxStatus`] and writes results through
//!   out-pointers, which are only touched on `Ok`.
//! - On any non-`Ok` status the thread-local message from [`anx_last_error`]
//!   describes the failure; the pointer stays valid until the next failing
//!   call on the same thread.
//! - Handles are freed exactly once with their matching `anx_*_free`
//!   function; strings returned through out-pointers are freed with
//!   [`anx_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use anonymixer::cluster::{agglomerative_fit, dbscan_fit, kmeans_fit, ClusterAssignment, DbscanParams};
use anonymixer::config::load_config;
use anonymixer::dataio::{generate_toy_telemetry, load_csv, Dataset, Schema};
use anonymixer::error::Error;
use anonymixer::ghmm::{ghmm_decode, ghmm_fit};
use anonymixer::metrics::score_all;
use anonymixer::pipeline::run_pipeline;

/// Result of every fallible call. The first four values match the CLI's
/// process exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnxStatus {
    /// Success.
    Ok = 0,
    /// Invalid arguments or an unreadable/unwritable file.
    Usage = 1,
    /// Malformed data or a violated call contract.
    Data = 2,
    /// Numeric breakdown (undefined metric, divergence, non-finite values).
    Numeric = 3,
    /// A required pointer argument was null.
    NullPointer = 4,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 5,
    /// An internal invariant failed; the library state is still consistent.
    Panic = 6,
}

/// Opaque dataset handle.
pub struct AnxDataset(Dataset);

/// Opaque cluster-assignment handle.
pub struct AnxLabels(ClusterAssignment);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("nul bytes removed");
    });
}

fn fail(status: AnxStatus, message: &str) -> AnxStatus {
    set_last_error(message);
    status
}

fn fail_error(err: Error) -> AnxStatus {
    let status = match err {
        Error::Usage(_) | Error::Io { .. } => AnxStatus::Usage,
        Error::Data(_) | Error::Contract(_) => AnxStatus::Data,
        Error::Numeric(_) => AnxStatus::Numeric,
    };
    fail(status, &err.to_string())
}

/// Run `f` with panics converted to `AnxStatus::Panic` so unwinding never
/// crosses the FFI boundary.
fn guarded<F: FnOnce() -> AnxStatus>(f: F) -> AnxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(AnxStatus::Panic, "internal panic; state unchanged"),
    }
}

/// # Safety
/// `ptr` must be null or point to a valid nul-terminated string.
unsafe fn required_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, AnxStatus> {
    if ptr.is_null() {
        return Err(fail(AnxStatus::NullPointer, &format!("{name} is null")));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| fail(AnxStatus::InvalidUtf8, &format!("{name} is not valid UTF-8")))
}

unsafe fn required_ref<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, AnxStatus> {
    if ptr.is_null() {
        return Err(fail(AnxStatus::NullPointer, &format!("{name} is null")));
    }
    Ok(unsafe { &*ptr })
}

fn require_out<T>(ptr: *mut T, name: &str) -> Result<(), AnxStatus> {
    if ptr.is_null() {
        return Err(fail(AnxStatus::NullPointer, &format!("{name} is null")));
    }
    Ok(())
}

/// Human-readable description of the most recent failure on this thread.
/// Never null; empty before the first failure. Valid until the next failing
/// call on the same thread — do not free.
#[no_mangle]
pub extern "C" fn anx_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string — do not free.
#[no_mangle]
pub extern "C" fn anx_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Free a string returned by this library through an out-pointer.
/// Passing null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library and not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn anx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Load a CSV against a JSON schema (`{"columns":[{"name":...,"kind":...}]}`
/// with kinds `continuous`, `quasi_identifier`, `discrete_label`) into a new
/// dataset handle.
///
/// # Safety
/// `path` and `schema_json` must be valid nul-terminated strings; `out` must
/// point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn anx_dataset_load_csv(
    path: *const c_char,
    schema_json: *const c_char,
    out: *mut *mut AnxDataset,
) -> AnxStatus {
    guarded(|| {
        let path = match unsafe { required_str(path, "path") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let schema_json = match unsafe { required_str(schema_json, "schema_json") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(out, "out") {
            return s;
        }
        let schema: Schema = match serde_json::from_str(schema_json) {
            Ok(s) => s,
            Err(e) => return fail(AnxStatus::Data, &format!("schema_json: {e}")),
        };
        match load_csv(&PathBuf::from(path), &schema) {
            Ok(data) => {
                unsafe { *out = Box::into_raw(Box::new(AnxDataset(data))) };
                AnxStatus::Ok
            }
            Err(e) => fail_error(e),
        }
    })
}

/// Generate seeded toy telemetry: `n` rows from `k` unit-variance Gaussian
/// blobs in `m` dimensions with pairwise centroid distance `separation`.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn anx_dataset_toy(
    seed: u64,
    n: usize,
    k: usize,
    m: usize,
    separation: f64,
    out: *mut *mut AnxDataset,
) -> AnxStatus {
    guarded(|| {
        if let Err(s) = require_out(out, "out") {
            return s;
        }
        match generate_toy_telemetry(seed, n, k, m, separation) {
            Ok((data, _)) => {
                unsafe { *out = Box::into_raw(Box::new(AnxDataset(data))) };
                AnxStatus::Ok
            }
            Err(e) => fail_error(e),
        }
    })
}

/// Row count of a dataset.
///
/// # Safety
/// `dataset` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anx_dataset_n_rows(
    dataset: *const AnxDataset,
    out: *mut usize,
) -> AnxStatus {
    guarded(|| {
        let dataset = match unsafe { required_ref(dataset, "dataset") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(out, "out") {
            return s;
        }
        unsafe { *out = dataset.0.n_rows() };
        AnxStatus::Ok
    })
}

/// Continuous-feature count of a dataset.
///
/// # Safety
/// `dataset` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anx_dataset_n_features(
    dataset: *const AnxDataset,
    out: *mut usize,
) -> AnxStatus {
    guarded(|| {
        let dataset = match unsafe { required_ref(dataset, "dataset") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(out, "out") {
            return s;
        }
        unsafe { *out = dataset.0.n_features() };
        AnxStatus::Ok
    })
}

/// Free a dataset handle. Passing null is a no-op.
///
/// # Safety
/// `dataset` must be null or a live dataset handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn anx_dataset_free(dataset: *mut AnxDataset) {
    if !dataset.is_null() {
        drop(unsafe { Box::from_raw(dataset) });
    }
}

fn emit_labels(out: *mut *mut AnxLabels, labels: ClusterAssignment) -> AnxStatus {
    unsafe { *out = Box::into_raw(Box::new(AnxLabels(labels))) };
    AnxStatus::Ok
}

/// Cluster with K-means (k-means++ seeding, Lloyd iterations).
///
/// # Safety
/// `dataset` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anx_kmeans(
    dataset: *const AnxDataset,
    k: usize,
    seed: u64,
    out: *mut *mut AnxLabels,
) -> AnxStatus {
    guarded(|| {
        let dataset = match unsafe { required_ref(dataset, "dataset") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(out, "out") {
            return s;
        }
        match kmeans_fit(&dataset.0, k, seed, 300, 1e-9) {
            Ok((_, labels)) => emit_labels(out, labels),
            Err(e) => fail_error(e),
        }
    })
}

/// Cluster with DBSCAN; rows labeled `-1` are noise.
///
/// # Safety
/// `dataset` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anx_dbscan(
    dataset: *const AnxDataset,
    eps: f64,
    min_pts: usize,
    out: *mut *mut AnxLabels,
) -> AnxStatus {
    guarded(|| {
        let dataset = match unsafe { required_ref(dataset, "dataset") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(out, "out") {
            return s;
        }
        match DbscanParams::new(eps, min_pts) {
            Ok(params) => emit_labels(out, dbscan_fit(&dataset.0, &params)),
            Err(e) => fail_error(e),
        }
    })
}

/// Fit a diagonal-covariance Gaussian hidden Markov model and decode each
/// row's most likely state as its cluster label.
///
/// # Safety
/// `dataset` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anx_ghmm(
    dataset: *const AnxDataset,
    states: usize,
    seed: u64,
    out: *mut *mut AnxLabels,
) -> AnxStatus {
    guarded(|| {
        let dataset = match unsafe { required_ref(dataset, "dataset") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(out, "out") {
            return s;
        }
        let fitted = ghmm_fit(&dataset.0, states, seed, 200, 1e-6)
            .and_then(|(model, _)| ghmm_decode(&model, &dataset.0));
        match fitted {
            Ok(labels) => emit_labels(out, labels),
            Err(e) => fail_error(e),
        }
    })
}

/// Cluster with agglomerative (Ward) clustering cut at `k` clusters.
///
/// # Safety
/// `dataset` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anx_agglomerative(
    dataset: *const AnxDataset,
    k: usize,
    out: *mut *mut AnxLabels,
) -> AnxStatus {
    guarded(|| {
        let dataset = match unsafe { required_ref(dataset, "dataset") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(out, "out") {
            return s;
        }
        match agglomerative_fit(&dataset.0, k) {
            Ok((_, labels)) => emit_labels(out, labels),
            Err(e) => fail_error(e),
        }
    })
}

/// Row count covered by a cluster assignment.
///
/// # Safety
/// `labels` must be a live labels handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anx_labels_len(
    labels: *const AnxLabels,
    out: *mut usize,
) -> AnxStatus {
    guarded(|| {
        let labels = match unsafe { required_ref(labels, "labels") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(out, "out") {
            return s;
        }
        unsafe { *out = labels.0.n_rows() };
        AnxStatus::Ok
    })
}

/// Number of clusters (noise rows excluded).
///
/// # Safety
/// `labels` must be a live labels handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn anx_labels_n_clusters(
    labels: *const AnxLabels,
    out: *mut usize,
) -> AnxStatus {
    guarded(|| {
        let labels = match unsafe { required_ref(labels, "labels") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(out, "out") {
            return s;
        }
        unsafe { *out = labels.0.n_clusters() };
        AnxStatus::Ok
    })
}

/// Copy all row labels into `buffer`, which must hold exactly
/// `anx_labels_len` entries. Noise rows are `-1`.
///
/// # Safety
/// `labels` must be a live labels handle; `buffer` must point to writable
/// storage for `buffer_len` values.
#[no_mangle]
pub unsafe extern "C" fn anx_labels_copy(
    labels: *const AnxLabels,
    buffer: *mut i64,
    buffer_len: usize,
) -> AnxStatus {
    guarded(|| {
        let labels = match unsafe { required_ref(labels, "labels") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(buffer, "buffer") {
            return s;
        }
        let source = labels.0.labels();
        if buffer_len != source.len() {
            return fail(
                AnxStatus::Data,
                &format!("buffer holds {buffer_len} labels, assignment has {}", source.len()),
            );
        }
        unsafe { std::ptr::copy_nonoverlapping(source.as_ptr(), buffer, source.len()) };
        AnxStatus::Ok
    })
}

/// Free a labels handle. Passing null is a no-op.
///
/// # Safety
/// `labels` must be null or a live labels handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn anx_labels_free(labels: *mut AnxLabels) {
    if !labels.is_null() {
        drop(unsafe { Box::from_raw(labels) });
    }
}

/// Compute the three cluster-validation scores of an assignment on a dataset.
///
/// # Safety
/// `dataset` and `labels` must be live handles; the three score pointers
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn anx_scores(
    dataset: *const AnxDataset,
    labels: *const AnxLabels,
    silhouette: *mut f64,
    calinski_harabasz: *mut f64,
    davies_bouldin: *mut f64,
) -> AnxStatus {
    guarded(|| {
        let dataset = match unsafe { required_ref(dataset, "dataset") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let labels = match unsafe { required_ref(labels, "labels") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        if let Err(s) = require_out(silhouette, "silhouette") {
            return s;
        }
        if let Err(s) = require_out(calinski_harabasz, "calinski_harabasz") {
            return s;
        }
        if let Err(s) = require_out(davies_bouldin, "davies_bouldin") {
            return s;
        }
        match score_all(&dataset.0, &labels.0) {
            Ok(scores) => {
                unsafe {
                    *silhouette = scores.silhouette;
                    *calinski_harabasz = scores.calinski_harabasz;
                    *davies_bouldin = scores.davies_bouldin;
                }
                AnxStatus::Ok
            }
            Err(e) => fail_error(e),
        }
    })
}

/// Run the full anonymization pipeline from a config file, emitting all
/// artifacts into `out_dir`. On success `report_json` receives the report
/// as a JSON string (free with `anx_string_free`); pass null to skip it.
///
/// # Safety
/// `config_path` and `out_dir` must be valid nul-terminated strings;
/// `report_json` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn anx_run_pipeline(
    config_path: *const c_char,
    out_dir: *const c_char,
    report_json: *mut *mut c_char,
) -> AnxStatus {
    guarded(|| {
        let config_path = match unsafe { required_str(config_path, "config_path") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let out_dir = match unsafe { required_str(out_dir, "out_dir") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let config = match load_config(&PathBuf::from(config_path)) {
            Ok(c) => c,
            Err(e) => return fail_error(e),
        };
        match run_pipeline(&config, &PathBuf::from(out_dir)) {
            Ok(report) => {
                if !report_json.is_null() {
                    let json = report.to_json().replace('\0', " ");
                    let cstring = CString::new(json).expect("nul bytes removed");
                    unsafe { *report_json = cstring.into_raw() };
                }
                AnxStatus::Ok
            }
            Err(e) => fail_error(e),
        }
    })
}
