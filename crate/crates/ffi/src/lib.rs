//! C interface to `lcfc-core`.
//!
//! Every fallible call returns an [`LcfcStatus`]. On failure the message is
//! available from [`lcfc_last_error`] on the same thread until the next call.
//! Objects are opaque handles released with their matching `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lcfc::clustering::{self, Backend, BackendConfig};
use lcfc::distance::{GlobalDistanceMatrix, Provenance};
use lcfc::federation::{self, PartitionMode, PartitionSpec, ProtocolConfig};
use lcfc::field::FieldParams;
use lcfc::lcc::{CodingScheme, NoiseMode};
use lcfc::metrics::{self, NmiNorm};
use lcfc::quantize::DequantExponent;
use lcfc::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LcfcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    DataError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

pub const LCFC_BACKEND_KM: u32 = 0;
pub const LCFC_BACKEND_KMED: u32 = 1;
pub const LCFC_BACKEND_FCM: u32 = 2;
pub const LCFC_BACKEND_SC: u32 = 3;
pub const LCFC_BACKEND_NMF: u32 = 4;
pub const LCFC_BACKEND_DBSCAN: u32 = 5;
pub const LCFC_BACKEND_HC: u32 = 6;

pub const LCFC_PARTITION_IID: u32 = 0;
/// `param` is the fraction drawn from the client's designated class.
pub const LCFC_PARTITION_SKEW: u32 = 1;
/// `param` is the Dirichlet concentration.
pub const LCFC_PARTITION_DIRICHLET: u32 = 2;

/// Public coding agreement: field, client count, segments and noise.
pub struct LcfcScheme {
    inner: CodingScheme,
}

/// Dense `n x n` squared-distance matrix.
pub struct LcfcMatrix {
    inner: GlobalDistanceMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> LcfcStatus {
    match e.exit_code() {
        3 => LcfcStatus::Infeasible,
        4 => LcfcStatus::DataError,
        _ => LcfcStatus::InvalidArgument,
    }
}

struct Fail(LcfcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(LcfcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(LcfcStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LcfcStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LcfcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            LcfcStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn backend_of(id: u32) -> Result<Backend, Fail> {
    Backend::ALL.get(id as usize).copied().ok_or_else(|| invalid(format!("unknown backend id {id}")))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn lcfc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null.
///
/// The pointer stays valid until the next `lcfc_*` call on the same thread.
#[no_mangle]
pub extern "C" fn lcfc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a scheme with the default evaluation nodes.
///
/// `p = 0` selects the default Mersenne prime `2^61 - 1`.
#[no_mangle]
pub unsafe extern "C" fn lcfc_scheme_new(
    p: u64,
    q: u32,
    m: usize,
    l: usize,
    t: usize,
    out: *mut *mut LcfcScheme,
) -> LcfcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = if p == 0 { lcfc::field::MERSENNE_61 } else { p };
        let scheme = CodingScheme::new(FieldParams::new(p, q)?, m, l, t)?;
        scheme.ensure_decodable()?;
        *out = Box::into_raw(Box::new(LcfcScheme { inner: scheme }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lcfc_scheme_free(scheme: *mut LcfcScheme) {
    if !scheme.is_null() {
        drop(Box::from_raw(scheme));
    }
}

/// Minimum number of client reports needed to decode, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn lcfc_scheme_threshold(scheme: *const LcfcScheme) -> usize {
    scheme.as_ref().map_or(0, |s| s.inner.threshold())
}

/// Runs the full protocol in process on `n` samples of `d` features
/// (row-major) and returns the decoded squared-distance matrix.
///
/// `labels` may be null for [`LCFC_PARTITION_IID`]; the skewed partitions
/// need one class id per sample.
#[no_mangle]
pub unsafe extern "C" fn lcfc_reconstruct(
    scheme: *const LcfcScheme,
    data: *const f64,
    n: usize,
    d: usize,
    labels: *const usize,
    partition: u32,
    param: f64,
    seed: u64,
    out: *mut *mut LcfcMatrix,
) -> LcfcStatus {
    guard(|| {
        let scheme = scheme.as_ref().ok_or_else(|| null("scheme"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 || d == 0 {
            return Err(invalid("n and d must be positive"));
        }
        let len = n.checked_mul(d).ok_or_else(|| invalid("n * d overflows"))?;
        let flat = slice(data, len, "data")?;
        let labels = if labels.is_null() { None } else { Some(slice(labels, n, "labels")?) };
        let mode = match partition {
            LCFC_PARTITION_IID => PartitionMode::EvenIid,
            LCFC_PARTITION_SKEW => PartitionMode::LabelSkew(param),
            LCFC_PARTITION_DIRICHLET => PartitionMode::Dirichlet(param),
            other => return Err(invalid(format!("unknown partition id {other}"))),
        };
        let rows: Vec<Vec<f64>> = flat.chunks_exact(d).map(<[f64]>::to_vec).collect();
        let spec = PartitionSpec { mode, m: scheme.inner.m(), seed };
        let cfg = ProtocolConfig { scheme: scheme.inner.clone(), noise: NoiseMode::Seeded(seed), dequant: DequantExponent::TwoQ };
        let output = federation::reconstruct(&rows, labels, &spec, &cfg)?;
        *out = Box::into_raw(Box::new(LcfcMatrix { inner: output.matrix }));
        Ok(())
    })
}

/// Wraps a caller-supplied symmetric matrix with a zero diagonal.
#[no_mangle]
pub unsafe extern "C" fn lcfc_matrix_from_dense(data: *const f64, n: usize, out: *mut *mut LcfcMatrix) -> LcfcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(n).ok_or_else(|| invalid("n * n overflows"))?;
        let values = slice(data, len, "data")?.to_vec();
        let m = GlobalDistanceMatrix::from_dense(n, values, Provenance::Oracle)?;
        *out = Box::into_raw(Box::new(LcfcMatrix { inner: m }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lcfc_matrix_free(matrix: *mut LcfcMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Side length, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn lcfc_matrix_n(matrix: *const LcfcMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.inner.n())
}

#[no_mangle]
pub unsafe extern "C" fn lcfc_matrix_get(matrix: *const LcfcMatrix, i: usize, j: usize, out: *mut f64) -> LcfcStatus {
    guard(|| {
        let m = matrix.as_ref().ok_or_else(|| null("matrix"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let n = m.inner.n();
        if i >= n || j >= n {
            return Err(invalid(format!("index ({i}, {j}) out of bounds for n = {n}")));
        }
        *out = m.inner.get(i, j);
        Ok(())
    })
}

/// Copies the matrix row-major into `buf`, which must hold `n * n` values.
#[no_mangle]
pub unsafe extern "C" fn lcfc_matrix_copy(matrix: *const LcfcMatrix, buf: *mut f64, len: usize) -> LcfcStatus {
    guard(|| {
        let m = matrix.as_ref().ok_or_else(|| null("matrix"))?;
        let src = m.inner.as_slice();
        if len < src.len() {
            return Err(Fail(LcfcStatus::BufferTooSmall, format!("buffer holds {len} values, need {}", src.len())));
        }
        slice_mut(buf, src.len(), "buf")?.copy_from_slice(src);
        Ok(())
    })
}

/// Clusters the matrix with backend defaults and writes one label per
/// sample into `labels` (`len >= n`). DBSCAN noise is reported as -1.
#[no_mangle]
pub unsafe extern "C" fn lcfc_cluster(
    matrix: *const LcfcMatrix,
    backend: u32,
    k: usize,
    seed: u64,
    labels: *mut i64,
    len: usize,
) -> LcfcStatus {
    guard(|| {
        let m = matrix.as_ref().ok_or_else(|| null("matrix"))?;
        let n = m.inner.n();
        if len < n {
            return Err(Fail(LcfcStatus::BufferTooSmall, format!("buffer holds {len} labels, need {n}")));
        }
        let dst = slice_mut(labels, n, "labels")?;
        let cfg = BackendConfig::new(backend_of(backend)?, k, seed);
        let assignment = clustering::cluster(&m.inner, &cfg)?;
        dst.copy_from_slice(&assignment.labels);
        Ok(())
    })
}

/// Cohen's kappa after optimally matching predicted clusters to classes.
#[no_mangle]
pub unsafe extern "C" fn lcfc_kappa(pred: *const i64, truth: *const usize, n: usize, out: *mut f64) -> LcfcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = metrics::kappa(slice(pred, n, "pred")?, slice(truth, n, "truth")?)?;
        Ok(())
    })
}

/// Normalized mutual information, geometric-mean normalization.
#[no_mangle]
pub unsafe extern "C" fn lcfc_nmi(pred: *const i64, truth: *const usize, n: usize, out: *mut f64) -> LcfcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = metrics::nmi(slice(pred, n, "pred")?, slice(truth, n, "truth")?, NmiNorm::Geometric)?;
        Ok(())
    })
}

/// Name of a backend id, static storage, or null if unknown.
#[no_mangle]
pub extern "C" fn lcfc_backend_name(backend: u32) -> *const c_char {
    const NAMES: [&CStr; 7] = [c"km", c"kmed", c"fcm", c"sc", c"nmf", c"dbscan", c"hc"];
    NAMES.get(backend as usize).map_or(ptr::null(), |s| s.as_ptr())
}
