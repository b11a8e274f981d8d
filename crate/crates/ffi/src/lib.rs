//! C interface to `ksdm`.
//!
//! Handles are created from JSON descriptions and released with the matching
//! `_free`. Matrices cross the boundary as row-major `double` arrays; a sample
//! of `n` points on a manifold with `rows x cols` points is `n * rows * cols`
//! doubles, point after point. Every call returns a [`KsdmStatus`]; on failure
//! [`ksdm_last_error`] describes what went wrong.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ksdm::gof::{self, GofConfig, OnNonConvex};
use ksdm::ksdstats::{self, StatKind, WeightedSample};
use ksdm::{mksde, ExpFamilyKind, ExponentialFamily, Family, KsdError, Manifold, Mat, RadialKernel, ScoreModel, SteinKernel};
use serde::Deserialize;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsdmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed JSON or an unsupported manifold/family combination.
    Config = 3,
    /// Numerical failure, including an indefinite U-statistic fit.
    Numeric = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsdmStatKind {
    U = 0,
    V = 1,
}

impl From<KsdmStatKind> for StatKind {
    fn from(k: KsdmStatKind) -> Self {
        match k {
            KsdmStatKind::U => StatKind::U,
            KsdmStatKind::V => StatKind::V,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KsdmGofResult {
    /// `n` times the weighted statistic.
    pub statistic: f64,
    pub quantile: f64,
    pub p_value: f64,
    pub reject: bool,
    /// The U-statistic fit was indefinite and its stationary point was used.
    pub nonconvex: bool,
    pub clipped_eigenvalues: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KsdmFitInfo {
    pub objective: f64,
    pub min_eigenvalue: f64,
    pub null_space_rank: usize,
}

/// Stein kernel of a fixed model.
pub struct KsdmStein {
    sk: SteinKernel,
}

/// Minimum-KSD estimator for an exponential family.
pub struct KsdmEstimator {
    ef: ExponentialFamily,
    kernel: RadialKernel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(KsdmStatus, String);

impl From<KsdError> for Fail {
    fn from(e: KsdError) -> Self {
        let status = if e.is_numeric() {
            KsdmStatus::Numeric
        } else {
            match e {
                KsdError::Dimension(_) | KsdError::Domain(_) | KsdError::IndexOutOfRange(_) | KsdError::InvalidArgument(_) => {
                    KsdmStatus::InvalidArgument
                }
                _ => KsdmStatus::Config,
            }
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(KsdmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KsdmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KsdmStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            KsdmStatus::Internal
        }
    }
}

unsafe fn json_arg<T: for<'de> Deserialize<'de>>(json: *const c_char) -> Result<T, Fail> {
    if json.is_null() {
        return Err(null("json"));
    }
    let s = CStr::from_ptr(json)
        .to_str()
        .map_err(|e| Fail(KsdmStatus::Config, format!("json is not UTF-8: {e}")))?;
    serde_json::from_str(s).map_err(|e| Fail(KsdmStatus::Config, format!("json: {e}")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn matrix(m: &Manifold, data: &[f64]) -> Mat {
    let (r, c) = m.shape();
    Mat::from_row_slice(r, c, data)
}

unsafe fn sample(m: &Manifold, points: *const f64, n: usize, log_weights: *const f64) -> Result<WeightedSample, Fail> {
    let (r, c) = m.shape();
    let data = slice(points, n * r * c, "points")?;
    let pts: Vec<Mat> = data.chunks_exact(r * c).map(|d| matrix(m, d)).collect();
    let s = if log_weights.is_null() {
        WeightedSample::new(*m, pts)?
    } else {
        WeightedSample::with_log_weights(*m, pts, slice(log_weights, n, "log_weights")?.to_vec())?
    };
    Ok(s)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ksdm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ksdm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SteinSpec {
    manifold: Manifold,
    family: Family,
    kernel: RadialKernel,
}

/// Build a Stein kernel from
/// `{"manifold": {...}, "family": {...}, "kernel": {...}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ksdm_stein_new(json: *const c_char, out_handle: *mut *mut KsdmStein) -> KsdmStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        let spec: SteinSpec = json_arg(json)?;
        let model = ScoreModel::new(spec.manifold.checked()?, spec.family)?;
        *slot = Box::into_raw(Box::new(KsdmStein { sk: SteinKernel::new(model, spec.kernel) }));
        Ok(())
    })
}

/// # Safety
/// `h` must come from [`ksdm_stein_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ksdm_stein_free(h: *mut KsdmStein) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Row and column count of a point.
///
/// # Safety
/// `h` must be a live handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ksdm_stein_point_shape(h: *const KsdmStein, rows: *mut usize, cols: *mut usize) -> KsdmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let (r, c) = h.sk.manifold().shape();
        *out(rows, "rows")? = r;
        *out(cols, "cols")? = c;
        Ok(())
    })
}

/// `kappa_p(X, Y)` for two row-major points.
///
/// # Safety
/// `x` and `y` must hold one point each; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ksdm_stein_eval(
    h: *const KsdmStein,
    x: *const f64,
    y: *const f64,
    result: *mut f64,
) -> KsdmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let m = h.sk.manifold();
        let (r, c) = m.shape();
        let (x, y) = (matrix(&m, slice(x, r * c, "x")?), matrix(&m, slice(y, r * c, "y")?));
        m.check_point(&x)?;
        m.check_point(&y)?;
        *out(result, "result")? = h.sk.closed(&x, &y)?;
        Ok(())
    })
}

/// U- and V-statistics of `n` points. `log_weights` may be null for an
/// unweighted sample.
///
/// # Safety
/// `points` must hold `n` points and `log_weights`, if not null, `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ksdm_stein_stats(
    h: *const KsdmStein,
    points: *const f64,
    n: usize,
    log_weights: *const f64,
    u_stat: *mut f64,
    v_stat: *mut f64,
) -> KsdmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let s = sample(&h.sk.manifold(), points, n, log_weights)?;
        let g = h.sk.gram(s.points())?;
        *out(u_stat, "u_stat")? = ksdstats::u_from_gram(&g, s.weights())?;
        *out(v_stat, "v_stat")? = ksdstats::v_from_gram(&g, s.weights());
        Ok(())
    })
}

/// Goodness-of-fit test of the handle's model itself (no fitting).
///
/// # Safety
/// As [`ksdm_stein_stats`]; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ksdm_stein_gof(
    h: *const KsdmStein,
    points: *const f64,
    n: usize,
    log_weights: *const f64,
    kind: KsdmStatKind,
    beta: f64,
    n_sim: usize,
    seed: u64,
    result: *mut KsdmGofResult,
) -> KsdmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let slot = out(result, "result")?;
        let s = sample(&h.sk.manifold(), points, n, log_weights)?;
        let cfg = GofConfig { beta, n_sim, on_nonconvex: OnNonConvex::Error };
        *slot = gof_result(&gof::gof_test_fixed(&h.sk, &s, kind.into(), &cfg, seed)?);
        Ok(())
    })
}

fn gof_result(r: &gof::GofResult) -> KsdmGofResult {
    KsdmGofResult {
        statistic: r.statistic,
        quantile: r.quantile,
        p_value: r.p_value,
        reject: r.reject,
        nonconvex: r.nonconvex,
        clipped_eigenvalues: r.clipped_eigenvalues,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimatorSpec {
    manifold: Manifold,
    family: ExpFamilyKind,
    kernel: RadialKernel,
}

/// Build an estimator from
/// `{"manifold": {...}, "family": "matrix_fisher", "kernel": {...}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ksdm_estimator_new(json: *const c_char, out_handle: *mut *mut KsdmEstimator) -> KsdmStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        let spec: EstimatorSpec = json_arg(json)?;
        let ef = ExponentialFamily::new(spec.manifold.checked()?, spec.family)?;
        *slot = Box::into_raw(Box::new(KsdmEstimator { ef, kernel: spec.kernel }));
        Ok(())
    })
}

/// # Safety
/// `h` must come from [`ksdm_estimator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ksdm_estimator_free(h: *mut KsdmEstimator) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Length of the natural parameter vector: column-major `vec(A)` before
/// `vec(F)`.
///
/// # Safety
/// `h` must be a live handle; `dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ksdm_estimator_dim(h: *const KsdmEstimator, dim: *mut usize) -> KsdmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        *out(dim, "dim")? = h.ef.dim();
        Ok(())
    })
}

/// Minimum-KSD estimate into `theta` (`theta_len` must equal the dimension).
/// An indefinite U-statistic system returns [`KsdmStatus::Numeric`] and
/// still writes its stationary point.
///
/// # Safety
/// As [`ksdm_stein_stats`]; `theta` must hold `theta_len` doubles; `info`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn ksdm_estimator_fit(
    h: *const KsdmEstimator,
    points: *const f64,
    n: usize,
    log_weights: *const f64,
    kind: KsdmStatKind,
    theta: *mut f64,
    theta_len: usize,
    info: *mut KsdmFitInfo,
) -> KsdmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        if theta_len != h.ef.dim() {
            return Err(Fail(
                KsdmStatus::InvalidArgument,
                format!("theta_len is {theta_len}, the family has dimension {}", h.ef.dim()),
            ));
        }
        if theta.is_null() {
            return Err(null("theta"));
        }
        let theta = std::slice::from_raw_parts_mut(theta, theta_len);
        let s = sample(&h.ef.manifold(), points, n, log_weights)?;
        match mksde::estimate(&h.ef, &h.kernel, &s, kind.into()) {
            Ok((_, sol)) => {
                theta.copy_from_slice(&sol.theta_star);
                if let Some(info) = info.as_mut() {
                    *info = KsdmFitInfo {
                        objective: sol.objective,
                        min_eigenvalue: sol.min_eigenvalue,
                        null_space_rank: sol.null_space_rank,
                    };
                }
                Ok(())
            }
            Err(KsdError::NonConvex { min_eigenvalue, stationary }) => {
                theta.copy_from_slice(&stationary);
                if let Some(info) = info.as_mut() {
                    *info = KsdmFitInfo { objective: f64::NAN, min_eigenvalue, null_space_rank: 0 };
                }
                Err(KsdError::NonConvex { min_eigenvalue, stationary }.into())
            }
            Err(e) => Err(e.into()),
        }
    })
}

/// Composite goodness-of-fit test of the family. With `use_stationary` an
/// indefinite U-statistic fit continues with its stationary point instead of
/// failing.
///
/// # Safety
/// As [`ksdm_stein_stats`]; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ksdm_estimator_gof(
    h: *const KsdmEstimator,
    points: *const f64,
    n: usize,
    log_weights: *const f64,
    kind: KsdmStatKind,
    beta: f64,
    n_sim: usize,
    seed: u64,
    use_stationary: bool,
    result: *mut KsdmGofResult,
) -> KsdmStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let slot = out(result, "result")?;
        let s = sample(&h.ef.manifold(), points, n, log_weights)?;
        let on_nonconvex = if use_stationary { OnNonConvex::UseStationary } else { OnNonConvex::Error };
        let cfg = GofConfig { beta, n_sim, on_nonconvex };
        *slot = gof_result(&gof::gof_test(&h.ef, &h.kernel, &s, kind.into(), &cfg, seed)?);
        Ok(())
    })
}
