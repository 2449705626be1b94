//! C ABI over `misfdr`.
//!
//! Every fallible function returns a [`MisfdrStatus`]; on failure the message
//! is available from [`misfdr_last_error`] on the same thread. Objects are
//! opaque handles created by `*_new`/constructor functions and released with
//! the matching `*_free`. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use misfdr::covariance::{ar2_cov, exponential_cov, identity_cov, GridLayout};
use misfdr::sampdist::{joint_log_pdf, marginal_cdf, marginal_pdf};
use misfdr::{
    kl_known_var, law_known_var, law_unknown_var, step_up, CovarianceMatrix, Error, Hypotheses,
    ModelSpec, PosteriorOperator, SamplingLaw, TrueProcess,
};
use nalgebra::{DMatrix, DVector};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MisfdrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    Boundary = 5,
    Unsupported = 6,
    TooManyExcluded = 7,
    Io = 8,
    Panic = 9,
}

/// Covariance matrix handle.
pub struct MisfdrCovariance {
    inner: Arc<CovarianceMatrix>,
}

/// Sampling-law handle.
pub struct MisfdrLaw {
    inner: SamplingLaw,
}

/// Monte Carlo KL estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MisfdrKlEstimate {
    pub total: f64,
    pub per_dim: f64,
    pub std_err: f64,
    pub n_draws: usize,
    pub n_excluded: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MisfdrStatus {
    match e {
        Error::DimensionMismatch { .. } => MisfdrStatus::DimensionMismatch,
        Error::NotPositiveDefinite(_) => MisfdrStatus::NotPositiveDefinite,
        Error::Boundary { .. } => MisfdrStatus::Boundary,
        Error::Unsupported(_) => MisfdrStatus::Unsupported,
        Error::TooManyExcluded { .. } => MisfdrStatus::TooManyExcluded,
        Error::Io(_) | Error::Csv(_) => MisfdrStatus::Io,
        Error::SweepPoint { source, .. } => status_of(source),
        _ => MisfdrStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MisfdrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MisfdrStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MisfdrStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MisfdrStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(v);
    Ok(())
}

fn check_len(expected: usize, actual: usize) -> Result<(), Fail> {
    if expected == actual {
        Ok(())
    } else {
        Err(Fail::Lib(Error::DimensionMismatch { expected, actual }))
    }
}

unsafe fn put_cov(out: *mut *mut MisfdrCovariance, cov: CovarianceMatrix) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    out.write(Box::into_raw(Box::new(MisfdrCovariance {
        inner: Arc::new(cov),
    })));
    Ok(())
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn misfdr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn misfdr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Exponential covariance on a `rows × cols` grid.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn misfdr_cov_exponential(
    rows: usize,
    cols: usize,
    spacing: f64,
    range: f64,
    out: *mut *mut MisfdrCovariance,
) -> MisfdrStatus {
    guard(|| put_cov(out, exponential_cov(GridLayout::new(rows, cols, spacing)?, range)?))
}

/// Stationary AR(2) covariance of an `m`-long series.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn misfdr_cov_ar2(
    m: usize,
    rho1: f64,
    rho2: f64,
    innovation_var: f64,
    normalize: bool,
    out: *mut *mut MisfdrCovariance,
) -> MisfdrStatus {
    guard(|| put_cov(out, ar2_cov(m, rho1, rho2, innovation_var, normalize)?))
}

/// `m × m` identity.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn misfdr_cov_identity(m: usize, out: *mut *mut MisfdrCovariance) -> MisfdrStatus {
    guard(|| put_cov(out, identity_cov(m)?))
}

/// Covariance from `m * m` row-major entries.
///
/// # Safety
/// `data` must point to `m * m` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn misfdr_cov_from_matrix(
    data: *const f64,
    m: usize,
    out: *mut *mut MisfdrCovariance,
) -> MisfdrStatus {
    guard(|| {
        let vals = slice(data, m * m, "data")?;
        put_cov(out, CovarianceMatrix::from_matrix(DMatrix::from_row_slice(m, m, vals))?)
    })
}

/// Releases a covariance handle. NULL is ignored.
///
/// # Safety
/// `cov` must come from a constructor of this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn misfdr_cov_free(cov: *mut MisfdrCovariance) {
    if !cov.is_null() {
        drop(Box::from_raw(cov));
    }
}

/// Dimension of the matrix, or 0 for NULL.
///
/// # Safety
/// `cov` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn misfdr_cov_dim(cov: *const MisfdrCovariance) -> usize {
    cov.as_ref().map_or(0, |c| c.inner.dim())
}

/// Copies the entries row-major into `out` (length `len` = m * m).
///
/// # Safety
/// `cov` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn misfdr_cov_copy(
    cov: *const MisfdrCovariance,
    out: *mut f64,
    len: usize,
) -> MisfdrStatus {
    guard(|| {
        let c = &deref(cov, "cov")?.inner;
        let m = c.dim();
        check_len(m * m, len)?;
        let dst = slice_mut(out, len, "out")?;
        for i in 0..m {
            for j in 0..m {
                dst[i * m + j] = c.entries()[(i, j)];
            }
        }
        Ok(())
    })
}

unsafe fn truth_and_spec(
    sigma0_sq: f64,
    truth_cov: *const MisfdrCovariance,
    spec_cov: *const MisfdrCovariance,
) -> Result<(TrueProcess, Arc<CovarianceMatrix>), Fail> {
    let t = deref(truth_cov, "truth_cov")?.inner.clone();
    let s = deref(spec_cov, "spec_cov")?.inner.clone();
    Ok((TrueProcess::centered(sigma0_sq, t)?, s))
}

unsafe fn put_law(out: *mut *mut MisfdrLaw, law: SamplingLaw) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    out.write(Box::into_raw(Box::new(MisfdrLaw { inner: law })));
    Ok(())
}

/// Known-variance sampling law of the statistics for data generated with
/// covariance `truth_cov` (prior mean 0) and analysed with `spec_cov`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn misfdr_law_known_var(
    sigma0_sq: f64,
    truth_cov: *const MisfdrCovariance,
    spec_cov: *const MisfdrCovariance,
    g: f64,
    out: *mut *mut MisfdrLaw,
) -> MisfdrStatus {
    guard(|| {
        let (truth, s) = truth_and_spec(sigma0_sq, truth_cov, spec_cov)?;
        let spec = ModelSpec::known_for(&truth, g, s)?;
        put_law(out, law_known_var(&truth, &spec)?)
    })
}

/// Unknown-variance law under the normal-inverse-gamma prior.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn misfdr_law_unknown_var(
    sigma0_sq: f64,
    truth_cov: *const MisfdrCovariance,
    spec_cov: *const MisfdrCovariance,
    g: f64,
    alpha_ig: f64,
    beta_ig: f64,
    out: *mut *mut MisfdrLaw,
) -> MisfdrStatus {
    guard(|| {
        let (truth, s) = truth_and_spec(sigma0_sq, truth_cov, spec_cov)?;
        let spec = ModelSpec::unknown_for(&truth, g, s, alpha_ig, beta_ig)?;
        put_law(out, law_unknown_var(&truth, &spec)?)
    })
}

/// Releases a law handle. NULL is ignored.
///
/// # Safety
/// `law` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn misfdr_law_free(law: *mut MisfdrLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// Dimension of the law, or 0 for NULL.
///
/// # Safety
/// `law` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn misfdr_law_dim(law: *const MisfdrLaw) -> usize {
    law.as_ref().map_or(0, |l| l.inner.dim())
}

/// Copies the ratios `r_i = a_ii / b_ii` into `out` (length m).
///
/// # Safety
/// `law` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn misfdr_law_ratios(law: *const MisfdrLaw, out: *mut f64, len: usize) -> MisfdrStatus {
    guard(|| {
        let r = deref(law, "law")?.inner.r();
        check_len(r.len(), len)?;
        slice_mut(out, len, "out")?.copy_from_slice(r.as_slice());
        Ok(())
    })
}

/// Marginal CDF of one statistic with ratio `r`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn misfdr_marginal_cdf(h: f64, r: f64, out: *mut f64) -> MisfdrStatus {
    guard(|| put(out, marginal_cdf(h, r)?, "out"))
}

/// Marginal density of one statistic with ratio `r`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn misfdr_marginal_pdf(h: f64, r: f64, out: *mut f64) -> MisfdrStatus {
    guard(|| put(out, marginal_pdf(h, r)?, "out"))
}

/// Joint log density of `h` under a known-variance law.
///
/// # Safety
/// `law` must be live, `h` must hold `len` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn misfdr_joint_log_pdf(
    law: *const MisfdrLaw,
    h: *const f64,
    len: usize,
    out: *mut f64,
) -> MisfdrStatus {
    guard(|| {
        let l = &deref(law, "law")?.inner;
        let hv = DVector::from_column_slice(slice(h, len, "h")?);
        put(out, joint_log_pdf(&hv, l)?, "out")
    })
}

/// Step-up rule. Writes 1/0 per hypothesis into `mask` and the number of
/// rejections into `k` (either may be NULL).
///
/// # Safety
/// `h` must hold `len` doubles; `mask`, when non-NULL, `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn misfdr_step_up(
    h: *const f64,
    len: usize,
    alpha_star: f64,
    mask: *mut u8,
    k: *mut usize,
) -> MisfdrStatus {
    guard(|| {
        let d = step_up(slice(h, len, "h")?, alpha_star)?;
        if !mask.is_null() && len > 0 {
            let dst = std::slice::from_raw_parts_mut(mask, len);
            for (o, r) in dst.iter_mut().zip(&d.rejected) {
                *o = u8::from(*r);
            }
        }
        if !k.is_null() {
            k.write(d.k);
        }
        Ok(())
    })
}

/// Known-variance posterior probabilities `P(θ_i ≥ θ₀ᵢ | y)`. `theta0` may
/// be NULL for a zero prior mean.
///
/// # Safety
/// `y`, `theta0` (if non-NULL) and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn misfdr_posterior_known_var(
    y: *const f64,
    theta0: *const f64,
    len: usize,
    spec_cov: *const MisfdrCovariance,
    sigma0_sq: f64,
    g: f64,
    out: *mut f64,
) -> MisfdrStatus {
    guard(|| {
        let s = deref(spec_cov, "spec_cov")?.inner.clone();
        check_len(s.dim(), len)?;
        let t0 = if theta0.is_null() {
            DVector::zeros(len)
        } else {
            DVector::from_column_slice(slice(theta0, len, "theta0")?)
        };
        let spec = ModelSpec::new(
            t0,
            g,
            s,
            misfdr::NoiseModel::KnownVariance { sigma0_sq },
        )?;
        let yv = DVector::from_column_slice(slice(y, len, "y")?);
        let h = PosteriorOperator::new(&spec)?.probs(&yv, &Hypotheses::at_prior_mean(&spec))?;
        slice_mut(out, len, "out")?.copy_from_slice(h.as_slice());
        Ok(())
    })
}

/// Monte Carlo KL divergence between the laws under `truth_cov` (correct)
/// and `mis_cov`, both with prior scale `g`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn misfdr_kl_known_var(
    sigma0_sq: f64,
    truth_cov: *const MisfdrCovariance,
    mis_cov: *const MisfdrCovariance,
    g: f64,
    n_draws: usize,
    seed: u64,
    out: *mut MisfdrKlEstimate,
) -> MisfdrStatus {
    guard(|| {
        let (truth, mis) = truth_and_spec(sigma0_sq, truth_cov, mis_cov)?;
        let cor = ModelSpec::known_for(&truth, g, truth.sigma1.clone())?;
        let mis = ModelSpec::known_for(&truth, g, mis)?;
        let est = kl_known_var(&truth, &cor, &mis, n_draws, seed)?;
        put(
            out,
            MisfdrKlEstimate {
                total: est.total,
                per_dim: est.per_dim,
                std_err: est.std_err,
                n_draws: est.n_draws,
                n_excluded: est.n_excluded,
            },
            "out",
        )
    })
}
