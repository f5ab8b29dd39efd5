//! C ABI for the cluster-tree estimators: opaque handles, status codes, and
//! a thread-local error message.
//!
//! Conventions:
//!
//! - Every fallible function returns [`RslStatus`]; `RSL_OK` (0) means
//!   success. On failure a thread-local message is set; fetch it with
//!   [`rsl_last_error_message`] (valid until the next failing call on the
//!   same thread).
//! - Opaque handles ([`RslPointCloud`], [`RslDendrogram`]) are created and
//!   freed by this library; pass them back only to `rsl_*` functions and
//!   free each exactly once with its `_free` function.
//! - Output buffers are caller-allocated; their required lengths come from
//!   the corresponding `_len` / `_count` calls.
//!
//! The header `include/rsltree.h` is generated from this file with
//! cbindgen (`cbindgen --config cbindgen.toml --output include/rsltree.h`).

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rsltree::error::Error;
use rsltree::geometry::{self, SphereSpec};
use rsltree::neighbors::DistanceIndex;
use rsltree::params::{self, Constants, Regime, SalienceParams};
use rsltree::points::PointCloud;
use rsltree::rsl::{self, ConnectionRule, Dendrogram, RSLConfig};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RslStatus {
    RslOk = 0,
    RslNullPointer = 1,
    RslInvalidArgument = 2,
    RslRegimeViolation = 3,
    RslNumericFailure = 4,
    RslIoError = 5,
    RslUtf8Error = 6,
    RslPanic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).ok();
    });
}

fn fail(status: RslStatus, msg: &str) -> RslStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> RslStatus {
    match err {
        Error::InvalidArgument(_) | Error::InvalidSpec(_) => RslStatus::RslInvalidArgument,
        Error::RegimeViolation(_) => RslStatus::RslRegimeViolation,
        Error::NumericFailure { .. } => RslStatus::RslNumericFailure,
        Error::Format { .. } | Error::Io(_) => RslStatus::RslIoError,
        _ => RslStatus::RslInvalidArgument,
    }
}

fn from_result<T>(res: Result<T, Error>, out: &mut T) -> RslStatus {
    match res {
        Ok(v) => {
            *out = v;
            RslStatus::RslOk
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}

fn guarded<F: FnOnce() -> RslStatus>(f: F) -> RslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(RslStatus::RslPanic, "internal panic"),
    }
}

/// Message describing the most recent failure on this thread, or NULL.
/// The pointer stays valid until the next failing `rsl_*` call here.
#[no_mangle]
pub extern "C" fn rsl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.as_ptr(),
        None => std::ptr::null(),
    })
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn rsl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque point-cloud handle.
pub struct RslPointCloud {
    inner: PointCloud,
}

/// Opaque dendrogram handle.
pub struct RslDendrogram {
    inner: Dendrogram,
}

/// Creates a point cloud from a row-major `n x dim` coordinate buffer.
///
/// # Safety
/// `coords` must point to `n * dim` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rsl_pointcloud_create(
    coords: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut RslPointCloud,
) -> RslStatus {
    guarded(|| {
        if coords.is_null() || out.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let data = unsafe { std::slice::from_raw_parts(coords, n * dim) }.to_vec();
        match PointCloud::new(dim, data) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(RslPointCloud { inner })) };
                RslStatus::RslOk
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Frees a point cloud created by this library. NULL is ignored.
///
/// # Safety
/// `p` must come from `rsl_pointcloud_create` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rsl_pointcloud_free(p: *mut RslPointCloud) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Number of points; 0 for NULL.
///
/// # Safety
/// `p` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rsl_pointcloud_len(p: *const RslPointCloud) -> usize {
    if p.is_null() {
        return 0;
    }
    unsafe { &*p }.inner.len()
}

/// Ambient dimension; 0 for NULL.
///
/// # Safety
/// `p` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rsl_pointcloud_dim(p: *const RslPointCloud) -> usize {
    if p.is_null() {
        return 0;
    }
    unsafe { &*p }.inner.dim()
}

/// Writes each point's k-NN radius (the point itself counts first) into
/// `out_radii`, an array of length `rsl_pointcloud_len(p)`.
///
/// # Safety
/// Buffers must match the documented lengths.
#[no_mangle]
pub unsafe extern "C" fn rsl_knn_radius(
    p: *const RslPointCloud,
    k: usize,
    out_radii: *mut f64,
) -> RslStatus {
    guarded(|| {
        if p.is_null() || out_radii.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let cloud = unsafe { &*p };
        match DistanceIndex::brute(&cloud.inner).knn_radius(k) {
            Ok(radii) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out_radii, radii.len()) };
                out.copy_from_slice(&radii);
                RslStatus::RslOk
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Connection rule selector for the sweep entry points.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum RslRule {
    /// Fixed connection radius R (`value` = R).
    RslRuleFixed = 0,
    /// Proportional rule R = value * r.
    RslRuleProportional = 1,
}

fn rule_of(kind: RslRule, value: f64) -> ConnectionRule {
    match kind {
        RslRule::RslRuleFixed => ConnectionRule::FixedR(value),
        RslRule::RslRuleProportional => ConnectionRule::Proportional(value),
    }
}

/// Runs the sweep and returns a dendrogram handle.
///
/// # Safety
/// `p` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rsl_sweep(
    p: *const RslPointCloud,
    k: usize,
    rule: RslRule,
    rule_value: f64,
    out: *mut *mut RslDendrogram,
) -> RslStatus {
    guarded(|| {
        if p.is_null() || out.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let cloud = unsafe { &*p };
        let cfg = RSLConfig { k, rule: rule_of(rule, rule_value) };
        match rsl::rsl_sweep(&cloud.inner, &cfg) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(RslDendrogram { inner })) };
                RslStatus::RslOk
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Runs the spatially adaptive sweep against a known round sphere centered
/// at the origin and spanned by the leading axes.
///
/// # Safety
/// `p` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rsl_adaptive_sweep_sphere(
    p: *const RslPointCloud,
    k: usize,
    rule: RslRule,
    rule_value: f64,
    sphere_d: usize,
    sphere_tau: f64,
    out: *mut *mut RslDendrogram,
) -> RslStatus {
    guarded(|| {
        if p.is_null() || out.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let cloud = unsafe { &*p };
        let cfg = RSLConfig { k, rule: rule_of(rule, rule_value) };
        let result = SphereSpec::axis_aligned(sphere_d, sphere_tau, cloud.inner.dim(), None)
            .and_then(|sphere| rsl::adaptive_rsl(&cloud.inner, &cfg, &sphere));
        match result {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(RslDendrogram { inner })) };
                RslStatus::RslOk
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Frees a dendrogram handle. NULL is ignored.
///
/// # Safety
/// `d` must come from a sweep call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rsl_dendrogram_free(d: *mut RslDendrogram) {
    if !d.is_null() {
        drop(unsafe { Box::from_raw(d) });
    }
}

/// Number of points covered by the dendrogram; 0 for NULL.
///
/// # Safety
/// `d` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rsl_dendrogram_len(d: *const RslDendrogram) -> usize {
    if d.is_null() {
        return 0;
    }
    unsafe { &*d }.inner.len()
}

/// Number of merge events; 0 for NULL.
///
/// # Safety
/// `d` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rsl_dendrogram_merge_count(d: *const RslDendrogram) -> usize {
    if d.is_null() {
        return 0;
    }
    unsafe { &*d }.inner.merges().len()
}

/// Copies the per-point activation radii into `out`, length
/// `rsl_dendrogram_len(d)`. Points that never activate report infinity.
///
/// # Safety
/// Buffers must match the documented lengths.
#[no_mangle]
pub unsafe extern "C" fn rsl_dendrogram_activation(
    d: *const RslDendrogram,
    out: *mut f64,
) -> RslStatus {
    guarded(|| {
        if d.is_null() || out.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let dendro = unsafe { &*d };
        let src = dendro.inner.activation();
        unsafe { std::slice::from_raw_parts_mut(out, src.len()) }.copy_from_slice(src);
        RslStatus::RslOk
    })
}

/// Copies the ordered merge list into three parallel arrays of length
/// `rsl_dendrogram_merge_count(d)`: event radius and the two component
/// labels (minimum member index of each side).
///
/// # Safety
/// Buffers must match the documented lengths.
#[no_mangle]
pub unsafe extern "C" fn rsl_dendrogram_merges(
    d: *const RslDendrogram,
    out_radii: *mut f64,
    out_comp_a: *mut u64,
    out_comp_b: *mut u64,
) -> RslStatus {
    guarded(|| {
        if d.is_null() || out_radii.is_null() || out_comp_a.is_null() || out_comp_b.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let merges = unsafe { &*d }.inner.merges();
        let radii = unsafe { std::slice::from_raw_parts_mut(out_radii, merges.len()) };
        let ca = unsafe { std::slice::from_raw_parts_mut(out_comp_a, merges.len()) };
        let cb = unsafe { std::slice::from_raw_parts_mut(out_comp_b, merges.len()) };
        for (i, m) in merges.iter().enumerate() {
            radii[i] = m.radius;
            ca[i] = m.comp_a as u64;
            cb[i] = m.comp_b as u64;
        }
        RslStatus::RslOk
    })
}

/// Component labels at sweep value `r`: for each point, the minimum member
/// index of its component, or -1 if the point is not yet active. `out` has
/// length `rsl_dendrogram_len(d)`.
///
/// # Safety
/// Buffers must match the documented lengths.
#[no_mangle]
pub unsafe extern "C" fn rsl_components_at(
    d: *const RslDendrogram,
    r: f64,
    out_labels: *mut i64,
) -> RslStatus {
    guarded(|| {
        if d.is_null() || out_labels.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let dendro = unsafe { &*d };
        let labels = dendro.inner.labels_at(r);
        let out = unsafe { std::slice::from_raw_parts_mut(out_labels, labels.len()) };
        for (slot, label) in out.iter_mut().zip(labels) {
            *slot = label.map(|l| l as i64).unwrap_or(-1);
        }
        RslStatus::RslOk
    })
}

unsafe fn path_from(ptr: *const c_char) -> Result<std::path::PathBuf, RslStatus> {
    if ptr.is_null() {
        return Err(RslStatus::RslNullPointer);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(std::path::PathBuf::from(s)),
        Err(_) => Err(RslStatus::RslUtf8Error),
    }
}

/// Writes the dendrogram in the text interchange format.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn rsl_dendrogram_write(d: *const RslDendrogram, path: *const c_char) -> RslStatus {
    guarded(|| {
        if d.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let path = match unsafe { path_from(path) } {
            Ok(p) => p,
            Err(s) => return fail(s, "bad path"),
        };
        match unsafe { &*d }.inner.write_to(&path) {
            Ok(()) => RslStatus::RslOk,
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Reads a dendrogram from the text interchange format.
///
/// # Safety
/// `path` must be NUL-terminated UTF-8; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rsl_dendrogram_read(path: *const c_char, out: *mut *mut RslDendrogram) -> RslStatus {
    guarded(|| {
        if out.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let path = match unsafe { path_from(path) } {
            Ok(p) => p,
            Err(s) => return fail(s, "bad path"),
        };
        match Dendrogram::read_from(&path) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(RslDendrogram { inner })) };
                RslStatus::RslOk
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Volume of the d-dimensional unit ball.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rsl_unit_ball_volume(d: usize, out: *mut f64) -> RslStatus {
    guarded(|| {
        if out.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        from_result(geometry::unit_ball_volume(d), unsafe { &mut *out })
    })
}

/// Exact spherical-cap volume for chord radius `r` on a d-sphere of radius
/// `tau` (0 <= r <= 2 tau).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rsl_cap_volume_exact(d: usize, tau: f64, r: f64, out: *mut f64) -> RslStatus {
    guarded(|| {
        if out.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        from_result(geometry::cap_volume_exact(d, tau, r), unsafe { &mut *out })
    })
}

/// Small-cap series volume (regime `r / tau <= 0.25`).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rsl_cap_volume_series(d: usize, tau: f64, r: f64, out: *mut f64) -> RslStatus {
    guarded(|| {
        if out.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        from_result(geometry::cap_volume_series(d, tau, r), unsafe { &mut *out })
    })
}

/// Two-sided manifold ball-volume bounds for `0 < r < tau / 2`; the upper
/// bound degenerates to infinity for `r >= 3 tau / 8`.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rsl_ball_volume_bounds(
    d: usize,
    tau: f64,
    r: f64,
    out_lower: *mut f64,
    out_upper: *mut f64,
    out_r1: *mut f64,
) -> RslStatus {
    guarded(|| {
        if out_lower.is_null() || out_upper.is_null() || out_r1.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        match geometry::ball_volume_bounds(d, tau, r) {
            Ok(b) => {
                unsafe {
                    *out_lower = b.lower;
                    *out_upper = b.upper;
                    *out_r1 = b.r1;
                }
                RslStatus::RslOk
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Regime selector matching the parameter calculators.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum RslRegime {
    RslRegimeNoiseless = 0,
    RslRegimeClutter = 1,
    RslRegimeAdditive = 2,
    RslRegimeKde = 3,
}

fn regime_of(regime: RslRegime, pi: f64) -> Regime {
    match regime {
        RslRegime::RslRegimeNoiseless => Regime::Noiseless,
        RslRegime::RslRegimeClutter => Regime::Clutter { pi },
        RslRegime::RslRegimeAdditive => Regime::Additive,
        RslRegime::RslRegimeKde => Regime::Kde,
    }
}

/// Salience radius and the branch attaining it (0 sigma, 1 epsilon-tau,
/// 2 tau).
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rsl_rho(
    regime: RslRegime,
    pi: f64,
    sigma: f64,
    epsilon: f64,
    lambda: f64,
    tau: f64,
    d: usize,
    delta: f64,
    c0: f64,
    out_rho: *mut f64,
    out_branch: *mut c_int,
) -> RslStatus {
    guarded(|| {
        if out_rho.is_null() || out_branch.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let p = SalienceParams { sigma, epsilon, lambda, tau, d, delta, constants: Constants::from_c0(c0) };
        let res = params::rho(&p, regime_of(regime, pi));
        unsafe {
            *out_rho = res.value;
            *out_branch = match res.branch {
                params::RhoBranch::Sigma => 0,
                params::RhoBranch::EpsilonTau => 1,
                params::RhoBranch::Tau => 2,
            };
        }
        RslStatus::RslOk
    })
}

/// Cleaning count and read-out radius from the parameter calculators;
/// `out_feasible` reports `r <= rho`.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rsl_choose_parameters(
    regime: RslRegime,
    pi: f64,
    sigma: f64,
    epsilon: f64,
    lambda: f64,
    tau: f64,
    d: usize,
    delta: f64,
    c0: f64,
    n: u64,
    out_k: *mut u64,
    out_r: *mut f64,
    out_feasible: *mut bool,
) -> RslStatus {
    guarded(|| {
        if out_k.is_null() || out_r.is_null() || out_feasible.is_null() {
            return fail(RslStatus::RslNullPointer, "null pointer");
        }
        let p = SalienceParams { sigma, epsilon, lambda, tau, d, delta, constants: Constants::from_c0(c0) };
        let regime = regime_of(regime, pi);
        let rho_res = params::rho(&p, regime);
        let mu_res = match params::mu(n, rho_res.value, d) {
            Ok(m) => m,
            Err(e) => return fail(status_of(&e), &e.to_string()),
        };
        let k_res = params::choose_k(&p, mu_res.value, regime);
        let k = k_res.k.min(n);
        match params::choose_r(&p, k, n, mu_res.value, regime) {
            Ok(pick) => {
                unsafe {
                    *out_k = k;
                    *out_r = pick.r;
                    *out_feasible = pick.feasible;
                }
                RslStatus::RslOk
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}
