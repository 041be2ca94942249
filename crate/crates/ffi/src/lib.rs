//! C ABI over kpgeom. Objects cross the boundary as opaque handles that the
//! caller frees with the matching `*_free`. Every fallible call returns a
//! [`KpgStatus`]; on failure [`kpg_last_error_message`] describes the cause
//! on the calling thread. Panics are caught and reported as
//! [`KpgStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use kpgeom::hausdorff::{relative_hausdorff, SetHandle, Shape};
use kpgeom::kpcone::KpCone;
use kpgeom::measure::{default_radius_mesh, default_tau_grid, doubling_deviation, DiscreteMeasure};
use kpgeom::moments::{compute_moments, cone_from_summary};
use kpgeom::planes::AffinePlane;
use kpgeom::{Error, Point};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KpgStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed input or a violated precondition.
    Invalid = 2,
    /// A numerical procedure failed on valid input.
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// Weighted point cloud in R⁴.
pub struct KpgMeasure(DiscreteMeasure);

/// KP cone with base and unit axis.
pub struct KpgCone(KpCone);

/// A point cloud or an analytic set, as an argument of distance functionals.
pub struct KpgSet(SetHandle);

/// A value and an upper bound on its discretization error.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct KpgEstimate {
    pub value: f64,
    pub error: f64,
}

/// Second moments at (x, r). Matrices are row-major.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct KpgMoments {
    pub b: [f64; 4],
    pub q: [f64; 16],
    pub trace: f64,
    /// Ascending.
    pub eigenvalues: [f64; 4],
    /// Eigenvector of the largest eigenvalue.
    pub axis: [f64; 4],
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> KpgStatus {
    match e {
        Error::Io(_) => KpgStatus::Io,
        e if e.is_numerical() => KpgStatus::Numerical,
        _ => KpgStatus::Invalid,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (KpgStatus, String)>>(f: F) -> KpgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            KpgStatus::Ok
        }
        Ok(Err((s, m))) => {
            set_error(&m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {m}"));
            KpgStatus::Panic
        }
    }
}

fn lib<T>(r: kpgeom::Result<T>) -> Result<T, (KpgStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (KpgStatus, String) {
    (KpgStatus::NullPointer, format!("{name} is null"))
}

unsafe fn point_arg(p: *const f64, name: &str) -> Result<Point, (KpgStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    let s = std::slice::from_raw_parts(p, 4);
    Ok(Point::new(s[0], s[1], s[2], s[3]))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, (KpgStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), (KpgStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn kpg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version string (static).
#[no_mangle]
pub extern "C" fn kpg_version() -> *const c_char {
    static V: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    V.get_or_init(|| CString::new(kpgeom::report::VERSION).unwrap_or_default()).as_ptr()
}

/// Builds a measure from `n` points stored as 4n contiguous coordinates.
/// `weights` may be null for unit weights.
///
/// # Safety
/// `coords` must hold 4n doubles, `weights` n doubles when non-null.
#[no_mangle]
pub unsafe extern "C" fn kpg_measure_new(
    coords: *const f64,
    weights: *const f64,
    n: usize,
    dimension: usize,
    out: *mut *mut KpgMeasure,
) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        if coords.is_null() && n > 0 {
            return Err(null("coords"));
        }
        let c = if n == 0 { &[][..] } else { std::slice::from_raw_parts(coords, 4 * n) };
        let pts: Vec<Point> = c.chunks_exact(4).map(|v| Point::new(v[0], v[1], v[2], v[3])).collect();
        let w = if weights.is_null() { vec![1.0; n] } else { std::slice::from_raw_parts(weights, n).to_vec() };
        let mu = lib(DiscreteMeasure::new(pts, w, dimension))?;
        *out = Box::into_raw(Box::new(KpgMeasure(mu)));
        Ok(())
    })
}

/// Reads a measure file (CSV with header x1,x2,x3,x4[,weight], or JSON).
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kpg_measure_read(path: *const c_char, out: *mut *mut KpgMeasure) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|_| (KpgStatus::Invalid, "path is not UTF-8".to_string()))?;
        let mu = lib(kpgeom::io::read_measure(Path::new(p)))?;
        *out = Box::into_raw(Box::new(KpgMeasure(mu)));
        Ok(())
    })
}

/// H³-uniform samples of a KP cone in B(base, extent).
///
/// # Safety
/// `base` and `axis` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn kpg_sample_cone(
    base: *const f64,
    axis: *const f64,
    extent: f64,
    n: usize,
    seed: u64,
    out: *mut *mut KpgMeasure,
) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let cone = lib(KpCone::new(point_arg(base, "base")?, point_arg(axis, "axis")?))?;
        if extent.is_nan() || extent <= 0.0 || n == 0 {
            return Err((KpgStatus::Invalid, "extent and n must be positive".into()));
        }
        *out = Box::into_raw(Box::new(KpgMeasure(kpgeom::synth::sample_cone(&cone, extent, n, seed))));
        Ok(())
    })
}

/// # Safety
/// `mu` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn kpg_measure_free(mu: *mut KpgMeasure) {
    if !mu.is_null() {
        drop(Box::from_raw(mu));
    }
}

/// Number of points; 0 for null.
///
/// # Safety
/// `mu` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn kpg_measure_len(mu: *const KpgMeasure) -> usize {
    mu.as_ref().map_or(0, |m| m.0.len())
}

/// # Safety
/// `mu` must be a live handle; `x` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn kpg_moments(mu: *const KpgMeasure, x: *const f64, r: f64, out: *mut KpgMoments) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let mu = ref_arg(mu, "mu")?;
        let ms = lib(compute_moments(&mu.0, &point_arg(x, "x")?, r))?;
        let mut m = KpgMoments { trace: ms.trace, eigenvalues: ms.eigenvalues, ..Default::default() };
        for i in 0..4 {
            m.b[i] = ms.b[i];
            m.axis[i] = ms.axis()[i];
            for j in 0..4 {
                m.q[4 * i + j] = ms.q[(i, j)];
            }
        }
        *out = m;
        Ok(())
    })
}

/// # Safety
/// `base` and `axis` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn kpg_cone_new(base: *const f64, axis: *const f64, out: *mut *mut KpgCone) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let c = lib(KpCone::new(point_arg(base, "base")?, point_arg(axis, "axis")?))?;
        *out = Box::into_raw(Box::new(KpgCone(c)));
        Ok(())
    })
}

/// Cone based at x with the top eigenvector of the moments as axis. Fails
/// with [`KpgStatus::Numerical`] when λ₄ − λ₃ ≤ `gap_min`. `gap` may be null.
///
/// # Safety
/// `mu` must be a live handle; `x` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn kpg_cone_from_moments(
    mu: *const KpgMeasure,
    x: *const f64,
    r: f64,
    gap_min: f64,
    out: *mut *mut KpgCone,
    gap: *mut f64,
) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let mu = ref_arg(mu, "mu")?;
        let ms = lib(compute_moments(&mu.0, &point_arg(x, "x")?, r))?;
        let c = lib(cone_from_summary(ms, 0.0, gap_min))?;
        if !gap.is_null() {
            *gap = c.gap;
        }
        *out = Box::into_raw(Box::new(KpgCone(c.cone)));
        Ok(())
    })
}

/// # Safety
/// `c` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn kpg_cone_free(c: *mut KpgCone) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Writes the base and unit axis (4 doubles each; either may be null).
///
/// # Safety
/// `c` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kpg_cone_get(c: *const KpgCone, base: *mut f64, axis: *mut f64) -> KpgStatus {
    guard(|| {
        let c = ref_arg(c, "cone")?;
        for (dst, src) in [(base, c.0.base()), (axis, c.0.axis())] {
            if !dst.is_null() {
                std::slice::from_raw_parts_mut(dst, 4).copy_from_slice(src.as_slice());
            }
        }
        Ok(())
    })
}

/// Euclidean distance from p to the cone.
///
/// # Safety
/// `c` must be a live handle; `p` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn kpg_cone_distance(c: *const KpgCone, p: *const f64, out: *mut f64) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ref_arg(c, "cone")?.0.distance(&point_arg(p, "p")?);
        Ok(())
    })
}

/// Support of a measure as a distance argument.
///
/// # Safety
/// `mu` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kpg_set_from_measure(mu: *const KpgMeasure, out: *mut *mut KpgSet) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let s = ref_arg(mu, "mu")?.0.support_set();
        if s.is_empty() {
            return Err((KpgStatus::Invalid, "measure has empty support".into()));
        }
        *out = Box::into_raw(Box::new(KpgSet(s)));
        Ok(())
    })
}

/// # Safety
/// `c` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kpg_set_from_cone(c: *const KpgCone, out: *mut *mut KpgSet) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(KpgSet(SetHandle::Shape(Shape::Cone(ref_arg(c, "cone")?.0.clone())))));
        Ok(())
    })
}

/// Hyperplane through `point` with the given normal.
///
/// # Safety
/// `point` and `normal` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn kpg_set_from_hyperplane(point: *const f64, normal: *const f64, out: *mut *mut KpgSet) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let p = lib(AffinePlane::hyperplane(point_arg(point, "point")?, point_arg(normal, "normal")?))?;
        *out = Box::into_raw(Box::new(KpgSet(SetHandle::Shape(Shape::Plane(p)))));
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn kpg_set_free(s: *mut KpgSet) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Two-sided relative distance D^{x,r}(a, b).
///
/// # Safety
/// `a`, `b` must be live handles; `x` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn kpg_relative_hausdorff(
    a: *const KpgSet,
    b: *const KpgSet,
    x: *const f64,
    r: f64,
    out: *mut KpgEstimate,
) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let e = lib(relative_hausdorff(&point_arg(x, "x")?, r, &ref_arg(a, "a")?.0, &ref_arg(b, "b")?.0))?;
        *out = KpgEstimate { value: e.value, error: e.error };
        Ok(())
    })
}

/// Doubling deviation at (x, r) on the default τ grid and radius mesh.
///
/// # Safety
/// `mu` must be a live handle; `x` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn kpg_doubling_deviation(mu: *const KpgMeasure, x: *const f64, r: f64, out: *mut f64) -> KpgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let mu = ref_arg(mu, "mu")?;
        if r.is_nan() || r <= 0.0 {
            return Err((KpgStatus::Invalid, format!("radius must be positive, got {r}")));
        }
        let rep = lib(doubling_deviation(&mu.0, &point_arg(x, "x")?, r, &default_radius_mesh(r), &default_tau_grid()))?;
        *out = rep.deviation;
        Ok(())
    })
}
