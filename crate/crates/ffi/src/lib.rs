//! C ABI over `dcyl`. Objects cross the boundary as opaque handles owned by
//! the caller and released with the matching `_free`. Every call returns a
//! [`DcylStatus`]; on failure the message is kept per thread and read with
//! [`dcyl_last_error_message`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dcyl::disconnect::disconnection_time;
use dcyl::harness::green_sum_residual;
use dcyl::limitlaw::{zeta_laplace, zeta_tail};
use dcyl::potential::infinite::equilibrium_far_field;
use dcyl::potential::solver::SolverConfig;
use dcyl::walk::{Outcome, Scales, WalkRun};
use dcyl::{Error, Geometry, Point, PointSet};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DcylStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The operation needs a transient lattice (dimension >= 3).
    Recurrent = 3,
    /// A solver or estimator did not reach its tolerance.
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// A cylinder T × Z or a lattice Z^d.
pub struct DcylGeometry(Geometry);

/// A seeded simple random walk.
pub struct DcylWalk(WalkRun);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(DcylStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Recurrent { .. } => DcylStatus::Recurrent,
            Error::NoConvergence { .. }
            | Error::CapacityTolerance { .. }
            | Error::NoSignChange
            | Error::DegenerateFit(_) => DcylStatus::Numerical,
            Error::Io(_) | Error::Json(_) => DcylStatus::Io,
            _ => DcylStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DcylStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DcylStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DcylStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DcylStatus::Internal
        }
    }
}

/// # Safety
/// `p` must be null or valid for writes.
unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// # Safety
/// `p` must be null or point to a live handle.
unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dcyl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, without the
/// terminating NUL; 0 when there is none.
#[no_mangle]
pub extern "C" fn dcyl_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message (NUL-terminated) into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_last_error_message(buf: *mut c_char, len: usize) -> DcylStatus {
    if buf.is_null() {
        return DcylStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&b""[..], |c| c.as_bytes());
        if len < bytes.len() + 1 {
            return DcylStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), bytes.len());
        *buf.add(bytes.len()) = 0;
        DcylStatus::Ok
    })
}

/// The cylinder (Z/NZ)^d × Z.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_geometry_cylinder(d: usize, n: u32, out: *mut *mut DcylGeometry) -> DcylStatus {
    guard(|| {
        let g = Geometry::cylinder(d, n)?;
        write(out, Box::into_raw(Box::new(DcylGeometry(g))), "out")
    })
}

/// The lattice Z^dim.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_geometry_lattice(dim: usize, out: *mut *mut DcylGeometry) -> DcylStatus {
    guard(|| {
        let g = Geometry::lattice(dim)?;
        write(out, Box::into_raw(Box::new(DcylGeometry(g))), "out")
    })
}

/// Number of coordinates of a point (d + 1 on the cylinder).
///
/// # Safety
/// `g` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_geometry_dim(g: *const DcylGeometry, out: *mut usize) -> DcylStatus {
    guard(|| write(out, borrow(g, "geometry")?.0.dim(), "out"))
}

/// # Safety
/// `g` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcyl_geometry_free(g: *mut DcylGeometry) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// A walk from the origin.
///
/// # Safety
/// `g` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_walk_new(g: *const DcylGeometry, seed: u64, out: *mut *mut DcylWalk) -> DcylStatus {
    guard(|| {
        let g = borrow(g, "geometry")?.0;
        let run = WalkRun::new(g, g.origin(), seed)?;
        write(out, Box::into_raw(Box::new(DcylWalk(run))), "out")
    })
}

/// Advances the walk by `steps` steps.
///
/// # Safety
/// `w` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcyl_walk_advance(w: *mut DcylWalk, steps: u64) -> DcylStatus {
    guard(|| {
        let w = w.as_mut().ok_or_else(|| null("walk"))?;
        for _ in 0..steps {
            w.0.step();
        }
        Ok(())
    })
}

/// Copies the current position into `buf`, which must hold the geometry's
/// dimension.
///
/// # Safety
/// `w` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_walk_position(w: *const DcylWalk, buf: *mut i64, len: usize) -> DcylStatus {
    guard(|| {
        let p = borrow(w, "walk")?.0.position();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < p.len() {
            return Err(Failure(DcylStatus::BufferTooSmall, format!("position needs {} entries", p.len())));
        }
        ptr::copy_nonoverlapping(p.as_ptr(), buf, p.len());
        Ok(())
    })
}

/// Steps taken so far.
///
/// # Safety
/// `w` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_walk_time(w: *const DcylWalk, out: *mut u64) -> DcylStatus {
    guard(|| write(out, borrow(w, "walk")?.0.time(), "out"))
}

/// # Safety
/// `w` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcyl_walk_free(w: *mut DcylWalk) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Disconnection time of a fresh walk from the origin. When the budget runs
/// out first, `*censored` is set and `*time` holds the budget, a lower bound.
///
/// # Safety
/// `g` must be a live handle; `time` and `censored` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_disconnection_time(
    g: *const DcylGeometry,
    seed: u64,
    budget: u64,
    time: *mut u64,
    censored: *mut bool,
) -> DcylStatus {
    guard(|| {
        let g = borrow(g, "geometry")?.0;
        if time.is_null() || censored.is_null() {
            return Err(null("output"));
        }
        let mut run = WalkRun::new(g, g.origin(), seed)?;
        let (dt, _) = disconnection_time(&mut run, budget)?;
        let (t, c) = match dt.outcome {
            Outcome::Stopped(t) => (t, false),
            Outcome::Exhausted(b) => (b, true),
        };
        write(time, t, "time")?;
        write(censored, c, "censored")
    })
}

/// Capacity of the finite set given as `count` points of `dim` coordinates
/// (row-major), computed on a box of the given margin with far-field
/// correction.
///
/// # Safety
/// `points` must be valid for `count·dim` reads and `out` for writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_capacity(
    dim: usize,
    points: *const i64,
    count: usize,
    margin: u64,
    out: *mut f64,
) -> DcylStatus {
    guard(|| {
        if points.is_null() {
            return Err(null("points"));
        }
        if count == 0 || dim == 0 || margin == 0 {
            return Err(Failure(DcylStatus::InvalidArgument, "need count, dim and margin >= 1".into()));
        }
        let coords = std::slice::from_raw_parts(points, count * dim);
        let k: PointSet = coords.chunks(dim).map(|c| Point(c.to_vec())).collect();
        let eq = equilibrium_far_field(&k, margin, &SolverConfig::default())?;
        write(out, eq.value, "out")
    })
}

/// E[exp(−θ²ζ(u)/2)].
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_zeta_laplace(theta: f64, u: f64, out: *mut f64) -> DcylStatus {
    guard(|| {
        if !(theta >= 0.0 && u > 0.0) {
            return Err(Failure(DcylStatus::InvalidArgument, "need theta >= 0 and u > 0".into()));
        }
        write(out, zeta_laplace(theta, u), "out")
    })
}

/// W[ζ(u) ≥ s] and its inversion error estimate.
///
/// # Safety
/// `tail` and `err` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_zeta_tail(s: f64, u: f64, tail: *mut f64, err: *mut f64) -> DcylStatus {
    guard(|| {
        if !(s >= 0.0 && u > 0.0) {
            return Err(Failure(DcylStatus::InvalidArgument, "need s >= 0 and u > 0".into()));
        }
        let t = zeta_tail(s, u);
        write(tail, t.tail, "tail")?;
        write(err, t.err, "err")
    })
}

/// Largest deviation of the Green sum of the excursion box from its
/// constant, on the cylinder of side n at the default scales.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcyl_green_sum_residual(d: usize, n: u32, out: *mut f64) -> DcylStatus {
    guard(|| write(out, green_sum_residual(d, n, Scales::for_side(n))?, "out"))
}
