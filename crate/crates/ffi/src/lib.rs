//! C ABI for the curvegap library.
//!
//! Conventions:
//! - objects are opaque handles created by `cg_*_new`/`cg_*_parse`/`cg_*_load`
//!   and released by the matching `cg_*_free`; handles are never shared
//!   across a free;
//! - fallible calls return a `CgStatus` code; `CG_OK` (0) means success,
//!   `CG_CHECK_FAILED` (2) means the computation ran but the property or
//!   search did not hold, and the remaining codes are usage or runtime
//!   errors;
//! - on any non-zero status a thread-local message is set; fetch it with
//!   `cg_last_error`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use libc::{c_char, c_int, size_t};

use curvegap::bump::BumpKit;
use curvegap::counting::{two_point_form, TWindow};
use curvegap::curve::{calibrate_report, Curve};
use curvegap::gen::random_density;
use curvegap::grid::GridFunction;
use curvegap::oscillatory::decay_fit;
use curvegap::patterns::{search_unit, SearchConfig};
use curvegap::Error;

/// Status codes returned by every fallible call.
pub const CG_OK: c_int = 0;
/// A required pointer was null or an argument was out of range.
pub const CG_INVALID_ARGUMENT: c_int = 1;
/// The computation ran to completion but the checked property failed
/// (no witness found, decay slope above target, budget exhausted).
pub const CG_CHECK_FAILED: c_int = 2;
/// Operational failure: I/O, parse, resolution, or internal error.
pub const CG_ERROR: c_int = 3;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&ch| ch != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &Error) -> c_int {
    match err {
        Error::NoWitnessFound { .. }
        | Error::NoSliceFound { .. }
        | Error::BudgetExceeded { .. } => CG_CHECK_FAILED,
        _ => CG_ERROR,
    }
}

fn fail(err: &Error) -> c_int {
    set_error(&err.to_string());
    status_of(err)
}

/// Runs a closure, translating panics into `CG_ERROR` instead of unwinding
/// across the ABI boundary.
fn guarded(f: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            CG_ERROR
        }
    }
}

/// Opaque curve handle.
pub struct CgCurve {
    curve: Curve,
    kit: BumpKit,
}

/// Opaque grid-sampled set handle.
pub struct CgGrid {
    grid: GridFunction,
}

/// A found two-point pattern: base point `x`, second point `y = x + curve(t)`.
/// Only the first `n` entries of `x` and `y` are meaningful.
#[repr(C)]
#[derive(Default, Clone, Copy)]
pub struct CgWitness {
    pub t: f64,
    pub gap_certified: f64,
    pub overlap_mass: f64,
    pub n: size_t,
    pub x: [f64; 8],
    pub y: [f64; 8],
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message (NUL-terminated, truncated to `cap`) into
/// `buf` and returns the full message length in bytes (excluding the NUL).
#[no_mangle]
pub extern "C" fn cg_last_error(buf: *mut c_char, cap: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let ncopy = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, ncopy);
                *buf.add(ncopy) = 0;
            }
        }
        bytes.len()
    })
}

/// Parses a curve from its JSON description, e.g.
/// `{"polys":[{"coeffs":{"1":1.0}},{"coeffs":{"2":1.0}}]}`.
/// Returns null on error (see `cg_last_error`).
#[no_mangle]
pub unsafe extern "C" fn cg_curve_parse(json: *const c_char) -> *mut CgCurve {
    if json.is_null() {
        set_error("json must not be null");
        return std::ptr::null_mut();
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("json is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    match Curve::from_json_str(text) {
        Ok(curve) => {
            let kit = BumpKit::new(curve.n);
            Box::into_raw(Box::new(CgCurve { curve, kit }))
        }
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Releases a curve handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn cg_curve_free(curve: *mut CgCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Writes the ambient dimension and max degree of the curve.
#[no_mangle]
pub unsafe extern "C" fn cg_curve_dims(
    curve: *const CgCurve,
    out_n: *mut size_t,
    out_degree: *mut u32,
) -> c_int {
    if curve.is_null() || out_n.is_null() || out_degree.is_null() {
        set_error("null argument");
        return CG_INVALID_ARGUMENT;
    }
    *out_n = (*curve).curve.n;
    *out_degree = (*curve).curve.d;
    CG_OK
}

/// Calibrates the dyadic scale-lattice spacing for the curve on an
/// `n_xi` x `n_t` test grid and writes it to `out_gamma`.
#[no_mangle]
pub unsafe extern "C" fn cg_calibrate_gamma(
    curve: *const CgCurve,
    n_xi: size_t,
    n_t: size_t,
    out_gamma: *mut u32,
) -> c_int {
    if curve.is_null() || out_gamma.is_null() || n_xi == 0 || n_t == 0 {
        set_error("null argument or empty test grid");
        return CG_INVALID_ARGUMENT;
    }
    let c = &(*curve).curve;
    guarded(|| match calibrate_report(c, n_xi, n_t) {
        Ok(report) => {
            *out_gamma = report.gamma;
            CG_OK
        }
        Err(e) => fail(&e),
    })
}

/// Loads a grid set saved by the library (binary values + JSON sidecar).
/// Returns null on error.
#[no_mangle]
pub unsafe extern "C" fn cg_grid_load(path: *const c_char) -> *mut CgGrid {
    if path.is_null() {
        set_error("path must not be null");
        return std::ptr::null_mut();
    }
    let text = match CStr::from_ptr(path).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    match GridFunction::load(std::path::Path::new(text)) {
        Ok(grid) => Box::into_raw(Box::new(CgGrid { grid })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Saves the grid set (binary values + JSON sidecar) at `path`.
#[no_mangle]
pub unsafe extern "C" fn cg_grid_save(grid: *const CgGrid, path: *const c_char) -> c_int {
    if grid.is_null() || path.is_null() {
        set_error("null argument");
        return CG_INVALID_ARGUMENT;
    }
    let text = match CStr::from_ptr(path).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return CG_INVALID_ARGUMENT;
        }
    };
    match (*grid).grid.save(std::path::Path::new(text)) {
        Ok(()) => CG_OK,
        Err(e) => fail(&e),
    }
}

/// Builds a seeded random set on the unit box: each cell is 1 with
/// probability `eps`. `dims` points at `ndims` cell counts. Returns null on
/// error.
#[no_mangle]
pub unsafe extern "C" fn cg_grid_random(
    ndims: size_t,
    dims: *const size_t,
    eps: f64,
    seed: u64,
) -> *mut CgGrid {
    if dims.is_null() || ndims == 0 || ndims > 8 || !(0.0..=1.0).contains(&eps) {
        set_error("dims must be non-null with 1..=8 axes and eps in [0,1]");
        return std::ptr::null_mut();
    }
    let dims = std::slice::from_raw_parts(dims, ndims);
    if dims.iter().any(|&d| d < 2) {
        set_error("every axis needs at least 2 cells");
        return std::ptr::null_mut();
    }
    let domain = vec![[0.0, 1.0]; ndims];
    let grid = random_density(dims, &domain, eps, seed);
    Box::into_raw(Box::new(CgGrid { grid }))
}

/// Releases a grid handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn cg_grid_free(grid: *mut CgGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Total mass (integral) of the set; NaN if the handle is null.
#[no_mangle]
pub unsafe extern "C" fn cg_grid_mass(grid: *const CgGrid) -> f64 {
    if grid.is_null() {
        set_error("null grid");
        return f64::NAN;
    }
    (*grid).grid.integral()
}

/// Fits the dyadic decay slope of the curve's oscillatory multiplier over
/// `k_min..=k_max` at scale parameters `(s, ell)`, sampling `shell_points`
/// frequency-shell points. Writes the fitted slope; returns `CG_OK` when the
/// slope clears `-1/d + slack` and `CG_CHECK_FAILED` when it does not.
#[no_mangle]
pub unsafe extern "C" fn cg_decay_slope(
    curve: *const CgCurve,
    s: u32,
    ell: u32,
    k_min: i32,
    k_max: i32,
    shell_points: size_t,
    slack: f64,
    out_slope: *mut f64,
) -> c_int {
    if curve.is_null() || out_slope.is_null() || shell_points == 0 {
        set_error("null argument or zero shell points");
        return CG_INVALID_ARGUMENT;
    }
    let handle = &*curve;
    guarded(|| {
        match decay_fit(&handle.curve, s, ell, k_min, k_max, shell_points, slack, &handle.kit) {
            Ok(fit) => {
                *out_slope = fit.slope;
                if fit.verdict {
                    CG_OK
                } else {
                    set_error("fitted slope misses the decay target");
                    CG_CHECK_FAILED
                }
            }
            Err(e) => fail(&e),
        }
    })
}

/// Two-point counting form of the set along the curve at rescaling `s`,
/// integrated over the full t-window [0,1].
#[no_mangle]
pub unsafe extern "C" fn cg_two_point_form(
    grid: *const CgGrid,
    curve: *const CgCurve,
    s: u32,
    out_value: *mut f64,
) -> c_int {
    if grid.is_null() || curve.is_null() || out_value.is_null() {
        set_error("null argument");
        return CG_INVALID_ARGUMENT;
    }
    let (g, c) = (&*grid, &*curve);
    guarded(|| match two_point_form(&g.grid, &c.curve, s, TWindow::Full, &c.kit) {
        Ok(r) => {
            *out_value = r.value;
            CG_OK
        }
        Err(e) => fail(&e),
    })
}

/// Searches the unit-cube set for a pattern pair {x, x + curve(t)} assuming
/// declared density `epsilon`. On success fills `out` and returns `CG_OK`;
/// returns `CG_CHECK_FAILED` when the scan completes without a witness.
#[no_mangle]
pub unsafe extern "C" fn cg_search_unit(
    grid: *const CgGrid,
    curve: *const CgCurve,
    epsilon: f64,
    out: *mut CgWitness,
) -> c_int {
    if grid.is_null() || curve.is_null() || out.is_null() {
        set_error("null argument");
        return CG_INVALID_ARGUMENT;
    }
    let (g, c) = (&*grid, &*curve);
    if c.curve.n > 8 {
        set_error("witness export supports at most 8 dimensions");
        return CG_INVALID_ARGUMENT;
    }
    let cfg = SearchConfig { epsilon, ..Default::default() };
    guarded(|| match search_unit(&g.grid, &c.curve, &c.kit, &cfg) {
        Ok(w) => {
            let mut res = CgWitness {
                t: w.t,
                gap_certified: w.gap_certified,
                overlap_mass: w.overlap_mass,
                n: c.curve.n,
                ..Default::default()
            };
            for (a, &v) in w.points[0].iter().enumerate() {
                res.x[a] = v;
            }
            for (a, &v) in w.points[1].iter().enumerate() {
                res.y[a] = v;
            }
            *out = res;
            CG_OK
        }
        Err(e) => fail(&e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    const PARABOLA: &str = r#"{"polys":[{"coeffs":{"1":1.0}},{"coeffs":{"2":1.0}}]}"#;

    fn parse(json: &str) -> *mut CgCurve {
        let c = CString::new(json).unwrap();
        unsafe { cg_curve_parse(c.as_ptr()) }
    }

    fn last_error() -> String {
        let mut buf = vec![0i8; 256];
        let n = cg_last_error(buf.as_mut_ptr() as *mut c_char, buf.len());
        let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&b| b as u8).collect();
        String::from_utf8(bytes).unwrap()
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(cg_version()) };
        assert!(!v.to_str().unwrap().is_empty());
    }

    #[test]
    fn curve_roundtrip_and_dims() {
        let c = parse(PARABOLA);
        assert!(!c.is_null());
        let (mut n, mut d) = (0usize, 0u32);
        assert_eq!(unsafe { cg_curve_dims(c, &mut n, &mut d) }, CG_OK);
        assert_eq!((n, d), (2, 2));
        unsafe { cg_curve_free(c) };
    }

    #[test]
    fn bad_json_sets_error_and_returns_null() {
        let c = parse("{not json");
        assert!(c.is_null());
        assert!(!last_error().is_empty());
    }

    #[test]
    fn null_arguments_are_invalid() {
        unsafe {
            assert!(cg_curve_parse(std::ptr::null()).is_null());
            assert_eq!(
                cg_curve_dims(std::ptr::null(), std::ptr::null_mut(), std::ptr::null_mut()),
                CG_INVALID_ARGUMENT
            );
            assert!(cg_grid_random(0, std::ptr::null(), 0.5, 1).is_null());
            assert!(cg_grid_mass(std::ptr::null()).is_nan());
        }
    }

    #[test]
    fn grid_random_mass_matches_density() {
        let dims = [128usize, 128];
        let g = unsafe { cg_grid_random(2, dims.as_ptr(), 0.3, 7) };
        assert!(!g.is_null());
        let mass = unsafe { cg_grid_mass(g) };
        assert!((mass - 0.3).abs() < 0.02, "mass {mass}");
        unsafe { cg_grid_free(g) };
    }

    #[test]
    fn grid_save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(
            dir.path().join("g.bin").to_str().unwrap().to_owned(),
        )
        .unwrap();
        let dims = [64usize];
        unsafe {
            let g = cg_grid_random(1, dims.as_ptr(), 0.5, 3);
            assert_eq!(cg_grid_save(g, path.as_ptr()), CG_OK);
            let h = cg_grid_load(path.as_ptr());
            assert!(!h.is_null());
            assert_eq!(cg_grid_mass(g), cg_grid_mass(h));
            cg_grid_free(g);
            cg_grid_free(h);
        }
    }

    #[test]
    fn calibrate_and_decay_through_the_abi() {
        let c = parse(PARABOLA);
        let mut gamma = 0u32;
        assert_eq!(unsafe { cg_calibrate_gamma(c, 128, 64, &mut gamma) }, CG_OK);
        assert!(gamma >= 1);
        let mut slope = 0.0f64;
        let code = unsafe { cg_decay_slope(c, 0, gamma, 4, 12, 64, 0.1, &mut slope) };
        assert_eq!(code, CG_OK, "{}", last_error());
        assert!(slope < 0.0);
        // impossible slack target is a check failure, not an error
        let code = unsafe { cg_decay_slope(c, 0, gamma, 4, 12, 64, -5.0, &mut slope) };
        assert_eq!(code, CG_CHECK_FAILED);
        unsafe { cg_curve_free(c) };
    }

    #[test]
    fn two_point_form_full_cube() {
        let c = parse(r#"{"polys":[{"coeffs":{"1":1.0}}]}"#);
        let dims = [512usize];
        unsafe {
            let g = cg_grid_random(1, dims.as_ptr(), 1.0, 1);
            let mut value = 0.0f64;
            assert_eq!(cg_two_point_form(g, c, 0, &mut value), CG_OK);
            assert!((value - 0.5).abs() < 5e-3, "value {value}");
            cg_grid_free(g);
            cg_curve_free(c);
        }
    }

    #[test]
    fn search_finds_witness_in_full_cube_and_fails_cleanly_on_empty() {
        let c = parse(PARABOLA);
        let dims = [64usize, 64];
        unsafe {
            let g = cg_grid_random(2, dims.as_ptr(), 1.0, 1);
            let mut w = CgWitness::default();
            assert_eq!(cg_search_unit(g, c, 0.5, &mut w), CG_OK);
            assert!(w.t > 0.0 && w.overlap_mass > 0.0 && w.n == 2);
            // the two points differ by (t, t^2)
            assert!((w.y[0] - w.x[0] - w.t).abs() < 1e-12);
            assert!((w.y[1] - w.x[1] - w.t * w.t).abs() < 1e-12);
            cg_grid_free(g);

            // a handful of scattered cells passes the density precondition
            // but no pair aligns with the curve: the scan completes empty
            let sparse = cg_grid_random(2, dims.as_ptr(), 0.002, 11);
            let code = cg_search_unit(sparse, c, 1.0 / (64.0 * 64.0), &mut w);
            assert_eq!(code, CG_CHECK_FAILED, "{}", last_error());
            cg_grid_free(sparse);
            cg_curve_free(c);
        }
    }
}
