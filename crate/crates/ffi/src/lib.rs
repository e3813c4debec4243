//! C ABI over `bvflow`.
//!
//! Every function returns a [`BvfStatus`]; on failure the message is kept per
//! thread and read back with [`bvf_last_error`]. Handles are opaque and must be
//! released with their `_free` function. Matrices are row-major.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use bvflow::derivative::{gronwall_check, solve_stieltjes, DerivativePath, StieltjesRule};
use bvflow::drift::{Drift, DriftDecl, DriftSpec};
use bvflow::harness::{girsanov_density, ReferenceRoute};
use bvflow::kato::{kato_classify, DEFAULT_EPSILONS};
use bvflow::measure::SignedMeasureSpec;
use bvflow::scenario::{self, Overrides};
use bvflow::sde::{simulate_one, BrownianPath, FlowPath, TimeGrid};
use bvflow::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BvfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Parse = 4,
    NotKato = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    AssertionFailed = 8,
    Io = 9,
    Panic = 10,
}

/// Drift built from a catalogue declaration.
pub struct BvfDrift {
    spec: DriftSpec,
}

/// Simulated flow path with its driving noise.
pub struct BvfPath {
    noise: BrownianPath,
    flow: FlowPath,
}

/// Derivative `Y` of the flow along one path.
pub struct BvfDerivative {
    y: DerivativePath,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(m: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = m);
}

fn status_of(e: &Error) -> BvfStatus {
    match e {
        Error::InvalidArgument(_) | Error::UnsupportedRegion(_) | Error::UnsupportedDimension { .. } => BvfStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => BvfStatus::DimensionMismatch,
        Error::NotKato(_) => BvfStatus::NotKato,
        Error::Scenario(_) => BvfStatus::Parse,
        Error::Io(_) => BvfStatus::Io,
        Error::DiagonalSingularity { .. } | Error::InfiniteCharacteristic { .. } | Error::Quadrature(_) | Error::Divergence { .. } => BvfStatus::Numerical,
    }
}

fn guard<F: FnOnce() -> Result<(), (BvfStatus, String)>>(f: F) -> BvfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            BvfStatus::Ok
        }
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("panic inside bvflow".into());
            BvfStatus::Panic
        }
    }
}

fn lib(e: Error) -> (BvfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (BvfStatus, String) {
    (BvfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (BvfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (BvfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], (BvfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn fill(out: *mut f64, cap: usize, src: &[f64]) -> Result<(), (BvfStatus, String)> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if cap < src.len() {
        return Err((BvfStatus::BufferTooSmall, format!("need {} doubles, got {cap}", src.len())));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bvf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// NUL-terminated) and returns its full length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn bvf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let m = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = m.len().min(len - 1);
            std::ptr::copy_nonoverlapping(m.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        m.len()
    })
}

/// Builds a drift from a TOML declaration such as `id = "sign"` / `beta = 0.5`.
///
/// # Safety
/// `decl` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bvf_drift_new(decl: *const c_char, out: *mut *mut BvfDrift) -> BvfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d: DriftDecl = toml::from_str(text(decl, "decl")?).map_err(|e| (BvfStatus::Parse, e.to_string()))?;
        let spec = d.build().map_err(lib)?;
        *out = Box::into_raw(Box::new(BvfDrift { spec }));
        Ok(())
    })
}

/// # Safety
/// `drift` must come from [`bvf_drift_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn bvf_drift_free(drift: *mut BvfDrift) {
    if !drift.is_null() {
        drop(Box::from_raw(drift));
    }
}

/// # Safety
/// `drift` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bvf_drift_dimension(drift: *const BvfDrift) -> usize {
    drift.as_ref().map_or(0, |d| d.spec.dimension)
}

/// `out = a(x)`; both buffers hold `d` doubles.
///
/// # Safety
/// Pointers valid for `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn bvf_drift_eval(drift: *const BvfDrift, x: *const f64, d: usize, out: *mut f64) -> BvfStatus {
    guard(|| {
        let drift = drift.as_ref().ok_or_else(|| null("drift"))?;
        if d != drift.spec.dimension {
            return Err(lib(Error::DimensionMismatch { expected: drift.spec.dimension, got: d }));
        }
        let v = drift.spec.value(slice(x, d, "x")?);
        fill(out, d, &v)
    })
}

/// Kato classification of a TOML measure declaration (`dimension`, `positive`,
/// `negative`). Writes the verdict and, when `values` is non-null, the local
/// potential per epsilon of the default grid (`inf` when infinite).
///
/// # Safety
/// `measure` NUL-terminated; `is_kato` writable; `values` null or valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bvf_kato_classify(measure: *const c_char, is_kato: *mut bool, values: *mut f64, len: usize) -> BvfStatus {
    guard(|| {
        if is_kato.is_null() {
            return Err(null("is_kato"));
        }
        let m: SignedMeasureSpec = toml::from_str(text(measure, "measure")?).map_err(|e| (BvfStatus::Parse, e.to_string()))?;
        let r = kato_classify(&m, &DEFAULT_EPSILONS).map_err(lib)?;
        *is_kato = r.is_kato;
        if !values.is_null() {
            let v: Vec<f64> = r.per_epsilon_values.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
            fill(values, len, &v)?;
        }
        Ok(())
    })
}

/// Number of epsilons written by [`bvf_kato_classify`].
#[no_mangle]
pub extern "C" fn bvf_kato_grid_len() -> usize {
    DEFAULT_EPSILONS.len()
}

/// Euler flow from `x` on `[0, t_end]` driven by noise stream `(seed, stream)`.
///
/// # Safety
/// `drift` live; `x` valid for `d` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bvf_simulate(
    drift: *const BvfDrift,
    x: *const f64,
    d: usize,
    t_end: f64,
    dt: f64,
    seed: u64,
    stream: u64,
    out: *mut *mut BvfPath,
) -> BvfStatus {
    guard(|| {
        let drift = drift.as_ref().ok_or_else(|| null("drift"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = slice(x, d, "x")?;
        let grid = TimeGrid::new(t_end, dt).map_err(lib)?;
        let noise = BrownianPath::sample(seed, stream, drift.spec.dimension, grid);
        let flow = simulate_one(&drift.spec, x, &noise).map_err(lib)?;
        *out = Box::into_raw(Box::new(BvfPath { noise, flow }));
        Ok(())
    })
}

/// # Safety
/// `path` must come from [`bvf_simulate`] or be null.
#[no_mangle]
pub unsafe extern "C" fn bvf_path_free(path: *mut BvfPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Number of time steps; the path has `steps + 1` states.
///
/// # Safety
/// `path` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bvf_path_steps(path: *const BvfPath) -> usize {
    path.as_ref().map_or(0, |p| p.flow.steps())
}

/// States row by row, `(steps + 1) * d` doubles.
///
/// # Safety
/// `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bvf_path_states(path: *const BvfPath, out: *mut f64, len: usize) -> BvfStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        let flat: Vec<f64> = p.flow.states().concat();
        fill(out, len, &flat)
    })
}

/// Girsanov density of `g_level * a` along `x + W` for the noise of `path`.
///
/// # Safety
/// Handles live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bvf_girsanov_density(drift: *const BvfDrift, path: *const BvfPath, level: f64, out: *mut f64) -> BvfStatus {
    guard(|| {
        let drift = drift.as_ref().ok_or_else(|| null("drift"))?;
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(level > 0.0) {
            return Err((BvfStatus::InvalidArgument, "level must be positive".into()));
        }
        let m = drift.spec.mollify(level);
        *out = girsanov_density(&p.noise, &p.flow.state(0), &m as &dyn Drift).map_err(lib)?;
        Ok(())
    })
}

/// Flow derivative along `path`: the gradient occupation integral for smooth
/// drifts, local time in d = 1, fine smoothing otherwise.
///
/// # Safety
/// Handles live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bvf_derivative(drift: *const BvfDrift, path: *const BvfPath, out: *mut *mut BvfDerivative) -> BvfStatus {
    guard(|| {
        let drift = drift.as_ref().ok_or_else(|| null("drift"))?;
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let a = ReferenceRoute::new(&drift.spec).and_then(|r| r.functional(&p.flow)).map_err(lib)?;
        let y = solve_stieltjes(&a, StieltjesRule::Exponential).map_err(lib)?;
        *out = Box::into_raw(Box::new(BvfDerivative { y }));
        Ok(())
    })
}

/// # Safety
/// `y` must come from [`bvf_derivative`] or be null.
#[no_mangle]
pub unsafe extern "C" fn bvf_derivative_free(y: *mut BvfDerivative) {
    if !y.is_null() {
        drop(Box::from_raw(y));
    }
}

/// `Y_T` (`d * d` doubles) and `Var A_T`.
///
/// # Safety
/// `terminal` valid for `len` doubles; `variation` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bvf_derivative_terminal(y: *const BvfDerivative, terminal: *mut f64, len: usize, variation: *mut f64) -> BvfStatus {
    guard(|| {
        let y = y.as_ref().ok_or_else(|| null("derivative"))?;
        fill(terminal, len, y.y.terminal())?;
        if !variation.is_null() {
            *variation = *y.y.variation.last().unwrap_or(&0.0);
        }
        Ok(())
    })
}

/// Whether `|Y_t| <= exp(Var A_t)(1 + 1e-9 K)` holds at every node; `max_ratio` optional.
///
/// # Safety
/// `holds` writable; `max_ratio` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bvf_derivative_gronwall(y: *const BvfDerivative, holds: *mut bool, max_ratio: *mut f64) -> BvfStatus {
    guard(|| {
        let y = y.as_ref().ok_or_else(|| null("derivative"))?;
        if holds.is_null() {
            return Err(null("holds"));
        }
        let g = gronwall_check(&y.y);
        *holds = g.holds;
        if !max_ratio.is_null() {
            *max_ratio = g.max_ratio;
        }
        Ok(())
    })
}

/// Runs a scenario file; `out_dir` may be null. Failed hard checks give
/// [`BvfStatus::AssertionFailed`] with their names in the error message.
///
/// # Safety
/// `path` NUL-terminated; `out_dir` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bvf_run_scenario(path: *const c_char, out_dir: *const c_char) -> BvfStatus {
    guard(|| {
        let mut s = scenario::load(std::path::Path::new(text(path, "path")?)).map_err(lib)?;
        if !out_dir.is_null() {
            s.apply(&Overrides { out_dir: Some(PathBuf::from(text(out_dir, "out_dir")?)), ..Overrides::default() });
        }
        let outcome = scenario::run(&s).map_err(lib)?;
        let failed = outcome.hard_failures();
        if failed.is_empty() {
            Ok(())
        } else {
            let names: Vec<String> = failed.into_iter().map(|(_, k, c)| format!("{k}: {c}")).collect();
            Err((BvfStatus::AssertionFailed, names.join(", ")))
        }
    })
}
