//! C ABI over `blpp-core`.
//!
//! Every function returns a [`BlppStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read with
//! [`blpp_last_error_message`]. Objects are opaque handles released by their
//! matching `_free` function. Panics are caught at the boundary.

use blpp_core::continuum_kernels::{heat_kernel, s_mt, ContinuumContour, ContinuumIC, HittingConfig};
use blpp_core::discrete_kernels::k_geometric;
use blpp_core::discrete_model::{DiscreteIC, EventSpec, GeomParams};
use blpp_core::fredholm::{
    solve_continuum, solve_continuum_fixed, solve_discrete, ContinuumQuery, ContinuumSolverConfig, DiscreteQuery,
    WindowConfig,
};
use blpp_core::harness::{run, Experiment, ExperimentConfig};
use blpp_core::simulate::{blpp_mc_direct, empirical_joint, glpp_event_probability, DirectConfig, MCEstimate};
use blpp_core::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlppStatus {
    Ok = 0,
    InvalidParameter = 1,
    ShapeMismatch = 2,
    PoleCollision = 3,
    Convergence = 4,
    PrecisionLoss = 5,
    Truncation = 6,
    NonDecaying = 7,
    Distributional = 8,
    Config = 9,
    Incomparable = 10,
    Io = 11,
    NullPointer = 12,
    Panic = 13,
}

impl From<&Error> for BlppStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_) => BlppStatus::InvalidParameter,
            Error::ShapeMismatch { .. } => BlppStatus::ShapeMismatch,
            Error::PoleCollision { .. } => BlppStatus::PoleCollision,
            Error::Convergence { .. } => BlppStatus::Convergence,
            Error::PrecisionLoss { .. } => BlppStatus::PrecisionLoss,
            Error::Truncation { .. } => BlppStatus::Truncation,
            Error::NonDecaying { .. } => BlppStatus::NonDecaying,
            Error::Distributional(_) => BlppStatus::Distributional,
            Error::Config(_) => BlppStatus::Config,
            Error::Incomparable(_) => BlppStatus::Incomparable,
            Error::Io(_) => BlppStatus::Io,
        }
    }
}

/// A Monte Carlo frequency.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlppEstimate {
    pub value: f64,
    pub stderr: f64,
    /// 99% DKW half-width.
    pub band: f64,
    pub samples: u64,
}

impl From<&MCEstimate> for BlppEstimate {
    fn from(e: &MCEstimate) -> Self {
        Self {
            value: e.value,
            stderr: e.stderr,
            band: e.dkw_band,
            samples: e.samples as u64,
        }
    }
}

/// Brownian initial data.
pub struct BlppContinuumIc(ContinuumIC);

/// Geometric parameters with column initial data.
pub struct BlppDiscreteModel {
    params: GeomParams,
    ic: DiscreteIC,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> BlppStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            BlppStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            BlppStatus::from(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BlppStatus::NullPointer
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BlppStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::Core(Error::Config(format!("{what} is not UTF-8: {e}"))))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version, `<crate version>+<git describe>`. Static storage.
#[no_mangle]
pub extern "C" fn blpp_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(blpp_core::harness::VERSION).expect("no interior nul"))
        .as_ptr()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn blpp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Narrow-wedge data: `X(0) = 0`, `-∞` elsewhere.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn blpp_ic_narrow_wedge(out: *mut *mut BlppContinuumIc) -> BlppStatus {
    guard(|| {
        *self::out(out, "out")? = boxed(BlppContinuumIc(ContinuumIC::NarrowWedge));
        Ok(())
    })
}

/// Constant data `X = level`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn blpp_ic_flat(level: f64, out: *mut *mut BlppContinuumIc) -> BlppStatus {
    guard(|| {
        let ic = ContinuumIC::Flat(level);
        ic.validate()?;
        *self::out(out, "out")? = boxed(BlppContinuumIc(ic));
        Ok(())
    })
}

/// Piecewise-linear data through `(t[i], x[i])`, `t` increasing from 0 to 1.
///
/// # Safety
/// `t` and `x` must point to `len` doubles; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn blpp_ic_piecewise_linear(
    t: *const f64,
    x: *const f64,
    len: usize,
    out: *mut *mut BlppContinuumIc,
) -> BlppStatus {
    guard(|| {
        let (t, x) = (slice(t, len, "t")?, slice(x, len, "x")?);
        let ic = ContinuumIC::piecewise_linear(t.iter().copied().zip(x.iter().copied()).collect())?;
        *self::out(out, "out")? = boxed(BlppContinuumIc(ic));
        Ok(())
    })
}

/// # Safety
/// `ic` must come from a `blpp_ic_*` constructor and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn blpp_ic_free(ic: *mut BlppContinuumIc) {
    if !ic.is_null() {
        drop(Box::from_raw(ic));
    }
}

/// Geometric model with weight parameter `q`, walk parameter `theta` and
/// column data `x[0..len]` (weakly increasing).
///
/// # Safety
/// `x` must point to `len` integers; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn blpp_discrete_model_new(
    q: f64,
    theta: f64,
    x: *const i64,
    len: usize,
    out: *mut *mut BlppDiscreteModel,
) -> BlppStatus {
    guard(|| {
        let params = GeomParams::new(q, theta)?;
        let ic = DiscreteIC::new(slice(x, len, "x")?.to_vec())?;
        *self::out(out, "out")? = boxed(BlppDiscreteModel { params, ic });
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`blpp_discrete_model_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn blpp_discrete_model_free(model: *mut BlppDiscreteModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `P(G(m, columns[i]) < levels[i] for all i)` by the Fredholm determinant.
/// `certificate` may be null.
///
/// # Safety
/// `columns` and `levels` must point to `k` values; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blpp_discrete_probability(
    model: *const BlppDiscreteModel,
    m: u32,
    columns: *const u64,
    levels: *const i64,
    k: usize,
    value: *mut f64,
    certificate: *mut f64,
) -> BlppStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let pairs = slice(columns, k, "columns")?
            .iter()
            .zip(slice(levels, k, "levels")?)
            .map(|(&n, &a)| (n as i64, a))
            .collect();
        let v = solve_discrete(&DiscreteQuery { m, pairs }, &model.ic, &model.params, &WindowConfig::default())?;
        *out(value, "value")? = v.value;
        if let Some(c) = certificate.as_mut() {
            *c = v.certificate.unwrap_or(0.0);
        }
        Ok(())
    })
}

/// Geometric kernel `K(n1, z1; n2, z2)` after `m` steps with its tail bound.
/// `tail_bound` may be null.
///
/// # Safety
/// `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blpp_discrete_kernel(
    model: *const BlppDiscreteModel,
    m: u32,
    n1: u64,
    z1: i64,
    n2: u64,
    z2: i64,
    value: *mut f64,
    tail_bound: *mut f64,
) -> BlppStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let v = k_geometric(n1 as usize, z1, n2 as usize, z2, m, &model.ic, &model.params)?;
        *out(value, "value")? = v.value;
        if let Some(t) = tail_bound.as_mut() {
            *t = v.tail_bound;
        }
        Ok(())
    })
}

/// Monte Carlo frequency of the same event as [`blpp_discrete_probability`].
///
/// # Safety
/// `columns` and `levels` must point to `k` values; `estimate` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blpp_discrete_monte_carlo(
    model: *const BlppDiscreteModel,
    m: u32,
    columns: *const u64,
    levels: *const i64,
    k: usize,
    samples: u64,
    seed: u64,
    estimate: *mut BlppEstimate,
) -> BlppStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let pairs = slice(columns, k, "columns")?
            .iter()
            .zip(slice(levels, k, "levels")?)
            .map(|(&n, &a)| (n as usize, a))
            .collect();
        let e = glpp_event_probability(&model.ic, m, &EventSpec::new(pairs)?, &model.params, samples as usize, seed)?;
        *out(estimate, "estimate")? = BlppEstimate::from(&e);
        Ok(())
    })
}

/// `P(BLPP(X; (times[i], m)) <= thresholds[i] for all i)` by the Fredholm
/// determinant. `nodes = 0` refines until successive values differ by less
/// than `1e-4`; otherwise a fixed node count per slice is used. `seed` drives
/// the simulated hypograph kernel of piecewise-linear data. `stderr` and
/// `certificate` may be null.
///
/// # Safety
/// `times` and `thresholds` must point to `k` doubles; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blpp_continuum_probability(
    ic: *const BlppContinuumIc,
    m: u32,
    times: *const f64,
    thresholds: *const f64,
    k: usize,
    nodes: u64,
    seed: u64,
    value: *mut f64,
    stderr: *mut f64,
    certificate: *mut f64,
) -> BlppStatus {
    guard(|| {
        let ic = &handle(ic, "ic")?.0;
        let pairs = slice(times, k, "times")?
            .iter()
            .copied()
            .zip(slice(thresholds, k, "thresholds")?.iter().copied())
            .collect();
        let q = ContinuumQuery { m, pairs };
        let cfg = ContinuumSolverConfig {
            seed,
            ..ContinuumSolverConfig::default()
        };
        let v = if nodes == 0 {
            solve_continuum(&q, ic, &cfg)?.0
        } else {
            solve_continuum_fixed(&q, ic, nodes as usize, &cfg)?
        };
        *out(value, "value")? = v.value;
        if let Some(s) = stderr.as_mut() {
            *s = v.stderr;
        }
        if let Some(c) = certificate.as_mut() {
            *c = v.certificate.unwrap_or(0.0);
        }
        Ok(())
    })
}

/// Direct Monte Carlo of the Brownian model on a time mesh, with the
/// Brownian-bridge correction.
///
/// # Safety
/// `times` and `thresholds` must point to `k` doubles; `estimate` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blpp_continuum_monte_carlo(
    ic: *const BlppContinuumIc,
    m: u32,
    times: *const f64,
    thresholds: *const f64,
    k: usize,
    samples: u64,
    mesh: f64,
    seed: u64,
    estimate: *mut BlppEstimate,
) -> BlppStatus {
    guard(|| {
        let ic = &handle(ic, "ic")?.0;
        let cfg = DirectConfig {
            mesh,
            ..DirectConfig::default()
        };
        let rows = blpp_mc_direct(ic, m, slice(times, k, "times")?, samples as usize, &cfg, seed)?;
        let e = empirical_joint(&rows, slice(thresholds, k, "thresholds")?, seed)?;
        *out(estimate, "estimate")? = BlppEstimate::from(&e);
        Ok(())
    })
}

/// Heat kernel `(2πt)^{-1/2} exp(-(x-y)²/2t)`.
///
/// # Safety
/// `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blpp_heat_kernel(t: f64, x: f64, y: f64, value: *mut f64) -> BlppStatus {
    guard(|| {
        *out(value, "value")? = heat_kernel(t, x, y)?;
        Ok(())
    })
}

/// `S_{m,t}(x, y)` for any integer `m` and real `t`.
///
/// # Safety
/// `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blpp_s_mt(m: i64, t: f64, x: f64, y: f64, value: *mut f64) -> BlppStatus {
    guard(|| {
        *out(value, "value")? = s_mt(m, t, x, y, &ContinuumContour::Auto)?;
        Ok(())
    })
}

/// Brownian extended kernel `K(t1, x; t2, y)`. Piecewise-linear data is
/// simulated with `samples` paths; `stderr` may be null.
///
/// # Safety
/// `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blpp_extended_kernel(
    ic: *const BlppContinuumIc,
    m: u32,
    t1: f64,
    x: f64,
    t2: f64,
    y: f64,
    samples: u64,
    seed: u64,
    value: *mut f64,
    stderr: *mut f64,
) -> BlppStatus {
    guard(|| {
        let ic = &handle(ic, "ic")?.0;
        let cfg = HittingConfig {
            samples: samples as usize,
            ..HittingConfig::default()
        };
        let v = blpp_core::continuum_kernels::k_extended(t1, x, t2, y, m, ic, &cfg, seed)?;
        *out(value, "value")? = v.value;
        if let Some(s) = stderr.as_mut() {
            *s = v.stderr;
        }
        Ok(())
    })
}

/// Run a named experiment (`"fredholm-continuum"`, `"mc-blpp"`, ...) from a
/// JSON config and return its record as a JSON string. Free the string with
/// [`blpp_string_free`]. `passed` may be null.
///
/// # Safety
/// `experiment` and `config_json` must be nul-terminated; `record_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blpp_run_experiment(
    experiment: *const c_char,
    config_json: *const c_char,
    record_json: *mut *mut c_char,
    passed: *mut bool,
) -> BlppStatus {
    guard(|| {
        let name = string(experiment, "experiment")?;
        let exp: Experiment = serde_json::from_value(serde_json::Value::String(name.into()))
            .map_err(|_| Error::Config(format!("unknown experiment {name}")))?;
        let config = ExperimentConfig::from_json(string(config_json, "config_json")?)?;
        let record = run(exp, &config)?;
        let text = CString::new(record.to_json_line()?).map_err(|e| Error::Io(e.to_string()))?;
        *out(record_json, "record_json")? = text.into_raw();
        if let Some(p) = passed.as_mut() {
            *p = record.passed();
        }
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn blpp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
