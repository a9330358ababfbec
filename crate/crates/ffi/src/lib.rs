//! C ABI for `kslab`.
//!
//! Every fallible function returns a [`KslabStatus`]; on failure a message is
//! available from [`kslab_last_error`] on the same thread. Objects are
//! opaque handles created by `*_new`/`*_run` functions and released with
//! the matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use kslab::burgers::{shock_time, BurgersProblem, Profile};
use kslab::fields::{cumulative_from_density, density_from_cumulative, NegativityPolicy, QuantileDensity, RadialDensity, RadialGrid};
use kslab::jko1d::{run_jko, w2, FreeEnergySpec, JkoConfig};
use kslab::ks_radial::{run, Scheme, SolverConfig, Termination, Trajectory};
use kslab::potential::ScalarFn;
use kslab::stationary::{bubble_cumulative, bubble_density, BubbleParams};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KslabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    /// A numerical routine failed (non-convergence, degenerate fit, ...).
    Numerical = 3,
    OutOfRange = 4,
    BufferTooSmall = 5,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn fail(status: KslabStatus, msg: impl Into<String>) -> KslabStatus {
    set_error(msg);
    status
}

fn from_core(e: kslab::Error) -> KslabStatus {
    let status = match e {
        kslab::Error::InvalidInput(_)
        | kslab::Error::SizeMismatch { .. }
        | kslab::Error::NotStrictlyIncreasing { .. }
        | kslab::Error::NegativeDensity { .. }
        | kslab::Error::ZeroMass
        | kslab::Error::StepTooLarge { .. }
        | kslab::Error::Hypothesis(_) => KslabStatus::InvalidInput,
        _ => KslabStatus::Numerical,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> KslabStatus) -> KslabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(KslabStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn input<'a>(data: *const f64, len: usize) -> Result<&'a [f64], KslabStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(KslabStatus::NullPointer, "null input array"));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> KslabStatus {
    if out.is_null() {
        return fail(KslabStatus::NullPointer, "null output pointer");
    }
    out.write(value);
    KslabStatus::Ok
}

/// Copies `src` into `buf` when it fits; `written` always receives the full length.
unsafe fn copy_out(src: &[f64], buf: *mut f64, capacity: usize, written: *mut usize) -> KslabStatus {
    if !written.is_null() {
        written.write(src.len());
    }
    if capacity < src.len() {
        return fail(KslabStatus::BufferTooSmall, format!("need {} values, buffer holds {capacity}", src.len()));
    }
    if buf.is_null() {
        return fail(KslabStatus::NullPointer, "null output buffer");
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    KslabStatus::Ok
}

/// Message of the last failure on this thread (empty if none). The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kslab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kslab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Free functions

/// Bubble density `8λ²/(λ² + r²)²`; NaN for `lambda <= 0`.
#[no_mangle]
pub extern "C" fn kslab_bubble_density(lambda: f64, r: f64) -> f64 {
    BubbleParams::new(lambda).map(|p| bubble_density(p, r)).unwrap_or(f64::NAN)
}

/// Bubble mass inside radius `r`; NaN for `lambda <= 0`.
#[no_mangle]
pub extern "C" fn kslab_bubble_cumulative(lambda: f64, r: f64) -> f64 {
    BubbleParams::new(lambda).map(|p| bubble_cumulative(p, r)).unwrap_or(f64::NAN)
}

/// Shock time of Burgers' equation for a profile sampled at increasing `xs`
/// (interpolated by a natural cubic spline). `time` receives +inf when no
/// shock forms; `x0` receives the shock location or NaN.
///
/// # Safety
/// `xs` and `us` must point to `n` readable doubles; `time` and `x0` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn kslab_shock_time_sampled(xs: *const f64, us: *const f64, n: usize, time: *mut f64, x0: *mut f64) -> KslabStatus {
    guard(|| {
        let (x, u) = match (input(xs, n), input(us, n)) {
            (Ok(x), Ok(u)) => (x, u),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        if n < 4 {
            return fail(KslabStatus::InvalidInput, "need at least four samples");
        }
        let profile = match Profile::sampled(x.to_vec(), u.to_vec()) {
            Ok(p) => p,
            Err(e) => return from_core(e),
        };
        let problem = match BurgersProblem::new(profile, x[0], x[n - 1]) {
            Ok(p) => p,
            Err(e) => return from_core(e),
        };
        let s = shock_time(&problem);
        let st = write_out(time, s.time);
        if st != KslabStatus::Ok {
            return st;
        }
        write_out(x0, s.x0.unwrap_or(f64::NAN))
    })
}

// ---------------------------------------------------------------------------
// Radial Keller-Segel trajectories

/// Parameters of a radial Keller-Segel run from Gaussian data of the given
/// total mass and width.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KslabKsConfig {
    pub mass: f64,
    pub width: f64,
    pub nodes: usize,
    pub radius: f64,
    pub t_end: f64,
    pub dt_initial: f64,
    pub dt_min: f64,
    pub cfl_factor: f64,
    pub blowup_sup_threshold: f64,
    pub record_interval: f64,
    /// Nonzero selects the explicit scheme.
    pub explicit_scheme: i32,
}

/// Defaults: `M = 4π`, width 1, 1024 nodes on `R = 20`, `t_end = 1`.
#[no_mangle]
pub extern "C" fn kslab_ks_config_default() -> KslabKsConfig {
    let s = SolverConfig::default();
    KslabKsConfig {
        mass: 4.0 * std::f64::consts::PI,
        width: 1.0,
        nodes: 1024,
        radius: 20.0,
        t_end: s.t_end,
        dt_initial: s.dt_initial,
        dt_min: s.dt_min,
        cfl_factor: s.cfl_factor,
        blowup_sup_threshold: s.blowup_sup_threshold,
        record_interval: s.record_interval,
        explicit_scheme: 0,
    }
}

/// How a run ended.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KslabTermination {
    ReachedTEnd = 0,
    BlowupDetected = 1,
    DtUnderflow = 2,
}

/// One diagnostic record; `bubble_scale` is NaN when no fit was possible.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KslabRecord {
    pub t: f64,
    pub mass: f64,
    pub second_moment: f64,
    pub entropy: f64,
    pub free_energy: f64,
    pub sup_density: f64,
    pub bubble_scale: f64,
}

/// Opaque handle to a completed radial run.
pub struct KslabTrajectory {
    inner: Trajectory,
}

/// Runs the radial solver; on success `*out` owns a new trajectory.
///
/// # Safety
/// `config` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kslab_ks_run(config: *const KslabKsConfig, out: *mut *mut KslabTrajectory) -> KslabStatus {
    guard(|| {
        if config.is_null() || out.is_null() {
            return fail(KslabStatus::NullPointer, "null config or output handle");
        }
        let c = *config;
        if !(c.mass > 0.0 && c.width > 0.0) {
            return fail(KslabStatus::InvalidInput, "mass and width must be positive");
        }
        let grid = match RadialGrid::new(c.nodes, c.radius) {
            Ok(g) => g,
            Err(e) => return from_core(e),
        };
        let w = c.width;
        let rho = match RadialDensity::from_fn(grid, |r| c.mass / (std::f64::consts::PI * w * w) * (-(r * r) / (w * w)).exp()) {
            Ok(r) => r,
            Err(e) => return from_core(e),
        };
        let cfg = SolverConfig {
            dt_initial: c.dt_initial,
            dt_min: c.dt_min,
            cfl_factor: c.cfl_factor,
            blowup_sup_threshold: c.blowup_sup_threshold,
            t_end: c.t_end,
            scheme: if c.explicit_scheme != 0 { Scheme::Explicit } else { Scheme::SemiImplicit },
            record_interval: c.record_interval,
            record_growth: 0.0,
        };
        match run(&cumulative_from_density(&rho), &cfg) {
            Ok(t) => write_out(out, Box::into_raw(Box::new(KslabTrajectory { inner: t }))),
            Err(e) => from_core(e),
        }
    })
}

/// Releases a trajectory; null is ignored.
///
/// # Safety
/// `handle` must come from [`kslab_ks_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kslab_trajectory_free(handle: *mut KslabTrajectory) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of diagnostic records (0 for a null handle).
///
/// # Safety
/// `handle` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn kslab_trajectory_len(handle: *const KslabTrajectory) -> usize {
    handle.as_ref().map_or(0, |h| h.inner.diagnostics.len())
}

/// # Safety
/// `handle` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kslab_trajectory_termination(handle: *const KslabTrajectory, out: *mut KslabTermination) -> KslabStatus {
    let Some(h) = handle.as_ref() else {
        return fail(KslabStatus::NullPointer, "null trajectory");
    };
    let t = match h.inner.termination {
        Termination::ReachedTEnd => KslabTermination::ReachedTEnd,
        Termination::BlowupDetected => KslabTermination::BlowupDetected,
        Termination::DtUnderflow => KslabTermination::DtUnderflow,
    };
    write_out(out, t)
}

/// # Safety
/// `handle` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kslab_trajectory_record(handle: *const KslabTrajectory, index: usize, out: *mut KslabRecord) -> KslabStatus {
    let Some(h) = handle.as_ref() else {
        return fail(KslabStatus::NullPointer, "null trajectory");
    };
    let Some(d) = h.inner.diagnostics.get(index) else {
        return fail(KslabStatus::OutOfRange, format!("record {index} of {}", h.inner.diagnostics.len()));
    };
    write_out(
        out,
        KslabRecord {
            t: d.t,
            mass: d.mass,
            second_moment: d.second_moment,
            entropy: d.entropy,
            free_energy: d.free_energy,
            sup_density: d.sup_density,
            bubble_scale: d.bubble_scale.unwrap_or(f64::NAN),
        },
    )
}

/// Cell densities of the final state. `written` receives the node count
/// even when the buffer is too small.
///
/// # Safety
/// `handle` must be valid; `buf` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn kslab_trajectory_final_density(
    handle: *const KslabTrajectory,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> KslabStatus {
    guard(|| {
        let Some(h) = handle.as_ref() else {
            return fail(KslabStatus::NullPointer, "null trajectory");
        };
        match density_from_cumulative(h.inner.final_state(), NegativityPolicy::Clamp) {
            Ok((rho, _)) => copy_out(rho.values(), buf, capacity, written),
            Err(e) => from_core(e),
        }
    })
}

/// Blow-up time estimate from the last records.
///
/// # Safety
/// `handle` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kslab_trajectory_blowup_time(handle: *const KslabTrajectory, out: *mut f64) -> KslabStatus {
    let Some(h) = handle.as_ref() else {
        return fail(KslabStatus::NullPointer, "null trajectory");
    };
    if h.inner.termination != Termination::BlowupDetected {
        return fail(KslabStatus::Numerical, "run did not blow up");
    }
    match h.inner.blowup_time_estimate() {
        Some(t) => write_out(out, t),
        None => fail(KslabStatus::Numerical, "too few records for an estimate"),
    }
}

// ---------------------------------------------------------------------------
// Quantile densities and JKO

/// Opaque handle to a 1D probability density stored as quantiles.
pub struct KslabQuantileDensity {
    inner: QuantileDensity,
}

fn boxed(q: QuantileDensity) -> *mut KslabQuantileDensity {
    Box::into_raw(Box::new(KslabQuantileDensity { inner: q }))
}

/// Wraps strictly increasing quantiles at mass levels `(k + 1/2)/n`.
///
/// # Safety
/// `quantiles` must hold `n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn kslab_quantile_new(quantiles: *const f64, n: usize, out: *mut *mut KslabQuantileDensity) -> KslabStatus {
    guard(|| {
        let q = match input(quantiles, n) {
            Ok(q) => q,
            Err(s) => return s,
        };
        match QuantileDensity::new(q.to_vec()) {
            Ok(q) => write_out(out, boxed(q)),
            Err(e) => from_core(e),
        }
    })
}

/// Quantiles of a cell-averaged density on `[lo, hi]` (normalised to unit mass).
///
/// # Safety
/// `values` must hold `cells` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn kslab_quantile_from_cells(
    lo: f64,
    hi: f64,
    values: *const f64,
    cells: usize,
    levels: usize,
    out: *mut *mut KslabQuantileDensity,
) -> KslabStatus {
    guard(|| {
        let v = match input(values, cells) {
            Ok(v) => v,
            Err(s) => return s,
        };
        if !(hi > lo) || cells == 0 {
            return fail(KslabStatus::InvalidInput, "need hi > lo and at least one cell");
        }
        match kslab::fields::quantile_from_cells(lo, (hi - lo) / cells as f64, v, levels) {
            Ok(q) => write_out(out, boxed(q)),
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `handle` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kslab_quantile_free(handle: *mut KslabQuantileDensity) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of levels (0 for a null handle).
///
/// # Safety
/// `handle` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn kslab_quantile_len(handle: *const KslabQuantileDensity) -> usize {
    handle.as_ref().map_or(0, |h| h.inner.len())
}

/// # Safety
/// `handle` must be valid; `buf` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn kslab_quantile_values(
    handle: *const KslabQuantileDensity,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> KslabStatus {
    let Some(h) = handle.as_ref() else {
        return fail(KslabStatus::NullPointer, "null quantile density");
    };
    copy_out(h.inner.quantiles(), buf, capacity, written)
}

/// Quadratic Wasserstein distance between two densities with equal level counts.
///
/// # Safety
/// Both handles must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kslab_w2(a: *const KslabQuantileDensity, b: *const KslabQuantileDensity, out: *mut f64) -> KslabStatus {
    guard(|| {
        let (Some(a), Some(b)) = (a.as_ref(), b.as_ref()) else {
            return fail(KslabStatus::NullPointer, "null quantile density");
        };
        match w2(&a.inner, &b.inner) {
            Ok(d) => write_out(out, d),
            Err(e) => from_core(e),
        }
    })
}

/// `steps` JKO steps of size `tau` for `∫ρ log ρ + ∫ curvature x²/2 ρ`;
/// `*out` receives the final density.
///
/// # Safety
/// `initial` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kslab_jko_fokker_planck(
    initial: *const KslabQuantileDensity,
    curvature: f64,
    tau: f64,
    steps: usize,
    out: *mut *mut KslabQuantileDensity,
) -> KslabStatus {
    guard(|| {
        let Some(q0) = initial.as_ref() else {
            return fail(KslabStatus::NullPointer, "null quantile density");
        };
        let spec = FreeEnergySpec::fokker_planck(ScalarFn::quadratic(curvature));
        let cfg = JkoConfig { tau, levels: q0.inner.len(), ..Default::default() };
        match run_jko(&q0.inner, &spec, &cfg, steps) {
            Ok(r) => write_out(out, boxed(r.states.last().expect("initial state is kept").clone())),
            Err(e) => from_core(e),
        }
    })
}
