//! C ABI over `decoherence-core`.
//!
//! All rates cross the boundary in rad/s and times in seconds. Configurations
//! are built from the same TOML documents the command-line tool reads (whose
//! own units are 2π × kHz and µs). Every function returns a [`DdStatus`]; on
//! failure [`dd_last_error`] describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use decoherence_core::config::{RunConfig, SweepAxis};
use decoherence_core::dynamics::integrate;
use decoherence_core::estimation::{design_decoherence, fit_nutation, CurveSample, FitOptions};
use decoherence_core::model::effective_rates;
use decoherence_core::protocol::ProtocolSimulator;
use decoherence_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad configuration or argument (CLI exit code 2).
    InvalidArgument = 2,
    /// Integration or fit failure (CLI exit code 3).
    Numerical = 3,
    /// Design targets out of reach (CLI exit code 4).
    Infeasible = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Opaque run configuration.
pub struct DdConfig {
    inner: RunConfig,
}

/// Opaque protocol simulator; owns the cached deterministic curve.
pub struct DdSimulator {
    inner: ProtocolSimulator,
}

/// Absent quantities are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DdRates {
    pub r1: f64,
    pub r2: f64,
    pub gamma: f64,
    pub big_gamma: f64,
    pub p1_inf: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DdFit {
    pub omega: f64,
    pub lambda: f64,
    pub p_inf: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub residual_rms: f64,
    pub converged: bool,
    pub low_confidence: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DdDesign {
    pub i0: f64,
    /// Radians.
    pub alpha: f64,
    pub zeeman_delta: f64,
    pub achieved: DdRates,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DdStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidParams(_) | Error::Io(_) => DdStatus::InvalidArgument,
        Error::Infeasible { .. } => DdStatus::Infeasible,
        _ => DdStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (DdStatus, String)>) -> DdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DdStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DdStatus::Panic
        }
    }
}

fn core(e: Error) -> (DdStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DdStatus, String) {
    (DdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DdStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn rates_out(r1: f64, r2: f64, eff: decoherence_core::model::EffectiveRates) -> DdRates {
    DdRates {
        r1,
        r2,
        gamma: eff.gamma,
        big_gamma: eff.gamma_longitudinal.unwrap_or(f64::NAN),
        p1_inf: eff.p1_inf.unwrap_or(f64::NAN),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse a TOML configuration; an empty string gives the defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dd_config_from_toml(toml: *const c_char, out: *mut *mut DdConfig) -> DdStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = RunConfig::from_toml_str(text).map_err(core)?;
        *out = Box::into_raw(Box::new(DdConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`dd_config_from_toml`] or be null.
#[no_mangle]
pub unsafe extern "C" fn dd_config_free(config: *mut DdConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Set one physics knob by its configuration name (`i0`, `alpha_deg`,
/// `b_field_2pikhz`, `omega_2pikhz`, ...), in configuration units.
///
/// # Safety
/// `config` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dd_config_set(config: *mut DdConfig, name: *const c_char, value: f64) -> DdStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        let axis = SweepAxis::parse(str_arg(name, "name")?).map_err(core)?;
        axis.apply(&mut cfg.inner.physics, value);
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dd_rates(config: *const DdConfig, out: *mut DdRates) -> DdStatus {
    guard(|| {
        let cfg = &config.as_ref().ok_or_else(|| null("config"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let params = cfg.physical_params().map_err(core)?;
        let rates = cfg.rates(&params).map_err(core)?;
        *out = rates_out(rates.r1, rates.r2, effective_rates(&params, &rates));
        Ok(())
    })
}

/// Deterministic P₁ at N·δt for N = 0..=n_max; `len` must be at least
/// n_max + 1. `written` (optional) receives the number of values.
///
/// # Safety
/// `p1` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dd_simulate(config: *const DdConfig, p1: *mut f64, len: usize, written: *mut usize) -> DdStatus {
    guard(|| {
        let cfg = &config.as_ref().ok_or_else(|| null("config"))?.inner;
        if p1.is_null() {
            return Err(null("p1"));
        }
        let n = cfg.protocol.n_max + 1;
        if len < n {
            return Err((DdStatus::BufferTooSmall, format!("need {n} values, got {len}")));
        }
        let params = cfg.physical_params().map_err(core)?;
        let rates = cfg.rates(&params).map_err(core)?;
        let proto = cfg.protocol_config().map_err(core)?;
        let times: Vec<f64> = std::iter::once(0.0).chain(proto.drive_times()).collect();
        let init = cfg.initial_state().map_err(core)?;
        let integ = cfg.integrator_config().map_err(core)?;
        let tr = integrate(&init, &params, &rates, &integ, &times).map_err(core)?;
        std::slice::from_raw_parts_mut(p1, n).copy_from_slice(&tr.p1());
        if !written.is_null() {
            *written = n;
        }
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dd_simulator_new(config: *const DdConfig, out: *mut *mut DdSimulator) -> DdStatus {
    guard(|| {
        let cfg = &config.as_ref().ok_or_else(|| null("config"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = ProtocolSimulator::new(cfg.experiment().map_err(core)?).map_err(core)?;
        *out = Box::into_raw(Box::new(DdSimulator { inner }));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`dd_simulator_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn dd_simulator_free(sim: *mut DdSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Outcomes (1 = on) of trajectory `index` for N = 1..=n_max. The result
/// depends only on the configuration, seed and index.
///
/// # Safety
/// `outcomes` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dd_simulator_run(
    sim: *const DdSimulator,
    index: u64,
    outcomes: *mut u8,
    len: usize,
) -> DdStatus {
    guard(|| {
        let sim = &sim.as_ref().ok_or_else(|| null("sim"))?.inner;
        if outcomes.is_null() {
            return Err(null("outcomes"));
        }
        let n = sim.experiment().protocol.n_max;
        if len < n {
            return Err((DdStatus::BufferTooSmall, format!("need {n} values, got {len}")));
        }
        let rec = sim.run_trajectory(index);
        let dst = std::slice::from_raw_parts_mut(outcomes, n);
        for (d, &o) in dst.iter_mut().zip(&rec.outcomes) {
            *d = u8::from(o);
        }
        Ok(())
    })
}

/// Damped-cosine fit of `n` samples (τ in seconds). Non-convergence is
/// reported in `out.converged`, not as an error.
///
/// # Safety
/// `tau` and `p1` must point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn dd_fit(tau: *const f64, p1: *const f64, n: usize, out: *mut DdFit) -> DdStatus {
    guard(|| {
        if tau.is_null() || p1.is_null() {
            return Err(null("samples"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let tau = std::slice::from_raw_parts(tau, n);
        let p1 = std::slice::from_raw_parts(p1, n);
        let samples: Vec<_> = tau.iter().zip(p1).map(|(&t, &p)| CurveSample::new(t, p)).collect();
        let f = fit_nutation(&samples, &FitOptions::default()).map_err(core)?;
        *out = DdFit {
            omega: f.omega,
            lambda: f.lambda,
            p_inf: f.p_inf,
            amplitude: f.amplitude,
            phase: f.phase,
            residual_rms: f.residual_rms,
            converged: f.converged,
            low_confidence: f.low_confidence,
        };
        Ok(())
    })
}

/// Light intensity, polarization and field for target rates γ and Γ (rad/s;
/// Γ = +∞ for none), with the bounds of the configuration's design section.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dd_design(config: *const DdConfig, gamma: f64, big_gamma: f64, out: *mut DdDesign) -> DdStatus {
    guard(|| {
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mut c = cfg.inner.clone();
        let template = c.physical_params().map_err(core)?;
        c.design.gamma_2pikhz = Some(decoherence_core::units::to_two_pi_khz(gamma));
        c.design.big_gamma_2pikhz = Some(decoherence_core::units::to_two_pi_khz(big_gamma));
        let mut target = c.design_target(&template).map_err(core)?;
        // keep the caller's SI values exactly
        target.gamma = gamma;
        target.big_gamma = big_gamma;
        let sol = design_decoherence(&target, &template).map_err(core)?;
        let p = sol.apply(&template);
        let rates = decoherence_core::model::scattering_rates(&p);
        *out = DdDesign {
            i0: sol.i0,
            alpha: sol.alpha,
            zeeman_delta: sol.zeeman_delta,
            achieved: rates_out(rates.r1, rates.r2, sol.achieved),
        };
        Ok(())
    })
}
