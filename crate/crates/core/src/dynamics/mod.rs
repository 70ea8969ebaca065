//! Time-domain models of the driven qubit under weak resonance light.
//!
//! The full model couples the coherent microwave 0–1 dynamics (Bloch
//! components `u`, `v` in the microwave rotating frame) to rate equations for
//! optical pumping through level 3:
//!
//! ```text
//! u' = -Δ v - γc u
//! v' =  Δ u + Ω (n0 - n1) - γc v
//! n0' = -(Ω/2) v
//! n1' =  (Ω/2) v - r1 n1 + β1 Γ3 n3
//! n2' = -r2 n2 + β2 Γ3 n3
//! n3' =  r1 n1 + r2 n2 - Γ3 n3
//! ```
//!
//! with γc = r1 + γ_ph by default. There is no 3→0 decay channel.

pub mod ode;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PhysicalParams, ScatteringRates, Sublevel};
pub use ode::{IntegratorConfig, Method};
use ode::OdeSystem;

/// Populations of levels 0–3 and the 0–1 coherence (u = 2 Re ρ01, v = 2 Im ρ01).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemState {
    pub u: f64,
    pub v: f64,
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
}

impl SystemState {
    /// Ideal preparation in F = 0.
    pub fn ground() -> Self {
        SystemState {
            n0: 1.0,
            ..Default::default()
        }
    }

    /// Incoherent mixture of levels 0 and 1.
    pub fn mixed(n0: f64, n1: f64) -> Self {
        SystemState {
            n0,
            n1,
            ..Default::default()
        }
    }

    pub fn upper() -> Self {
        SystemState::mixed(0.0, 1.0)
    }

    /// Probability that the probe finds the ion in F = 1. Level 3 decays only
    /// into F = 1, so its population counts as bright.
    pub fn p1(&self) -> f64 {
        self.n1 + self.n2 + self.n3
    }

    pub fn trace(&self) -> f64 {
        self.n0 + self.n1 + self.n2 + self.n3
    }

    pub fn min_population(&self) -> f64 {
        self.n0.min(self.n1).min(self.n2).min(self.n3)
    }

    /// Excess of the coherence over its population bound, u² + v² − 4 n0 n1.
    pub fn coherence_excess(&self) -> f64 {
        self.u * self.u + self.v * self.v - 4.0 * self.n0 * self.n1
    }

    pub fn validate(&self) -> Result<()> {
        let tol = 1e-9;
        let vals = self.to_array();
        if vals.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("non-finite state".into()));
        }
        if (self.trace() - 1.0).abs() > tol || self.min_population() < -tol {
            return Err(Error::InvalidParams(format!("state is not normalized: {self:?}")));
        }
        if self.coherence_excess() > tol {
            return Err(Error::InvalidParams("coherence exceeds population bound".into()));
        }
        Ok(())
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.u, self.v, self.n0, self.n1, self.n2, self.n3]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        SystemState {
            u: a[0],
            v: a[1],
            n0: a[2],
            n1: a[3],
            n2: a[4],
            n3: a[5],
        }
    }
}

/// How scattering out of level 1 damps the 0–1 coherence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoherenceDamping {
    /// Every scattering event out of level 1 destroys the phase: γc = r1 + γ_ph.
    #[default]
    Full,
    /// Population-conserving Rayleigh events (1→3→1) count half:
    /// γc = (β2 + β1/2)·r1 + γ_ph.
    RayleighHalfWeight,
}

/// Four-level right-hand side with all rates resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourLevelSystem {
    pub omega: f64,
    pub detuning: f64,
    pub r1: f64,
    pub r2: f64,
    pub gamma3: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub coherence_decay: f64,
}

impl FourLevelSystem {
    pub fn new(params: &PhysicalParams, rates: &ScatteringRates) -> Self {
        Self::with_damping(params, rates, CoherenceDamping::Full)
    }

    pub fn with_damping(params: &PhysicalParams, rates: &ScatteringRates, damping: CoherenceDamping) -> Self {
        let b = rates.branching;
        let weight = match damping {
            CoherenceDamping::Full => 1.0,
            CoherenceDamping::RayleighHalfWeight => b.beta2 + 0.5 * b.beta1,
        };
        FourLevelSystem {
            omega: params.omega_mw,
            detuning: params.delta_mw,
            r1: rates.r1,
            r2: rates.r2,
            gamma3: params.gamma3,
            beta1: b.beta1,
            beta2: b.beta2,
            coherence_decay: weight * rates.r1 + params.gamma_ph_extra,
        }
    }

    pub fn tangent(&self, s: &SystemState) -> SystemState {
        let half = 0.5 * self.omega;
        let g = self.coherence_decay;
        let decay3 = self.gamma3 * s.n3;
        SystemState {
            u: -self.detuning * s.v - g * s.u,
            v: self.detuning * s.u + self.omega * (s.n0 - s.n1) - g * s.v,
            n0: -half * s.v,
            n1: half * s.v - self.r1 * s.n1 + self.beta1 * decay3,
            n2: -self.r2 * s.n2 + self.beta2 * decay3,
            n3: self.r1 * s.n1 + self.r2 * s.n2 - decay3,
        }
    }
}

impl OdeSystem<6> for FourLevelSystem {
    fn rhs(&self, y: &[f64; 6], dy: &mut [f64; 6]) {
        *dy = self.tangent(&SystemState::from_array(*y)).to_array();
    }
}

/// Right-hand side of the four-level equations (default coherence damping).
pub fn derivative(state: &SystemState, params: &PhysicalParams, rates: &ScatteringRates) -> SystemState {
    FourLevelSystem::new(params, rates).tangent(state)
}

/// Sampled solution on a time grid (seconds from the start of the drive).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
}

impl Trajectory {
    pub fn p1(&self) -> Vec<f64> {
        self.states.iter().map(SystemState::p1).collect()
    }

    pub fn last(&self) -> Option<&SystemState> {
        self.states.last()
    }

    pub fn max_trace_error(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.trace() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_population(&self) -> f64 {
        self.states
            .iter()
            .map(SystemState::min_population)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Uniform grid `0, dt, …, n·dt`.
pub fn uniform_grid(dt: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 * dt).collect()
}

/// Integrate the four-level model from `initial` and sample at `times`.
pub fn integrate(
    initial: &SystemState,
    params: &PhysicalParams,
    rates: &ScatteringRates,
    config: &IntegratorConfig,
    times: &[f64],
) -> Result<Trajectory> {
    integrate_system(&FourLevelSystem::new(params, rates), initial, config, times)
}

pub fn integrate_system(
    system: &FourLevelSystem,
    initial: &SystemState,
    config: &IntegratorConfig,
    times: &[f64],
) -> Result<Trajectory> {
    initial.validate()?;
    let ys = ode::solve(system, initial.to_array(), times, config)?;
    Ok(Trajectory {
        times: times.to_vec(),
        states: ys.into_iter().map(SystemState::from_array).collect(),
    })
}

/// Largest saturation I(m)·L for which level 3 may be eliminated adiabatically.
pub const ADIABATIC_SATURATION_LIMIT: f64 = 0.1;

/// Reduced model with level 3 slaved to n3 = (r1 n1 + r2 n2)/Γ3.
#[derive(Debug, Clone, Copy)]
struct AdiabaticSystem {
    omega: f64,
    detuning: f64,
    r1: f64,
    r2: f64,
    beta1: f64,
    beta2: f64,
    coherence_decay: f64,
}

impl OdeSystem<5> for AdiabaticSystem {
    fn rhs(&self, y: &[f64; 5], dy: &mut [f64; 5]) {
        let [u, v, n0, n1, n2] = *y;
        let g = self.coherence_decay;
        let out3 = self.r1 * n1 + self.r2 * n2;
        dy[0] = -self.detuning * v - g * u;
        dy[1] = self.detuning * u + self.omega * (n0 - n1) - g * v;
        dy[2] = -0.5 * self.omega * v;
        dy[3] = 0.5 * self.omega * v - self.r1 * n1 + self.beta1 * out3;
        dy[4] = -self.r2 * n2 + self.beta2 * out3;
    }
}

/// Saturation I(m)·L implied by a mean excited population ½·s/(1+s).
fn saturation_from_p3(p3: f64) -> f64 {
    2.0 * p3 / (1.0 - 2.0 * p3)
}

/// Integrate with level 3 adiabatically eliminated. Any initial level-3
/// population is first redistributed according to the branching ratios; the
/// reported states include the slaved n3 and are normalized to unit trace.
pub fn integrate_adiabatic(
    initial: &SystemState,
    params: &PhysicalParams,
    rates: &ScatteringRates,
    config: &IntegratorConfig,
    times: &[f64],
) -> Result<Trajectory> {
    initial.validate()?;
    for m in Sublevel::ALL {
        let s = saturation_from_p3(rates.p3(m));
        if s > ADIABATIC_SATURATION_LIMIT {
            return Err(Error::RegimeViolation {
                m: m.m(),
                saturation: s,
                limit: ADIABATIC_SATURATION_LIMIT,
            });
        }
    }
    let full = FourLevelSystem::new(params, rates);
    let sys = AdiabaticSystem {
        omega: full.omega,
        detuning: full.detuning,
        r1: full.r1,
        r2: full.r2,
        beta1: full.beta1,
        beta2: full.beta2,
        coherence_decay: full.coherence_decay,
    };
    let s = initial;
    let y0 = [
        s.u,
        s.v,
        s.n0,
        s.n1 + full.beta1 * s.n3,
        s.n2 + full.beta2 * s.n3,
    ];
    let ys = ode::solve(&sys, y0, times, config)?;
    let states = ys
        .into_iter()
        .map(|[u, v, n0, n1, n2]| {
            let rho = (sys.r1 * n1 + sys.r2 * n2) / full.gamma3;
            let norm = 1.0 / (n0 + n1 + n2 + rho);
            SystemState {
                u: u * norm,
                v: v * norm,
                n0: n0 * norm,
                n1: n1 * norm,
                n2: n2 * norm,
                n3: rho * norm,
            }
        })
        .collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

/// Bloch vector of the effective two-level system, w = n1 − n0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelState {
    pub w: f64,
    pub u: f64,
    pub v: f64,
}

impl TwoLevelState {
    pub fn ground() -> Self {
        TwoLevelState { w: -1.0, u: 0.0, v: 0.0 }
    }

    pub fn from_populations(n0: f64, n1: f64) -> Self {
        TwoLevelState { w: n1 - n0, u: 0.0, v: 0.0 }
    }

    pub fn p1(&self) -> f64 {
        0.5 * (1.0 + self.w)
    }
}

/// Two-level Bloch equations with longitudinal relaxation towards the upper
/// state: w' = Ω v − Γ (w − 1), v' = −Ω w − γ v, u' = −γ u.
#[derive(Debug, Clone, Copy)]
struct EffectiveTwoLevel {
    omega: f64,
    gamma: f64,
    big_gamma: f64,
}

impl OdeSystem<3> for EffectiveTwoLevel {
    fn rhs(&self, y: &[f64; 3], dy: &mut [f64; 3]) {
        let [w, u, v] = *y;
        dy[0] = self.omega * v - self.big_gamma * (w - 1.0);
        dy[1] = -self.gamma * u;
        dy[2] = -self.omega * w - self.gamma * v;
    }
}

/// Long-time upper-state probability of the effective two-level model,
/// 1 − ½·I/(1+I) with I = Ω²/(Γγ).
pub fn effective_two_level_saturation(gamma: f64, big_gamma: f64, omega: f64) -> f64 {
    let w = big_gamma * gamma / (big_gamma * gamma + omega * omega);
    0.5 * (1.0 + w)
}

/// Evolve the effective two-level model and return P1 at each sample time.
pub fn integrate_effective_two_level(
    initial: &TwoLevelState,
    gamma: f64,
    big_gamma: f64,
    omega: f64,
    config: &IntegratorConfig,
    times: &[f64],
) -> Result<Vec<f64>> {
    if !(gamma >= 0.0 && big_gamma >= 0.0) {
        return Err(Error::InvalidParams("relaxation rates must be >= 0".into()));
    }
    if gamma < 0.5 * big_gamma {
        return Err(Error::InvalidParams(format!(
            "unphysical rates: gamma = {gamma} < Gamma/2 = {}",
            0.5 * big_gamma
        )));
    }
    let sys = EffectiveTwoLevel {
        omega,
        gamma,
        big_gamma,
    };
    let ys = ode::solve(&sys, [initial.w, initial.u, initial.v], times, config)?;
    Ok(ys.into_iter().map(|y| 0.5 * (1.0 + y[0])).collect())
}
