//! Choose light intensity, polarization and field for target (γ, Γ).
//!
//! With x = I₀cos²α and y = I₀sin²α the two rates decouple:
//! r₁ fixes x through ½·xL₀/(1 + xL₀)·Γ₃, and r₂ = Ω²/Γ fixes y through
//! ½·Σ± yL±/(1 + yL±)·Γ₃. The first is inverted in closed form, the second by
//! Newton's method started from the weak-field solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{effective_rates, lorentzian, scattering_rates, EffectiveRates, PhysicalParams, Sublevel};

pub const MAX_NEWTON_STEPS: usize = 20;
const FIELD_GRID: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignBounds {
    pub i0: [f64; 2],
    /// Radians, within [0, π/2].
    pub alpha: [f64; 2],
    /// Zeeman shift δ, rad/s.
    pub zeeman_delta: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldMode {
    /// Keep the template's field.
    #[default]
    Fixed,
    /// Pick the field within bounds that needs the least light.
    MinimizeIntensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignTarget {
    pub gamma: f64,
    /// Longitudinal rate Γ; `f64::INFINITY` asks for no energy relaxation.
    #[serde(rename = "Gamma")]
    pub big_gamma: f64,
    pub omega_mw: f64,
    pub delta_laser: f64,
    pub bounds: DesignBounds,
    pub field: FieldMode,
}

impl DesignTarget {
    /// Targets with Ω, laser detuning and field taken from `template`, I₀ up
    /// to 10 and the full polarization range.
    pub fn new(gamma: f64, big_gamma: f64, template: &PhysicalParams) -> Self {
        DesignTarget {
            gamma,
            big_gamma,
            omega_mw: template.omega_mw,
            delta_laser: template.delta_laser,
            bounds: DesignBounds {
                i0: [0.0, 10.0],
                alpha: [0.0, std::f64::consts::FRAC_PI_2],
                zeeman_delta: [template.zeeman_delta; 2],
            },
            field: FieldMode::Fixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite() && self.big_gamma > 0.0) {
            return Err(Error::InvalidParams("design targets must be positive".into()));
        }
        if !(self.omega_mw > 0.0 && self.omega_mw.is_finite() && self.delta_laser.is_finite()) {
            return Err(Error::InvalidParams("design needs a finite Ω > 0 and laser detuning".into()));
        }
        let b = &self.bounds;
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !(ordered(b.i0) && ordered(b.alpha) && ordered(b.zeeman_delta)) {
            return Err(Error::InvalidParams("design bounds must be finite and ordered".into()));
        }
        if b.i0[0] < 0.0 || b.alpha[0] < 0.0 || b.alpha[1] > std::f64::consts::FRAC_PI_2 + 1e-12 {
            return Err(Error::InvalidParams("design bounds need i0 >= 0 and alpha within [0, pi/2]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSolution {
    pub i0: f64,
    pub alpha: f64,
    pub zeeman_delta: f64,
    pub achieved: EffectiveRates,
    pub newton_steps: usize,
}

impl DesignSolution {
    pub fn apply(&self, template: &PhysicalParams) -> PhysicalParams {
        PhysicalParams {
            i0: self.i0,
            alpha: self.alpha,
            zeeman_delta: self.zeeman_delta,
            ..*template
        }
    }
}

struct Knobs {
    i0: f64,
    alpha: f64,
    steps: usize,
}

fn infeasible(constraint: String) -> Error {
    Error::Infeasible { constraint }
}

/// Unbounded solution at the field in `params`.
fn solve_knobs(target: &DesignTarget, params: &PhysicalParams) -> Result<Knobs> {
    let g3 = params.gamma3;
    let r1 = target.gamma - params.gamma_ph_extra;
    if r1 <= 0.0 {
        return Err(infeasible(format!(
            "gamma target {:.6e} does not exceed the background dephasing {:.6e}",
            target.gamma, params.gamma_ph_extra
        )));
    }
    let q1 = 2.0 * r1 / g3;
    if q1 >= 1.0 {
        return Err(infeasible(format!(
            "gamma target needs r1 = {r1:.6e}, at or above the saturated limit Gamma3/2 = {:.6e}",
            0.5 * g3
        )));
    }
    let l0 = lorentzian(params, Sublevel::Zero);
    let x = q1 / ((1.0 - q1) * l0);

    let r2 = target.omega_mw * target.omega_mw / target.big_gamma;
    let q2 = 2.0 * r2 / g3;
    if q2 >= 2.0 {
        return Err(infeasible(format!(
            "Gamma target needs r2 = {r2:.6e}, at or above the saturated limit Gamma3 = {g3:.6e}"
        )));
    }
    let ls = [lorentzian(params, Sublevel::Plus), lorentzian(params, Sublevel::Minus)];
    let mut y = q2 / (ls[0] + ls[1]);
    let mut steps = 0;
    while steps < MAX_NEWTON_STEPS && y > 0.0 {
        let f: f64 = ls.iter().map(|&l| y * l / (1.0 + y * l)).sum::<f64>() - q2;
        if f.abs() <= 1e-15 * q2 {
            break;
        }
        let df: f64 = ls.iter().map(|&l| l / (1.0 + y * l).powi(2)).sum();
        let next = y - f / df;
        y = if next > 0.0 { next } else { 0.5 * y };
        steps += 1;
    }
    Ok(Knobs {
        i0: x + y,
        alpha: (y / x).sqrt().atan(),
        steps,
    })
}

fn check_bounds(k: &Knobs, b: &DesignBounds) -> Result<()> {
    if k.i0 > b.i0[1] {
        return Err(infeasible(format!("i0 upper bound {} (needs {:.6e})", b.i0[1], k.i0)));
    }
    if k.i0 < b.i0[0] {
        return Err(infeasible(format!("i0 lower bound {} (needs {:.6e})", b.i0[0], k.i0)));
    }
    if k.alpha < b.alpha[0] || k.alpha > b.alpha[1] {
        return Err(infeasible(format!(
            "alpha bounds [{}, {}] rad (needs {:.6})",
            b.alpha[0], b.alpha[1], k.alpha
        )));
    }
    Ok(())
}

fn with_field(target: &DesignTarget, template: &PhysicalParams, zeeman: f64) -> PhysicalParams {
    PhysicalParams {
        omega_mw: target.omega_mw,
        delta_laser: target.delta_laser,
        zeeman_delta: zeeman,
        ..*template
    }
}

/// Field within bounds minimizing the required intensity.
fn best_field(target: &DesignTarget, template: &PhysicalParams) -> Result<f64> {
    let [lo, hi] = target.bounds.zeeman_delta;
    let intensity = |b: f64| solve_knobs(target, &with_field(target, template, b)).map(|k| k.i0);
    if hi == lo {
        return Ok(lo);
    }
    let grid: Vec<f64> = (0..FIELD_GRID)
        .map(|k| lo + (hi - lo) * k as f64 / (FIELD_GRID - 1) as f64)
        .collect();
    let mut first_err = None;
    let mut best: Option<(usize, f64)> = None;
    for (k, &b) in grid.iter().enumerate() {
        match solve_knobs(target, &with_field(target, template, b)) {
            Ok(kn) => match check_bounds(&kn, &target.bounds) {
                Ok(()) if best.is_none_or(|(_, v)| kn.i0 < v) => best = Some((k, kn.i0)),
                Ok(()) => {}
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            },
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((k, v)) = best else {
        return Err(first_err.unwrap_or_else(|| infeasible("field bounds".into())));
    };
    // golden-section refinement between the neighbouring grid points
    let (mut a, mut b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(FIELD_GRID - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (intensity(c)?, intensity(d)?);
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = intensity(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = intensity(d)?;
        }
    }
    let refined = 0.5 * (a + b);
    let ok = solve_knobs(target, &with_field(target, template, refined))
        .and_then(|kn| check_bounds(&kn, &target.bounds).map(|_| kn.i0));
    Ok(match ok {
        Ok(i0) if i0 <= v => refined,
        _ => grid[k],
    })
}

/// Knob settings reproducing the target effective rates through the
/// closed-form model, or `Infeasible` naming the violated constraint.
pub fn design_decoherence(target: &DesignTarget, template: &PhysicalParams) -> Result<DesignSolution> {
    target.validate()?;
    template.validated()?;
    let zeeman = match target.field {
        FieldMode::Fixed => {
            let z = template.zeeman_delta;
            let [lo, hi] = target.bounds.zeeman_delta;
            if z < lo || z > hi {
                return Err(infeasible(format!("field bounds [{lo}, {hi}] exclude the template field {z}")));
            }
            z
        }
        FieldMode::MinimizeIntensity => best_field(target, template)?,
    };
    let params = with_field(target, template, zeeman);
    let knobs = solve_knobs(target, &params)?;
    check_bounds(&knobs, &target.bounds)?;

    let designed = PhysicalParams {
        i0: knobs.i0,
        alpha: knobs.alpha,
        ..params
    };
    let achieved = effective_rates(&designed, &scattering_rates(&designed));
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let gamma_ok = rel(achieved.gamma, target.gamma) < 1e-3;
    let big_ok = match achieved.gamma_longitudinal {
        Some(g) => rel(g, target.big_gamma) < 1e-3,
        None => target.big_gamma.is_infinite(),
    };
    if !(gamma_ok && big_ok) {
        return Err(Error::NoConvergence {
            iterations: knobs.steps,
        });
    }
    Ok(DesignSolution {
        i0: knobs.i0,
        alpha: knobs.alpha,
        zeeman_delta: zeeman,
        achieved,
        newton_steps: knobs.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::from_two_pi_khz as k;

    fn template() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn round_trip_moderate_target() {
        let p = template();
        let t = DesignTarget::new(k(0.5), k(0.2), &p);
        let sol = design_decoherence(&t, &p).unwrap();
        let eff = effective_rates(&sol.apply(&p), &scattering_rates(&sol.apply(&p)));
        assert!((eff.gamma / t.gamma - 1.0).abs() < 1e-9);
        assert!((eff.gamma_longitudinal.unwrap() / t.big_gamma - 1.0).abs() < 1e-9);
        assert!(sol.newton_steps <= MAX_NEWTON_STEPS);
    }

    #[test]
    fn equal_rates_at_zero_field() {
        let p = PhysicalParams {
            zeeman_delta: 0.0,
            ..template()
        };
        // γ = Γ with r₂/r₁ = Ω²/(Γγ) = 1: weak-field tan²α·2L/L = 1
        let g = p.omega_mw;
        let sol = design_decoherence(&DesignTarget::new(g, g, &p), &p).unwrap();
        assert!((sol.alpha - (0.5f64).sqrt().atan()).abs() < 1e-3);
    }

    #[test]
    fn pure_dephasing_target() {
        let p = template();
        let sol = design_decoherence(&DesignTarget::new(k(0.3), f64::INFINITY, &p), &p).unwrap();
        assert_eq!(sol.alpha, 0.0);
        assert_eq!(sol.achieved.gamma_longitudinal, None);
    }

    #[test]
    fn infeasible_targets_name_the_constraint() {
        let p = template();
        let mut t = DesignTarget::new(k(50.0), k(0.01), &p);
        t.bounds.i0 = [0.0, 1e-4];
        match design_decoherence(&t, &p) {
            Err(Error::Infeasible { constraint }) => assert!(constraint.contains("i0 upper bound"), "{constraint}"),
            other => panic!("{other:?}"),
        }
        let t = DesignTarget::new(k(10e3), k(1.0), &p);
        match design_decoherence(&t, &p) {
            Err(Error::Infeasible { constraint }) => assert!(constraint.contains("gamma target"), "{constraint}"),
            other => panic!("{other:?}"),
        }
        let mut t = DesignTarget::new(k(1.0), k(1.0), &p);
        t.bounds.alpha = [0.0, 0.1];
        match design_decoherence(&t, &p) {
            Err(Error::Infeasible { constraint }) => assert!(constraint.contains("alpha"), "{constraint}"),
            other => panic!("{other:?}"),
        }
        let bg = PhysicalParams {
            gamma_ph_extra: k(2.0),
            ..p
        };
        assert!(matches!(
            design_decoherence(&DesignTarget::new(k(1.0), k(1.0), &bg), &bg),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn field_search_reduces_intensity() {
        let p = template();
        let mut t = DesignTarget::new(k(0.5), k(0.1), &p);
        let fixed = design_decoherence(&t, &p).unwrap();
        t.field = FieldMode::MinimizeIntensity;
        t.bounds.zeeman_delta = [k(-500.0), k(500.0)];
        let free = design_decoherence(&t, &p).unwrap();
        assert!(free.i0 < fixed.i0);
        assert!((free.achieved.gamma / t.gamma - 1.0).abs() < 1e-9);
        assert!((free.achieved.gamma_longitudinal.unwrap() / t.big_gamma - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_targets() {
        let p = template();
        assert!(design_decoherence(&DesignTarget::new(-1.0, 1.0, &p), &p).is_err());
        let mut t = DesignTarget::new(1.0, 1.0, &p);
        t.bounds.i0 = [1.0, 0.5];
        assert!(matches!(design_decoherence(&t, &p), Err(Error::InvalidParams(_))));
    }
}
