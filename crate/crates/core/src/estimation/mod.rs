//! From measured curves back to rates, and from target rates to knobs.

pub mod design;
pub mod fit;

pub use design::{design_decoherence, DesignBounds, DesignSolution, DesignTarget, FieldMode};
pub use fit::{fit_nutation, CurveSample, FitOptions, NutationFit};

use crate::error::{Error, Result};
use crate::model::{Branching, EffectiveRates};

/// r₂/r₁ from an observed saturation level, inverse of the flow-equilibrium
/// formula for the standard branching (β₁, β₂) = (1/3, 2/3).
pub fn invert_saturation(p_inf: f64) -> Result<f64> {
    invert_saturation_with(p_inf, Branching::default())
}

pub fn invert_saturation_with(p_inf: f64, branching: Branching) -> Result<f64> {
    if !(p_inf > 0.5 && p_inf <= 1.0) {
        return Err(Error::OutOfRange {
            value: p_inf,
            reason: "saturation level must lie in (1/2, 1]",
        });
    }
    let rho = 2.0 * (1.0 - p_inf) / (2.0 * p_inf - 1.0);
    Ok(rho * branching.beta2 / (2.0 * branching.beta1))
}

/// Effective rates from a nutation fit: γ = λ, r₁ = γ, r₂ = γ·(r₂/r₁),
/// Γ = Ω²/r₂.
pub fn effective_from_fit(fit: &NutationFit, omega_mw: f64) -> Result<EffectiveRates> {
    let fit = fit.require_converged()?;
    if fit.lambda <= 0.0 {
        return Err(Error::DegenerateRates("fitted envelope does not decay"));
    }
    let ratio = invert_saturation(fit.p_inf)?;
    let r2 = fit.lambda * ratio;
    Ok(EffectiveRates {
        gamma: fit.lambda,
        gamma_longitudinal: (r2 > 0.0).then(|| omega_mw * omega_mw / r2),
        p1_inf: Some(fit.p_inf),
    })
}
