//! Closed-form light-scattering model of the hyperfine qubit.
//!
//! Level scheme: `0` is S½ F=0, `1` is S½ F=1 m=0, `2` lumps the F=1 m=±1
//! Zeeman sublevels, `3` is the P½ resonance level. The microwave drives
//! 0↔1; weak resonance light pumps 1→3 and 2→3, and level 3 decays back into
//! 1 and 2 with branching ratios β₁ : β₂.
//!
//! The effective two-level picture attributes to the 0–1 system a transverse
//! rate γ = r₁ + γ_ph and a longitudinal rate Γ = Ω²/r₂ whose fixed point is
//! the *upper* state 1. The printed form of the latter identification reads
//! `Γ ≙ Ω / r₂`; that expression is not a rate. Equating the three-level
//! ground-state probability P₀ with the two-level excitation probability
//! ½·I/(1+I), I = Ω²/(Γγ), at γ = r₁ gives Γ = Ω²/r₂, which is what this
//! module implements.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Magnetic quantum number of the lower level addressed by the light.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sublevel {
    Minus,
    Zero,
    Plus,
}

impl Sublevel {
    pub const ALL: [Sublevel; 3] = [Sublevel::Minus, Sublevel::Zero, Sublevel::Plus];

    pub fn m(self) -> i8 {
        match self {
            Sublevel::Minus => -1,
            Sublevel::Zero => 0,
            Sublevel::Plus => 1,
        }
    }

    pub fn from_m(m: i8) -> Option<Self> {
        match m {
            -1 => Some(Sublevel::Minus),
            0 => Some(Sublevel::Zero),
            1 => Some(Sublevel::Plus),
            _ => None,
        }
    }

    fn index(self) -> usize {
        (self.m() + 1) as usize
    }
}

/// Branching ratios of the decay of level 3 into levels 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branching {
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for Branching {
    fn default() -> Self {
        Branching {
            beta1: 1.0 / 3.0,
            beta2: 2.0 / 3.0,
        }
    }
}

impl Branching {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.beta1)
            && (0.0..=1.0).contains(&self.beta2)
            && (self.beta1 + self.beta2 - 1.0).abs() <= 1e-12;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "branching ratios must lie in [0,1] and sum to 1, got {} + {}",
                self.beta1, self.beta2
            )))
        }
    }
}

/// Laboratory knobs and atomic constants. Frequencies and rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Microwave Rabi frequency Ω.
    pub omega_mw: f64,
    /// Microwave detuning from the 0–1 resonance.
    pub delta_mw: f64,
    /// Saturation-normalized light flux density at the ion.
    pub i0: f64,
    /// Angle between light polarization and magnetic field, radians.
    pub alpha: f64,
    /// Laser detuning ω − ω₀ (negative: red detuned).
    pub delta_laser: f64,
    /// Zeeman shift δ = g_F μ_B B / ħ with g_F = 1.
    pub zeeman_delta: f64,
    /// Energy relaxation rate Γ₃ of the resonance level.
    pub gamma3: f64,
    /// Extra optical dipole dephasing (carried, not used by the rates).
    pub gamma_lph: f64,
    /// Extra dephasing of the microwave coherence not caused by the light.
    pub gamma_ph_extra: f64,
    pub branching: Branching,
}

impl Default for PhysicalParams {
    /// Reference values in rad/s: Ω = 4.2, Γ₃ = 18 000, laser detuning
    /// −3000 and Zeeman shift −0.28, each in units of 2π × kHz. No light.
    fn default() -> Self {
        use crate::units::from_two_pi_khz as k;
        PhysicalParams {
            omega_mw: k(4.2),
            delta_mw: 0.0,
            i0: 0.0,
            alpha: 0.0,
            delta_laser: k(-3.0e3),
            zeeman_delta: k(-0.28),
            gamma3: k(18.0e3),
            gamma_lph: 0.0,
            gamma_ph_extra: 0.0,
            branching: Branching::default(),
        }
    }
}

/// Reduce a polarization angle to `[0, π/2]`; only sin²α and cos²α matter.
pub fn normalize_alpha(alpha: f64) -> f64 {
    let a = alpha.rem_euclid(PI);
    if a > FRAC_PI_2 {
        PI - a
    } else {
        a
    }
}

impl PhysicalParams {
    /// Check invariants and normalize α.
    pub fn validated(mut self) -> Result<Self> {
        let finite = [
            self.omega_mw,
            self.delta_mw,
            self.i0,
            self.alpha,
            self.delta_laser,
            self.zeeman_delta,
            self.gamma3,
            self.gamma_lph,
            self.gamma_ph_extra,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.gamma3 <= 0.0 {
            return Err(Error::InvalidParams(format!("gamma3 must be > 0, got {}", self.gamma3)));
        }
        if self.i0 < 0.0 {
            return Err(Error::InvalidParams(format!("i0 must be >= 0, got {}", self.i0)));
        }
        if self.gamma_lph < 0.0 || self.gamma_ph_extra < 0.0 {
            return Err(Error::InvalidParams("dephasing rates must be >= 0".into()));
        }
        self.branching.validate()?;
        self.alpha = normalize_alpha(self.alpha);
        Ok(self)
    }

    /// Optical dipole phase relaxation γ_l = Γ₃/2 + γ_lph.
    pub fn optical_dephasing(&self) -> f64 {
        0.5 * self.gamma3 + self.gamma_lph
    }

    /// Light intensity seen by the σ/π component addressing sublevel `m`.
    pub fn intensity(&self, m: Sublevel) -> f64 {
        let (s, c) = self.alpha.sin_cos();
        match m {
            Sublevel::Zero => self.i0 * c * c,
            Sublevel::Plus | Sublevel::Minus => self.i0 * s * s,
        }
    }

    /// Saturation I(m)·L(B,m) of the transition out of sublevel `m`.
    pub fn saturation(&self, m: Sublevel) -> f64 {
        self.intensity(m) * lorentzian(self, m)
    }
}

/// Normalized excitation line shape L(B, m) ∈ (0, 1].
pub fn lorentzian(params: &PhysicalParams, m: Sublevel) -> f64 {
    let hw = 0.5 * params.gamma3;
    let offset = -params.delta_laser + f64::from(m.m()) * params.zeeman_delta;
    hw * hw / (hw * hw + offset * offset)
}

/// Mean excited-state population ⟨P₃(m)⟩ = ½·s/(1+s) with s = I(m)·L(B,m).
pub fn excited_population(params: &PhysicalParams, m: Sublevel) -> f64 {
    let s = params.saturation(m);
    0.5 * s / (1.0 + s)
}

/// Per-atom scattering rates out of levels 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringRates {
    pub r1: f64,
    pub r2: f64,
    /// ⟨P₃(m)⟩ for m = −1, 0, +1.
    pub p3_mean: [f64; 3],
    pub branching: Branching,
}

impl ScatteringRates {
    pub fn p3(&self, m: Sublevel) -> f64 {
        self.p3_mean[m.index()]
    }

    /// Build rates from the amplitude parameterization √(2 r₁ γ_l) and
    /// √(r₂ γ_l) instead of from intensity and polarization. The m = ±1
    /// populations are split evenly.
    pub fn from_rate_amplitudes(
        sqrt_2r1_gl: f64,
        sqrt_r2_gl: f64,
        params: &PhysicalParams,
    ) -> Result<Self> {
        if sqrt_2r1_gl < 0.0 || sqrt_r2_gl < 0.0 {
            return Err(Error::InvalidParams("rate amplitudes must be >= 0".into()));
        }
        let gl = params.optical_dephasing();
        let r1 = sqrt_2r1_gl * sqrt_2r1_gl / (2.0 * gl);
        let r2 = sqrt_r2_gl * sqrt_r2_gl / gl;
        let g3 = params.gamma3;
        let p3_mean = [0.5 * r2 / g3, r1 / g3, 0.5 * r2 / g3];
        if p3_mean.iter().any(|&p| p >= 0.5) {
            return Err(Error::InvalidParams(
                "rate amplitudes exceed the saturated scattering limit".into(),
            ));
        }
        Ok(ScatteringRates {
            r1,
            r2,
            p3_mean,
            branching: params.branching,
        })
    }

    pub fn zero(branching: Branching) -> Self {
        ScatteringRates {
            r1: 0.0,
            r2: 0.0,
            p3_mean: [0.0; 3],
            branching,
        }
    }

    /// r₂/r₁, or `None` when there is no scattering out of level 1.
    pub fn ratio(&self) -> Option<f64> {
        (self.r1 > 0.0).then(|| self.r2 / self.r1)
    }
}

/// r₁ = ⟨P₃(0)⟩·Γ₃ and r₂ = (⟨P₃(+1)⟩ + ⟨P₃(−1)⟩)·Γ₃.
pub fn scattering_rates(params: &PhysicalParams) -> ScatteringRates {
    let p3_mean = Sublevel::ALL.map(|m| excited_population(params, m));
    ScatteringRates {
        r1: p3_mean[Sublevel::Zero.index()] * params.gamma3,
        r2: (p3_mean[Sublevel::Plus.index()] + p3_mean[Sublevel::Minus.index()]) * params.gamma3,
        p3_mean,
        branching: params.branching,
    }
}

/// Populations of levels 0, 1, 2 in the light-driven flow equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEquilibrium {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
}

/// Balance β₁·n₂·r₂ = β₂·n₁·r₁ with n₀ = n₁ (dephased microwave line).
pub fn steady_state(rates: &ScatteringRates) -> Result<FlowEquilibrium> {
    if rates.r1 + rates.r2 <= 0.0 {
        return Err(Error::DegenerateRates("no scattering, no flow equilibrium"));
    }
    let Branching { beta1, beta2 } = rates.branching;
    let into2 = beta2 * rates.r1;
    let n2 = into2 / (into2 + 2.0 * beta1 * rates.r2);
    let n0 = 0.5 * (1.0 - n2);
    Ok(FlowEquilibrium { n0, n1: n0, n2 })
}

/// Long-time probability of finding the ion in F = 1,
/// P₁ = 1 − ½·ρ/(1+ρ) with ρ = (2β₁/β₂)·r₂/r₁ (ρ = r₂/r₁ for β = ⅓, ⅔).
pub fn saturation_probability(rates: &ScatteringRates) -> Result<f64> {
    if rates.r1 <= 0.0 {
        return Err(Error::DegenerateRates("r1 = 0: saturation level undefined"));
    }
    let rho = pumping_ratio(rates.r2 / rates.r1, rates.branching);
    Ok(1.0 - 0.5 * rho / (1.0 + rho))
}

/// Effective ratio entering the saturation formula for general branching.
pub(crate) fn pumping_ratio(r2_over_r1: f64, branching: Branching) -> f64 {
    2.0 * branching.beta1 / branching.beta2 * r2_over_r1
}

/// Two-level abstraction of the light-induced relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRates {
    /// Transverse rate γ = r₁ + γ_ph.
    pub gamma: f64,
    /// Longitudinal rate Γ = Ω²/r₂ (decay into level 1); absent when r₂ = 0.
    #[serde(rename = "Gamma")]
    pub gamma_longitudinal: Option<f64>,
    /// Saturation probability; absent when r₁ = 0.
    pub p1_inf: Option<f64>,
}

impl EffectiveRates {
    pub fn longitudinal(&self) -> Result<f64> {
        self.gamma_longitudinal
            .ok_or(Error::DegenerateRates("r2 = 0: no energy-relaxation channel"))
    }

    pub fn saturation(&self) -> Result<f64> {
        self.p1_inf
            .ok_or(Error::DegenerateRates("r1 = 0: saturation level undefined"))
    }

    /// Two-level saturation parameter I = Ω²/(Γγ).
    pub fn saturation_parameter(&self, omega_mw: f64) -> Result<f64> {
        let big = self.longitudinal()?;
        if self.gamma <= 0.0 {
            return Err(Error::DegenerateRates("gamma = 0"));
        }
        Ok(omega_mw * omega_mw / (big * self.gamma))
    }

    /// Relaxation times (T₀ = 1/Γ, T₂ = 1/γ).
    pub fn times(&self) -> (Option<f64>, Option<f64>) {
        (
            self.gamma_longitudinal.map(f64::recip),
            (self.gamma > 0.0).then(|| self.gamma.recip()),
        )
    }
}

pub fn effective_rates(params: &PhysicalParams, rates: &ScatteringRates) -> EffectiveRates {
    let w = params.omega_mw;
    EffectiveRates {
        gamma: rates.r1 + params.gamma_ph_extra,
        gamma_longitudinal: (rates.r2 > 0.0).then(|| w * w / rates.r2),
        p1_inf: saturation_probability(rates).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::from_two_pi_khz as k;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn zero_field() -> PhysicalParams {
        PhysicalParams {
            zeeman_delta: 0.0,
            ..PhysicalParams::default()
        }
    }

    fn rates(r1: f64, r2: f64) -> ScatteringRates {
        ScatteringRates {
            r1,
            r2,
            p3_mean: [0.0; 3],
            branching: Branching::default(),
        }
    }

    #[test]
    fn lorentzian_peak_and_half_width() {
        let mut p = zero_field();
        p.delta_laser = 0.0;
        for m in Sublevel::ALL {
            assert_eq!(lorentzian(&p, m), 1.0);
        }
        p.delta_laser = 0.5 * p.gamma3;
        assert_relative_eq!(lorentzian(&p, Sublevel::Zero), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn lorentzian_at_reference_detuning() {
        // (9e3)^2 / ((9e3)^2 + (3e3)^2)
        assert_relative_eq!(lorentzian(&zero_field(), Sublevel::Zero), 0.9, epsilon = 1e-14);
    }

    #[test]
    fn lorentzian_sign_convention() {
        // red detuned light: the m = -1 line is shifted towards the laser when
        // m*delta has the sign of (omega - omega0)
        let p = PhysicalParams {
            delta_laser: k(-3.0e3),
            zeeman_delta: k(3.0e3),
            ..zero_field()
        };
        assert_relative_eq!(lorentzian(&p, Sublevel::Minus), 1.0);
        assert!(lorentzian(&p, Sublevel::Plus) < lorentzian(&p, Sublevel::Zero));
    }

    #[test]
    fn excited_population_edge_cases() {
        let p = zero_field();
        for m in Sublevel::ALL {
            assert_eq!(excited_population(&p, m), 0.0);
        }
        let mut p = PhysicalParams {
            i0: 1.0,
            delta_laser: 0.0,
            alpha: 0.0,
            ..zero_field()
        };
        assert_relative_eq!(excited_population(&p, Sublevel::Zero), 0.25);
        assert_eq!(excited_population(&p, Sublevel::Plus), 0.0);
        assert_eq!(excited_population(&p, Sublevel::Minus), 0.0);
        p.i0 = 1e9;
        assert!(excited_population(&p, Sublevel::Zero) < 0.5);
    }

    #[test]
    fn rates_without_light_or_pi_channel() {
        let r = scattering_rates(&zero_field());
        assert_eq!((r.r1, r.r2), (0.0, 0.0));

        let p = PhysicalParams {
            i0: 1e-3,
            alpha: FRAC_PI_2,
            ..zero_field()
        };
        let r = scattering_rates(&p);
        assert!(r.r1.abs() < 1e-30 * p.gamma3);
        assert!(r.r2 > 0.0);
    }

    #[test]
    fn balanced_angle_gives_equal_rates_in_weak_field() {
        // tan²α = 1/2: I(±1)·2 = I(0) when all three Lorentzians coincide
        let p = PhysicalParams {
            i0: 1e-3,
            alpha: (1.0 / 2f64.sqrt()).atan(),
            ..zero_field()
        };
        let r = scattering_rates(&p);
        // first-order saturation correction ~ I·L·(1/3)
        assert_relative_eq!(r.r2 / r.r1, 1.0, max_relative = 4e-4);
        let p = PhysicalParams { i0: 1e-7, ..p };
        let r = scattering_rates(&p);
        assert_relative_eq!(r.r2 / r.r1, 1.0, max_relative = 1e-7);
    }

    #[test]
    fn effective_rates_symmetric_case() {
        let p = zero_field();
        let e = effective_rates(&p, &rates(3.0, 3.0));
        assert_eq!(e.gamma, 3.0);
        assert_relative_eq!(e.p1_inf.unwrap(), 0.75, epsilon = 1e-15);
        assert_relative_eq!(e.longitudinal().unwrap(), p.omega_mw.powi(2) / 3.0);
    }

    #[test]
    fn effective_rates_from_rate_amplitudes_family() {
        // √(2r₁γ_l) = 700, √(r₂γ_l) ∈ {70, 700}, all in 2π kHz
        let p = zero_field();
        let r = ScatteringRates::from_rate_amplitudes(k(700.0), k(700.0), &p).unwrap();
        assert_relative_eq!(r.r2 / r.r1, 2.0, epsilon = 1e-12);
        assert_relative_eq!(effective_rates(&p, &r).p1_inf.unwrap(), 2.0 / 3.0, epsilon = 1e-12);

        let r = ScatteringRates::from_rate_amplitudes(k(700.0), k(70.0), &p).unwrap();
        assert_relative_eq!(r.r2 / r.r1, 0.02, epsilon = 1e-12);
        let p1 = effective_rates(&p, &r).p1_inf.unwrap();
        assert_relative_eq!(p1, 1.0 - 0.5 * 0.02 / 1.02, epsilon = 1e-12);
        assert!((p1 - 0.99020).abs() < 5e-6);
    }

    #[test]
    fn effective_rates_degenerate() {
        let p = PhysicalParams {
            gamma_ph_extra: 7.0,
            ..zero_field()
        };
        let e = effective_rates(&p, &rates(2.0, 0.0));
        assert_eq!(e.gamma, 9.0);
        assert!(matches!(e.longitudinal(), Err(Error::DegenerateRates(_))));
        assert_eq!(e.p1_inf, Some(1.0));

        let e = effective_rates(&p, &rates(0.0, 0.0));
        assert!(e.p1_inf.is_none());
        assert!(e.saturation().is_err());
    }

    #[test]
    fn steady_state_examples() {
        let s = steady_state(&rates(2.0, 2.0)).unwrap();
        assert_relative_eq!(s.n0, 0.25);
        assert_relative_eq!(s.n1, 0.25);
        assert_relative_eq!(s.n2, 0.5);

        let s = steady_state(&rates(1.0, 3.0)).unwrap();
        assert_relative_eq!(s.n2, 0.25, epsilon = 1e-15);
        assert_relative_eq!(s.n0, 0.375, epsilon = 1e-15);
        assert_relative_eq!(s.n1, 0.375, epsilon = 1e-15);
        assert_relative_eq!(saturation_probability(&rates(1.0, 3.0)).unwrap(), 0.625);

        let s = steady_state(&rates(1.0, 1e-12)).unwrap();
        assert!(1.0 - s.n2 < 1e-11);
        assert!(matches!(steady_state(&rates(0.0, 0.0)), Err(Error::DegenerateRates(_))));
    }

    #[test]
    fn saturation_probability_limits() {
        assert_eq!(saturation_probability(&rates(1.0, 0.0)).unwrap(), 1.0);
        assert_relative_eq!(saturation_probability(&rates(1.0, 1e12)).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(saturation_probability(&rates(1.0, 2.0)).unwrap(), 2.0 / 3.0);
        assert!(matches!(
            saturation_probability(&rates(0.0, 1.0)),
            Err(Error::DegenerateRates(_))
        ));
    }

    #[test]
    fn alpha_normalization() {
        assert_relative_eq!(normalize_alpha(-0.3), 0.3);
        assert_relative_eq!(normalize_alpha(PI - 0.2), 0.2, epsilon = 1e-15);
        assert_relative_eq!(normalize_alpha(PI + 0.2), 0.2, epsilon = 1e-14);
        let p = PhysicalParams { alpha: 2.5, ..zero_field() }.validated().unwrap();
        assert!((0.0..=FRAC_PI_2).contains(&p.alpha));
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(PhysicalParams { gamma3: 0.0, ..zero_field() }.validated().is_err());
        assert!(PhysicalParams { i0: -1.0, ..zero_field() }.validated().is_err());
        let b = Branching { beta1: 0.5, beta2: 0.4 };
        assert!(PhysicalParams { branching: b, ..zero_field() }.validated().is_err());
    }

    proptest! {
        #[test]
        fn p3_bounded_and_monotone(i0 in 0.0..1e3f64, di in 0.0..10.0f64, alpha in 0.0..FRAC_PI_2,
                                   det in -5e8..5e8f64, zee in -1e8..1e8f64) {
            let p = PhysicalParams { i0, alpha, delta_laser: det, zeeman_delta: zee, ..zero_field() };
            let q = PhysicalParams { i0: i0 + di, ..p };
            for m in Sublevel::ALL {
                let a = excited_population(&p, m);
                prop_assert!((0.0..0.5).contains(&a));
                prop_assert!(excited_population(&q, m) >= a);
            }
        }

        #[test]
        fn zeeman_symmetry_on_resonance(i0 in 0.0..10.0f64, alpha in 0.0..FRAC_PI_2, zee in -1e9..1e9f64) {
            let p = PhysicalParams { i0, alpha, delta_laser: 0.0, zeeman_delta: zee, ..zero_field() };
            prop_assert_eq!(excited_population(&p, Sublevel::Plus), excited_population(&p, Sublevel::Minus));
        }

        #[test]
        fn weak_field_polarization_partition(alpha in 0.0..FRAC_PI_2, det in -2e8..2e8f64) {
            let p = PhysicalParams { i0: 1e-9, alpha, delta_laser: det, zeeman_delta: 0.0, ..zero_field() };
            let p0 = PhysicalParams { alpha: 0.0, ..p };
            let pp = PhysicalParams { alpha: FRAC_PI_2, ..p };
            let (c, s) = (alpha.cos().powi(2), alpha.sin().powi(2));
            let r1 = scattering_rates(&p).r1 / scattering_rates(&p0).r1;
            let r2 = scattering_rates(&p).r2 / scattering_rates(&pp).r2;
            prop_assert!((r1 - c).abs() < 1e-6);
            prop_assert!((r2 - s).abs() < 1e-6);
        }

        #[test]
        fn saturation_band(r1 in 1e-9..1e9f64, r2 in 0.0..1e9f64) {
            let p = saturation_probability(&rates(r1, r2)).unwrap();
            prop_assert!(p > 0.5 && p <= 1.0);
        }
    }

    #[test]
    fn saturation_matches_flow_equilibrium() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let r1 = 10f64.powf(rng.random_range(-6.0..6.0));
            let r2 = 10f64.powf(rng.random_range(-6.0..6.0));
            let r = rates(r1, r2);
            let s = steady_state(&r).unwrap();
            assert!((s.n0 + s.n1 + s.n2 - 1.0).abs() < 1e-15);
            let p = saturation_probability(&r).unwrap();
            assert!((p - (s.n1 + s.n2)).abs() < 1e-12);
        }
    }

    #[test]
    fn general_branching_consistency() {
        let b = Branching { beta1: 0.2, beta2: 0.8 };
        let r = ScatteringRates { branching: b, ..rates(1.3, 0.7) };
        let s = steady_state(&r).unwrap();
        // detailed balance between 1 and 2 through level 3
        assert_relative_eq!(b.beta1 * s.n2 * r.r2, b.beta2 * s.n1 * r.r1, epsilon = 1e-15);
        assert_relative_eq!(saturation_probability(&r).unwrap(), s.n1 + s.n2, epsilon = 1e-15);
    }
}
