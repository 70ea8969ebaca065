//! Run configuration: one TOML document with every knob of a run.
//!
//! Frequencies and rates are given in 2π × kHz, times in µs, angles in
//! degrees. Conversion to SI happens only in the `*_params` / `*_config`
//! accessors.
//!
//! ```toml
//! seed = 7
//!
//! [physics]
//! omega_2pikhz = 4.2
//! i0 = 1e-4
//! alpha_deg = 35.26
//!
//! [protocol]
//! dt_us = 100.0
//! n_max = 300
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegratorConfig, Method, SystemState};
use crate::error::{Error, Result};
use crate::estimation::{DesignBounds, DesignTarget, FieldMode};
use crate::model::{scattering_rates, Branching, PhysicalParams, ScatteringRates};
use crate::protocol::format::sha256_hex;
use crate::protocol::{DetectionModel, Experiment, ProtocolConfig, Z_95};
use crate::units::{from_micros, from_two_pi_khz, to_two_pi_khz};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub physics: PhysicsSection,
    pub protocol: ProtocolSection,
    pub integrator: IntegratorSection,
    pub simulate: SimulateSection,
    pub design: DesignSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            physics: PhysicsSection::default(),
            protocol: ProtocolSection::default(),
            integrator: IntegratorSection::default(),
            simulate: SimulateSection::default(),
            design: DesignSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub omega_2pikhz: f64,
    pub delta_mw_2pikhz: f64,
    pub i0: f64,
    pub alpha_deg: f64,
    pub detuning_2pikhz: f64,
    /// Zeeman shift of the m = ±1 lines, 2π × kHz.
    pub b_field_2pikhz: f64,
    pub gamma3_2pikhz: f64,
    pub gamma_lph_2pikhz: f64,
    pub gamma_ph_extra_2pikhz: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Rate amplitudes √(2r₁γ_l) and √(r₂γ_l). When both are
    /// set they replace the rates computed from i0 and alpha.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sqrt_2r1_gl_2pikhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sqrt_r2_gl_2pikhz: Option<f64>,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        let p = PhysicalParams::default();
        PhysicsSection {
            omega_2pikhz: to_two_pi_khz(p.omega_mw),
            delta_mw_2pikhz: to_two_pi_khz(p.delta_mw),
            i0: p.i0,
            alpha_deg: p.alpha.to_degrees(),
            detuning_2pikhz: to_two_pi_khz(p.delta_laser),
            b_field_2pikhz: to_two_pi_khz(p.zeeman_delta),
            gamma3_2pikhz: to_two_pi_khz(p.gamma3),
            gamma_lph_2pikhz: to_two_pi_khz(p.gamma_lph),
            gamma_ph_extra_2pikhz: to_two_pi_khz(p.gamma_ph_extra),
            beta1: p.branching.beta1,
            beta2: p.branching.beta2,
            sqrt_2r1_gl_2pikhz: None,
            sqrt_r2_gl_2pikhz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub dt_us: f64,
    pub n_max: usize,
    pub n_trajectories: usize,
    pub probe_us: f64,
    pub prep_error: f64,
    /// Normal quantile of the reported confidence bands.
    pub z: f64,
    pub detection: DetectionModel,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        ProtocolSection {
            dt_us: p.dt_unit * 1e6,
            n_max: p.n_max,
            n_trajectories: p.n_trajectories,
            probe_us: p.probe_duration * 1e6,
            prep_error: p.prep_error,
            z: Z_95,
            detection: p.detection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Rk45,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub method: MethodName,
    pub rtol: f64,
    pub atol: f64,
    /// Fixed step for rk4, µs.
    pub step_us: f64,
    pub max_steps: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        let (rtol, atol) = match d.method {
            Method::Rk45 { rtol, atol } => (rtol, atol),
            Method::Rk4 { .. } => (1e-9, 1e-11),
        };
        IntegratorSection {
            method: MethodName::Rk45,
            rtol,
            atol,
            step_us: 1e-3,
            max_steps: d.max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    FourLevel,
    Adiabatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub model: ModelKind,
    pub initial_n0: f64,
    pub initial_n1: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            model: ModelKind::FourLevel,
            initial_n0: 1.0,
            initial_n1: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_2pikhz: Option<f64>,
    /// Target Γ; `inf` asks for no energy relaxation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub big_gamma_2pikhz: Option<f64>,
    pub i0_min: f64,
    pub i0_max: f64,
    pub alpha_min_deg: f64,
    pub alpha_max_deg: f64,
    /// Field range for `field = "minimize-intensity"`; defaults to the
    /// physics field.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_min_2pikhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_max_2pikhz: Option<f64>,
    pub field: FieldMode,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            gamma_2pikhz: None,
            big_gamma_2pikhz: None,
            i0_min: 0.0,
            i0_max: 10.0,
            alpha_min_deg: 0.0,
            alpha_max_deg: 90.0,
            b_min_2pikhz: None,
            b_max_2pikhz: None,
            field: FieldMode::Fixed,
        }
    }
}

/// Knobs a sweep can vary. Names match the physics keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "i0")]
    I0,
    #[serde(rename = "alpha_deg")]
    AlphaDeg,
    #[serde(rename = "b_field_2pikhz")]
    BField2pikhz,
    #[serde(rename = "omega_2pikhz")]
    Omega2pikhz,
    #[serde(rename = "detuning_2pikhz")]
    Detuning2pikhz,
    #[serde(rename = "gamma_ph_extra_2pikhz")]
    GammaPhExtra2pikhz,
    #[serde(rename = "sqrt_2r1_gl_2pikhz")]
    Sqrt2r1Gl2pikhz,
    #[serde(rename = "sqrt_r2_gl_2pikhz")]
    SqrtR2Gl2pikhz,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::I0 => "i0",
            SweepAxis::AlphaDeg => "alpha_deg",
            SweepAxis::BField2pikhz => "b_field_2pikhz",
            SweepAxis::Omega2pikhz => "omega_2pikhz",
            SweepAxis::Detuning2pikhz => "detuning_2pikhz",
            SweepAxis::GammaPhExtra2pikhz => "gamma_ph_extra_2pikhz",
            SweepAxis::Sqrt2r1Gl2pikhz => "sqrt_2r1_gl_2pikhz",
            SweepAxis::SqrtR2Gl2pikhz => "sqrt_r2_gl_2pikhz",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::Config(format!("unknown sweep axis `{name}`")))
    }

    pub fn apply(self, physics: &mut PhysicsSection, value: f64) {
        match self {
            SweepAxis::I0 => physics.i0 = value,
            SweepAxis::AlphaDeg => physics.alpha_deg = value,
            SweepAxis::BField2pikhz => physics.b_field_2pikhz = value,
            SweepAxis::Omega2pikhz => physics.omega_2pikhz = value,
            SweepAxis::Detuning2pikhz => physics.detuning_2pikhz = value,
            SweepAxis::GammaPhExtra2pikhz => physics.gamma_ph_extra_2pikhz = value,
            SweepAxis::Sqrt2r1Gl2pikhz => physics.sqrt_2r1_gl_2pikhz = Some(value),
            SweepAxis::SqrtR2Gl2pikhz => physics.sqrt_r2_gl_2pikhz = Some(value),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<SweepAxis>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Accumulated-curve file written next to the trajectories.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| match e.span() {
            Some(span) => Error::Parse {
                line: line_of(text, span.start),
                message: e.message().trim().to_string(),
            },
            None => Error::Config(e.message().trim().to_string()),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form. Output locations are left out so
    /// that the same run written to two places carries the same hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        sha256_hex(c.to_toml().as_bytes())
    }

    pub fn physical_params(&self) -> Result<PhysicalParams> {
        let p = &self.physics;
        PhysicalParams {
            omega_mw: from_two_pi_khz(p.omega_2pikhz),
            delta_mw: from_two_pi_khz(p.delta_mw_2pikhz),
            i0: p.i0,
            alpha: p.alpha_deg.to_radians(),
            delta_laser: from_two_pi_khz(p.detuning_2pikhz),
            zeeman_delta: from_two_pi_khz(p.b_field_2pikhz),
            gamma3: from_two_pi_khz(p.gamma3_2pikhz),
            gamma_lph: from_two_pi_khz(p.gamma_lph_2pikhz),
            gamma_ph_extra: from_two_pi_khz(p.gamma_ph_extra_2pikhz),
            branching: Branching {
                beta1: p.beta1,
                beta2: p.beta2,
            },
        }
        .validated()
    }

    pub fn rates(&self, params: &PhysicalParams) -> Result<ScatteringRates> {
        match (self.physics.sqrt_2r1_gl_2pikhz, self.physics.sqrt_r2_gl_2pikhz) {
            (Some(a), Some(b)) => ScatteringRates::from_rate_amplitudes(from_two_pi_khz(a), from_two_pi_khz(b), params),
            (None, None) => Ok(scattering_rates(params)),
            _ => Err(Error::Config(
                "sqrt_2r1_gl_2pikhz and sqrt_r2_gl_2pikhz must be given together".into(),
            )),
        }
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig> {
        let p = &self.protocol;
        let c = ProtocolConfig {
            dt_unit: from_micros(p.dt_us),
            n_max: p.n_max,
            n_trajectories: p.n_trajectories,
            probe_duration: from_micros(p.probe_us),
            detection: p.detection,
            seed: self.seed,
            prep_error: p.prep_error,
        };
        c.validate()?;
        if !(p.z > 0.0 && p.z.is_finite()) {
            return Err(Error::InvalidParams("protocol.z must be > 0".into()));
        }
        Ok(c)
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig> {
        let i = &self.integrator;
        let method = match i.method {
            MethodName::Rk45 => Method::Rk45 {
                rtol: i.rtol,
                atol: i.atol,
            },
            MethodName::Rk4 => Method::Rk4 {
                dt: from_micros(i.step_us),
            },
        };
        let c = IntegratorConfig {
            method,
            max_steps: i.max_steps,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let params = self.physical_params()?;
        let rates = self.rates(&params)?;
        let mut exp = Experiment::new(params, rates, self.protocol_config()?);
        exp.integrator = self.integrator_config()?;
        Ok(exp)
    }

    pub fn initial_state(&self) -> Result<SystemState> {
        let s = SystemState::mixed(self.simulate.initial_n0, self.simulate.initial_n1);
        s.validate()?;
        Ok(s)
    }

    pub fn design_target(&self, template: &PhysicalParams) -> Result<DesignTarget> {
        let d = &self.design;
        let (Some(gamma), Some(big)) = (d.gamma_2pikhz, d.big_gamma_2pikhz) else {
            return Err(Error::Config(
                "design needs design.gamma_2pikhz and design.big_gamma_2pikhz".into(),
            ));
        };
        let b = template.zeeman_delta;
        let target = DesignTarget {
            bounds: DesignBounds {
                i0: [d.i0_min, d.i0_max],
                alpha: [d.alpha_min_deg.to_radians(), d.alpha_max_deg.to_radians()],
                zeeman_delta: [
                    d.b_min_2pikhz.map_or(b, from_two_pi_khz),
                    d.b_max_2pikhz.map_or(b, from_two_pi_khz),
                ],
            },
            field: d.field,
            ..DesignTarget::new(from_two_pi_khz(gamma), from_two_pi_khz(big), template)
        };
        target.validate()?;
        Ok(target)
    }

    pub fn format(&self) -> OutputFormat {
        self.output.format.unwrap_or_default()
    }
}
