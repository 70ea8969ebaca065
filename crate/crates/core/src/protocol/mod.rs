//! Monte Carlo of the prepare / drive / probe measurement sequence.
//!
//! One trajectory is a run of `n_max` single-shot measurements. Shot `N`
//! prepares the ion, drives it for `N·δt` with the spurious light switched on,
//! and asks the probe whether the ion is in F = 1. Every shot restarts from the
//! preparation, so the shots of a trajectory are independent given the
//! deterministic excitation probability P₁(N·δt).
//!
//! Randomness is counter based: shot `(trajectory, N)` of a run with master
//! seed `s` reads ChaCha8 keyed by `s`, stream `trajectory`, starting at word
//! `N << 32`. Any shot can be regenerated in isolation and trajectories may
//! run in any order or in parallel.

pub mod format;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, IntegratorConfig, SystemState};
use crate::error::{Error, Result};
use crate::model::{PhysicalParams, ScatteringRates};

/// Two-sided 95 % normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DetectionModel {
    /// Projective discrimination with symmetric-or-not misassignment.
    /// `eps_on` = P(record off | F=1), `eps_off` = P(record on | F=0).
    Ideal { eps_on: f64, eps_off: f64 },
    /// Photon counting during the probe: Poisson counts at `bright_rate` +
    /// `dark_rate` (ion bright) or `dark_rate` (ion dark), in counts/s,
    /// recorded "on" when at least `threshold` counts arrive.
    ThresholdedCounts {
        bright_rate: f64,
        dark_rate: f64,
        threshold: u32,
    },
}

impl Default for DetectionModel {
    fn default() -> Self {
        DetectionModel::Ideal {
            eps_on: 0.0,
            eps_off: 0.0,
        }
    }
}

impl DetectionModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DetectionModel::Ideal { eps_on, eps_off } => {
                if !((0.0..0.5).contains(&eps_on) && (0.0..0.5).contains(&eps_off)) {
                    return Err(Error::InvalidParams(format!(
                        "detection error rates must lie in [0, 1/2), got {eps_on}, {eps_off}"
                    )));
                }
            }
            DetectionModel::ThresholdedCounts {
                bright_rate,
                dark_rate,
                threshold,
            } => {
                if !(bright_rate > 0.0 && dark_rate >= 0.0 && threshold >= 1) {
                    return Err(Error::InvalidParams(
                        "thresholded detection needs bright_rate > 0, dark_rate >= 0, threshold >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Misassignment probabilities (P(off | bright), P(on | dark)) for a probe
    /// of the given length.
    pub fn error_rates(&self, probe_duration: f64) -> (f64, f64) {
        match *self {
            DetectionModel::Ideal { eps_on, eps_off } => (eps_on, eps_off),
            DetectionModel::ThresholdedCounts {
                bright_rate,
                dark_rate,
                threshold,
            } => {
                let lit = (bright_rate + dark_rate) * probe_duration;
                let dark = dark_rate * probe_duration;
                (1.0 - poisson_tail(lit, threshold), poisson_tail(dark, threshold))
            }
        }
    }

    /// Probability of an "on" record when the ion is in F = 1 with probability `p1`.
    pub fn p_on(&self, p1: f64, probe_duration: f64) -> f64 {
        let (miss, false_on) = self.error_rates(probe_duration);
        p1 * (1.0 - miss) + (1.0 - p1) * false_on
    }

    fn record<R: Rng>(&self, bright: bool, probe_duration: f64, rng: &mut R) -> bool {
        match *self {
            DetectionModel::Ideal { eps_on, eps_off } => {
                let u: f64 = rng.random();
                if bright {
                    u >= eps_on
                } else {
                    u < eps_off
                }
            }
            DetectionModel::ThresholdedCounts {
                bright_rate,
                dark_rate,
                threshold,
            } => {
                let rate = if bright { bright_rate + dark_rate } else { dark_rate };
                let mean = rate * probe_duration;
                let counts = if mean > 0.0 {
                    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
                } else {
                    0.0
                };
                counts >= f64::from(threshold)
            }
        }
    }
}

/// P(X ≥ k) for X ~ Poisson(mean).
pub fn poisson_tail(mean: f64, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    let mut term = (-mean).exp();
    let mut below = term;
    for j in 1..k {
        term *= mean / f64::from(j);
        below += term;
    }
    (1.0 - below).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Unit drive length δt, seconds.
    pub dt_unit: f64,
    pub n_max: usize,
    pub n_trajectories: usize,
    /// Probe pulse length, seconds.
    pub probe_duration: f64,
    pub detection: DetectionModel,
    pub seed: u64,
    /// Probability that preparation leaves the ion in level 1 instead of 0.
    pub prep_error: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            dt_unit: 100e-6,
            n_max: 300,
            n_trajectories: 50,
            probe_duration: 5e-3,
            detection: DetectionModel::default(),
            seed: 0,
            prep_error: 0.0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_unit > 0.0 && self.dt_unit.is_finite()) {
            return Err(Error::InvalidParams("dt_unit must be > 0".into()));
        }
        if self.n_max == 0 || self.n_trajectories == 0 {
            return Err(Error::InvalidParams("n_max and n_trajectories must be >= 1".into()));
        }
        if !(self.probe_duration >= 0.0) {
            return Err(Error::InvalidParams("probe_duration must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.prep_error) {
            return Err(Error::InvalidParams("prep_error must lie in [0, 1]".into()));
        }
        self.detection.validate()
    }

    /// Drive lengths N·δt for N = 1..=n_max.
    pub fn drive_times(&self) -> Vec<f64> {
        (1..=self.n_max).map(|n| n as f64 * self.dt_unit).collect()
    }
}

/// Everything needed to regenerate a trajectory bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub params: PhysicalParams,
    pub rates: ScatteringRates,
    pub protocol: ProtocolConfig,
    pub integrator: IntegratorConfig,
}

impl Experiment {
    pub fn new(params: PhysicalParams, rates: ScatteringRates, protocol: ProtocolConfig) -> Self {
        Experiment {
            params,
            rates,
            protocol,
            integrator: IntegratorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validated()?;
        self.protocol.validate()?;
        self.integrator.validate()
    }
}

/// One sequence of `n_max` on/off records.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    /// `outcomes[k]` is the record for N = k + 1; `true` means "on".
    pub outcomes: Vec<bool>,
    pub experiment: Arc<Experiment>,
}

impl TrajectoryRecord {
    pub fn seed(&self) -> u64 {
        self.experiment.protocol.seed
    }

    pub fn bits(&self) -> String {
        self.outcomes.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Random source for shot `n` of trajectory `index`.
pub fn shot_rng(seed: u64, index: u64, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.set_word_pos((n as u128) << 32);
    rng
}

/// Simulator with the deterministic excitation curves precomputed.
#[derive(Debug, Clone)]
pub struct ProtocolSimulator {
    experiment: Arc<Experiment>,
    /// P₁ after N·δt starting from level 0, N = 1..=n_max.
    from_ground: Vec<f64>,
    /// Same, starting from level 1; only filled when preparation can fail.
    from_upper: Option<Vec<f64>>,
}

impl ProtocolSimulator {
    pub fn new(experiment: Experiment) -> Result<Self> {
        experiment.validate()?;
        let times = experiment.protocol.drive_times();
        let curve = |init: SystemState| -> Result<Vec<f64>> {
            Ok(dynamics::integrate(
                &init,
                &experiment.params,
                &experiment.rates,
                &experiment.integrator,
                &times,
            )?
            .p1())
        };
        let from_ground = curve(SystemState::ground())?;
        let from_upper = if experiment.protocol.prep_error > 0.0 {
            Some(curve(SystemState::upper())?)
        } else {
            None
        };
        Ok(ProtocolSimulator {
            experiment: Arc::new(experiment),
            from_ground,
            from_upper,
        })
    }

    pub fn experiment(&self) -> &Arc<Experiment> {
        &self.experiment
    }

    /// Deterministic probability of finding F = 1 after N·δt, averaged over
    /// the preparation outcome.
    pub fn p1_curve(&self) -> Vec<f64> {
        let eps = self.experiment.protocol.prep_error;
        match &self.from_upper {
            None => self.from_ground.clone(),
            Some(up) => self
                .from_ground
                .iter()
                .zip(up)
                .map(|(g, u)| (1.0 - eps) * g + eps * u)
                .collect(),
        }
    }

    /// Deterministic probability of an "on" record at each N.
    pub fn expected_on_curve(&self) -> Vec<f64> {
        let p = &self.experiment.protocol;
        self.p1_curve()
            .into_iter()
            .map(|x| p.detection.p_on(x, p.probe_duration))
            .collect()
    }

    fn shot(&self, index: u64, n: usize) -> bool {
        let p = &self.experiment.protocol;
        let mut rng = shot_rng(p.seed, index, n);
        let prep_failed = rng.random::<f64>() < p.prep_error;
        let curve = match (&self.from_upper, prep_failed) {
            (Some(up), true) => up,
            _ => &self.from_ground,
        };
        let bright = rng.random::<f64>() < curve[n - 1];
        p.detection.record(bright, p.probe_duration, &mut rng)
    }

    pub fn run_trajectory(&self, index: u64) -> TrajectoryRecord {
        let n_max = self.experiment.protocol.n_max;
        TrajectoryRecord {
            index,
            outcomes: (1..=n_max).map(|n| self.shot(index, n)).collect(),
            experiment: Arc::clone(&self.experiment),
        }
    }

    /// Trajectories `0..n_trajectories`, computed in parallel, returned in
    /// index order.
    pub fn run_all(&self) -> Vec<TrajectoryRecord> {
        let count = self.experiment.protocol.n_trajectories as u64;
        (0..count)
            .into_par_iter()
            .map(|i| self.run_trajectory(i))
            .collect()
    }
}

/// Simulate trajectory `index` of an experiment.
pub fn run_trajectory(
    params: &PhysicalParams,
    rates: &ScatteringRates,
    config: &ProtocolConfig,
    index: u64,
) -> Result<TrajectoryRecord> {
    let sim = ProtocolSimulator::new(Experiment::new(*params, *rates, *config))?;
    Ok(sim.run_trajectory(index))
}

/// Regenerate a record from its own seed and configuration snapshot.
pub fn replay(record: &TrajectoryRecord) -> Result<TrajectoryRecord> {
    let sim = ProtocolSimulator::new(*record.experiment)?;
    Ok(sim.run_trajectory(record.index))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub theta: f64,
    pub p1_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: usize,
}

impl CurvePoint {
    pub fn tau(&self, dt_unit: f64) -> f64 {
        self.n as f64 * dt_unit
    }

    /// Half-width of the interval expressed as a standard deviation.
    pub fn sigma(&self, z: f64) -> f64 {
        0.5 * (self.ci_high - self.ci_low) / z
    }
}

/// Pointwise estimate of P₁(θ) from superimposed trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatedCurve {
    pub experiment: Arc<Experiment>,
    pub z: f64,
    pub points: Vec<CurvePoint>,
}

impl AccumulatedCurve {
    /// Binomial z-scores of the estimate against reference probabilities.
    /// Points where the reference is 0 or 1 score 0 when matched exactly and
    /// infinity otherwise.
    pub fn z_scores(&self, reference: &[f64]) -> Vec<f64> {
        self.points
            .iter()
            .zip(reference)
            .map(|(pt, &p)| {
                let var = p * (1.0 - p) / pt.n_samples as f64;
                let diff = pt.p1_mean - p;
                if var > 0.0 {
                    diff / var.sqrt()
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }
}

pub fn accumulate(records: &[TrajectoryRecord]) -> Result<AccumulatedCurve> {
    accumulate_with(records, Z_95)
}

/// Superimpose records that share one configuration; Wilson intervals at
/// normal quantile `z`.
pub fn accumulate_with(records: &[TrajectoryRecord], z: f64) -> Result<AccumulatedCurve> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidParams("no trajectory records to accumulate".into()))?;
    let exp = Arc::clone(&first.experiment);
    let n_max = exp.protocol.n_max;
    let mut on = vec![0usize; n_max];
    for (i, rec) in records.iter().enumerate() {
        if *rec.experiment != *exp || rec.outcomes.len() != n_max {
            return Err(Error::ConfigMismatch { index: i });
        }
        for (count, &bit) in on.iter_mut().zip(&rec.outcomes) {
            *count += usize::from(bit);
        }
    }
    let total = records.len();
    let omega = exp.params.omega_mw;
    let points = on
        .iter()
        .enumerate()
        .map(|(k, &hits)| {
            let n = k + 1;
            let (ci_low, ci_high) = wilson_interval(hits, total, z);
            CurvePoint {
                n,
                theta: omega * n as f64 * exp.protocol.dt_unit,
                p1_mean: hits as f64 / total as f64,
                ci_low,
                ci_high,
                n_samples: total,
            }
        })
        .collect();
    Ok(AccumulatedCurve {
        experiment: exp,
        z,
        points,
    })
}
