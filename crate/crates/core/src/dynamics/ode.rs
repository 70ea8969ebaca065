//! Explicit Runge–Kutta integrators sampled on a caller-supplied time grid.
//!
//! The adaptive method is Dormand–Prince 5(4) with local extrapolation and
//! first-same-as-last reuse. Steps are clipped so that every requested sample
//! time is hit exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Autonomous right-hand side `dy = f(y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, y: &[f64; N], dy: &mut [f64; N]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    /// Classic fourth-order Runge–Kutta with a fixed step (seconds).
    Rk4 { dt: f64 },
    /// Adaptive Dormand–Prince 5(4).
    Rk45 { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(flatten)]
    pub method: Method,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk45 {
                rtol: 1e-9,
                atol: 1e-11,
            },
            max_steps: 500_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4 { dt },
            ..Default::default()
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk45 { rtol, atol },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4 { dt } => dt > 0.0 && dt.is_finite(),
            Method::Rk45 { rtol, atol } => rtol > 0.0 && atol > 0.0,
        };
        if ok && self.max_steps > 0 {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid integrator settings {self:?}")))
        }
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidParams("sample times must be finite and >= 0".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParams("sample times must be nondecreasing".into()));
    }
    Ok(())
}

/// Integrate from `y0` at t = 0 and return the state at each time in `times`.
pub fn solve<S, const N: usize>(
    sys: &S,
    y0: [f64; N],
    times: &[f64],
    config: &IntegratorConfig,
) -> Result<Vec<[f64; N]>>
where
    S: OdeSystem<N>,
{
    config.validate()?;
    check_grid(times)?;
    match config.method {
        Method::Rk4 { dt } => rk4(sys, y0, times, dt, config.max_steps),
        Method::Rk45 { rtol, atol } => dopri5(sys, y0, times, rtol, atol, config.max_steps),
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

fn rk4<S, const N: usize>(
    sys: &S,
    y0: [f64; N],
    times: &[f64],
    dt: f64,
    max_steps: usize,
) -> Result<Vec<[f64; N]>>
where
    S: OdeSystem<N>,
{
    let mut out = Vec::with_capacity(times.len());
    let (mut t, mut y) = (0.0, y0);
    let mut steps = 0usize;
    let (mut k1, mut k2, mut k3, mut k4) = ([0.0; N], [0.0; N], [0.0; N], [0.0; N]);
    for &target in times {
        while target - t > 0.0 {
            let h = dt.min(target - t);
            sys.rhs(&y, &mut k1);
            sys.rhs(&axpy(&y, 0.5 * h, &[(1.0, &k1)]), &mut k2);
            sys.rhs(&axpy(&y, 0.5 * h, &[(1.0, &k2)]), &mut k3);
            sys.rhs(&axpy(&y, h, &[(1.0, &k3)]), &mut k4);
            y = axpy(&y, h / 6.0, &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)]);
            // snap to the sample to avoid a sliver step from rounding
            t = if target - (t + h) < 1e-12 * dt { target } else { t + h };
            steps += 1;
            if steps > max_steps {
                return Err(Error::StepBudgetExhausted { t, max_steps });
            }
        }
        out.push(y);
    }
    Ok(out)
}

const SAFETY: f64 = 0.9;

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn error_norm<const N: usize>(err: &[f64; N], y: &[f64; N], y_new: &[f64; N], rtol: f64, atol: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..N {
        let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
        let e = (err[i] / sc).abs();
        // NaN must propagate so the step gets rejected
        if !(e <= worst) {
            worst = e;
        }
    }
    worst
}

fn initial_step<S, const N: usize>(sys: &S, y0: &[f64; N], f0: &[f64; N], rtol: f64, atol: f64, horizon: f64) -> f64
where
    S: OdeSystem<N>,
{
    let scale: Vec<f64> = y0.iter().map(|y| atol + rtol * y.abs()).collect();
    let norm = |v: &[f64; N]| -> f64 {
        (v.iter().zip(&scale).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / N as f64).sqrt()
    };
    let (d0, d1) = (norm(y0), norm(f0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(horizon);
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let mut f1 = [0.0; N];
    sys.rhs(&y1, &mut f1);
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(horizon)
}

fn dopri5<S, const N: usize>(
    sys: &S,
    y0: [f64; N],
    times: &[f64],
    rtol: f64,
    atol: f64,
    max_steps: usize,
) -> Result<Vec<[f64; N]>>
where
    S: OdeSystem<N>,
{
    let mut out = Vec::with_capacity(times.len());
    let horizon = times.last().copied().unwrap_or(0.0);
    let (mut t, mut y) = (0.0f64, y0);
    let mut k1 = [0.0; N];
    sys.rhs(&y, &mut k1);
    let mut h = if horizon > 0.0 {
        initial_step(sys, &y, &k1, rtol, atol, horizon)
    } else {
        0.0
    };
    let mut steps = 0usize;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        ([0.0; N], [0.0; N], [0.0; N], [0.0; N], [0.0; N], [0.0; N]);

    for &target in times {
        while target - t > 0.0 {
            let remaining = target - t;
            let tiny = 1e-14 * horizon;
            if remaining <= tiny {
                t = target;
                break;
            }
            if h < tiny {
                return Err(Error::StiffnessFailure { t, h });
            }
            let clipped = h >= remaining;
            let step = if clipped { remaining } else { h };

            sys.rhs(&axpy(&y, step, &[(A21, &k1)]), &mut k2);
            sys.rhs(&axpy(&y, step, &[(A31, &k1), (A32, &k2)]), &mut k3);
            sys.rhs(&axpy(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]), &mut k4);
            sys.rhs(&axpy(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]), &mut k5);
            sys.rhs(
                &axpy(&y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
                &mut k6,
            );
            let y_new = axpy(&y, step, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            sys.rhs(&y_new, &mut k7);

            let mut err = [0.0; N];
            for i in 0..N {
                err[i] = step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let en = error_norm(&err, &y, &y_new, rtol, atol);

            steps += 1;
            if steps > max_steps {
                return Err(Error::StepBudgetExhausted { t, max_steps });
            }

            let factor = if en == 0.0 {
                5.0
            } else if en.is_finite() {
                (SAFETY * en.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                0.2
            };
            if en <= 1.0 {
                t = if clipped { target } else { t + step };
                y = y_new;
                k1 = k7;
                // a clipped step says nothing about the admissible step size
                if !clipped || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                h = step * factor.min(1.0);
            }
        }
        out.push(y);
    }
    Ok(out)
}
