//! Damped-cosine fit P₁(τ) = p_inf + A·e^(−λτ)·cos(Ωτ + φ).

use nalgebra::{DMatrix, DVector, Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::CurvePoint;

const NP: usize = 5;
type Params = [f64; NP];

/// One point of a measured or simulated excitation curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub tau: f64,
    pub p1: f64,
    /// One standard deviation; `None` gives unit weight.
    pub sigma: Option<f64>,
}

impl CurveSample {
    pub fn new(tau: f64, p1: f64) -> Self {
        CurveSample { tau, p1, sigma: None }
    }

    pub fn from_points(points: &[CurvePoint], dt_unit: f64, z: f64) -> Vec<CurveSample> {
        points
            .iter()
            .map(|p| CurveSample {
                tau: p.tau(dt_unit),
                p1: p.p1_mean,
                sigma: Some(p.sigma(z)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative cost decrease below which the fit counts as converged.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NutationFit {
    /// Nutation frequency, rad/s.
    pub omega: f64,
    /// Envelope decay rate, 1/s.
    pub lambda: f64,
    pub p_inf: f64,
    pub amplitude: f64,
    /// Phase in (−π, π].
    pub phase: f64,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the envelope decays faster than the oscillation (λ > Ω);
    /// Ω is then poorly determined.
    pub low_confidence: bool,
}

impl NutationFit {
    pub fn eval(&self, tau: f64) -> f64 {
        self.p_inf + self.amplitude * (-self.lambda * tau).exp() * (self.omega * tau + self.phase).cos()
    }

    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence {
                iterations: self.iterations,
            })
        }
    }
}

fn model(t: f64, p: &Params) -> f64 {
    let [w, l, c, a, phi] = *p;
    c + a * (-l * t).exp() * (w * t + phi).cos()
}

/// Frequency window for one local search, in normalized units.
type Band = [f64; 2];

const OPEN: Band = [f64::NEG_INFINITY, f64::INFINITY];

fn project(p: &mut Params, band: Band) {
    p[0] = p[0].clamp(band[0], band[1]);
    p[1] = p[1].max(0.0);
    p[2] = p[2].clamp(0.0, 1.0);
}

/// Normalized problem: time in units of the sample span, weights with unit mean.
struct Problem {
    t: Vec<f64>,
    y: Vec<f64>,
    sw: Vec<f64>,
}

impl Problem {
    fn residuals(&self, p: &Params, out: &mut [f64]) {
        for (i, r) in out.iter_mut().enumerate() {
            *r = self.sw[i] * (model(self.t[i], p) - self.y[i]);
        }
    }

    fn cost(&self, p: &Params) -> f64 {
        self.t
            .iter()
            .zip(&self.y)
            .zip(&self.sw)
            .map(|((&t, &y), &s)| {
                let r = s * (model(t, p) - y);
                r * r
            })
            .sum::<f64>()
            * 0.5
    }

    fn jacobian(&self, p: &Params) -> Option<DMatrix<f64>> {
        let n = self.t.len();
        let mut jac = DMatrix::zeros(n, NP);
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        for j in 0..NP {
            let h = 1e-6 * (p[j].abs() + 1e-3);
            let mut q = *p;
            q[j] = p[j] + h;
            self.residuals(&q, &mut plus);
            q[j] = p[j] - h;
            self.residuals(&q, &mut minus);
            for i in 0..n {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }

    /// Best (p, A, φ) for fixed (Ω, λ) by linear least squares.
    fn linear_solve(&self, w: f64, l: f64) -> Option<Params> {
        let n = self.t.len();
        let mut m = DMatrix::zeros(n, 3);
        let mut rhs = DVector::zeros(n);
        for i in 0..n {
            let (t, s) = (self.t[i], self.sw[i]);
            let e = (-l * t).exp();
            m[(i, 0)] = s;
            m[(i, 1)] = s * e * (w * t).cos();
            m[(i, 2)] = s * e * (w * t).sin();
            rhs[i] = s * self.y[i];
        }
        let sol = m.svd(true, true).solve(&rhs, 1e-12).ok()?;
        let (c, a, b) = (sol[0], sol[1], sol[2]);
        let mut p = [w, l, c, a.hypot(b), (-b).atan2(a)];
        project(&mut p, OPEN);
        p.iter().all(|v| v.is_finite()).then_some(p)
    }
}

/// Lomb-style periodogram of the linearly detrended data; returns local
/// maxima (frequency, power·ω), largest first. The ω factor suppresses the
/// sidelobes of a slowly drifting baseline.
fn spectral_peaks(t: &[f64], y: &[f64], count: usize) -> Vec<(f64, f64)> {
    let n = t.len() as f64;
    let (mt, my) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = t.iter().map(|&x| (x - mt) * (x - mt)).sum();
    let sxy: f64 = t.iter().zip(y).map(|(&x, &v)| (x - mt) * (v - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let d: Vec<f64> = t.iter().zip(y).map(|(&x, &v)| v - my - slope * (x - mt)).collect();

    let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).filter(|&g| g > 0.0).collect();
    gaps.sort_by(f64::total_cmp);
    let median_gap = gaps.get(gaps.len() / 2).copied().unwrap_or(1.0 / n);
    let span = t[t.len() - 1] - t[0];
    let w_lo = 1.5 * std::f64::consts::PI / span;
    let w_hi = std::f64::consts::PI / median_gap;
    let dw = std::f64::consts::PI / (2.0 * span);
    if w_hi <= w_lo {
        return Vec::new();
    }
    let steps = ((w_hi - w_lo) / dw).ceil() as usize + 1;
    // phasors e^{iωt} advanced by e^{i·dω·t} per frequency step
    let mut rot = vec![(0.0, 1.0); t.len()];
    let inc: Vec<(f64, f64)> = t.iter().map(|&x| (dw * x).sin_cos()).collect();
    let mut power = Vec::with_capacity(steps);
    for k in 0..steps {
        if k % 64 == 0 {
            let w = w_lo + k as f64 * dw;
            for (r, &x) in rot.iter_mut().zip(t) {
                *r = (w * x).sin_cos();
            }
        }
        let (mut re, mut im) = (0.0, 0.0);
        for ((r, &(ds, dc)), &v) in rot.iter_mut().zip(&inc).zip(&d) {
            let (s, c) = *r;
            re += v * c;
            im += v * s;
            *r = (s * dc + c * ds, c * dc - s * ds);
        }
        power.push(re * re + im * im);
    }
    let mut peaks: Vec<(f64, f64)> = (0..steps)
        .filter(|&k| {
            let left = if k == 0 { f64::NEG_INFINITY } else { power[k - 1] };
            let right = if k + 1 == steps { f64::NEG_INFINITY } else { power[k + 1] };
            power[k] >= left && power[k] >= right
        })
        .map(|k| {
            let mut w = w_lo + k as f64 * dw;
            if k > 0 && k + 1 < steps {
                let (a, b, c) = (power[k - 1], power[k], power[k + 1]);
                let den = a - 2.0 * b + c;
                if den < 0.0 {
                    w += 0.5 * (a - c) / den * dw;
                }
            }
            (w, power[k] * w)
        })
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks.truncate(count);
    peaks
}

/// Envelope decay from the extremes of |y − c| over half-period windows.
fn envelope_rate(t: &[f64], y: &[f64], c: f64, w: f64) -> f64 {
    let half = std::f64::consts::PI / w;
    let mut extremes: Vec<(f64, f64)> = Vec::new();
    let mut start = t[0];
    let mut best: Option<(f64, f64)> = None;
    for (&x, &v) in t.iter().zip(y) {
        if x >= start + half {
            extremes.extend(best.take());
            start += half * ((x - start) / half).floor();
        }
        let dev = (v - c).abs();
        if best.is_none_or(|(_, m)| dev > m) {
            best = Some((x, dev));
        }
    }
    extremes.extend(best);
    let top = extremes.iter().map(|e| e.1).fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = extremes
        .into_iter()
        .filter(|&(_, m)| m > 0.02 * top && m > 0.0)
        .map(|(x, m)| (x, m.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx > 0.0 {
        (-sxy / sxx).max(0.0)
    } else {
        0.0
    }
}

fn levenberg_marquardt(prob: &Problem, start: Params, band: Band, opts: &FitOptions) -> Option<(Params, bool, usize)> {
    let n = prob.t.len();
    let mut p = start;
    let mut cost = prob.cost(&p);
    let mut r = vec![0.0; n];
    let mut mu = 1e-3;
    for iter in 1..=opts.max_iterations {
        let jac = prob.jacobian(&p)?;
        prob.residuals(&p, &mut r);
        let rv = DVector::from_column_slice(&r);
        let jt = jac.transpose();
        let h: Matrix5<f64> = (&jt * &jac).fixed_view::<NP, NP>(0, 0).into_owned();
        let g: Vector5<f64> = (&jt * rv).fixed_rows::<NP>(0).into_owned();
        let mut accepted = None;
        while mu < 1e16 {
            let mut a = h;
            for j in 0..NP {
                a[(j, j)] += mu * h[(j, j)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-g)) else {
                mu *= 10.0;
                continue;
            };
            let mut q = p;
            for j in 0..NP {
                q[j] += step[j];
            }
            project(&mut q, band);
            let c = prob.cost(&q);
            if c < cost {
                accepted = Some((q, c));
                mu = (mu / 3.0).max(1e-15);
                break;
            }
            mu *= 4.0;
        }
        let Some((q, c)) = accepted else {
            // no descent direction left: numerically at the minimum
            return Some((p, true, iter));
        };
        let drop = cost - c;
        let moved = q.iter().zip(&p).map(|(a, b)| (a - b).abs() / (b.abs() + 1e-9)).fold(0.0, f64::max);
        p = q;
        cost = c;
        if drop <= opts.tolerance * cost || moved < 1e-12 || cost < 1e-30 {
            return Some((p, true, iter));
        }
    }
    Some((p, false, opts.max_iterations))
}

fn nelder_mead(prob: &Problem, start: Params, band: Band, opts: &FitOptions) -> (Params, bool, usize) {
    let f = |p: &Params| {
        let mut q = *p;
        project(&mut q, band);
        prob.cost(&q)
    };
    let mut simplex: Vec<(Params, f64)> = (0..=NP)
        .map(|k| {
            let mut p = start;
            if k > 0 {
                p[k - 1] += 0.05 * (p[k - 1].abs() + 0.1);
            }
            (p, f(&p))
        })
        .collect();
    let max_iter = opts.max_iterations * 50;
    for iter in 1..=max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[NP].1);
        if (worst - best).abs() <= opts.tolerance * best.abs() + 1e-300 {
            let mut p = simplex[0].0;
            project(&mut p, band);
            return (p, true, iter);
        }
        let mut centroid = [0.0; NP];
        for (p, _) in &simplex[..NP] {
            for j in 0..NP {
                centroid[j] += p[j] / NP as f64;
            }
        }
        let along = |s: f64| -> Params {
            let mut q = [0.0; NP];
            for j in 0..NP {
                q[j] = centroid[j] + s * (simplex[NP].0[j] - centroid[j]);
            }
            q
        };
        let refl = along(-1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = along(-2.0);
            let fe = f(&exp);
            simplex[NP] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[NP - 1].1 {
            simplex[NP] = (refl, fr);
        } else {
            let con = along(0.5);
            let fc = f(&con);
            if fc < worst {
                simplex[NP] = (con, fc);
            } else {
                let b = simplex[0].0;
                for (p, v) in simplex.iter_mut().skip(1) {
                    for j in 0..NP {
                        p[j] = b[j] + 0.5 * (p[j] - b[j]);
                    }
                    *v = f(p);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut p = simplex[0].0;
    project(&mut p, band);
    (p, false, max_iter)
}

fn weights(samples: &[CurveSample]) -> Vec<f64> {
    let floor = samples
        .iter()
        .filter_map(|s| s.sigma)
        .filter(|&s| s > 0.0 && s.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return vec![1.0; samples.len()];
    }
    let raw: Vec<f64> = samples
        .iter()
        .map(|s| {
            let sd = s.sigma.filter(|&v| v > 0.0 && v.is_finite()).unwrap_or(floor);
            1.0 / (sd * sd)
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.into_iter().map(|w| (w / mean).sqrt()).collect()
}

fn wrap_phase(phi: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = (phi + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Weighted least-squares fit of a damped cosine to an excitation curve.
///
/// A fit that runs out of iterations is returned with `converged = false`.
pub fn fit_nutation(samples: &[CurveSample], opts: &FitOptions) -> Result<NutationFit> {
    if samples.len() < 8 {
        return Err(Error::OscillationUnresolved(format!(
            "{} samples; at least 8 are needed",
            samples.len()
        )));
    }
    if samples.iter().any(|s| !(s.tau.is_finite() && s.p1.is_finite())) {
        return Err(Error::InvalidParams("curve samples must be finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    let span = sorted[sorted.len() - 1].tau - sorted[0].tau;
    if !(span > 0.0) {
        return Err(Error::OscillationUnresolved("samples share one time".into()));
    }
    let prob = Problem {
        t: sorted.iter().map(|s| s.tau / span).collect(),
        y: sorted.iter().map(|s| s.p1).collect(),
        sw: weights(&sorted),
    };

    let n = prob.t.len();
    let tail = &prob.y[n - (n / 4).max(2)..];
    let c0 = (tail.iter().sum::<f64>() / tail.len() as f64).clamp(0.0, 1.0);
    let peaks = spectral_peaks(&prob.t, &prob.y, 5);
    if peaks.is_empty() {
        return Err(Error::OscillationUnresolved("sampling too coarse".into()));
    }
    // one local search per spectral peak
    let mut best: Option<(Params, bool, usize, f64)> = None;
    let mut unresolved: Option<f64> = None;
    for &(w, _) in &peaks {
        let l0 = envelope_rate(&prob.t, &prob.y, c0, w);
        let start = [0.0, 0.25 * l0, l0, 4.0 * l0]
            .into_iter()
            .filter_map(|l| prob.linear_solve(w, l))
            .map(|p| (prob.cost(&p), p))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let Some((_, p0)) = start else { continue };
        // Ω stays within a factor 2 of the spectral estimate
        let band = [0.5 * w, 2.0 * w];
        let (mut p, converged, iterations) = levenberg_marquardt(&prob, p0, band, opts)
            .unwrap_or_else(|| nelder_mead(&prob, p0, band, opts));
        if p[0] < 0.0 {
            p[0] = -p[0];
            p[4] = -p[4];
        }
        if p[3] < 0.0 {
            p[3] = -p[3];
            p[4] += std::f64::consts::PI;
        }
        if !(p[0] >= std::f64::consts::TAU) {
            unresolved = Some(p[0]);
            continue;
        }
        if p[0] <= band[0] * (1.0 + 1e-9) || p[0] >= band[1] * (1.0 - 1e-9) {
            continue;
        }
        let cost = prob.cost(&p);
        if best.is_none_or(|b| cost < b.3) {
            best = Some((p, converged, iterations, cost));
        }
    }
    let Some((p, converged, iterations, _)) = best else {
        let detail = match unresolved {
            Some(w) => format!(
                "fitted period {:.3e} s exceeds the sampled span {:.3e} s",
                std::f64::consts::TAU / w * span,
                span
            ),
            None => "no usable initial guess".to_string(),
        };
        return Err(Error::OscillationUnresolved(detail));
    };
    let omega = p[0] / span;
    let lambda = p[1] / span;
    let fit = NutationFit {
        omega,
        lambda,
        p_inf: p[2],
        amplitude: p[3],
        phase: wrap_phase(p[4]),
        residual_rms: 0.0,
        converged,
        iterations,
        low_confidence: lambda > omega,
    };
    let ss: f64 = sorted.iter().map(|s| (fit.eval(s.tau) - s.p1).powi(2)).sum();
    Ok(NutationFit {
        residual_rms: (ss / n as f64).sqrt(),
        ..fit
    })
}
