//! Velocity-decay laws and the displacement-over-time fit.
//!
//! A fragment under quadratic drag decays as `v(t) = v0 / (1 + k·v0·t)`,
//! travels `D(t) = ln(1 + k·v0·t)/k + C`, and equivalently slows with
//! distance as `v(D) = v0·exp(−k·D)` (with `C = 0`). The fit recovers
//! `(v0, k, C)` from pooled `(t, arc)` observations with Levenberg-Marquardt,
//! re-basing time so that the earliest observation is `t = 0`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

use crate::association::ObservationPoint;
use crate::ingest::format_real;

/// Below this decay coefficient the displacement law uses its linear limit.
pub const LINEAR_LIMIT_K: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 200;
pub const CONVERGENCE_TOL: f64 = 1e-10;
pub const V0_MAX: f64 = 1e4;
pub const K_MAX: f64 = 10.0;
const V0_MIN: f64 = 1e-9;
const INITIAL_LAMBDA: f64 = 1e-3;
const MAX_GUESS_PAIRS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("outside model domain: 1 + k·v0·t = {0} is not positive")]
    DomainError(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fit did not converge after {} iterations", .0.iterations)]
    NonConvergence(Box<DecayFit>),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Physical description of a fragment in air.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragmentPhysical {
    pub mass_kg: f64,
    pub air_density: f64,
    pub frontal_area_m2: f64,
    pub drag_coefficient: f64,
}

impl FragmentPhysical {
    pub fn new(mass_kg: f64, air_density: f64, frontal_area_m2: f64, drag_coefficient: f64) -> Result<Self, FitError> {
        for (name, v) in [
            ("mass", mass_kg),
            ("air density", air_density),
            ("frontal area", frontal_area_m2),
            ("drag coefficient", drag_coefficient),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FitError::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(Self {
            mass_kg,
            air_density,
            frontal_area_m2,
            drag_coefficient,
        })
    }
}

/// `k = c_x·ρ·s / (2M)` in 1/m.
pub fn decay_coefficient(phys: &FragmentPhysical) -> f64 {
    phys.drag_coefficient * phys.air_density * phys.frontal_area_m2 / (2.0 * phys.mass_kg)
}

fn growth(v0: f64, k: f64, t: f64) -> Result<f64, FitError> {
    let u = 1.0 + k * v0 * t;
    if u > 0.0 {
        Ok(u)
    } else {
        Err(FitError::DomainError(u))
    }
}

/// Velocity after `t` seconds.
pub fn velocity_at_time(v0: f64, k: f64, t: f64) -> Result<f64, FitError> {
    Ok(v0 / growth(v0, k, t)?)
}

/// Displacement after `t` seconds.
pub fn displacement_at_time(v0: f64, k: f64, c: f64, t: f64) -> Result<f64, FitError> {
    growth(v0, k, t)?;
    if k.abs() < LINEAR_LIMIT_K {
        return Ok(v0 * t + c);
    }
    Ok((k * v0 * t).ln_1p() / k + c)
}

/// Velocity after travelling `d` metres.
pub fn velocity_at_displacement(v0: f64, k: f64, d: f64) -> f64 {
    v0 * (-k * d).exp()
}

/// Partial derivatives of `D` with respect to `(v0, k, C)`.
fn displacement_gradient(v0: f64, k: f64, t: f64) -> Vector3<f64> {
    let x = k * v0 * t;
    let u = 1.0 + x;
    let d_v0 = t / u;
    // (x/(1+x) − ln(1+x)) / k², expanded near x = 0 to avoid cancellation.
    let d_k = if x.abs() < 1e-3 {
        let s = -0.5 + x * (2.0 / 3.0 + x * (-0.75 + x * (0.8 + x * (-5.0 / 6.0))));
        v0 * v0 * t * t * s
    } else {
        (x / u - x.ln_1p()) / (k * k)
    };
    Vector3::new(d_v0, d_k, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    /// Velocity at the earliest observation, m/s.
    pub v0: f64,
    /// Decay coefficient, 1/m.
    pub k: f64,
    /// Displacement offset, m.
    pub c: f64,
    pub covariance: Matrix3<f64>,
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_points: usize,
    /// Timestamp (µs) taken as `t = 0`.
    pub t0_us: i64,
}

impl DecayFit {
    pub fn displacement_at_us(&self, t_us: i64) -> Result<f64, FitError> {
        displacement_at_time(self.v0, self.k, self.c, (t_us - self.t0_us) as f64 * 1e-6)
    }

    pub fn require_converged(self) -> Result<Self, FitError> {
        if self.converged {
            Ok(self)
        } else {
            Err(FitError::NonConvergence(Box::new(self)))
        }
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "v0_mps={}", format_real(self.v0));
        let _ = writeln!(s, "k_per_m={}", format_real(self.k));
        let _ = writeln!(s, "C_m={}", format_real(self.c));
        let _ = writeln!(s, "rms_m={}", format_real(self.rms));
        let _ = writeln!(s, "n_points={}", self.n_points);
        let _ = writeln!(s, "converged={}", self.converged);
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "t0_us={}", self.t0_us);
        s
    }

    /// Parses the key-value report written by [`DecayFit::report`]. The
    /// covariance is not stored and comes back as zeros.
    pub fn parse_report(text: &str) -> Result<Self, FitError> {
        let mut kv = std::collections::BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FitError::InvalidParameter(format!("bad report line `{line}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: std::str::FromStr>(kv: &std::collections::BTreeMap<String, String>, key: &str) -> Result<T, FitError> {
            kv.get(key)
                .ok_or_else(|| FitError::InvalidParameter(format!("report is missing `{key}`")))?
                .parse()
                .map_err(|_| FitError::InvalidParameter(format!("report field `{key}` is malformed")))
        }
        Ok(Self {
            v0: get(&kv, "v0_mps")?,
            k: get(&kv, "k_per_m")?,
            c: get(&kv, "C_m")?,
            covariance: Matrix3::zeros(),
            rms: get(&kv, "rms_m")?,
            iterations: get(&kv, "iterations")?,
            converged: get(&kv, "converged")?,
            n_points: get(&kv, "n_points")?,
            t0_us: get(&kv, "t0_us")?,
        })
    }

    /// `t_us,arc_m,fit_m` rows for the observations, in time order.
    pub fn curve_csv(&self, obs: &[ObservationPoint]) -> String {
        let mut sorted: Vec<&ObservationPoint> = obs.iter().collect();
        sorted.sort_by_key(|o| o.t);
        let mut out = String::from("t_us,arc_m,fit_m\n");
        for o in sorted {
            let fit = self.displacement_at_us(o.t).unwrap_or(f64::NAN);
            let _ = writeln!(out, "{},{},{}", o.t, format_real(o.arc), format_real(fit));
        }
        out
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median of half-span pairwise slopes of time-sorted `(t, arc)` samples.
fn robust_slope(samples: &[(f64, f64)]) -> Option<f64> {
    let n = samples.len();
    let half = n / 2;
    if half == 0 {
        return None;
    }
    let pairs = n - half;
    let stride = pairs.div_ceil(MAX_GUESS_PAIRS).max(1);
    let slopes: Vec<f64> = (0..pairs)
        .step_by(stride)
        .filter_map(|i| {
            let (ti, ai) = samples[i];
            let (tj, aj) = samples[i + half];
            (tj != ti).then(|| (aj - ai) / (tj - ti))
        })
        .collect();
    median(slopes)
}

fn project_bounds(p: Vector3<f64>) -> Vector3<f64> {
    Vector3::new(p[0].clamp(V0_MIN, V0_MAX), p[1].clamp(0.0, K_MAX), p[2])
}

fn residuals(samples: &[(f64, f64)], p: &Vector3<f64>) -> Option<DVector<f64>> {
    let mut r = DVector::zeros(samples.len());
    for (i, &(t, arc)) in samples.iter().enumerate() {
        r[i] = arc - displacement_at_time(p[0], p[1], p[2], t).ok()?;
    }
    Some(r)
}

fn jacobian(samples: &[(f64, f64)], p: &Vector3<f64>) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(samples.len(), 3);
    for (i, &(t, _)) in samples.iter().enumerate() {
        let g = displacement_gradient(p[0], p[1], t);
        j[(i, 0)] = g[0];
        j[(i, 1)] = g[1];
        j[(i, 2)] = g[2];
    }
    j
}

fn relative_step(old: &Vector3<f64>, new: &Vector3<f64>) -> f64 {
    let floors = [1e-3, 1e-9, 1e-9];
    (0..3)
        .map(|i| (new[i] - old[i]).abs() / old[i].abs().max(floors[i]))
        .fold(0.0, f64::max)
}

/// Fits `(v0, k, C)` to `(t seconds, arc metres)` samples.
pub fn fit_decay_samples(samples: &[(f64, f64)]) -> Result<DecayFit, FitError> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut distinct = sorted.iter().map(|s| s.0).collect::<Vec<_>>();
    distinct.dedup();
    if sorted.len() < 3 || distinct.len() < 3 {
        return Err(FitError::InsufficientData(format!(
            "{} points with {} distinct timestamps, need 3 of each",
            sorted.len(),
            distinct.len()
        )));
    }
    let t0 = sorted[0].0;
    for s in &mut sorted {
        s.0 -= t0;
    }

    let slope = robust_slope(&sorted)
        .filter(|v| *v > 0.0 && v.is_finite())
        .unwrap_or(1.0);
    let mut p = project_bounds(Vector3::new(slope, 1e-3, sorted[0].1));
    let mut r = residuals(&sorted, &p).ok_or_else(|| {
        FitError::InsufficientData("initial guess outside model domain".into())
    })?;
    let mut cost = r.norm_squared();
    let scale = sorted.iter().map(|s| s.1 * s.1).sum::<f64>().max(1e-300);
    let mut lambda = INITIAL_LAMBDA;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let j = jacobian(&sorted, &p);
        let col_norms = Vector3::from_fn(|c, _| j.column(c).norm().max(1e-300));
        let mut js = j.clone();
        for c in 0..3 {
            js.column_mut(c).scale_mut(1.0 / col_norms[c]);
        }
        let svd = js.svd(true, true);
        let u = svd.u.as_ref().expect("thin U");
        let vt = svd.v_t.as_ref().expect("V^T");
        let utr = u.transpose() * &r;

        let mut accepted = false;
        while lambda < 1e16 {
            let mut z = Vector3::zeros();
            for i in 0..svd.singular_values.len() {
                let s = svd.singular_values[i];
                z[i] = s / (s * s + lambda) * utr[i];
            }
            let scaled = vt.transpose() * z;
            let delta = Vector3::from_fn(|c, _| scaled[c] / col_norms[c]);
            let candidate = project_bounds(p + delta);
            let step = relative_step(&p, &candidate);
            let trial = residuals(&sorted, &candidate);
            let trial_cost = trial.as_ref().map(|t| t.norm_squared()).unwrap_or(f64::INFINITY);
            if trial_cost < cost {
                let decrease = (cost - trial_cost) / cost;
                p = candidate;
                r = trial.expect("finite cost");
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if step < CONVERGENCE_TOL && (decrease < CONVERGENCE_TOL || cost <= 1e-30 * scale) {
                    converged = true;
                }
                break;
            }
            if step < CONVERGENCE_TOL {
                // No representable improvement left along the LM path.
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            break;
        }
    }

    let n = sorted.len();
    let dof = n.saturating_sub(3).max(1) as f64;
    let j = jacobian(&sorted, &p);
    let jtj = j.transpose() * &j;
    let covariance = jtj
        .pseudo_inverse(1e-300)
        .map(|inv| inv * (cost / dof))
        .unwrap_or_else(|_| DMatrix::from_element(3, 3, f64::NAN));
    Ok(DecayFit {
        v0: p[0],
        k: p[1],
        c: p[2],
        covariance: Matrix3::from_fn(|a, b| covariance[(a, b)]),
        rms: (cost / n as f64).sqrt(),
        iterations,
        converged,
        n_points: n,
        t0_us: 0,
    })
}

/// Fits the decay law to an observation set, time re-based at the earliest
/// observation.
pub fn fit_decay(obs: &[ObservationPoint]) -> Result<DecayFit, FitError> {
    let t0 = obs
        .iter()
        .map(|o| o.t)
        .min()
        .ok_or_else(|| FitError::InsufficientData("empty observation set".into()))?;
    let samples: Vec<(f64, f64)> = obs.iter().map(|o| ((o.t - t0) as f64 * 1e-6, o.arc)).collect();
    let mut fit = fit_decay_samples(&samples)?;
    fit.t0_us = t0;
    Ok(fit)
}

/// Finite-difference velocities between observations `lag` apart in time
/// order. Pairs with equal timestamps are skipped. Returns `(mid t µs, v)`.
pub fn naive_velocity_baseline(obs: &[ObservationPoint], lag: usize) -> Result<Vec<(f64, f64)>, FitError> {
    if lag == 0 {
        return Err(FitError::InvalidParameter("lag must be ≥ 1".into()));
    }
    let mut sorted: Vec<&ObservationPoint> = obs.iter().collect();
    sorted.sort_by_key(|o| o.t);
    Ok(sorted
        .iter()
        .zip(sorted.iter().skip(lag))
        .filter(|(a, b)| a.t != b.t)
        .map(|(a, b)| {
            let dt = (b.t - a.t) as f64 * 1e-6;
            (0.5 * (a.t + b.t) as f64, (b.arc - a.arc) / dt)
        })
        .collect())
}
