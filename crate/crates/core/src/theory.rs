//! Muzzle-velocity prediction for a light gas gun.
//!
//! The gas expands polytropically from the chamber into the barrel, so the
//! work done on the fragment over a barrel of length `l0` is
//! `φE = ∫₀^l0 Q0·V^γ·s·(V + s·l)^−γ dl`, and the muzzle velocity follows
//! from `E = ½·M·v0²`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion_fit::velocity_at_displacement;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("invalid gas-gun config: {0}")]
    InvalidConfig(String),
    #[error("reference velocity must be > 0, got {0}")]
    InvalidReference(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasGunConfig {
    /// Barrel length, m.
    #[serde(rename = "l0_m")]
    pub l0: f64,
    /// Initial chamber pressure, Pa.
    #[serde(rename = "Q0_pa")]
    pub q0: f64,
    /// Chamber volume, m³.
    #[serde(rename = "V_m3")]
    pub volume: f64,
    /// Secondary work coefficient.
    pub phi: f64,
    /// Polytropic index of the driving gas.
    pub gamma: f64,
    /// Bore cross-section, m².
    #[serde(rename = "s_m2")]
    pub bore_area: f64,
    /// Fragment mass, kg.
    #[serde(rename = "M_kg")]
    pub mass: f64,
}

impl GasGunConfig {
    pub fn validate(&self) -> Result<(), TheoryError> {
        for (name, v) in [
            ("l0_m", self.l0),
            ("Q0_pa", self.q0),
            ("V_m3", self.volume),
            ("phi", self.phi),
            ("gamma", self.gamma),
            ("s_m2", self.bore_area),
            ("M_kg", self.mass),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TheoryError::InvalidConfig(format!("`{name}` must be finite and > 0, got {v}")));
            }
        }
        if self.phi < 1.0 {
            return Err(TheoryError::InvalidConfig(format!("`phi` must be ≥ 1, got {}", self.phi)));
        }
        Ok(())
    }

    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self, TheoryError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| TheoryError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    /// Chamber pressure once the fragment has travelled `l` metres.
    fn pressure_at(&self, l: f64) -> f64 {
        self.q0 * (self.volume / (self.volume + self.bore_area * l)).powf(self.gamma)
    }
}

/// Work delivered to the fragment at the muzzle, J.
pub fn muzzle_energy(cfg: &GasGunConfig) -> Result<f64, TheoryError> {
    cfg.validate()?;
    let x = (cfg.bore_area * cfg.l0 / cfg.volume).ln_1p();
    let one_minus = 1.0 - cfg.gamma;
    let e = if one_minus == 0.0 {
        cfg.q0 * cfg.volume * x / cfg.phi
    } else {
        // V^γ[(V+s·l0)^(1−γ) − V^(1−γ)] = V·(exp((1−γ)·ln(1+s·l0/V)) − 1)
        cfg.q0 * cfg.volume * (one_minus * x).exp_m1() / (cfg.phi * one_minus)
    };
    Ok(e)
}

/// Work integral by adaptive Simpson quadrature, the independent check on
/// [`muzzle_energy`].
pub fn muzzle_energy_quadrature(cfg: &GasGunConfig, tol: f64) -> Result<f64, TheoryError> {
    cfg.validate()?;
    let f = |l: f64| cfg.pressure_at(l) * cfg.bore_area;
    Ok(adaptive_simpson(&f, 0.0, cfg.l0, tol) / cfg.phi)
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `v0 = sqrt(2E/M)`.
pub fn predict_muzzle_velocity(cfg: &GasGunConfig) -> Result<f64, TheoryError> {
    Ok((2.0 * muzzle_energy(cfg)? / cfg.mass).sqrt())
}

/// Velocity against displacement for plotting.
pub fn theory_decay_curve(v0: f64, k: f64, grid: &[f64]) -> Vec<(f64, f64)> {
    grid.iter().map(|&d| (d, velocity_at_displacement(v0, k, d))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    /// `ours − reference`, m/s.
    pub absolute: f64,
    /// `|ours − reference| / reference`, percent.
    pub relative_pct: f64,
}

pub fn compare_measurements(ours: f64, reference: f64) -> Result<Deviation, TheoryError> {
    if !(reference > 0.0) {
        return Err(TheoryError::InvalidReference(reference));
    }
    let absolute = ours - reference;
    Ok(Deviation {
        absolute,
        relative_pct: absolute.abs() / reference * 100.0,
    })
}

/// Table-style comparison of a measured velocity against named references.
pub fn comparison_table(measured: f64, references: &[(&str, f64)]) -> Result<String, TheoryError> {
    let mut out = String::new();
    let _ = writeln!(out, "{:<28}{:>12}{:>14}{:>12}", "method", "v0 (m/s)", "abs (m/s)", "rel (%)");
    let _ = writeln!(out, "{:<28}{:>12.1}{:>14}{:>12}", "ours", measured, "-", "-");
    for (name, v) in references {
        let d = compare_measurements(measured, *v)?;
        let _ = writeln!(out, "{:<28}{:>12.1}{:>+14.1}{:>12.2}", name, v, d.absolute, d.relative_pct);
    }
    Ok(out)
}
