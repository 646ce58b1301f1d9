//! Physical parameters, the Ohmic bath and its discretization.
//!
//! Everything is expressed in natural units: `hbar = m = k_B = 1` and
//! frequencies in units of the initial trap frequency.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Fraction of the bath recurrence time `2π/Δω` a simulation may cover.
pub const RECURRENCE_FRACTION: f64 = 0.8;

fn unit() -> f64 {
    1.0
}

/// Endpoint frequencies and bath temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub omega0: f64,
    pub omegaf: f64,
    pub temperature: f64,
    #[serde(default = "unit")]
    pub hbar: f64,
    #[serde(default = "unit")]
    pub mass: f64,
    #[serde(default = "unit", rename = "kB")]
    pub kb: f64,
}

impl ModelParams {
    pub fn new(omega0: f64, omegaf: f64, temperature: f64) -> Result<Self> {
        let p = Self {
            omega0,
            omegaf,
            temperature,
            hbar: 1.0,
            mass: 1.0,
            kb: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Compression `ω₀ → 3ω₀` at `T = ħω₀/k_B`.
    pub fn compression() -> Self {
        Self::new(1.0, 3.0, 1.0).expect("valid constants")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega0", self.omega0),
            ("omegaf", self.omegaf),
            ("temperature", self.temperature),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("hbar", self.hbar), ("mass", self.mass), ("kB", self.kb)] {
            if v != 1.0 {
                return Err(Error::Config(format!(
                    "{name} is fixed to 1 in natural units, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Equilibrium occupation at the initial frequency.
    pub fn initial_occupation(&self) -> f64 {
        planck_occupation(self.omega0, self.temperature).expect("validated params")
    }
}

/// Ohmic bath `J(ω) = γ ω Θ(Λ - ω)` discretized into `n_modes` oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub gamma: f64,
    pub cutoff: f64,
    pub n_modes: usize,
}

impl BathSpec {
    pub fn new(gamma: f64, cutoff: f64, n_modes: usize) -> Self {
        Self {
            gamma,
            cutoff,
            n_modes,
        }
    }

    /// `γ = 1/500`, `Λ = 100 ω₀`, 600 modes.
    pub fn reference() -> Self {
        Self::new(0.002, 100.0, 600)
    }

    pub fn validate(&self, omega0: f64) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "bath gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.cutoff.is_finite() && self.cutoff > omega0) {
            return Err(Error::Config(format!(
                "bath cutoff {} must exceed omega0 = {omega0}",
                self.cutoff
            )));
        }
        if self.n_modes == 0 {
            return Err(Error::Config("bath needs at least one mode".into()));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.cutoff / self.n_modes as f64
    }

    /// Time `2π/Δω` after which the discretized bath re-coheres.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.spacing()
    }

    /// Reject simulations longer than [`RECURRENCE_FRACTION`] of the
    /// recurrence time.
    pub fn check_duration(&self, duration: f64) -> Result<()> {
        let limit = RECURRENCE_FRACTION * self.recurrence_time();
        if duration > limit {
            return Err(Error::Recurrence {
                duration,
                limit,
                n_modes: self.n_modes,
                cutoff: self.cutoff,
            });
        }
        Ok(())
    }

    /// `∫₀^Λ J(ω) dω = γΛ²/2`.
    pub fn total_weight(&self) -> f64 {
        0.5 * self.gamma * self.cutoff * self.cutoff
    }
}

/// Discrete bath frequencies `ω_n` and couplings `g_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathModes {
    pub frequencies: Vec<f64>,
    pub couplings: Vec<f64>,
}

impl BathModes {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// `Σ g_n²`.
    pub fn total_weight(&self) -> f64 {
        self.couplings.iter().map(|g| g * g).sum()
    }

    /// A bath with every coupling switched off.
    pub fn decoupled(&self) -> Self {
        Self {
            frequencies: self.frequencies.clone(),
            couplings: vec![0.0; self.couplings.len()],
        }
    }
}

pub fn spectral_density(omega: f64, bath: &BathSpec) -> Result<f64> {
    if omega < 0.0 || omega.is_nan() {
        return Err(Error::Domain(format!(
            "spectral density needs omega >= 0, got {omega}"
        )));
    }
    Ok(if omega < bath.cutoff {
        bath.gamma * omega
    } else {
        0.0
    })
}

/// Bose-Einstein occupation `1/(e^{ω/T} - 1)`.
pub fn planck_occupation(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!(
            "Planck occupation diverges for omega <= 0, got {omega}"
        )));
    }
    if !(temperature >= 0.0) {
        return Err(Error::Domain(format!(
            "temperature must be non-negative, got {temperature}"
        )));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (omega / temperature).exp_m1())
}

/// Midpoint discretization: `ω_n = (n - ½)Δω`, `g_n = √(J(ω_n)Δω)`.
pub fn discretize_bath(bath: &BathSpec) -> BathModes {
    let dw = bath.spacing();
    let frequencies: Vec<f64> = (0..bath.n_modes).map(|n| (n as f64 + 0.5) * dw).collect();
    let couplings = frequencies
        .iter()
        .map(|&w| (spectral_density(w, bath).expect("positive grid") * dw).sqrt())
        .collect();
    BathModes {
        frequencies,
        couplings,
    }
}
