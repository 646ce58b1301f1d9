//! Effective temperature and coherence along a protocol.

use serde::Serialize;
use std::io::Write;

use crate::ermakov::{FrequencyProfile, Scaling};
use crate::error::{Error, Result};
use crate::fock::{bogoliubov_coefficients, bogoliubov_thermal_populations, converge_in_dim};
use crate::master::MomentTrajectory;

/// Value reported for `ε` when the occupation is zero.
pub const EPSILON_CAP: f64 = 50.0;

pub const COHERENCE_TOL: f64 = 1e-8;
const MAX_DIM: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Epsilon {
    pub value: f64,
    /// Set when `n ≤ 0` and `value` is [`EPSILON_CAP`].
    pub capped: bool,
}

/// `ε = ln(1 + 1/n)`.
pub fn epsilon_from_occupation(n: f64) -> Epsilon {
    if n > 0.0 {
        let v = (1.0 / n).ln_1p();
        if v < EPSILON_CAP {
            return Epsilon { value: v, capped: false };
        }
    }
    Epsilon {
        value: EPSILON_CAP,
        capped: true,
    }
}

/// `T_eff = ω/ε`.
pub fn effective_temperature(omega: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("effective temperature needs epsilon > 0, got {epsilon}")));
    }
    Ok(omega / epsilon)
}

/// `ε n̄ + ln Z` for the state `e^{−ε c†c}/Z`.
pub fn thermal_entropy(epsilon: f64) -> f64 {
    let q = (-epsilon).exp();
    if q == 0.0 {
        return 0.0;
    }
    let n = q / (1.0 - q);
    epsilon * n - (-q).ln_1p()
}

fn shannon(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// `S(ρ_diag) − S(ρ)` in nats at fixed truncation `dim`.
pub fn coherence(b: f64, bdot: f64, omega_inst: f64, omega0: f64, epsilon: f64, dim: usize) -> Result<f64> {
    let pair = bogoliubov_coefficients(b, bdot, omega_inst, omega0)?;
    let q = (-epsilon).exp();
    let n = if q == 0.0 { 0.0 } else { q / (1.0 - q) };
    let pops = bogoliubov_thermal_populations(&pair, n, dim)?;
    Ok(shannon(&pops) - thermal_entropy(epsilon))
}

/// [`coherence`] with the truncation doubled until it changes by less than
/// [`COHERENCE_TOL`].
pub fn coherence_converged(b: f64, bdot: f64, omega_inst: f64, omega0: f64, epsilon: f64) -> Result<f64> {
    let pair = bogoliubov_coefficients(b, bdot, omega_inst, omega0)?;
    if pair.nu.norm() < 1e-12 {
        return Ok(0.0);
    }
    let q = (-epsilon).exp();
    let n = if q == 0.0 { 0.0 } else { q / (1.0 - q) };
    let mean = (pair.mu.norm_sqr() + pair.nu.norm_sqr()) * n + pair.nu.norm_sqr();
    let start = ((16.0 * (mean + 1.0)) as usize).next_power_of_two().max(32);
    converge_in_dim(
        |d| coherence(b, bdot, omega_inst, omega0, epsilon, d),
        start,
        MAX_DIM,
        COHERENCE_TOL,
    )
    .map(|r| r.0)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ObservableTrace {
    pub times: Vec<f64>,
    pub omega: Vec<f64>,
    pub occupation: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub t_eff: Vec<f64>,
    pub coherence: Vec<f64>,
    /// Indices where `ε` hit [`EPSILON_CAP`].
    pub capped: Vec<usize>,
}

impl ObservableTrace {
    pub fn max_coherence(&self) -> f64 {
        self.coherence.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_t_eff(&self) -> f64 {
        self.t_eff.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub const CSV_COLUMNS: [&'static str; 6] = ["t", "omega", "n_occ", "epsilon", "t_eff", "coherence"];

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_COLUMNS.join(","))?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                self.times[i], self.omega[i], self.occupation[i], self.epsilon[i], self.t_eff[i], self.coherence[i]
            )?;
        }
        Ok(())
    }
}

/// Observables at every sample of a moment trajectory.
///
/// The trajectory must start from a state with no squeezing in the invariant
/// basis, so it stays thermal in that basis.
pub fn observe<S: Scaling + ?Sized>(
    b: &S,
    profile: &FrequencyProfile,
    trajectory: &MomentTrajectory,
) -> Result<ObservableTrace> {
    if trajectory.max_squeeze() > 1e-9 {
        return Err(Error::Domain(
            "observables assume a state thermal in the invariant basis".into(),
        ));
    }
    let w0 = b.omega0();
    let mut out = ObservableTrace::default();
    for (i, s) in trajectory.samples.iter().enumerate() {
        let t = s.time;
        let p = b.point(t);
        let w = profile.omega(t);
        let eps = epsilon_from_occupation(s.n_occ);
        if eps.capped {
            out.capped.push(i);
        }
        out.times.push(t);
        out.omega.push(w);
        out.occupation.push(s.n_occ);
        out.epsilon.push(eps.value);
        out.t_eff.push(effective_temperature(w, eps.value)?);
        out.coherence.push(coherence_converged(p.b, p.bdot, w, w0, eps.value)?);
    }
    Ok(out)
}
