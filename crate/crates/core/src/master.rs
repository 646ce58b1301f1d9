//! Invariant-based Lindblad dynamics of the driven damped oscillator.
//!
//! In the interaction picture the dissipator acts at the Bohr frequency
//! `ω̃ = ω₀/b²` with strength `|D₁|²/4` relative to the static oscillator,
//! where `a = ½(D₁ a_I + D₂* a_I†)` maps the invariant ladder operators onto
//! the particle ones. The Gaussian state is then fully described by
//! `⟨ã†ã⟩` and `⟨ã²⟩`, which obey
//!
//! ```text
//! d⟨ã†ã⟩/dt = (π/2)|D₁|² J(ω̃) (n(ω̃) − ⟨ã†ã⟩)
//! d⟨ã²⟩/dt   = −(π/2)|D₁|² J(ω̃) ⟨ã²⟩
//! ```
//!
//! The Lamb shift is computed for diagnostics only. It is diagonal in the
//! invariant number basis and does not enter the moment equations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::ermakov::{FrequencyProfile, Scaling, ScalingPoint};
use crate::error::{Error, Result};
use crate::model::{planck_occupation, spectral_density, BathSpec, ModelParams};
use crate::ode::{Dopri5, Tolerances};
use crate::quad;

/// Default number of uniform output samples of a moment trajectory,
/// endpoints included.
pub const DEFAULT_SAMPLES: usize = 2000;

/// Default safety factor for the timescale checks.
pub const DEFAULT_THRESHOLD: f64 = 10.0;

pub fn bohr_frequency(point: &ScalingPoint, omega0: f64) -> f64 {
    omega0 / (point.b * point.b)
}

/// `D₁,₂ = b ± 1/b ± iḃ/ω₀`.
pub fn d_coefficients(b: f64, bdot: f64, omega0: f64) -> (Complex64, Complex64) {
    let d1 = Complex64::new(b + 1.0 / b, bdot / omega0);
    let d2 = Complex64::new(b - 1.0 / b, -bdot / omega0);
    (d1, d2)
}

/// Time derivatives of `D₁` and `D₂`.
pub fn d_coefficient_rates(p: &ScalingPoint, omega0: f64) -> (Complex64, Complex64) {
    let db = p.bdot / (p.b * p.b);
    let d1 = Complex64::new(p.bdot - db, p.bddot / omega0);
    let d2 = Complex64::new(p.bdot + db, -p.bddot / omega0);
    (d1, d2)
}

/// `φ(t) = ∫₀ᵗ ω₀/b² dτ`.
pub fn dynamical_phase<S: Scaling + ?Sized>(b: &S, t: f64) -> f64 {
    dynamical_phase_between(b, 0.0, t)
}

pub fn dynamical_phase_between<S: Scaling + ?Sized>(b: &S, t0: f64, t1: f64) -> f64 {
    let w0 = b.omega0();
    quad::integrate(|s| bohr_frequency(&b.point(s), w0), t0, t1, 1e-12).0
}

/// Emission and absorption rates `(γ₊, γ₋)` at the Bohr frequency.
pub fn decay_rates(omega_tilde: f64, bath: &BathSpec, temperature: f64) -> Result<(f64, f64)> {
    let j = spectral_density(omega_tilde, bath)?;
    let n = planck_occupation(omega_tilde, temperature)?;
    let gamma_plus = PI * j * (1.0 + n);
    let gamma_minus = if temperature > 0.0 {
        gamma_plus * (-omega_tilde / temperature).exp()
    } else {
        0.0
    };
    Ok((gamma_plus, gamma_minus))
}

/// Principal-value integrals entering the Lamb shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambShift {
    /// `P∫₀^Λ J(ω)/(ω̃ − ω) dω`.
    pub resonant: f64,
    /// `∫₀^Λ J(ω)/(ω̃ + ω) dω`.
    pub counter: f64,
}

impl LambShift {
    /// Coefficient of `a_I†a_I` in the interaction-picture Lamb-shift Hamiltonian.
    pub fn hamiltonian_coefficient(&self, d1: Complex64, d2: Complex64) -> f64 {
        0.25 * (d1.norm_sqr() * self.resonant - d2.norm_sqr() * self.counter)
    }
}

pub fn lamb_shift(omega_tilde: f64, bath: &BathSpec) -> Result<LambShift> {
    let (w, cut, g) = (omega_tilde, bath.cutoff, bath.gamma);
    if !(w > 0.0) {
        return Err(Error::Domain(format!(
            "Lamb shift needs a positive Bohr frequency, got {w}"
        )));
    }
    if w == cut {
        return Err(Error::Domain(
            "Bohr frequency coincides with the bath cutoff (pole on the boundary)".into(),
        ));
    }
    Ok(LambShift {
        resonant: g * (-cut - w * ((w - cut).abs() / w).ln()),
        counter: g * (cut - w * ((w + cut) / w).ln()),
    })
}

/// Every time-local coefficient of the master equation at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSnapshot {
    pub time: f64,
    pub bohr_frequency: f64,
    pub d1: Complex64,
    pub d2: Complex64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub lamb_shift: Option<LambShift>,
}

pub fn rate_snapshot<S: Scaling + ?Sized>(
    b: &S,
    t: f64,
    bath: &BathSpec,
    temperature: f64,
    with_lamb_shift: bool,
) -> Result<RateSnapshot> {
    let p = b.point(t);
    if !(p.b > 0.0) {
        return Err(Error::NonPositiveScaling { time: t, value: p.b });
    }
    let w0 = b.omega0();
    let wt = bohr_frequency(&p, w0);
    let (d1, d2) = d_coefficients(p.b, p.bdot, w0);
    let (gamma_plus, gamma_minus) = decay_rates(wt, bath, temperature)?;
    let lamb_shift = if with_lamb_shift {
        Some(lamb_shift(wt, bath)?)
    } else {
        None
    };
    Ok(RateSnapshot {
        time: t,
        bohr_frequency: wt,
        d1,
        d2,
        gamma_plus,
        gamma_minus,
        lamb_shift,
    })
}

/// `(π/2)|D₁|² J(ω̃)`: relaxation rate of `⟨ã†ã⟩`.
pub fn relaxation_rate(p: &ScalingPoint, omega0: f64, bath: &BathSpec) -> f64 {
    let wt = bohr_frequency(p, omega0);
    let (d1, _) = d_coefficients(p.b, p.bdot, omega0);
    0.5 * PI * d1.norm_sqr() * spectral_density(wt, bath).unwrap_or(0.0)
}

/// Gaussian moments `(⟨ã†ã⟩, ⟨ã²⟩)` in the interaction picture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub time: f64,
    pub n_occ: f64,
    pub squeeze_moment: Complex64,
}

impl MomentState {
    pub fn thermal(n_occ: f64) -> Self {
        Self {
            time: 0.0,
            n_occ,
            squeeze_moment: Complex64::new(0.0, 0.0),
        }
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        self.n_occ >= -tol
            && self.squeeze_moment.norm() <= (self.n_occ * (self.n_occ + 1.0)).max(0.0).sqrt() + tol
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MomentOptions {
    pub tol: Tolerances,
    pub samples: usize,
    /// Record Lamb-shift diagnostics alongside the samples.
    pub lamb_shift: bool,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::new(1e-9, 1e-13),
            samples: DEFAULT_SAMPLES,
            lamb_shift: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    pub samples: Vec<MomentState>,
    pub final_state: MomentState,
    /// Per-sample Lamb-shift diagnostics when requested.
    pub lamb_shifts: Option<Vec<f64>>,
    pub evaluations: usize,
}

impl MomentTrajectory {
    pub fn max_squeeze(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.squeeze_moment.norm())
            .fold(0.0, f64::max)
    }
}

/// Integrate the moment equations over `[0, b.duration()]`.
pub fn propagate_moments<S: Scaling + ?Sized>(
    b: &S,
    bath: &BathSpec,
    params: &ModelParams,
    initial: MomentState,
    opts: &MomentOptions,
) -> Result<MomentTrajectory> {
    if !initial.is_physical(1e-12) {
        return Err(Error::Unphysical(format!(
            "initial moments n = {}, |<a^2>| = {}",
            initial.n_occ,
            initial.squeeze_moment.norm()
        )));
    }
    let w0 = b.omega0();
    let temp = params.temperature;
    let tf = b.duration();
    let mut failure: Option<Error> = None;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let p = b.point(t);
        if !(p.b > 0.0) {
            failure.get_or_insert(Error::NonPositiveScaling { time: t, value: p.b });
            dy.fill(0.0);
            return;
        }
        let k = relaxation_rate(&p, w0, bath);
        let target = planck_occupation(bohr_frequency(&p, w0), temp).unwrap_or(0.0);
        dy[0] = k * (target - y[0]);
        dy[1] = -k * y[1];
        dy[2] = -k * y[2];
    };
    let y0 = [
        initial.n_occ,
        initial.squeeze_moment.re,
        initial.squeeze_moment.im,
    ];
    let sol = Dopri5::new(opts.tol).solve(rhs, 0.0, &y0, tf, |_, _| Ok(()))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let n = opts.samples.max(2);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n - 1 {
        let t = tf * k as f64 / (n - 1) as f64;
        let y = sol.eval(t);
        samples.push(MomentState {
            time: t,
            n_occ: y[0],
            squeeze_moment: Complex64::new(y[1], y[2]),
        });
    }
    let y = sol.final_state();
    let final_state = MomentState {
        time: tf,
        n_occ: y[0],
        squeeze_moment: Complex64::new(y[1], y[2]),
    };
    samples.push(final_state);
    let lamb_shifts = if opts.lamb_shift {
        let mut v = Vec::with_capacity(samples.len());
        for s in &samples {
            let p = b.point(s.time);
            let (d1, d2) = d_coefficients(p.b, p.bdot, w0);
            v.push(lamb_shift(bohr_frequency(&p, w0), bath)?.hamiltonian_coefficient(d1, d2));
        }
        Some(v)
    } else {
        None
    };
    Ok(MomentTrajectory {
        samples,
        final_state,
        lamb_shifts,
        evaluations: sol.evaluations,
    })
}

/// Status of one approximation check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
}

impl CheckStatus {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Warn
        }
    }
}

/// Born-Markov and secular validity diagnostics of a protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimescaleReport {
    pub threshold: f64,
    /// `τ_B = 1/Λ`.
    pub tau_bath: f64,
    pub max_omega: f64,
    /// `min_t 1/ω(t)`.
    pub min_period: f64,
    /// `τ_B · max ω`, must stay below `1/threshold`.
    pub markov_ratio: f64,
    pub markov: CheckStatus,
    /// Driving timescale `min_t |D₁| / max_i |Ḋ_i|`.
    pub tau_drive: f64,
    /// `τ_B / τ_D`, must stay below `1/threshold`.
    pub drive_ratio: f64,
    pub drive: CheckStatus,
    /// `min_{t > t₀} φ(t) / (ω̃(t) τ_B)`, must stay above `threshold`.
    pub secular_margin: f64,
    pub secular: CheckStatus,
    pub expulsive_trap: bool,
}

impl TimescaleReport {
    pub fn all_pass(&self) -> bool {
        self.warnings().is_empty()
    }

    pub fn warnings(&self) -> Vec<&'static str> {
        let mut w = Vec::new();
        if self.markov == CheckStatus::Warn {
            w.push("markov: bath correlation time not short against the trap period");
        }
        if self.drive == CheckStatus::Warn {
            w.push("drive: scaling function varies on the bath correlation time");
        }
        if self.secular == CheckStatus::Warn {
            w.push("secular: accumulated phase too small to drop non-secular terms");
        }
        if self.expulsive_trap {
            w.push("profile: trap becomes expulsive (omega^2 < 0)");
        }
        w
    }
}

/// Evaluate the validity conditions on `samples` uniform points.
///
/// The secular margin is taken over `t > 2π/ω₀`, since `φ(0) = 0` makes it
/// vanish trivially at the start.
pub fn validate_timescales<S: Scaling + ?Sized>(
    b: &S,
    profile: &FrequencyProfile,
    bath: &BathSpec,
    threshold: f64,
    samples: usize,
) -> TimescaleReport {
    let w0 = b.omega0();
    let tf = b.duration();
    let tau_b = 1.0 / bath.cutoff;
    let n = samples.max(2);
    let times: Vec<f64> = (0..n).map(|k| tf * k as f64 / (n - 1) as f64).collect();

    let mut max_omega: f64 = 0.0;
    let mut min_omega_sq = f64::INFINITY;
    let mut tau_d = f64::INFINITY;
    for &t in &times {
        let w2 = profile.omega_sq(t);
        min_omega_sq = min_omega_sq.min(w2);
        max_omega = max_omega.max(w2.abs().sqrt());
        let p = b.point(t);
        let (d1, _) = d_coefficients(p.b, p.bdot, w0);
        let (r1, r2) = d_coefficient_rates(&p, w0);
        let rate = r1.norm().max(r2.norm());
        if rate > 0.0 {
            tau_d = tau_d.min(d1.norm() / rate);
        }
    }

    let t0 = 2.0 * PI / w0;
    let mut phase = 0.0;
    let mut secular = f64::INFINITY;
    for w in times.windows(2) {
        phase += dynamical_phase_between(b, w[0], w[1]);
        let t = w[1];
        if t > t0 || (tf <= t0 && t == tf) {
            let wt = bohr_frequency(&b.point(t), w0);
            secular = secular.min(phase / (wt * tau_b));
        }
    }

    let markov_ratio = tau_b * max_omega;
    let drive_ratio = tau_b / tau_d;
    TimescaleReport {
        threshold,
        tau_bath: tau_b,
        max_omega,
        min_period: 1.0 / max_omega,
        markov_ratio,
        markov: CheckStatus::from_ok(markov_ratio <= 1.0 / threshold),
        tau_drive: tau_d,
        drive_ratio,
        drive: CheckStatus::from_ok(drive_ratio <= 1.0 / threshold),
        secular_margin: secular,
        secular: CheckStatus::from_ok(secular >= threshold),
        expulsive_trap: min_omega_sq < 0.0,
    }
}
