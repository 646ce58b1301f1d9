//! Protocol designer and the two reference protocols.

use serde::Serialize;

use crate::ermakov::{reverse_frequency, solve_boundary_coefficients, FrequencyProfile, ScalingFunction};
use crate::error::{Error, Result};
use crate::master::{propagate_moments, MomentOptions, MomentState};
use crate::model::{planck_occupation, BathSpec, ModelParams};
use crate::optimize::{maximize, BracketSearch, SearchError};

/// Occupation of the Gibbs state at `ω_f`.
pub fn target_occupation(params: &ModelParams) -> f64 {
    planck_occupation(params.omegaf, params.temperature).expect("validated params")
}

/// Fidelity of two thermal states diagonal in the same basis,
/// `[√((n₁+1)(n₂+1)) − √(n₁n₂)]⁻²`.
pub fn thermal_fidelity(n1: f64, n2: f64) -> f64 {
    let d = ((n1 + 1.0) * (n2 + 1.0)).sqrt() - (n1 * n2).sqrt();
    (1.0 / (d * d)).min(1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct STEResult {
    pub scaling: ScalingFunction,
    #[serde(skip)]
    pub profile: FrequencyProfile,
    pub predicted_final_occupation: f64,
    pub predicted_fidelity: f64,
    pub a6_opt: f64,
    pub optimizer_evaluations: usize,
    pub omega_sq_negative_flag: bool,
    pub used_fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct DesignOptions {
    pub search: BracketSearch,
    pub moments: MomentOptions,
    pub keep_trace: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            search: BracketSearch::default(),
            moments: MomentOptions {
                samples: 2,
                ..MomentOptions::default()
            },
            keep_trace: false,
        }
    }
}

/// Final occupation and thermal fidelity predicted by the moment equations.
pub fn predict(params: &ModelParams, bath: &BathSpec, b: &ScalingFunction, opts: &MomentOptions) -> Result<(f64, f64)> {
    b.check_positive()?;
    let tr = propagate_moments(b, bath, params, MomentState::thermal(params.initial_occupation()), opts)?;
    let n = tr.final_state.n_occ;
    Ok((n, thermal_fidelity(n, target_occupation(params))))
}

pub fn design_ste(params: &ModelParams, bath: &BathSpec, tf: f64) -> Result<STEResult> {
    design_ste_with(params, bath, tf, &DesignOptions::default())
}

pub fn design_ste_with(
    params: &ModelParams,
    bath: &BathSpec,
    tf: f64,
    opts: &DesignOptions,
) -> Result<STEResult> {
    params.validate()?;
    bath.validate(params.omega0)?;
    if !(tf > 0.0 && tf.is_finite()) {
        return Err(Error::Config(format!("protocol duration must be positive, got {tf}")));
    }
    let objective = |a6: f64| {
        let b = solve_boundary_coefficients(params, tf, a6).ok()?;
        predict(params, bath, &b, &opts.moments).ok().map(|r| r.1)
    };
    let best = maximize(objective, &opts.search).map_err(|e| match e {
        SearchError::NoBracket { trace } => Error::Design {
            reason: "fidelity is monotone over the scanned a6 range".into(),
            trace,
        },
        SearchError::Infeasible { trace } => Error::Design {
            reason: "no scanned a6 keeps b(t) positive".into(),
            trace,
        },
    })?;
    let scaling = solve_boundary_coefficients(params, tf, best.x)?;
    let (n_final, fidelity) = predict(params, bath, &scaling, &opts.moments)?;
    let rev = reverse_frequency(&scaling)?;
    Ok(STEResult {
        scaling,
        profile: rev.profile,
        predicted_final_occupation: n_final,
        predicted_fidelity: fidelity,
        a6_opt: best.x,
        optimizer_evaluations: best.evaluations,
        omega_sq_negative_flag: rev.negative_omega_sq,
        used_fallback: best.used_fallback,
        trace: opts.keep_trace.then_some(best.trace),
    })
}

/// Sudden switch to `ω_f` at `t = 0⁺`, observed for `duration`.
pub fn quench_protocol(params: &ModelParams, duration: f64) -> FrequencyProfile {
    FrequencyProfile::Quench {
        omega0: params.omega0,
        omegaf: params.omegaf,
        duration,
    }
}

/// Smooth-step ramp `ω₀ + Δω(10s³ − 15s⁴ + 6s⁵)`.
pub fn ramp_protocol(params: &ModelParams, tf: f64) -> Result<FrequencyProfile> {
    if !(tf > 0.0) {
        return Err(Error::Config(format!("ramp duration must be positive, got {tf}")));
    }
    Ok(FrequencyProfile::Ramp {
        omega0: params.omega0,
        omegaf: params.omegaf,
        duration: tf,
    })
}
