use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use ste_core::ermakov::{
    forward_ermakov, reverse_frequency, ErmakovSolution, FrequencyProfile, Scaling, ScalingFunction,
};
use ste_core::gaussian::{
    gaussian_fidelity, master_covariance, purity, target_covariance, thermal_covariance,
    ExactBenchmark, SystemCovariance,
};
use ste_core::master::{
    bohr_frequency, decay_rates, propagate_moments, validate_timescales, MomentOptions, MomentState,
    TimescaleReport,
};
use ste_core::observables::{observe, ObservableTrace};
use ste_core::ode::Tolerances;
use ste_core::shortcut::{design_ste, quench_protocol, ramp_protocol, STEResult};

use crate::config::{Method, ProtocolKind, ProtocolSpec, RunConfig};

pub const PROTOCOL_FORMAT: &str = "ste-protocol-v1";

pub enum ScalingSource {
    Polynomial(ScalingFunction),
    Numeric(ErmakovSolution),
}

impl ScalingSource {
    pub fn as_scaling(&self) -> &dyn Scaling {
        match self {
            ScalingSource::Polynomial(b) => b,
            ScalingSource::Numeric(b) => b,
        }
    }
}

pub struct Protocol {
    pub kind: ProtocolKind,
    pub duration: f64,
    pub profile: FrequencyProfile,
    pub scaling: ScalingSource,
    pub design: Option<STEResult>,
}

/// Protocol file as written by `design`. Only the scaling function is read back.
#[derive(Deserialize)]
struct ProtocolFileIn {
    format: String,
    design: DesignIn,
}

#[derive(Deserialize)]
struct DesignIn {
    scaling: ScalingFunction,
}

fn tolerances(cfg: &RunConfig) -> Tolerances {
    Tolerances::new(cfg.integrator.rtol, cfg.integrator.atol)
}

pub fn design(cfg: &RunConfig, tf: f64) -> Result<STEResult> {
    design_ste(&cfg.model, &cfg.bath, tf).with_context(|| format!("designing protocol for t_f = {tf}"))
}

fn from_profile(cfg: &RunConfig, kind: ProtocolKind, duration: f64, profile: FrequencyProfile) -> Result<Protocol> {
    let b = forward_ermakov(&profile, cfg.model.omega0, 1.0, 0.0, tolerances(cfg))
        .with_context(|| format!("integrating the Ermakov equation for the {} protocol", kind.name()))?;
    Ok(Protocol {
        kind,
        duration,
        profile,
        scaling: ScalingSource::Numeric(b),
        design: None,
    })
}

pub fn build_protocol(cfg: &RunConfig, spec: &ProtocolSpec) -> Result<Protocol> {
    let tf = spec.duration;
    match spec.kind {
        ProtocolKind::Ste => {
            let r = design(cfg, tf)?;
            Ok(Protocol {
                kind: ProtocolKind::Ste,
                duration: tf,
                profile: r.profile.clone(),
                scaling: ScalingSource::Polynomial(r.scaling.clone()),
                design: Some(r),
            })
        }
        ProtocolKind::Quench => from_profile(cfg, spec.kind, tf, quench_protocol(&cfg.model, tf)),
        ProtocolKind::Ramp => from_profile(cfg, spec.kind, tf, ramp_protocol(&cfg.model, tf)?),
        ProtocolKind::Static => {
            let omega = spec.omega.unwrap_or(cfg.model.omega0);
            from_profile(cfg, spec.kind, tf, FrequencyProfile::Static { omega, duration: tf })
        }
    }
}

pub fn load_protocol(path: &Path) -> Result<Protocol> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading protocol {}", path.display()))?;
    let file: ProtocolFileIn =
        serde_json::from_str(&text).with_context(|| format!("parsing protocol {}", path.display()))?;
    if file.format != PROTOCOL_FORMAT {
        bail!("unsupported protocol format {:?}", file.format);
    }
    let b = file.design.scaling;
    let rev = reverse_frequency(&b).context("protocol scaling function")?;
    Ok(Protocol {
        kind: ProtocolKind::Ste,
        duration: b.duration,
        profile: rev.profile,
        scaling: ScalingSource::Polynomial(b),
        design: None,
    })
}

pub fn timescales(cfg: &RunConfig, p: &Protocol) -> TimescaleReport {
    validate_timescales(
        p.scaling.as_scaling(),
        &p.profile,
        &cfg.bath,
        cfg.integrator.threshold,
        ste_core::master::DEFAULT_SAMPLES,
    )
}

fn initial_gibbs(cfg: &RunConfig) -> SystemCovariance {
    let w0 = cfg.model.omega0;
    thermal_covariance(cfg.model.initial_occupation(), w0, w0)
}

pub struct MasterRun {
    pub rows: Vec<[f64; 10]>,
    pub observables: ObservableTrace,
    pub final_occupation: f64,
    pub fidelity: f64,
    pub fidelity_to_initial: f64,
}

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "t", "omega", "b", "bdot", "omega_tilde", "n_occ", "re_a2", "im_a2", "gamma_plus", "gamma_minus",
];

pub const EXACT_COLUMNS: [&str; 6] = ["t", "sxx", "sxp", "spp", "fidelity_to_target", "purity"];

pub fn run_master(cfg: &RunConfig, p: &Protocol, samples: usize, with_observables: bool) -> Result<MasterRun> {
    let b = p.scaling.as_scaling();
    let opts = MomentOptions {
        tol: tolerances(cfg),
        samples,
        lamb_shift: cfg.integrator.lamb_shift,
    };
    let tr = propagate_moments(
        b,
        &cfg.bath,
        &cfg.model,
        MomentState::thermal(cfg.model.initial_occupation()),
        &opts,
    )
    .context("master-equation propagation")?;
    let w0 = b.omega0();
    let mut rows = Vec::with_capacity(tr.samples.len());
    for s in &tr.samples {
        let pt = b.point(s.time);
        let wt = bohr_frequency(&pt, w0);
        let (gp, gm) = decay_rates(wt, &cfg.bath, cfg.model.temperature).unwrap_or((f64::NAN, f64::NAN));
        rows.push([
            s.time,
            p.profile.omega(s.time),
            pt.b,
            pt.bdot,
            wt,
            s.n_occ,
            s.squeeze_moment.re,
            s.squeeze_moment.im,
            gp,
            gm,
        ]);
    }
    let fin = tr.final_state;
    let sigma = master_covariance(b, fin.time, fin.n_occ, fin.squeeze_moment);
    let fidelity = gaussian_fidelity(&sigma, &target_covariance(&cfg.model)?)?;
    let fidelity_to_initial = gaussian_fidelity(&sigma, &initial_gibbs(cfg))?;
    let observables = if with_observables {
        observe(b, &p.profile, &tr).context("observables")?
    } else {
        ObservableTrace::default()
    };
    Ok(MasterRun {
        rows,
        observables,
        final_occupation: fin.n_occ,
        fidelity,
        fidelity_to_initial,
    })
}

#[derive(Serialize)]
pub struct ExactSummary {
    pub fidelity: f64,
    pub fidelity_half_step: f64,
    pub fidelity_to_initial: f64,
    pub covariance: [[f64; 2]; 2],
    pub dt: f64,
}

pub struct ExactRunOut {
    pub rows: Vec<[f64; 6]>,
    pub summary: ExactSummary,
}

pub fn run_exact(cfg: &RunConfig, p: &Protocol, samples: usize) -> Result<ExactRunOut> {
    let bench = ExactBenchmark::new(&cfg.model, &cfg.bath)?.with_dt(cfg.integrator.dt);
    let target = target_covariance(&cfg.model)?;
    let tf = p.duration;
    let mut rows = Vec::with_capacity(samples);
    for k in 0..samples {
        let t = tf * k as f64 / (samples - 1).max(1) as f64;
        let s = bench
            .covariance_at(&p.profile, t)
            .with_context(|| format!("exact benchmark at t = {t}"))?;
        rows.push([t, s[(0, 0)], s[(0, 1)], s[(1, 1)], gaussian_fidelity(&s, &target)?, purity(&s)]);
    }
    let run = bench.converged_run(&p.profile, tf).context("exact benchmark")?;
    let sigma = SystemCovariance::new(
        run.covariance[0][0],
        run.covariance[0][1],
        run.covariance[1][0],
        run.covariance[1][1],
    );
    Ok(ExactRunOut {
        rows,
        summary: ExactSummary {
            fidelity: run.fidelity,
            fidelity_half_step: run.fidelity_half_step,
            fidelity_to_initial: gaussian_fidelity(&sigma, &initial_gibbs(cfg))?,
            covariance: run.covariance,
            dt: run.dt,
        },
    })
}

/// Final fidelity to the target for every requested method.
pub fn sweep_point(cfg: &RunConfig, kind: ProtocolKind, tf: f64, method: Method) -> Result<(f64, f64)> {
    let spec = ProtocolSpec {
        kind,
        duration: tf,
        omega: None,
    };
    let p = build_protocol(cfg, &spec)?;
    let master = if method.master() {
        run_master(cfg, &p, 2, false)?.fidelity
    } else {
        f64::NAN
    };
    let exact = if method.exact() {
        let bench = ExactBenchmark::new(&cfg.model, &cfg.bath)?.with_dt(cfg.integrator.dt);
        bench.fidelity_at(&p.profile, tf)?
    } else {
        f64::NAN
    };
    Ok((master, exact))
}

pub fn header(cfg: &RunConfig, extra: serde_json::Value) -> String {
    let mut h = json!({ "config": cfg });
    if let (Some(m), Some(e)) = (h.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            m.insert(k.clone(), v.clone());
        }
    }
    format!("# {}", h)
}

pub fn write_csv<const N: usize>(
    path: &Path,
    header_line: &str,
    columns: &[&str],
    rows: &[[f64; N]],
) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(f, "{header_line}")?;
    writeln!(f, "{}", columns.join(","))?;
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
