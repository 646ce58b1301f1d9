//! `ste`: design, simulate, sweep and validate shortcut-to-equilibration
//! protocols.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use config::{Method, ProtocolKind, RunConfig};
use run::*;

#[derive(Parser)]
#[command(name = "ste", version, about = "Shortcut-to-equilibration protocols for a damped harmonic oscillator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a protocol and write it as JSON.
    Design {
        #[command(flatten)]
        common: Common,
    },
    /// Run a protocol with the master equation and/or the exact benchmark.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Protocol file from `design`; otherwise the config protocol is used.
        #[arg(long)]
        protocol: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Final fidelity against protocol duration for several protocols.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check the timescale conditions behind the master equation.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        protocol: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    Warnings,
}

fn prepare(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
    let dir = cfg.output_dir.clone();
    Ok((cfg, dir))
}

fn report_timescales(rep: &ste_core::master::TimescaleReport) -> Vec<&'static str> {
    println!(
        "timescales: markov {:.4} ({:?}), drive {:.4} ({:?}), secular margin {:.1} ({:?})",
        rep.markov_ratio, rep.markov, rep.drive_ratio, rep.drive, rep.secular_margin, rep.secular
    );
    let w = rep.warnings();
    for line in &w {
        eprintln!("warning: {line}");
    }
    w
}

fn get_protocol(cfg: &RunConfig, file: Option<&Path>) -> Result<Protocol> {
    match file {
        Some(p) => load_protocol(p),
        None => build_protocol(cfg, &cfg.protocol),
    }
}

fn cmd_design(common: &Common) -> Result<Status> {
    let (mut cfg, dir) = prepare(common)?;
    cfg.protocol.kind = ProtocolKind::Ste;
    cfg.protocol.omega = None;
    let p = build_protocol(&cfg, &cfg.protocol)?;
    let r = p.design.as_ref().expect("designed protocol");
    let max_omega = p.profile.max_omega(ste_core::ermakov::POSITIVITY_SAMPLES);
    let rep = timescales(&cfg, &p);
    println!("t_f = {}", p.duration);
    println!("predicted fidelity = {:.8}", r.predicted_fidelity);
    println!("predicted final occupation = {:.8}", r.predicted_final_occupation);
    println!("a6 = {:.8}", r.a6_opt);
    println!("max omega = {max_omega:.6}");
    let mut warnings = report_timescales(&rep);
    if r.omega_sq_negative_flag {
        warnings.push("profile: trap becomes expulsive (omega^2 < 0)");
    }
    let out = json!({
        "format": PROTOCOL_FORMAT,
        "config": cfg,
        "design": r,
        "max_omega": max_omega,
        "timescales": rep,
    });
    let path = dir.join("protocol.json");
    write_json(&path, &out)?;
    println!("wrote {}", path.display());
    Ok(if warnings.is_empty() { Status::Ok } else { Status::Warnings })
}

fn cmd_simulate(common: &Common, protocol: Option<&Path>, method: Option<Method>) -> Result<Status> {
    let (mut cfg, dir) = prepare(common)?;
    if let Some(m) = method {
        cfg.method = m;
    }
    let p = get_protocol(&cfg, protocol)?;
    if protocol.is_some() {
        cfg.protocol.kind = ProtocolKind::Ste;
        cfg.protocol.duration = p.duration;
        cfg.protocol.omega = None;
    }
    let mut warnings: Vec<String> = Vec::new();
    let mut summary = json!({
        "config": cfg,
        "protocol": p.kind.name(),
        "duration": p.duration,
    });
    if let Some(r) = &p.design {
        summary["design"] = json!(r);
    }
    if cfg.method.master() {
        let m = run_master(&cfg, &p, cfg.integrator.samples, true)?;
        let h = header(&cfg, json!({ "method": "master", "protocol": p.kind.name() }));
        write_csv(&dir.join("trajectory.csv"), &h, &TRAJECTORY_COLUMNS, &m.rows)?;
        let path = dir.join("observables.csv");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(f, "{h}")?;
        m.observables.write_csv(&mut f)?;
        f.flush()?;
        if !m.observables.capped.is_empty() {
            warnings.push(format!("epsilon capped at {} samples", m.observables.capped.len()));
        }
        warnings.extend(timescales(&cfg, &p).warnings().into_iter().map(String::from));
        println!("master: final fidelity {:.8}", m.fidelity);
        summary["master"] = json!({
            "fidelity": m.fidelity,
            "final_occupation": m.final_occupation,
            "fidelity_to_initial": m.fidelity_to_initial,
            "max_coherence": m.observables.max_coherence(),
            "max_t_eff": m.observables.max_t_eff(),
        });
    }
    if cfg.method.exact() {
        let e = run_exact(&cfg, &p, cfg.integrator.exact_samples)?;
        let h = header(&cfg, json!({ "method": "exact", "protocol": p.kind.name() }));
        write_csv(&dir.join("exact.csv"), &h, &EXACT_COLUMNS, &e.rows)?;
        println!(
            "exact: final fidelity {:.8} (dt/2: {:.8})",
            e.summary.fidelity, e.summary.fidelity_half_step
        );
        summary["exact"] = json!(e.summary);
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    summary["warnings"] = json!(warnings);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(if warnings.is_empty() { Status::Ok } else { Status::Warnings })
}

fn cmd_sweep(common: &Common, method: Option<Method>, jobs: Option<usize>) -> Result<Status> {
    let (mut cfg, dir) = prepare(common)?;
    if let Some(m) = method {
        cfg.sweep.method = m;
    }
    let method = cfg.sweep.method;
    if cfg.sweep.durations.is_empty() || cfg.sweep.protocols.is_empty() {
        anyhow::bail!("sweep grid is empty");
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().context("building worker pool")?;
    let points: Vec<(f64, ProtocolKind)> = cfg
        .sweep
        .durations
        .iter()
        .flat_map(|&t| cfg.sweep.protocols.iter().map(move |&k| (t, k)))
        .collect();
    let results: Vec<Result<(f64, f64)>> =
        pool.install(|| points.par_iter().map(|&(t, k)| sweep_point(&cfg, k, t, method)).collect());

    let methods: Vec<(&str, bool)> = vec![("master", method.master()), ("exact", method.exact())];
    let active: Vec<&str> = methods.iter().filter(|m| m.1).map(|m| m.0).collect();
    let mut columns = vec!["t_f".to_string()];
    for k in &cfg.sweep.protocols {
        for m in &active {
            columns.push(if active.len() == 1 {
                k.name().to_string()
            } else {
                format!("{}_{m}", k.name())
            });
        }
    }
    columns.push("error".into());

    let path = dir.join("sweep.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "{}", header(&cfg, json!({ "method": method })))?;
    writeln!(f, "{}", columns.join(","))?;
    let n_proto = cfg.sweep.protocols.len();
    let mut failures = 0;
    for (i, &t) in cfg.sweep.durations.iter().enumerate() {
        let mut cells = vec![t.to_string()];
        let mut errors = Vec::new();
        for (j, k) in cfg.sweep.protocols.iter().enumerate() {
            match &results[i * n_proto + j] {
                Ok((fm, fe)) => {
                    for m in &active {
                        cells.push(if *m == "master" { fm } else { fe }.to_string());
                    }
                }
                Err(e) => {
                    failures += 1;
                    errors.push(format!("{}: {:#}", k.name(), e).replace('"', "'"));
                    for _ in &active {
                        cells.push("NaN".into());
                    }
                }
            }
        }
        cells.push(format!("\"{}\"", errors.join("; ")));
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()?;
    println!("wrote {} ({} points, {failures} failed)", path.display(), points.len());
    Ok(if failures == 0 { Status::Ok } else { Status::Warnings })
}

fn cmd_validate(common: &Common, protocol: Option<&Path>) -> Result<Status> {
    let (cfg, dir) = prepare(common)?;
    let p = get_protocol(&cfg, protocol)?;
    let rep = timescales(&cfg, &p);
    println!("protocol {} with t_f = {}", p.kind.name(), p.duration);
    println!("max omega = {:.6}, tau_B = {}", rep.max_omega, rep.tau_bath);
    let w = report_timescales(&rep);
    write_json(&dir.join("timescales.json"), &json!({ "config": cfg, "report": rep }))?;
    if w.is_empty() {
        println!("all checks pass");
        Ok(Status::Ok)
    } else {
        Ok(Status::Warnings)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design { common } => cmd_design(common),
        Command::Simulate {
            common,
            protocol,
            method,
        } => cmd_simulate(common, protocol.as_deref(), *method),
        Command::Sweep { common, method, jobs } => cmd_sweep(common, *method, *jobs),
        Command::Validate { common, protocol } => cmd_validate(common, protocol.as_deref()),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Warnings) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
