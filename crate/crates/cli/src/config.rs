use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ste_core::model::{BathSpec, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Master,
    Exact,
    Both,
}

impl Method {
    pub fn master(self) -> bool {
        matches!(self, Method::Master | Method::Both)
    }

    pub fn exact(self) -> bool {
        matches!(self, Method::Exact | Method::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Ste,
    Quench,
    Ramp,
    Static,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Ste => "ste",
            ProtocolKind::Quench => "quench",
            ProtocolKind::Ramp => "ramp",
            ProtocolKind::Static => "static",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub duration: f64,
    /// Trap frequency of a static protocol; defaults to `omega0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::Ste,
            duration: 16.0,
            omega: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Fixed step of the exact benchmark.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Uniform samples of the master-equation trajectory.
    pub samples: usize,
    /// Sample times of the exact benchmark, endpoints included.
    pub exact_samples: usize,
    pub lamb_shift: bool,
    pub threshold: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            rtol: 1e-9,
            atol: 1e-13,
            samples: 401,
            exact_samples: 17,
            lamb_shift: false,
            threshold: ste_core::master::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub durations: Vec<f64>,
    pub protocols: Vec<ProtocolKind>,
    pub method: Method,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            durations: vec![12.0, 14.0, 16.0, 20.0, 25.0, 30.0],
            protocols: vec![ProtocolKind::Ste, ProtocolKind::Quench, ProtocolKind::Ramp],
            method: Method::Exact,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "ModelParams::compression")]
    pub model: ModelParams,
    #[serde(default = "BathSpec::reference")]
    pub bath: BathSpec,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn default_method() -> Method {
    Method::Both
}

fn default_out() -> PathBuf {
    PathBuf::from(".")
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.bath.validate(self.model.omega0)?;
        if !(self.protocol.duration > 0.0 && self.protocol.duration.is_finite()) {
            bail!("protocol duration must be positive, got {}", self.protocol.duration);
        }
        if let Some(w) = self.protocol.omega {
            if self.protocol.kind != ProtocolKind::Static {
                bail!("protocol.omega only applies to static protocols");
            }
            if !(w > 0.0) {
                bail!("static frequency must be positive, got {w}");
            }
        }
        let i = &self.integrator;
        if !(i.dt > 0.0 && i.rtol > 0.0 && i.atol > 0.0 && i.threshold > 0.0) {
            bail!("integrator dt, rtol, atol and threshold must be positive");
        }
        if i.samples < 2 || i.exact_samples < 2 {
            bail!("at least two samples are needed");
        }
        if self.sweep.durations.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            bail!("sweep durations must be positive");
        }
        Ok(())
    }
}
