//! Campaign configuration: a TOML file with the target, the beta and length
//! sweeps, proposal settings, reference source and optional expectations.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use intrepid_core::parent::Rtf;
use intrepid_core::proposal::{
    default_angular, AngularKind, AngularProposal, ComponentProposal, RadialKind, RadialProposal,
};
use intrepid_core::targets::{make_oscillator, make_target, OscillatorSpec, TargetModel};
use intrepid_core::{KernelConfig, Point};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "INTREPID_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}:{line}: {message}", line = line.map(|l| l.to_string()).unwrap_or_else(|| "?".into()))]
    Invalid { path: String, line: Option<usize>, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub target: String,
    pub betas: Vec<f64>,
    pub chains: usize,
    pub lengths: Vec<usize>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    /// Lags whose correlation is reported per chain (requires storing states).
    #[serde(default)]
    pub lags: Vec<usize>,
    #[serde(default)]
    pub proposal: ProposalSettings,
    #[serde(default)]
    pub anchor: Option<Vec<f64>>,
    #[serde(default)]
    pub rtf: Option<RtfChoice>,
    #[serde(default)]
    pub oscillator: Option<OscillatorSpec>,
    #[serde(default)]
    pub reference: ReferenceSettings,
    #[serde(default)]
    pub start: StartPolicy,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

fn default_burn_in() -> usize {
    10_000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularChoice {
    TruncatedNormal,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSettings {
    #[serde(default = "default_angular_choice")]
    pub angular: AngularChoice,
    /// Truncated-normal scale for polar angles; the last angle uses twice this.
    #[serde(default = "default_angular_sigma")]
    pub angular_sigma: f64,
    #[serde(default = "default_radial")]
    pub radial: RadialKind,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    /// Per-component CMH scales; a single value applies to every component.
    #[serde(default = "default_component_scales")]
    pub component_scales: Vec<f64>,
}

fn default_angular_choice() -> AngularChoice {
    AngularChoice::TruncatedNormal
}

fn default_angular_sigma() -> f64 {
    PI / 2.0
}

fn default_radial() -> RadialKind {
    RadialKind::UniformSymmetric
}

fn default_gamma0() -> f64 {
    2.0
}

fn default_component_scales() -> Vec<f64> {
    vec![1.0]
}

impl Default for ProposalSettings {
    fn default() -> Self {
        ProposalSettings {
            angular: default_angular_choice(),
            angular_sigma: default_angular_sigma(),
            radial: default_radial(),
            gamma0: default_gamma0(),
            component_scales: default_component_scales(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RtfChoice {
    Identity,
    None,
    MonotoneRadialConditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSettings {
    /// Existing reference file; generated (and written here) when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_reference_n")]
    pub n: usize,
    #[serde(default = "default_reference_seed")]
    pub seed: u64,
}

fn default_reference_n() -> usize {
    1_000_000
}

fn default_reference_seed() -> u64 {
    7
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        ReferenceSettings { path: None, n: default_reference_n(), seed: default_reference_seed() }
    }
}

/// Where chains start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartPolicy {
    /// A uniformly chosen reference sample.
    #[default]
    Reference,
    /// A parent draw with positive target density.
    Parent,
    Fixed { point: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Tvd,
    MeanError,
    CovError,
    AcceptanceTotal,
    AcceptanceIntrepid,
    AcceptanceLocal,
}

/// A bound on a quantile of one metric over the chains of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub metric: Metric,
    pub beta: f64,
    /// Chain length; every length when omitted.
    #[serde(default)]
    pub length: Option<usize>,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub min: Option<f64>,
}

fn default_quantile() -> f64 {
    0.5
}

fn line_of(source: &str, key: &str) -> Option<usize> {
    source.lines().position(|l| {
        let t = l.trim_start();
        t.starts_with(key) && t[key.len()..].trim_start().starts_with('=')
    })
    .map(|i| i + 1)
}

impl CampaignConfig {
    pub fn from_toml_str(source: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: CampaignConfig =
            toml::from_str(source).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })?;
        cfg.validate_with_source(source, path)?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` field of a campaign manifest
    /// when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: shown.clone(), source })?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct ManifestConfig {
                config: CampaignConfig,
            }
            let m: ManifestConfig =
                serde_json::from_str(&source).map_err(|e| ConfigError::Parse { path: shown.clone(), message: e.to_string() })?;
            m.config.validate_with_source("", &shown)?;
            return Ok(m.config);
        }
        Self::from_toml_str(&source, &shown)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with_source("", "<config>")
    }

    fn validate_with_source(&self, source: &str, path: &str) -> Result<(), ConfigError> {
        let fail = |key: &str, message: String| ConfigError::Invalid { path: path.into(), line: line_of(source, key), message };
        if self.chains == 0 {
            return Err(fail("chains", "chains must be at least 1".into()));
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(fail("betas", format!("betas must be a non-empty list in [0, 1], got {:?}", self.betas)));
        }
        if self.lengths.is_empty() || self.lengths.contains(&0) {
            return Err(fail("lengths", format!("lengths must be positive, got {:?}", self.lengths)));
        }
        let target = self.build_target().map_err(|m| fail("target", m))?;
        let d = target.dim();
        self.kernel(0.0, d).map_err(|m| fail("component_scales", m))?;
        if let StartPolicy::Fixed { point } = &self.start {
            if point.len() != d {
                return Err(fail("point", format!("start point has {} coordinates, target has {d}", point.len())));
            }
            if target.log_target_uncounted(point) == f64::NEG_INFINITY {
                return Err(fail("point", format!("start point {point:?} has zero target density")));
            }
        }
        if self.reference.n < 2 && self.reference.path.is_none() {
            return Err(fail("n", "reference size must be at least 2".into()));
        }
        for e in &self.expect {
            if !self.betas.contains(&e.beta) {
                return Err(fail("beta", format!("expectation on beta {} which is not swept", e.beta)));
            }
            if !(0.0..=1.0).contains(&e.quantile) || (e.max.is_none() && e.min.is_none()) {
                return Err(fail("quantile", "expectation needs a quantile in [0, 1] and a min or max".into()));
            }
        }
        Ok(())
    }

    /// The target with any anchor, RTF or oscillator overrides applied.
    pub fn build_target(&self) -> Result<TargetModel, String> {
        let mut target = match (&self.oscillator, self.target.as_str()) {
            (Some(spec), "oscillator") => make_oscillator(spec),
            (Some(_), other) => return Err(format!("[oscillator] given for target '{other}'")),
            (None, name) => make_target(name),
        }
        .map_err(|e| e.to_string())?;
        let mut parent = target.parent().clone();
        if let Some(anchor) = &self.anchor {
            parent = parent.with_anchor(Point::new(anchor.clone())).map_err(|e| e.to_string())?;
        }
        if let Some(choice) = self.rtf {
            let rtf = match choice {
                RtfChoice::Identity => Rtf::Identity,
                RtfChoice::None => Rtf::None,
                RtfChoice::MonotoneRadialConditional => Rtf::MonotoneRadialConditional,
            };
            parent = parent.with_rtf(rtf).map_err(|e| e.to_string())?;
        }
        if self.anchor.is_some() || self.rtf.is_some() {
            target = target.with_parent(parent).map_err(|e| e.to_string())?;
        }
        Ok(target)
    }

    pub fn kernel(&self, beta: f64, dim: usize) -> Result<KernelConfig, String> {
        let p = &self.proposal;
        let angular = match p.angular {
            AngularChoice::Uniform => (0..dim.saturating_sub(1))
                .map(|j| AngularProposal::uniform(j, dim))
                .collect::<Result<Vec<_>, _>>(),
            AngularChoice::TruncatedNormal if p.angular_sigma == default_angular_sigma() => default_angular(dim),
            AngularChoice::TruncatedNormal => (0..dim.saturating_sub(1))
                .map(|j| {
                    let sigma = if j + 2 == dim { 2.0 * p.angular_sigma } else { p.angular_sigma };
                    AngularProposal::new(AngularKind::TruncatedNormal, sigma, j, dim)
                })
                .collect(),
        }
        .map_err(|e| e.to_string())?;
        let radial = RadialProposal::new(p.radial, p.gamma0).map_err(|e| e.to_string())?;
        let scales = match p.component_scales.as_slice() {
            [s] => vec![*s; dim],
            s if s.len() == dim => s.to_vec(),
            s => return Err(format!("{} component scales for dimension {dim}", s.len())),
        };
        let component = ComponentProposal::new(scales).map_err(|e| e.to_string())?;
        KernelConfig::new(beta, angular, radial, component).map_err(|e| e.to_string())
    }

    /// `output_dir`, unless overridden by the environment.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}
