//! Run configuration: one JSON file with per-subcommand blocks.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use phasecert_core::certificate::DefectModel;
use phasecert_core::simulate::{InitLaw, SimConfig, TargetModel};
use phasecert_core::transport::moment_recursion;
use phasecert_core::{
    CertificateInputs, DiscretizationSpec, Envelope, MomentBudget, QuadratureConfig, RadialGeometry, ScheduleSpec,
    ScoreErrorEnvelope, ScoreErrorField, WeakLogParams,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// Raised for anything wrong with the configuration itself; maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub schedule: ScheduleSpec,
    /// Weak-log-concavity parameters; derived from `target` when absent.
    #[serde(default)]
    pub weak: Option<WeakLogParams>,
    #[serde(default)]
    pub target: Option<TargetModel>,
    #[serde(default)]
    pub score: ScoreErrorEnvelope,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub discretization: Option<DiscretizationBlock>,
    #[serde(default)]
    pub budget: Option<BudgetBlock>,
    #[serde(default)]
    pub init_w2: f64,
    #[serde(default)]
    pub init_wphi: Option<f64>,
    /// Candidate switches; every grid-aligned switch when absent.
    #[serde(default)]
    pub switch_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub profile: Option<ProfileBlock>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default)]
    pub sharpness: Option<SharpnessBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Either a uniform grid (`steps`) or an explicit reverse-time `grid`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationBlock {
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    pub defects: DefectModel,
}

/// `m_bar` directly, or `m0` pushed through `recursion` steps `[A_k, B_k]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetBlock {
    pub p: f64,
    #[serde(default)]
    pub m_bar: Option<f64>,
    #[serde(default)]
    pub m0: Option<f64>,
    #[serde(default)]
    pub recursion: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileBlock {
    pub s: Vec<f64>,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_n_r")]
    pub n_r: usize,
}

fn default_r_min() -> f64 {
    1e-3
}
fn default_r_max() -> f64 {
    1e3
}
fn default_n_r() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    /// Falls back to the top-level `target`.
    #[serde(default)]
    pub target: Option<TargetModel>,
    #[serde(default)]
    pub error_field: ScoreErrorField,
    #[serde(default = "default_step")]
    pub step_h: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_coalesce")]
    pub coalesce_eps: f64,
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub init: InitLaw,
    #[serde(default = "default_gap")]
    pub gap: f64,
    /// Switch whose metric is reported; defaults to `T - window[1]`.
    #[serde(default)]
    pub switch_s0: Option<f64>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_step() -> f64 {
    1e-3
}
fn default_paths() -> usize {
    10_000
}
fn default_coalesce() -> f64 {
    1e-6
}
fn default_gap() -> f64 {
    1.0
}
fn default_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessBlock {
    pub p: f64,
    pub radii: Vec<f64>,
    /// Switch whose metric is probed; `R_sw = 0` (identity metric) when absent.
    #[serde(default)]
    pub s0: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub json: Option<PathBuf>,
}

impl RunConfig {
    /// Reads `path`, applies `key.path=value` overrides and validates the result.
    pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = if overrides.is_empty() {
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}:{e}", path.display())))?
        } else {
            let mut value: Value =
                serde_json::from_str(&text).map_err(|e| config_error(format!("{}:{e}", path.display())))?;
            for o in overrides {
                apply_override(&mut value, o)?;
            }
            serde_json::from_value(value)
                .map_err(|e| config_error(format!("{} after --set overrides: {e}", path.display())))?
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.check_version()?;
        Ok(cfg)
    }

    fn check_version(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(config_error(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        Ok(())
    }

    pub fn weak_params(&self) -> Result<WeakLogParams> {
        match (&self.weak, &self.target) {
            (Some(w), _) => Ok(*w),
            (None, Some(t)) => Ok(t.weak_params()?),
            (None, None) => Err(config_error("need a `weak` block or a `target` to derive it from")),
        }
    }

    pub fn geometry(&self) -> Result<RadialGeometry> {
        Ok(RadialGeometry::new(
            self.schedule.clone(),
            self.weak_params()?,
            self.score.clone(),
            self.quadrature,
        )?)
    }

    pub fn discretization(&self) -> Result<DiscretizationSpec> {
        let block = self
            .discretization
            .as_ref()
            .ok_or_else(|| config_error("missing `discretization` block"))?;
        let horizon = self.schedule.horizon();
        let disc = match (block.steps, &block.grid) {
            (Some(n), None) => DiscretizationSpec::uniform(horizon, n, block.defects.clone())?,
            (None, Some(g)) => DiscretizationSpec {
                grid: g.clone(),
                defects: block.defects.clone(),
            },
            _ => return Err(config_error("`discretization` needs exactly one of `steps` and `grid`")),
        };
        disc.validate(horizon)?;
        Ok(disc)
    }

    pub fn budget(&self) -> Result<MomentBudget> {
        let b = self
            .budget
            .as_ref()
            .ok_or_else(|| config_error("missing `budget` block"))?;
        let m_bar = match (b.m_bar, b.m0) {
            (Some(m), None) if b.recursion.is_empty() => m,
            (None, Some(m0)) => {
                let steps: Vec<(f64, f64)> = b.recursion.iter().map(|s| (s[0], s[1])).collect();
                moment_recursion(m0, &steps)?
            }
            _ => {
                return Err(config_error(
                    "`budget` needs `m_bar`, or `m0` with optional `recursion`",
                ))
            }
        };
        Ok(MomentBudget::new(b.p, m_bar)?)
    }

    pub fn certificate_inputs(&self) -> Result<CertificateInputs> {
        let inputs = CertificateInputs {
            geom: self.geometry()?,
            disc: self.discretization()?,
            budget: self.budget()?,
            init_w2: self.init_w2,
            init_wphi: self.init_wphi,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    /// The configured switch grid, or every grid-aligned switch.
    pub fn switch_grid(&self) -> Result<Vec<f64>> {
        match &self.switch_grid {
            Some(g) => Ok(g.clone()),
            None => Ok(self.discretization()?.aligned_switches()),
        }
    }

    pub fn simulate_block(&self) -> Result<&SimulateBlock> {
        self.simulate
            .as_ref()
            .ok_or_else(|| config_error("missing `simulate` block"))
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let b = self.simulate_block()?;
        let target = b
            .target
            .or(self.target)
            .ok_or_else(|| config_error("`simulate` needs a target (in the block or at top level)"))?;
        let cfg = SimConfig {
            target,
            error_field: b.error_field,
            schedule: self.schedule.clone(),
            step_h: b.step_h,
            n_paths: b.n_paths,
            seed: self.seed,
            coalesce_eps: b.coalesce_eps,
            window: b.window.unwrap_or([0.0, self.schedule.horizon()]),
            init: b.init,
        };
        Ok(cfg)
    }

    /// Certified geometry of the simulated target with the configured `eps` envelope.
    pub fn sim_geometry(&self, cfg: &SimConfig) -> Result<RadialGeometry> {
        let eps: Envelope = self.score.eps.clone();
        let mut geom = cfg.certified_geometry(eps)?;
        geom.quad = self.quadrature;
        Ok(geom)
    }
}

/// Sets `a.b.c=value` in a JSON tree; `value` is parsed as JSON, else taken as a string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| config_error(format!("override `{spec}` is not of the form key.path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!(config_error(format!("override path `{path}` has an empty segment")));
    }
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| config_error(format!("`{key}` in `{path}` indexes an array but is not a number")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| config_error(format!("index {idx} in `{path}` is out of range (len {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => bail!(config_error(format!("`{path}` descends into a scalar at `{key}`"))),
        };
    }
    unreachable!("loop returns on the last key")
}

/// Loads a config only to check it, reporting which blocks are present.
pub fn describe(cfg: &RunConfig) -> Vec<(&'static str, bool)> {
    vec![
        ("weak or target", cfg.weak.is_some() || cfg.target.is_some()),
        ("discretization", cfg.discretization.is_some()),
        ("budget", cfg.budget.is_some()),
        ("profile", cfg.profile.is_some()),
        ("simulate", cfg.simulate.is_some()),
        ("sharpness", cfg.sharpness.is_some()),
    ]
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| config_error(format!("{}:{e}", path.display())))
}
