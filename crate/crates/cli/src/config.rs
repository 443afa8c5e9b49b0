use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reachcert::certify::CertifyParams;
use reachcert::container::sha256_hex;
use reachcert::env::{Layout, PuckParams, ReachAvoidSpec};
use reachcert::grid::{Grid, GridSpec};
use reachcert::policy::LearnConfig;
use reachcert::synthesize::SynthesisConfig;

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StepperKind {
    True,
    Bnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StartKind {
    /// The layout's start position at rest.
    Layout,
    /// Uniformly random safe states.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_trajectories: usize,
    pub stepper: StepperKind,
    pub start: StartKind,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { n_trajectories: 500, stepper: StepperKind::True, start: StartKind::Layout }
    }
}

/// One JSON document configuring every command. Command-line flags override
/// its keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Builtin layout name or path to a layout JSON file.
    pub environment: String,
    pub horizon: usize,
    pub sigma: f64,
    pub puck: PuckParams,
    pub grid: GridSpec,
    pub certify: CertifyParams,
    pub synthesis: SynthesisConfig,
    pub learn: LearnConfig,
    pub simulate: SimulateConfig,
    pub posterior: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub output: PathBuf,
    /// Seeds every random stream of a run; required.
    pub seed: Option<u64>,
    pub heatmap_scale: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            environment: "v1".into(),
            horizon: 10,
            sigma: 0.01,
            puck: PuckParams::default(),
            grid: GridSpec::default(),
            certify: CertifyParams::default(),
            synthesis: SynthesisConfig::default(),
            learn: LearnConfig::default(),
            simulate: SimulateConfig::default(),
            posterior: None,
            policy: None,
            data: None,
            output: PathBuf::from("out"),
            seed: None,
            heatmap_scale: 8,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::user(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::user(format!("invalid config {}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::user(format!("unsupported config version {}", cfg.version)));
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> CliResult<u64> {
        self.seed.ok_or_else(|| CliError::user("a seed is required: set \"seed\" in the config or pass --seed"))
    }

    /// Copies the run seed into every component configuration.
    pub fn propagate_seed(&mut self) -> CliResult<()> {
        let seed = self.seed()?;
        self.certify.seed = seed;
        self.learn.seed = seed;
        Ok(())
    }

    pub fn layout(&self) -> CliResult<Layout> {
        let path = Path::new(&self.environment);
        if path.extension().is_some_and(|e| e == "json") || path.exists() {
            if !path.exists() {
                return Err(CliError::user(format!("layout file {} does not exist", path.display())));
            }
            return Ok(Layout::load(path)?);
        }
        Ok(Layout::builtin(&self.environment)?)
    }

    pub fn spec(&self) -> CliResult<ReachAvoidSpec> {
        let spec = self.layout()?.spec(self.horizon, self.sigma, self.certify.eta)?;
        if spec.position_dim() != self.puck.dims {
            return Err(CliError::user("layout and puck dimensions differ"));
        }
        Ok(spec)
    }

    pub fn grid(&self, spec: &ReachAvoidSpec) -> CliResult<Grid> {
        Ok(self.grid.build(spec, self.puck.state_dim())?)
    }

    /// Hash of everything that determines the artifacts: the config without
    /// its output directory.
    pub fn digest(&self) -> CliResult<String> {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let json = serde_json::to_vec(&c).map_err(|e| CliError::internal(e.to_string()))?;
        Ok(sha256_hex(&json))
    }
}

pub fn require_file(path: Option<&PathBuf>, what: &str) -> CliResult<PathBuf> {
    let path = path.ok_or_else(|| CliError::user(format!("no {what} file given")))?;
    if !path.is_file() {
        return Err(CliError::user(format!("{what} file {} does not exist", path.display())));
    }
    Ok(path.clone())
}
