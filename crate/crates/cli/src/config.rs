use std::fmt;
use std::path::{Path, PathBuf};

use filterlab::{Ket, Operator};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SUPPORTED_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bayes,
    Sde,
    Cfilter,
    ItoCheck,
    Qfilter,
    Ensemble,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Bayes => "bayes",
            Command::Sde => "sde",
            Command::Cfilter => "cfilter",
            Command::ItoCheck => "ito-check",
            Command::Qfilter => "qfilter",
            Command::Ensemble => "ensemble",
        };
        f.write_str(s)
    }
}

/// Top-level scenario file. `parameters` is kept raw until the command's own
/// schema is applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u64,
    pub command: Command,
    pub parameters: Value,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        if cfg.version != SUPPORTED_VERSION {
            return Err(ConfigError(format!(
                "unsupported version {} (this build reads version {SUPPORTED_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Applies the command-specific schema to `parameters`.
    pub fn params<T: for<'de> Deserialize<'de>>(&self) -> Result<T, ConfigError> {
        serde_json::from_value(self.parameters.clone()).map_err(|e| ConfigError(format!("parameters: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform { lo: f64, hi: f64, n: usize },
    Gaussian { mean: f64, var: f64, n: usize },
    /// Density proportional to `x^{a−1} (1 − x)^{b−1}` on `[0, 1]`.
    Beta { a: f64, b: f64, n: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LikelihoodSpec {
    Coin { sequence: String },
    GaussianNoise { var: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayesParams {
    pub prior: PriorSpec,
    pub likelihood: LikelihoodSpec,
    #[serde(default)]
    pub observation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionModel {
    Wiener,
    /// `dX = −aX dt + sig dW`.
    Linear { a: f64, sig: f64, x0: f64 },
    /// `dX = −gamma X dt + s X dW`.
    Geometric { gamma: f64, s: f64, x0: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeParams {
    pub model: DiffusionModel,
    pub t_end: f64,
    pub dt: f64,
    pub paths: usize,
    /// How many individual paths get their own CSV. Defaults to `min(paths, 10)`.
    pub write_paths: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[default]
    Dmz,
    Kushner,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    #[default]
    Multiplicative,
    Exponential,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Linear signal `dX = −aX dt + sig dW`, observation `dY = cX dt + dZ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfilterParams {
    pub a: f64,
    pub c: f64,
    pub sig: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Gaussian prior; defaults to the stationary law of the signal.
    pub prior_mean: Option<f64>,
    pub prior_var: Option<f64>,
    /// Defaults to 1024 cells over ±8 prior standard deviations.
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub filter: FilterKind,
    #[serde(default)]
    pub update: UpdateKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItoCheckParams {
    /// Scattering blocks; the identity when omitted.
    #[serde(rename = "S")]
    pub s: Option<Vec<Vec<Operator>>>,
    #[serde(rename = "L")]
    pub l: Vec<Operator>,
    #[serde(rename = "H")]
    pub h: Operator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QfilterParams {
    #[serde(rename = "L")]
    pub l: Operator,
    #[serde(rename = "H")]
    pub h: Operator,
    pub psi0: Ket,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub observables: Vec<Operator>,
    /// Ensemble CSV row spacing in steps. Defaults to about 1000 rows.
    pub stride: Option<usize>,
    /// Trajectories written individually. Defaults to `min(M, 5)`.
    pub write_trajectories: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleCheck {
    NormMartingale {
        #[serde(rename = "L")]
        l: Operator,
        #[serde(rename = "H")]
        h: Operator,
        psi0: Ket,
        #[serde(rename = "T")]
        t_end: f64,
        dt: f64,
        #[serde(rename = "M")]
        m: usize,
    },
    Wiener {
        #[serde(rename = "H")]
        h: Operator,
        #[serde(rename = "R")]
        r: Operator,
        #[serde(rename = "X")]
        x: Operator,
        #[serde(rename = "T")]
        t_end: f64,
        dt: f64,
        #[serde(rename = "M")]
        m: usize,
    },
    Poisson {
        #[serde(rename = "S")]
        s: Operator,
        nu: f64,
        #[serde(rename = "X")]
        x: Operator,
        #[serde(rename = "T")]
        t_end: f64,
        #[serde(rename = "M")]
        m: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    pub checks: Vec<EnsembleCheck>,
}
