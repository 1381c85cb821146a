//! Run configuration: a TOML file, environment overrides, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hsmm_core::{SamplerConfig, ScenarioSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything a subcommand may read. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub chains: usize,
    pub out: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub simulate: SimulateConfig,
    pub coverage: ScenarioSpec,
    pub summarize: SummarizeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            chains: 1,
            out: PathBuf::from("hsmm-out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            sampler: SamplerConfig::default(),
            simulate: SimulateConfig::default(),
            coverage: ScenarioSpec::default(),
            summarize: SummarizeConfig::default(),
        }
    }
}

/// Input series and its preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub input: Option<PathBuf>,
    /// Required when `hourly` is set.
    pub timestamp_column: Option<String>,
    /// chrono format string; common ISO layouts are tried when absent.
    pub timestamp_format: Option<String>,
    pub response_column: String,
    pub covariate_columns: Vec<String>,
    /// Aggregate to clock hours: maximum response, mean covariates.
    pub hourly: bool,
    /// Take `log10` of the response.
    pub log10: bool,
    /// Center and scale the response and covariates.
    pub standardize: bool,
    /// Keep records at or after this time.
    pub start: Option<String>,
    /// Keep records strictly before this time.
    pub end: Option<String>,
    /// Covariates of the first segment; the first row when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            input: None,
            timestamp_column: Some("timestamp".into()),
            timestamp_format: None,
            response_column: "value".into(),
            covariate_columns: Vec::new(),
            hourly: true,
            log10: true,
            standardize: true,
            start: None,
            end: None,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_states: usize,
    /// Candidate state counts for `select-states`.
    pub candidates: Vec<usize>,
    /// Largest shrink factor accepted as converged.
    pub psrf_threshold: f64,
    /// Credible level of the summary intervals.
    pub level: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_states: 3,
            candidates: vec![2, 3, 4],
            psrf_threshold: 1.2,
            level: 0.95,
        }
    }
}

/// True model for `simulate`. Summary and link come from `[sampler]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Uniform over the other states when absent.
    pub transitions: Option<Vec<Vec<f64>>>,
    /// Uniform when absent.
    pub initial: Option<Vec<f64>>,
    /// Per state: intercept, then one slope per covariate.
    pub coefficients: Vec<Vec<f64>>,
    pub psi: f64,
    pub n: usize,
    pub covariate_autocorrelation: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            means: vec![-3.0, 0.0, 3.0],
            variances: vec![1.0; 3],
            transitions: None,
            initial: None,
            coefficients: vec![vec![30f64.ln()]; 3],
            psi: 0.0,
            n: 2500,
            covariate_autocorrelation: 0.9,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    /// Directory holding `draws.csv` and `state_draws.csv`; `out` when absent.
    pub run_dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file and environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub out: Option<PathBuf>,
    pub rate: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    /// Reads `path`, or starts from defaults when there is none.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("in {}", p.display()))
            }
            None => Ok(Self::default()),
        }
    }

    /// Applies `HSMM_SEED`, `HSMM_OUT` and `HSMM_INPUT` as returned by `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(s) = lookup("HSMM_SEED") {
            self.seed = s
                .trim()
                .parse()
                .with_context(|| format!("HSMM_SEED must be an unsigned integer, got {s:?}"))?;
        }
        if let Some(o) = lookup("HSMM_OUT") {
            self.out = PathBuf::from(o);
        }
        if let Some(i) = lookup("HSMM_INPUT") {
            self.data.input = Some(PathBuf::from(i));
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(c) = o.chains {
            self.chains = c;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(r) = o.rate {
            self.sampler.subsample_rate = r;
            self.coverage.rates = vec![r];
        }
        self.coverage.seed = self.seed;
    }

    /// Checks shared by every subcommand.
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            bail!("chains: must be at least 1");
        }
        if self.model.num_states < 2 {
            bail!("model.num_states: must be at least 2, got {}", self.model.num_states);
        }
        if !(self.model.level > 0.0 && self.model.level < 1.0) {
            bail!("model.level: must lie in (0, 1), got {}", self.model.level);
        }
        if !(self.model.psrf_threshold >= 1.0) {
            bail!("model.psrf_threshold: must be at least 1, got {}", self.model.psrf_threshold);
        }
        if self.data.hourly && self.data.timestamp_column.is_none() {
            bail!("data.timestamp_column: required when data.hourly is set");
        }
        self.sampler.validate().map_err(anyhow::Error::from)
    }

    /// Canonical TOML rendering of the effective configuration.
    pub fn canonical(&self) -> Result<String> {
        toml::to_string(self).context("cannot serialize configuration")
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Creates `dir` and checks that a file can be written there.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("out: cannot create {}", dir.display()))?;
    let probe = dir.join(".hsmm-write-check");
    fs::write(&probe, b"").with_context(|| format!("out: {} is not writable", dir.display()))?;
    fs::remove_file(&probe).ok();
    Ok(())
}
