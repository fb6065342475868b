//! Run configuration: a TOML file plus flag and environment overrides.
//!
//! Every output embeds the SHA-256 hash of the loaded config inputs (run
//! config, CPT file, soft-label dataset and weights file when present) along
//! with the seed and crate version, so identical inputs reproduce identical
//! files.

use chrono::NaiveDate;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::CliError;

/// Environment variable overriding the data directory.
pub const DATA_DIR_ENV: &str = "SIMLR_DATA_DIR";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    region: String,
    population: f64,
    data_dir: PathBuf,
    out_dir: PathBuf,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    policy_region: Option<String>,
    #[serde(default)]
    cases_file: Option<String>,
    #[serde(default)]
    deaths_file: Option<String>,
    #[serde(default)]
    policy_file: Option<String>,
    cpt_file: PathBuf,
    nn_dataset_file: PathBuf,
    #[serde(default)]
    nn_weights_file: Option<PathBuf>,
    #[serde(default)]
    lambda1: Option<f64>,
    #[serde(default)]
    lambda2: Option<f64>,
    #[serde(default)]
    beta0: Option<f64>,
    #[serde(default)]
    gamma0: Option<f64>,
    #[serde(default)]
    origins: Option<Vec<NaiveDate>>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub region: String,
    pub policy_region: String,
    pub population: f64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub cases_file: PathBuf,
    pub deaths_file: PathBuf,
    pub policy_file: PathBuf,
    pub cpt_file: PathBuf,
    pub nn_dataset_file: PathBuf,
    pub nn_weights_file: PathBuf,
    pub fit: simlr::FitConfig,
    pub origins: Vec<NaiveDate>,
    /// SHA-256 over the config inputs, hex-encoded.
    pub config_hash: String,
}

/// Flag overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub region: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// The 39 consecutive Sunday origins used by the default evaluation window
/// (2020-07-26 through 2021-04-18, targets through 2021-05-01 at one week).
pub fn default_origins() -> Vec<NaiveDate> {
    let first = NaiveDate::from_ymd_opt(2020, 7, 26).expect("valid date");
    (0..39).map(|k| first + chrono::Duration::weeks(k)).collect()
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        let raw: RawConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config '{}': {e}", path.display())))?;

        // Paths in the config are relative to the config file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| -> PathBuf {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };

        let data_dir = match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) => PathBuf::from(dir),
            None => resolve(&raw.data_dir),
        };
        let out_dir = overrides
            .out_dir
            .clone()
            .unwrap_or_else(|| resolve(&raw.out_dir));
        let region = overrides.region.clone().unwrap_or(raw.region);
        let seed = overrides.seed.or(raw.seed).unwrap_or(0);

        let fit = simlr::FitConfig {
            lambda1: raw.lambda1.unwrap_or(0.0),
            lambda2: raw.lambda2.unwrap_or(0.0),
            beta0: raw.beta0.unwrap_or(0.0),
            gamma0: raw.gamma0.unwrap_or(0.0),
        };
        if fit.lambda1 < 0.0 || fit.lambda2 < 0.0 {
            return Err(CliError::Config(
                "lambda1/lambda2 must be non-negative".to_string(),
            ));
        }
        if !(raw.population.is_finite() && raw.population > 0.0) {
            return Err(CliError::Config(format!(
                "population must be positive, got {}",
                raw.population
            )));
        }

        let cpt_file = resolve(&raw.cpt_file);
        let nn_dataset_file = resolve(&raw.nn_dataset_file);
        let nn_weights_file = raw
            .nn_weights_file
            .as_deref()
            .map(resolve)
            .unwrap_or_else(|| out_dir.join("nn_weights.json"));

        let mut config = Self {
            policy_region: raw.policy_region.unwrap_or_else(|| region.clone()),
            region,
            population: raw.population,
            cases_file: data_dir.join(raw.cases_file.as_deref().unwrap_or("cases.csv")),
            deaths_file: data_dir.join(raw.deaths_file.as_deref().unwrap_or("deaths.csv")),
            policy_file: data_dir.join(raw.policy_file.as_deref().unwrap_or("policy.csv")),
            data_dir,
            out_dir,
            seed,
            cpt_file,
            nn_dataset_file,
            nn_weights_file,
            fit,
            origins: raw.origins.unwrap_or_else(default_origins),
            config_hash: String::new(),
        };

        // Referenced config inputs must exist up front.
        for (name, file) in [
            ("cpt_file", &config.cpt_file),
            ("nn_dataset_file", &config.nn_dataset_file),
        ] {
            if !file.exists() {
                return Err(CliError::Config(format!(
                    "{name} '{}' does not exist",
                    file.display()
                )));
            }
        }

        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        hasher.update(std::fs::read(&config.cpt_file)?);
        hasher.update(std::fs::read(&config.nn_dataset_file)?);
        if config.nn_weights_file.exists() {
            hasher.update(std::fs::read(&config.nn_weights_file)?);
        }
        config.config_hash = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(config)
    }

    /// Per-region output directory.
    pub fn region_out(&self) -> PathBuf {
        self.out_dir.join(&self.region)
    }

    /// Header comment lines embedded at the top of every CSV output.
    pub fn csv_header(&self) -> String {
        format!(
            "# simlr v{VERSION}\n# config_hash={}\n# seed={}\n",
            self.config_hash, self.seed
        )
    }
}
