pub mod evaluate;
pub mod fit;
pub mod forecast;
pub mod ingest;

use std::io::Write;
use std::path::Path;

use simlr::data::RegionRaw;
use simlr::pgm::{CptSet, NnCpd, PgmConfig, SoftLabelDataset, TrainParams};

use crate::config::RunConfig;
use crate::CliError;

/// Path of the normalized region artifact written by `ingest`.
pub fn region_raw_path(config: &RunConfig) -> std::path::PathBuf {
    config.region_out().join("region_raw.json")
}

/// Load the normalized region data, directing the user to `ingest` if absent.
pub fn load_region(config: &RunConfig) -> Result<RegionRaw, CliError> {
    let path = region_raw_path(config);
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CliError::Config(format!(
            "no ingested data at '{}'; run `simlr ingest` first",
            path.display()
        ))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Internal(format!("corrupt region artifact: {e}")))
}

/// Assemble the policy model: CPTs from the config file and the urgency net,
/// loaded from the weights file when present or trained deterministically
/// from the soft-label dataset otherwise.
pub fn load_pgm(config: &RunConfig) -> Result<PgmConfig, CliError> {
    let cpts = CptSet::load(&config.cpt_file)?;
    let net = if config.nn_weights_file.exists() {
        NnCpd::load(&config.nn_weights_file)?
    } else {
        log::info!(
            "no weights at '{}'; training from '{}'",
            config.nn_weights_file.display(),
            config.nn_dataset_file.display()
        );
        let dataset = SoftLabelDataset::load(&config.nn_dataset_file)?;
        simlr::pgm::train_nn_cpd(&dataset, config.seed, TrainParams::default())?
    };
    Ok(PgmConfig::new(cpts, net))
}

/// Write a CSV-with-provenance-header file.
pub fn write_versioned(path: &Path, config: &RunConfig, body: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(config.csv_header().as_bytes())?;
    file.write_all(body.as_bytes())?;
    Ok(())
}

/// Provenance fields embedded in JSON outputs.
#[derive(serde::Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(config: &RunConfig) -> Self {
        Self {
            version: crate::config::VERSION,
            config_hash: config.config_hash.clone(),
            seed: config.seed,
        }
    }
}
