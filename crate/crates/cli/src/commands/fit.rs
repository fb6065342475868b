//! `simlr fit`: train the urgency network and fit the weekly rates and
//! trend model on all ingested data.

use simlr::forecast::prepare;
use simlr::pgm::{SoftLabelDataset, TrainParams};
use simlr::trend::fit_trend;

use super::{load_region, write_versioned, Provenance};
use crate::config::RunConfig;
use crate::CliError;

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    // Train (always retrains, so edits to the dataset take effect) and save.
    let dataset = SoftLabelDataset::load(&config.nn_dataset_file)?;
    let params = TrainParams::default();
    let net = simlr::pgm::train_nn_cpd(&dataset, config.seed, params)?;
    if let Some(parent) = config.nn_weights_file.parent() {
        std::fs::create_dir_all(parent)?;
    }
    net.save(&config.nn_weights_file)?;
    println!(
        "trained urgency net on {} rows (step {}, {} epochs, seed {}): loss {:.6}",
        dataset.rows.len(),
        params.step_size,
        params.epochs,
        config.seed,
        net.final_loss
    );
    println!("  wrote {}", config.nn_weights_file.display());

    let raw = load_region(config)?;
    let view = raw.view()?;
    let snapshot = prepare(&view, &config.fit)?;

    let mut weekly = String::from("week_start,beta,gamma,residual,clamped\n");
    for (week, start) in snapshot.weekly_params.iter().zip(&snapshot.week_starts) {
        weekly.push_str(&format!(
            "{},{},{},{},{}\n",
            start, week.beta, week.gamma, week.residual, week.clamped
        ));
    }
    write_versioned(&config.region_out().join("weekly_params.csv"), config, &weekly)?;

    let trend = fit_trend(&snapshot.weekly_params);
    #[derive(serde::Serialize)]
    struct TrendOut {
        #[serde(flatten)]
        provenance: Provenance,
        trend: simlr::TrendModel,
    }
    let out = config.region_out().join("trend.json");
    std::fs::write(
        &out,
        serde_json::to_string_pretty(&TrendOut {
            provenance: Provenance::of(config),
            trend,
        })?,
    )?;
    println!(
        "fitted {} weekly rate pairs; trend fit {:?}/{:?}",
        snapshot.weekly_params.len(),
        trend.beta_fit,
        trend.gamma_fit
    );
    println!("  wrote {}", out.display());
    Ok(())
}
