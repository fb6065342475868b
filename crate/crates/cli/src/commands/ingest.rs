//! `simlr ingest`: parse the raw CSVs, clean the series, and write the
//! normalized artifacts.

use std::fs::File;

use simlr::data::{ingest_cases, ingest_policy, RegionRaw};

use super::{region_raw_path, write_versioned};
use crate::config::RunConfig;
use crate::CliError;

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    for path in [&config.cases_file, &config.deaths_file, &config.policy_file] {
        if !path.exists() {
            return Err(CliError::Config(format!(
                "input file '{}' does not exist",
                path.display()
            )));
        }
    }

    let cases = File::open(&config.cases_file)?;
    let deaths = File::open(&config.deaths_file)?;
    let raw_series = ingest_cases(cases, deaths, &config.region)?;
    let policy = ingest_policy(File::open(&config.policy_file)?, &config.policy_region)?;

    let raw = RegionRaw {
        region: config.region.clone(),
        population: config.population,
        cases: raw_series,
        policy,
    };
    let view = raw.view()?;

    // Machine artifact consumed by `forecast` and `evaluate`.
    let out = region_raw_path(config);
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&out, serde_json::to_string(&raw)?)?;

    // Human-readable derived views.
    let mut daily = String::from(
        "date,cumulative_cases,cumulative_deaths,new_infections,new_deaths,s,i,r\n",
    );
    for (k, date) in view.daily.dates.iter().enumerate() {
        let st = &view.states[k + 1];
        daily.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            date,
            raw.cases.cumulative_cases[k + 1],
            raw.cases.cumulative_deaths[k + 1],
            view.daily.new_infections[k],
            view.daily.new_deaths[k],
            st.s(),
            st.i(),
            st.r()
        ));
    }
    write_versioned(&config.region_out().join("daily.csv"), config, &daily)?;

    let mut weekly = String::from("week_start,cp,weeks_since_change\n");
    for week in &view.policy_weeks {
        weekly.push_str(&format!(
            "{},{},{}\n",
            week.start,
            week.cp.as_i8(),
            week.weeks_since_change
        ));
    }
    write_versioned(&config.region_out().join("policy_weekly.csv"), config, &weekly)?;

    let weeks = view.policy_weeks.len();
    println!("ingested {}:", config.region);
    println!("  days: {}", view.daily.dates.len());
    println!("  complete weeks: {weeks}");
    println!(
        "  infections: filled {} missing day(s), clamped {} outlier(s)",
        view.daily.infections_filled, view.daily.infections_clamped
    );
    println!(
        "  deaths: filled {} missing day(s), clamped {} outlier(s)",
        view.daily.deaths_filled, view.daily.deaths_clamped
    );
    println!(
        "  policy cells forward-filled: {}",
        raw.policy.filled_cells
    );
    if view.depleted_days > 0 {
        println!(
            "  warning: deaths exceeded the infected pool on {} day(s)",
            view.depleted_days
        );
    }
    println!("  wrote {}", out.display());
    Ok(())
}
