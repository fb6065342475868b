//! Parsing of the wide cumulative-count CSV layout.
//!
//! Expected schema (one row per region, one column per day):
//!
//! ```csv
//! Province/State,Country/Region,Lat,Long,1/22/20,1/23/20,...
//! Alberta,Canada,53.93,-116.57,0,0,...
//! ,Iceland,64.96,-19.02,0,1,...
//! ```
//!
//! A region query matches `Province/State` exactly; otherwise every row whose
//! `Country/Region` matches is summed, which rolls provinces up to a country
//! total. Date columns must be strictly increasing with no gaps.

use chrono::NaiveDate;
use std::io::Read;

use super::{DataError, RawSeries};

struct WideCsv {
    dates: Vec<NaiveDate>,
    /// (province, country, daily cumulative counts)
    rows: Vec<(String, String, Vec<i64>)>,
}

fn parse_wide_csv<R: Read>(reader: R) -> Result<WideCsv, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let mut cols = headers.iter();
    let (first, second) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
    if first != "Province/State" || second != "Country/Region" {
        return Err(DataError::SchemaMismatch {
            problem: format!(
                "expected leading columns 'Province/State,Country/Region', found '{first},{second}'"
            ),
        });
    }

    // Metadata columns (Lat/Long etc.) run until the first parseable date;
    // everything after that must be a date.
    let mut first_date_col = None;
    for (idx, name) in headers.iter().enumerate().skip(2) {
        if parse_header_date(name).is_some() {
            first_date_col = Some(idx);
            break;
        }
    }
    let first_date_col = first_date_col.ok_or_else(|| DataError::SchemaMismatch {
        problem: "no date columns found".to_string(),
    })?;
    let mut dates = Vec::new();
    for name in headers.iter().skip(first_date_col) {
        match parse_header_date(name) {
            Some(d) => dates.push(d),
            None => {
                return Err(DataError::SchemaMismatch {
                    problem: format!("non-date column '{name}' after the first date column"),
                })
            }
        }
    }
    for pair in dates.windows(2) {
        if pair[1] <= pair[0] {
            return Err(DataError::NonMonotonicDates {
                context: "case csv",
                a: pair[0],
                b: pair[1],
            });
        }
        if pair[1] - pair[0] != chrono::Duration::days(1) {
            return Err(DataError::DateGap {
                context: "case csv",
                a: pair[0],
                b: pair[1],
            });
        }
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let province = record.get(0).unwrap_or("").to_string();
        let country = record.get(1).unwrap_or("").to_string();
        let mut counts = Vec::with_capacity(dates.len());
        for idx in first_date_col..record.len() {
            let cell = record.get(idx).unwrap_or("");
            let value: i64 = cell.trim().parse().map_err(|_| DataError::SchemaMismatch {
                problem: format!(
                    "non-integer count '{cell}' for region '{province}/{country}' on {}",
                    dates[idx - first_date_col]
                ),
            })?;
            counts.push(value);
        }
        if counts.len() != dates.len() {
            return Err(DataError::SchemaMismatch {
                problem: format!("row '{province}/{country}' has {} of {} counts", counts.len(), dates.len()),
            });
        }
        rows.push((province, country, counts));
    }

    Ok(WideCsv { dates, rows })
}

fn parse_header_date(name: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(name.trim(), "%m/%d/%y")
        .or_else(|_| NaiveDate::parse_from_str(name.trim(), "%Y-%m-%d"))
        .ok()
}

/// Read one cumulative series for `region` from a wide CSV, summing
/// sub-region rows for a country-level query.
pub fn ingest_cumulative<R: Read>(
    reader: R,
    region: &str,
) -> Result<(Vec<NaiveDate>, Vec<i64>), DataError> {
    let csv = parse_wide_csv(reader)?;

    let by_province: Vec<&(String, String, Vec<i64>)> = csv
        .rows
        .iter()
        .filter(|(province, _, _)| province == region)
        .collect();
    let matches = if by_province.is_empty() {
        csv.rows
            .iter()
            .filter(|(_, country, _)| country == region)
            .collect()
    } else {
        by_province
    };
    if matches.is_empty() {
        return Err(DataError::UnknownRegion {
            region: region.to_string(),
        });
    }

    let mut total = vec![0i64; csv.dates.len()];
    for (_, _, counts) in matches {
        for (slot, value) in total.iter_mut().zip(counts) {
            *slot += value;
        }
    }
    Ok((csv.dates, total))
}

/// Combine the cases and deaths CSVs into one [`RawSeries`] for a region.
pub fn ingest_cases<C: Read, D: Read>(
    cases: C,
    deaths: D,
    region: &str,
) -> Result<RawSeries, DataError> {
    let (case_dates, cumulative_cases) = ingest_cumulative(cases, region)?;
    let (death_dates, cumulative_deaths) = ingest_cumulative(deaths, region)?;
    if case_dates != death_dates {
        return Err(DataError::MisalignedSeries {
            problem: "cases and deaths cover different dates".to_string(),
        });
    }
    Ok(RawSeries {
        region: region.to_string(),
        dates: case_dates,
        cumulative_cases,
        cumulative_deaths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
Province/State,Country/Region,Lat,Long,1/22/20,1/23/20,1/24/20
Alberta,Canada,53.9,-116.5,0,2,5
Ontario,Canada,51.2,-85.3,1,1,4
,Iceland,64.9,-19.0,0,0,1
";

    #[test]
    fn province_row_is_returned_exactly() {
        let (dates, counts) = ingest_cumulative(FIXTURE.as_bytes(), "Alberta").unwrap();
        assert_eq!(dates[0], NaiveDate::from_ymd_opt(2020, 1, 22).unwrap());
        assert_eq!(counts, vec![0, 2, 5]);
    }

    #[test]
    fn country_query_sums_provinces() {
        let (_, counts) = ingest_cumulative(FIXTURE.as_bytes(), "Canada").unwrap();
        // Column sums computed by hand from the fixture.
        assert_eq!(counts, vec![1, 3, 9]);
    }

    #[test]
    fn unknown_region_is_an_error() {
        assert!(matches!(
            ingest_cumulative(FIXTURE.as_bytes(), "Atlantis"),
            Err(DataError::UnknownRegion { .. })
        ));
    }

    #[test]
    fn schema_mismatch_is_detected() {
        let bad = "Region,Country,1/22/20\nA,B,1\n";
        assert!(matches!(
            ingest_cumulative(bad.as_bytes(), "A"),
            Err(DataError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn date_gap_is_detected() {
        let gapped = "\
Province/State,Country/Region,Lat,Long,1/22/20,1/24/20
Alberta,Canada,0,0,0,1
";
        assert!(matches!(
            ingest_cumulative(gapped.as_bytes(), "Alberta"),
            Err(DataError::DateGap { .. })
        ));
    }

    #[test]
    fn non_monotonic_dates_are_detected() {
        let bad = "\
Province/State,Country/Region,Lat,Long,1/23/20,1/22/20
Alberta,Canada,0,0,0,1
";
        assert!(matches!(
            ingest_cumulative(bad.as_bytes(), "Alberta"),
            Err(DataError::NonMonotonicDates { .. })
        ));
    }

    #[test]
    fn cases_and_deaths_combine() {
        let deaths = "\
Province/State,Country/Region,Lat,Long,1/22/20,1/23/20,1/24/20
Alberta,Canada,53.9,-116.5,0,0,1
Ontario,Canada,51.2,-85.3,0,1,1
,Iceland,64.9,-19.0,0,0,0
";
        let raw = ingest_cases(FIXTURE.as_bytes(), deaths.as_bytes(), "Canada").unwrap();
        assert_eq!(raw.cumulative_cases, vec![1, 3, 9]);
        assert_eq!(raw.cumulative_deaths, vec![0, 1, 2]);
    }
}
