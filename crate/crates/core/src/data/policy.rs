//! Policy-indicator timelines and weekly change events.
//!
//! The long CSV layout carries one row per region-date with ordinal levels
//! for three indicators: workplace closing (C2), stay-at-home requirements
//! (C6) and cancellation of public events (C3). Header names only need to
//! start with the indicator code, so both the upstream tracker layout and a
//! simplified fixture layout parse:
//!
//! ```csv
//! CountryName,RegionName,Date,C2_Workplace closing,C6_Stay at home requirements,C3_Cancel public events
//! Arcadia,Aurora,20200301,0,0,0
//! ```
//!
//! A week (Sunday through Saturday) gets a change event `+1` when any
//! indicator level rose during it, `-1` when one fell and none rose, and `0`
//! otherwise.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::io::Read;

use super::{first_sunday, DataError};
use crate::pgm::Change;

/// Daily ordinal levels for the three tracked indicators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDaily {
    pub region: String,
    pub dates: Vec<NaiveDate>,
    pub workplace: Vec<i64>,
    pub stay_home: Vec<i64>,
    pub cancel_events: Vec<i64>,
    /// Cells forward-filled because the source left them empty.
    pub filled_cells: usize,
}

impl PolicyDaily {
    pub fn indicator_series(&self) -> [&[i64]; 3] {
        [&self.workplace, &self.stay_home, &self.cancel_events]
    }

    /// Keep only days strictly before `cutoff`.
    pub fn truncated(&self, cutoff: NaiveDate) -> Self {
        let keep = self.dates.iter().take_while(|d| **d < cutoff).count();
        Self {
            region: self.region.clone(),
            dates: self.dates[..keep].to_vec(),
            workplace: self.workplace[..keep].to_vec(),
            stay_home: self.stay_home[..keep].to_vec(),
            cancel_events: self.cancel_events[..keep].to_vec(),
            filled_cells: self.filled_cells,
        }
    }
}

/// One derived policy week.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyWeek {
    /// The week's Sunday.
    pub start: NaiveDate,
    pub cp: Change,
    /// Whole weeks since the last week with a change; 0 in a change week.
    pub weeks_since_change: u32,
}

/// Derive weekly change events and the weeks-since-change counter.
///
/// Only complete Sunday-through-Saturday weeks are emitted. When indicators
/// disagree within a week, tightening wins.
pub fn derive_policy_changes(daily: &PolicyDaily) -> Vec<PolicyWeek> {
    let Some(start) = first_sunday(&daily.dates) else {
        return Vec::new();
    };
    let weeks = (daily.dates.len() - start) / 7;
    let mut out = Vec::with_capacity(weeks);
    let mut since = 0u32;
    for w in 0..weeks {
        let lo = start + w * 7;
        let mut tightened = false;
        let mut relaxed = false;
        for series in daily.indicator_series() {
            for d in lo..lo + 7 {
                if d == 0 {
                    continue; // nothing earlier to compare against
                }
                if series[d] > series[d - 1] {
                    tightened = true;
                } else if series[d] < series[d - 1] {
                    relaxed = true;
                }
            }
        }
        let cp = if tightened {
            Change::Up
        } else if relaxed {
            Change::Down
        } else {
            Change::Steady
        };
        since = if cp == Change::Steady { since + 1 } else { 0 };
        out.push(PolicyWeek {
            start: daily.dates[lo],
            cp,
            weeks_since_change: since,
        });
    }
    out
}

/// Read the policy levels for one region from the long CSV layout.
pub fn ingest_policy<R: Read>(reader: R, region: &str) -> Result<PolicyDaily, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();

    let find = |want: &str| headers.iter().position(|h| h == want);
    let find_prefix = |prefix: &str| headers.iter().position(|h| h.starts_with(prefix));
    let country_col = find("CountryName");
    let region_col = find("RegionName");
    let date_col = find("Date").ok_or_else(|| DataError::SchemaMismatch {
        problem: "policy csv has no 'Date' column".to_string(),
    })?;
    let c2 = find_prefix("C2").ok_or_else(|| DataError::SchemaMismatch {
        problem: "no workplace-closing (C2) column".to_string(),
    })?;
    let c6 = find_prefix("C6").ok_or_else(|| DataError::SchemaMismatch {
        problem: "no stay-at-home (C6) column".to_string(),
    })?;
    let c3 = find_prefix("C3").ok_or_else(|| DataError::SchemaMismatch {
        problem: "no cancel-public-events (C3) column".to_string(),
    })?;

    let mut rows: Vec<(NaiveDate, [Option<i64>; 3])> = Vec::new();
    let mut saw_region_match = false;
    for record in rdr.records() {
        let record = record?;
        let get = |col: Option<usize>| col.and_then(|c| record.get(c)).unwrap_or("");
        let row_region = get(region_col);
        let row_country = get(country_col);
        let matches = if row_region == region {
            true
        } else {
            row_region.is_empty() && row_country == region
        };
        if !matches {
            continue;
        }
        saw_region_match = true;
        let date_text = record.get(date_col).unwrap_or("").trim();
        let date = parse_policy_date(date_text).ok_or_else(|| DataError::SchemaMismatch {
            problem: format!("unparseable policy date '{date_text}'"),
        })?;
        let level = |col: usize| -> Result<Option<i64>, DataError> {
            let cell = record.get(col).unwrap_or("").trim();
            if cell.is_empty() {
                return Ok(None);
            }
            // Levels sometimes arrive as floats ("2.0").
            cell.parse::<f64>()
                .map(|v| Some(v.round() as i64))
                .map_err(|_| DataError::SchemaMismatch {
                    problem: format!("non-numeric policy level '{cell}' on {date}"),
                })
        };
        rows.push((date, [level(c2)?, level(c6)?, level(c3)?]));
    }
    if !saw_region_match {
        return Err(DataError::UnknownRegion {
            region: region.to_string(),
        });
    }

    rows.sort_by_key(|(date, _)| *date);
    for pair in rows.windows(2) {
        let (a, b) = (pair[0].0, pair[1].0);
        if b == a {
            return Err(DataError::NonMonotonicDates {
                context: "policy csv",
                a,
                b,
            });
        }
        if b - a != chrono::Duration::days(1) {
            return Err(DataError::DateGap {
                context: "policy csv",
                a,
                b,
            });
        }
    }

    // Forward-fill empty level cells; leading gaps become level 0.
    let mut filled_cells = 0;
    let mut last = [0i64; 3];
    let mut dates = Vec::with_capacity(rows.len());
    let mut levels: [Vec<i64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (date, cells) in rows {
        dates.push(date);
        for (k, cell) in cells.iter().enumerate() {
            match cell {
                Some(v) => last[k] = *v,
                None => filled_cells += 1,
            }
            levels[k].push(last[k]);
        }
    }
    let [workplace, stay_home, cancel_events] = levels;

    Ok(PolicyDaily {
        region: region.to_string(),
        dates,
        workplace,
        stay_home,
        cancel_events,
        filled_cells,
    })
}

fn parse_policy_date(text: &str) -> Option<NaiveDate> {
    if text.len() == 8 && text.chars().all(|c| c.is_ascii_digit()) {
        return NaiveDate::parse_from_str(text, "%Y%m%d").ok();
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()
}
