//! Nominal demand rates from historical trip records.
//!
//! Trips are binned by origin, destination, time-of-day step and duration,
//! then divided by the number of observed days.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::Deserialize;

use crate::model::DemandTuple;
use crate::money::Money;
use crate::scenario::DemandModel;

#[derive(Clone, Debug, PartialEq)]
pub struct IngestOptions {
    pub horizon: usize,
    pub max_duration: usize,
    pub step_minutes: f64,
    /// Clock time of the start of step 1, in minutes after midnight.
    pub day_start_minutes: f64,
    /// Divide counts by this many days instead of the distinct dates seen.
    pub days: Option<usize>,
    pub value_low: Money,
    pub value_high: Money,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            horizon: 12,
            max_duration: 2,
            step_minutes: 15.0,
            day_start_minutes: 0.0,
            days: None,
            value_low: Money::from_f64(0.5),
            value_high: Money::from_f64(1.5),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows: usize,
    pub used: usize,
    pub unknown_station: usize,
    pub malformed: usize,
    pub outside_horizon: usize,
    pub days: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("station table: {0}")]
    Stations(String),
}

/// Station ids mapped to dense node indices and capacities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StationTable {
    pub ids: Vec<String>,
    pub capacity: Vec<i64>,
    index: BTreeMap<String, usize>,
}

impl StationTable {
    pub fn new(entries: Vec<(String, i64)>) -> Result<Self, IngestError> {
        let mut table = StationTable::default();
        for (id, cap) in entries {
            if cap < 0 {
                return Err(IngestError::Stations(format!("station {id} has negative capacity")));
            }
            if table.index.insert(id.clone(), table.ids.len()).is_some() {
                return Err(IngestError::Stations(format!("station {id} listed twice")));
            }
            table.ids.push(id);
            table.capacity.push(cap);
        }
        Ok(table)
    }

    /// Reads `station_id,capacity` rows with a header.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, IngestError> {
        #[derive(Deserialize)]
        struct Row {
            station_id: String,
            capacity: i64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let rows = rdr.deserialize::<Row>().map(|r| r.map(|r| (r.station_id, r.capacity))).collect::<Result<Vec<_>, _>>()?;
        Self::new(rows)
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Splits `YYYY-MM-DD[ T]HH:MM[:SS]` into a date key and seconds after midnight.
pub fn parse_timestamp(s: &str) -> Option<(String, f64)> {
    let s = s.trim();
    let (date, time) = s.split_once(['T', ' '])?;
    let mut dp = date.split('-');
    let (y, m, d) = (dp.next()?, dp.next()?, dp.next()?);
    if dp.next().is_some() || y.len() != 4 || y.parse::<u32>().is_err() {
        return None;
    }
    let (m, d): (u32, u32) = (m.parse().ok()?, d.parse().ok()?);
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
        return None;
    }
    let time = time.trim_end_matches('Z');
    let mut tp = time.split(':');
    let h: f64 = tp.next()?.parse().ok()?;
    let min: f64 = tp.next()?.parse().ok()?;
    let sec: f64 = match tp.next() {
        Some(v) => v.parse().ok()?,
        None => 0.0,
    };
    if tp.next().is_some() || !(0.0..24.0).contains(&h) || !(0.0..60.0).contains(&min) || !(0.0..61.0).contains(&sec) {
        return None;
    }
    Some((format!("{y}-{m:02}-{d:02}"), h * 3600.0 + min * 60.0 + sec))
}

#[derive(Deserialize)]
struct TripRow {
    start_station: String,
    end_station: String,
    start_time: String,
    duration_seconds: String,
}

/// Bins trips from a CSV stream with columns
/// `start_station,end_station,start_time,duration_seconds`.
pub fn ingest_trip_history<R: Read>(
    reader: R,
    stations: &StationTable,
    opts: &IngestOptions,
) -> Result<(DemandModel, IngestReport), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let mut report = IngestReport::default();
    let mut counts: BTreeMap<DemandTuple, f64> = BTreeMap::new();
    let mut dates = BTreeSet::new();
    let step_secs = opts.step_minutes * 60.0;
    for row in rdr.deserialize::<TripRow>() {
        report.rows += 1;
        let Ok(row) = row else {
            report.malformed += 1;
            continue;
        };
        let parsed = parse_timestamp(&row.start_time).zip(row.duration_seconds.parse::<f64>().ok());
        let Some(((date, secs), duration)) = parsed.filter(|(_, d)| d.is_finite() && *d >= 0.0) else {
            report.malformed += 1;
            continue;
        };
        let (Some(i), Some(j)) = (stations.get(&row.start_station), stations.get(&row.end_station)) else {
            report.unknown_station += 1;
            continue;
        };
        let offset = secs - opts.day_start_minutes * 60.0;
        let step = (offset / step_secs).floor();
        if offset < 0.0 || step >= opts.horizon as f64 {
            report.outside_horizon += 1;
            dates.insert(date);
            continue;
        }
        let k = ((duration / step_secs).ceil() as usize).min(opts.max_duration);
        *counts.entry(DemandTuple::new(i, j, step as usize + 1, k)).or_insert(0.0) += 1.0;
        dates.insert(date);
        report.used += 1;
    }
    report.days = opts.days.unwrap_or(dates.len());
    let days = report.days.max(1) as f64;
    let rates = counts.into_iter().map(|(d, c)| (d, c / days)).collect();
    Ok((DemandModel { rates, value_low: opts.value_low, value_high: opts.value_high }, report))
}
