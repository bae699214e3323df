//! Collective-action event counts from ACLED and ICEWS.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use crate::classify::normalize_country;
use crate::error::{Error, Result};
use crate::panel::{build_panel, CellCount, PanelLayout, PanelSeries, PeriodCalendar, Transform};

pub const EVENTS: &str = "events";

pub const ACLED_PROTEST: &str = "Riots/protests";
pub const ICEWS_PROTEST: &str = "Protest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dataset {
    Acled,
    Icews,
}

impl Dataset {
    pub fn protest_label(self) -> &'static str {
        match self {
            Dataset::Acled => ACLED_PROTEST,
            Dataset::Icews => ICEWS_PROTEST,
        }
    }
}

impl std::str::FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ACLED" => Ok(Dataset::Acled),
            "ICEWS" => Ok(Dataset::Icews),
            other => Err(Error::Data(format!("unknown event dataset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub dataset: Dataset,
    pub country_code: String,
    pub date: NaiveDate,
    pub event_type: String,
}

impl EventRecord {
    pub fn is_protest(&self) -> bool {
        self.event_type == self.dataset.protest_label()
    }
}

/// ICEWS spells its protest category several ways; fold them into one label.
fn normalize_event_type(dataset: Dataset, raw: &str) -> String {
    let raw = raw.trim();
    match dataset {
        Dataset::Icews if raw.eq_ignore_ascii_case("protest") || raw.eq_ignore_ascii_case("protests") => {
            ICEWS_PROTEST.to_string()
        }
        _ => raw.to_string(),
    }
}

/// Per-period protest counts for one dataset.
pub fn event_counts(
    records: &[EventRecord],
    cal: &PeriodCalendar,
    dataset: Dataset,
) -> Result<BTreeMap<(String, i64), u64>> {
    let mut counts = BTreeMap::new();
    for r in records.iter().filter(|r| r.dataset == dataset && r.is_protest()) {
        *counts
            .entry((r.country_code.clone(), cal.period_of_date(r.date)?))
            .or_insert(0) += 1;
    }
    Ok(counts)
}

/// Countries with at least one protest record in both datasets.
pub fn countries_in_both(records: &[EventRecord]) -> BTreeSet<String> {
    let seen = |d: Dataset| -> BTreeSet<&str> {
        records
            .iter()
            .filter(|r| r.dataset == d && r.is_protest())
            .map(|r| r.country_code.as_str())
            .collect()
    };
    let acled = seen(Dataset::Acled);
    seen(Dataset::Icews)
        .intersection(&acled)
        .map(|c| c.to_string())
        .collect()
}

/// Average of the two datasets' per-period counts, restricted to countries in
/// both, with `transform` applied after averaging.
pub fn event_panel(
    records: &[EventRecord],
    cal: &PeriodCalendar,
    layout: &PanelLayout,
    transform: Transform,
) -> Result<PanelSeries> {
    let acled = event_counts(records, cal, Dataset::Acled)?;
    let icews = event_counts(records, cal, Dataset::Icews)?;
    for (name, counts) in [("ACLED", &acled), ("ICEWS", &icews)] {
        if counts.is_empty() {
            return Err(Error::Config(format!("no {name} protest records in the input")));
        }
    }

    let both = countries_in_both(records);
    let countries: Vec<String> = match &layout.countries {
        Some(cs) => cs.iter().filter(|c| both.contains(*c)).cloned().collect(),
        None => both.iter().cloned().collect(),
    };
    let keys: BTreeSet<&(String, i64)> = acled.keys().chain(icews.keys()).collect();
    let cells = keys.into_iter().filter(|(c, _)| both.contains(c)).map(|key| {
        let a = acled.get(key).copied().unwrap_or(0) as f64;
        let i = icews.get(key).copied().unwrap_or(0) as f64;
        CellCount::new(key.0.clone(), key.1, (a + i) / 2.0)
    });
    let layout = PanelLayout {
        countries: Some(countries),
        range: layout.range,
    };
    build_panel(EVENTS, cells, &layout, transform)
}

pub const EVENT_HEADER: [&str; 4] = ["dataset", "country_code", "date", "event_type"];

#[derive(Debug, Deserialize)]
struct RawEvent {
    dataset: String,
    country_code: String,
    date: String,
    event_type: String,
}

pub fn read_events<R: Read>(reader: R, path: &Path) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let schema = |line: u64, message: String| Error::Schema {
        path: PathBuf::from(path),
        line,
        message,
    };
    if rdr.headers()?.iter().ne(EVENT_HEADER.iter().copied()) {
        return Err(schema(1, format!("expected header {}", EVENT_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RawEvent>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| schema(line, e.to_string()))?;
        let dataset: Dataset = row.dataset.parse().map_err(|e: Error| schema(line, e.to_string()))?;
        let date = NaiveDate::parse_from_str(row.date.trim(), "%Y-%m-%d")
            .map_err(|e| schema(line, format!("bad date {:?}: {e}", row.date)))?;
        let country_code = normalize_country(&row.country_code)
            .ok_or_else(|| schema(line, format!("bad country code {:?}", row.country_code)))?;
        out.push(EventRecord {
            dataset,
            country_code,
            date,
            event_type: normalize_event_type(dataset, &row.event_type),
        });
    }
    Ok(out)
}

pub fn read_events_file(path: &Path) -> Result<Vec<EventRecord>> {
    let file = fs::File::open(path)?;
    read_events(std::io::BufReader::new(file), path)
}

pub fn write_events<W: Write>(records: &[EventRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENT_HEADER)?;
    for r in records {
        let name = match r.dataset {
            Dataset::Acled => "ACLED",
            Dataset::Icews => "ICEWS",
        };
        w.write_record([
            name,
            &r.country_code,
            &r.date.format("%Y-%m-%d").to_string(),
            &r.event_type,
        ])?;
    }
    w.flush()?;
    Ok(())
}
