//! Country-by-period panels and the calendar that maps timestamps onto periods.
//!
//! Periods are blocks of `period_length_days` UTC calendar days counted from an
//! anchor date. Period 0 starts on the anchor, period -1 is the block that ends
//! the day before it.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Period lengths supported by the pipelines.
pub const PERIOD_LENGTHS: [u32; 4] = [1, 7, 10, 28];

/// Minimum number of countries a sample restriction may leave behind.
pub const MIN_RETAINED: usize = 3;

pub fn default_anchor() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 7, 1).expect("valid date")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodCalendar {
    anchor: NaiveDate,
    period_length_days: u32,
}

impl Default for PeriodCalendar {
    fn default() -> Self {
        Self {
            anchor: default_anchor(),
            period_length_days: 10,
        }
    }
}

impl PeriodCalendar {
    pub fn new(anchor: NaiveDate, period_length_days: u32) -> Result<Self> {
        if !PERIOD_LENGTHS.contains(&period_length_days) {
            return Err(Error::Config(format!(
                "period length must be one of {PERIOD_LENGTHS:?}, got {period_length_days}"
            )));
        }
        check_year(anchor)?;
        Ok(Self {
            anchor,
            period_length_days,
        })
    }

    pub fn anchor(&self) -> NaiveDate {
        self.anchor
    }

    pub fn period_length_days(&self) -> u32 {
        self.period_length_days
    }

    /// Same anchor, different period length.
    pub fn with_length(&self, period_length_days: u32) -> Result<Self> {
        Self::new(self.anchor, period_length_days)
    }

    pub fn period_of_date(&self, date: NaiveDate) -> Result<i64> {
        check_year(date)?;
        let days = (date - self.anchor).num_days();
        Ok(days.div_euclid(self.period_length_days as i64))
    }

    /// First calendar day of period `t`.
    pub fn period_start(&self, t: i64) -> NaiveDate {
        self.anchor + chrono::Duration::days(t * self.period_length_days as i64)
    }

    /// Periods that intersect the `days` days before the anchor.
    pub fn periods_covering_days_before(&self, days: u32) -> i64 {
        (days as i64 + self.period_length_days as i64 - 1) / self.period_length_days as i64
    }
}

fn check_year(date: NaiveDate) -> Result<()> {
    if !(1970..=2100).contains(&date.year()) {
        return Err(Error::Range(format!(
            "date {date} outside the supported calendar range 1970-2100"
        )));
    }
    Ok(())
}

/// Period index of a UTC timestamp.
pub fn assign_period(timestamp: DateTime<Utc>, cal: &PeriodCalendar) -> Result<i64> {
    cal.period_of_date(timestamp.date_naive())
}

/// Inclusive range of period indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodRange {
    pub first: i64,
    pub last: i64,
}

impl PeriodRange {
    pub fn new(first: i64, last: i64) -> Result<Self> {
        if first > last {
            return Err(Error::Range(format!("empty period range {first}..={last}")));
        }
        Ok(Self { first, last })
    }

    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: i64) -> bool {
        (self.first..=self.last).contains(&t)
    }

    pub fn iter(&self) -> RangeInclusive<i64> {
        self.first..=self.last
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Level,
    Log1p,
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Level => x,
            Transform::Log1p => x.ln_1p(),
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "level" => Ok(Transform::Level),
            "log1p" | "log" => Ok(Transform::Log1p),
            other => Err(Error::Config(format!("unknown transform {other:?}"))),
        }
    }
}

/// A single time series indexed by period.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub first_period: i64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(first_period: i64, values: Vec<f64>) -> Self {
        Self { first_period, values }
    }

    pub fn get(&self, t: i64) -> Option<f64> {
        let idx = t.checked_sub(self.first_period)?;
        usize::try_from(idx).ok().and_then(|i| self.values.get(i).copied())
    }

    pub fn periods(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.values.len()).map(move |i| self.first_period + i as i64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.periods().zip(self.values.iter().copied())
    }
}

/// Shift `comparison` so that it coincides with `target` at `t_ref`.
pub fn normalize_at_reference(target: &TimeSeries, comparison: &TimeSeries, t_ref: i64) -> Result<TimeSeries> {
    let (Some(a), Some(b)) = (target.get(t_ref), comparison.get(t_ref)) else {
        return Err(Error::Range(format!(
            "reference period {t_ref} not covered by both series"
        )));
    };
    let shift = a - b;
    let mut values: Vec<f64> = comparison.values.iter().map(|v| v + shift).collect();
    // exact at the reference period regardless of rounding in `b + (a - b)`
    values[(t_ref - comparison.first_period) as usize] = a;
    Ok(TimeSeries::new(comparison.first_period, values))
}

/// One outcome observed for every country in every period of a range.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSeries {
    outcome: String,
    countries: Vec<String>,
    range: PeriodRange,
    /// Row-major: one row per country, one column per period.
    values: Vec<Vec<f64>>,
}

impl PanelSeries {
    pub fn from_rows(
        outcome: impl Into<String>,
        countries: Vec<String>,
        range: PeriodRange,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if countries.len() != values.len() {
            return Err(Error::Data(format!(
                "{} countries but {} rows",
                countries.len(),
                values.len()
            )));
        }
        let unique: BTreeSet<&String> = countries.iter().collect();
        if unique.len() != countries.len() {
            return Err(Error::Data("duplicate country in panel".into()));
        }
        for (c, row) in countries.iter().zip(&values) {
            if row.len() != range.len() {
                return Err(Error::Data(format!(
                    "row for {c} has {} cells, expected {}",
                    row.len(),
                    range.len()
                )));
            }
        }
        Ok(Self {
            outcome: outcome.into(),
            countries,
            range,
            values,
        })
    }

    pub fn outcome(&self) -> &str {
        &self.outcome
    }

    pub fn with_outcome(mut self, outcome: impl Into<String>) -> Self {
        self.outcome = outcome.into();
        self
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn range(&self) -> PeriodRange {
        self.range
    }

    pub fn periods(&self) -> RangeInclusive<i64> {
        self.range.iter()
    }

    pub fn country_index(&self, country: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == country)
    }

    pub fn row(&self, country: &str) -> Option<&[f64]> {
        self.country_index(country).map(|i| self.values[i].as_slice())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.countries
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().map(Vec::as_slice))
    }

    pub fn series(&self, country: &str) -> Option<TimeSeries> {
        self.row(country).map(|r| TimeSeries::new(self.range.first, r.to_vec()))
    }

    pub fn value(&self, country: &str, t: i64) -> Option<f64> {
        if !self.range.contains(t) {
            return None;
        }
        self.row(country).map(|r| r[(t - self.range.first) as usize])
    }

    pub fn column(&self, t: i64) -> Option<usize> {
        self.range.contains(t).then(|| (t - self.range.first) as usize)
    }

    /// Largest absolute value in the panel.
    pub fn scale(&self) -> f64 {
        self.values.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn transform(&self, transform: Transform) -> PanelSeries {
        let values = self
            .values
            .iter()
            .map(|row| row.iter().map(|&v| transform.apply(v)).collect())
            .collect();
        PanelSeries {
            outcome: self.outcome.clone(),
            countries: self.countries.clone(),
            range: self.range,
            values,
        }
    }

    /// Keeps only the listed countries, in panel order. Unknown names are ignored.
    pub fn retain_countries<S: AsRef<str>>(&self, keep: &[S]) -> PanelSeries {
        let keep: BTreeSet<&str> = keep.iter().map(AsRef::as_ref).collect();
        let (countries, values) = self
            .countries
            .iter()
            .zip(&self.values)
            .filter(|(c, _)| keep.contains(c.as_str()))
            .map(|(c, r)| (c.clone(), r.clone()))
            .unzip();
        PanelSeries {
            outcome: self.outcome.clone(),
            countries,
            range: self.range,
            values,
        }
    }

    /// Restricts the panel to a sub-range of periods.
    pub fn slice_periods(&self, range: PeriodRange) -> Result<PanelSeries> {
        if range.first < self.range.first || range.last > self.range.last {
            return Err(Error::Range(format!(
                "periods {}..={} not inside panel range {}..={}",
                range.first, range.last, self.range.first, self.range.last
            )));
        }
        let lo = (range.first - self.range.first) as usize;
        let hi = (range.last - self.range.first) as usize;
        let values = self.values.iter().map(|r| r[lo..=hi].to_vec()).collect();
        Ok(PanelSeries {
            outcome: self.outcome.clone(),
            countries: self.countries.clone(),
            range,
            values,
        })
    }

    /// Sums consecutive blocks of `factor` periods: period `t` lands in block
    /// `floor(t / factor)`. Only meaningful for additive level counts.
    pub fn aggregate_blocks(&self, factor: u32) -> Result<PanelSeries> {
        if factor == 0 {
            return Err(Error::Config("block factor must be positive".into()));
        }
        let f = factor as i64;
        let range = PeriodRange::new(self.range.first.div_euclid(f), self.range.last.div_euclid(f))?;
        let values = self
            .values
            .iter()
            .map(|row| {
                let mut out = vec![0.0; range.len()];
                for (t, v) in self.range.iter().zip(row) {
                    out[(t.div_euclid(f) - range.first) as usize] += v;
                }
                out
            })
            .collect();
        Ok(PanelSeries {
            outcome: self.outcome.clone(),
            countries: self.countries.clone(),
            range,
            values,
        })
    }

    /// Mean over periods for each country.
    pub fn country_means(&self) -> Vec<(String, f64)> {
        let n = self.range.len() as f64;
        self.rows()
            .map(|(c, r)| (c.to_string(), r.iter().sum::<f64>() / n))
            .collect()
    }
}

/// One pre-summed count for a (country, period) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCount {
    pub country: String,
    pub period: i64,
    pub count: f64,
}

impl CellCount {
    pub fn new(country: impl Into<String>, period: i64, count: f64) -> Self {
        Self {
            country: country.into(),
            period,
            count,
        }
    }
}

/// Which rows and columns a built panel spans.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelLayout {
    /// Fixed country list; when absent, the sorted set of countries seen.
    pub countries: Option<Vec<String>>,
    /// Fixed period range; when absent, the span of the records. Records outside are dropped.
    pub range: Option<PeriodRange>,
}

impl PanelLayout {
    pub fn with_range(range: PeriodRange) -> Self {
        Self {
            countries: None,
            range: Some(range),
        }
    }
}

/// Builds a dense panel from per-cell counts. Cells without a record are zero.
pub fn build_panel(
    outcome: &str,
    records: impl IntoIterator<Item = CellCount>,
    layout: &PanelLayout,
    transform: Transform,
) -> Result<PanelSeries> {
    let mut cells: BTreeMap<(String, i64), f64> = BTreeMap::new();
    for rec in records {
        if !rec.count.is_finite() || rec.count < 0.0 {
            return Err(Error::Data(format!(
                "count {} for {} in period {} is not a nonnegative number",
                rec.count, rec.country, rec.period
            )));
        }
        if cells.insert((rec.country.clone(), rec.period), rec.count).is_some() {
            return Err(Error::Aggregation {
                country: rec.country,
                period: rec.period,
            });
        }
    }

    let range = match layout.range {
        Some(r) => r,
        None => {
            let lo = cells.keys().map(|(_, t)| *t).min();
            let hi = cells.keys().map(|(_, t)| *t).max();
            match (lo, hi) {
                (Some(lo), Some(hi)) => PeriodRange::new(lo, hi)?,
                _ => return Err(Error::Range("cannot infer a period range from empty input".into())),
            }
        }
    };
    let countries: Vec<String> = match &layout.countries {
        Some(cs) => cs.clone(),
        None => cells
            .keys()
            .map(|(c, _)| c.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let index: BTreeMap<&str, usize> = countries.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let mut values = vec![vec![transform.apply(0.0); range.len()]; countries.len()];
    for ((country, t), count) in &cells {
        if let (Some(&i), true) = (index.get(country.as_str()), range.contains(*t)) {
            values[i][(t - range.first) as usize] = transform.apply(*count);
        }
    }
    PanelSeries::from_rows(outcome, countries, range, values)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleRestriction {
    /// Keep countries whose mean per-period value is in the top `share` of countries.
    TopShare { share: f64 },
    /// Keep exactly these countries (e.g. those present in two event datasets).
    EventsIntersection(BTreeSet<String>),
}

/// Countries retained by a top-share rule on a level panel.
///
/// The quota is `ceil(share * n)`; any country tied with the last retained
/// mean is kept too.
pub fn top_share_countries(panel: &PanelSeries, share: f64) -> Result<Vec<String>> {
    if !(share > 0.0 && share <= 1.0) {
        return Err(Error::Config(format!("share must lie in (0, 1], got {share}")));
    }
    let means = panel.country_means();
    if means.is_empty() {
        return Err(Error::InsufficientDonors {
            retained: 0,
            required: MIN_RETAINED,
        });
    }
    let quota = ((share * means.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut sorted: Vec<f64> = means.iter().map(|(_, m)| *m).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[quota.min(sorted.len()) - 1];
    Ok(means
        .into_iter()
        .filter(|(_, m)| *m >= threshold)
        .map(|(c, _)| c)
        .collect())
}

pub fn restrict_sample(panel: &PanelSeries, restriction: &SampleRestriction) -> Result<PanelSeries> {
    let keep: Vec<String> = match restriction {
        SampleRestriction::TopShare { share } => top_share_countries(panel, *share)?,
        SampleRestriction::EventsIntersection(set) => {
            panel.countries().iter().filter(|c| set.contains(*c)).cloned().collect()
        }
    };
    if keep.len() < MIN_RETAINED {
        return Err(Error::InsufficientDonors {
            retained: keep.len(),
            required: MIN_RETAINED,
        });
    }
    Ok(panel.retain_countries(&keep))
}
