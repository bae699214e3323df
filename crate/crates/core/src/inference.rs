//! Placebo inference for synthetic-control estimates.
//!
//! Every donor is treated in turn as if it had received the intervention,
//! using the remaining donors (never the treated unit) as its pool. Each
//! placebo effect series is rescaled by `sigma_0 / sigma_j`, the ratio of the
//! treated unit's pre-period RMSE to the placebo's, and the treated effect is
//! compared with the pointwise quantiles of the rescaled series.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::{PanelSeries, PeriodCalendar, TimeSeries};
use crate::synth::{estimate, EstimatorConfig, SynthFit, SynthProblem};

/// Placebos whose pre-period RMSE is at or below this multiple of the
/// outcome's largest absolute value are excluded.
pub const SIGMA_FLOOR_REL: f64 = 1e-12;
pub const MIN_PLACEBO_DONORS: usize = 5;
pub const DEFAULT_LEVELS: (f64, f64) = (0.025, 0.975);

#[derive(Debug, Clone, PartialEq)]
pub struct Placebo {
    pub donor: String,
    pub sigma: f64,
    pub raw: TimeSeries,
    pub scaled: TimeSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedDonor {
    pub donor: String,
    pub sigma: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboDistribution {
    pub treated_sigma: f64,
    pub placebos: Vec<Placebo>,
    pub excluded: Vec<ExcludedDonor>,
}

impl PlaceboDistribution {
    /// Scaled placebo values at period `t`, in donor order.
    pub fn at(&self, t: i64) -> Vec<f64> {
        self.placebos.iter().filter_map(|p| p.scaled.get(t)).collect()
    }

    pub fn excluded_names(&self) -> Vec<&str> {
        self.excluded.iter().map(|e| e.donor.as_str()).collect()
    }
}

/// Re-runs the estimator with every donor as pseudo-treated.
pub fn placebo_distribution(
    problem: &SynthProblem<'_>,
    config: EstimatorConfig,
    treated_sigma: f64,
) -> Result<PlaceboDistribution> {
    let donors = problem.donors();
    if donors.len() < MIN_PLACEBO_DONORS {
        return Err(Error::DegenerateInference(format!(
            "{} donors; placebo inference needs at least {MIN_PLACEBO_DONORS}",
            donors.len()
        )));
    }
    let floor = SIGMA_FLOOR_REL * problem.panel().scale();
    let fits: Vec<SynthFit> = donors
        .par_iter()
        .map(|d| {
            let pool: Vec<String> = donors.iter().filter(|o| *o != d).cloned().collect();
            estimate(&problem.with_units(d, pool)?, config)
        })
        .collect::<Result<_>>()?;

    let mut placebos = Vec::new();
    let mut excluded = Vec::new();
    for fit in fits {
        if fit.rmse_pre <= floor {
            excluded.push(ExcludedDonor {
                donor: fit.treated,
                sigma: fit.rmse_pre,
                reason: format!("pre-period RMSE {:e} at or below floor {floor:e}", fit.rmse_pre),
            });
            continue;
        }
        let ratio = treated_sigma / fit.rmse_pre;
        let scaled = TimeSeries::new(
            fit.effects.first_period,
            fit.effects.values.iter().map(|v| v * ratio).collect(),
        );
        placebos.push(Placebo {
            donor: fit.treated,
            sigma: fit.rmse_pre,
            raw: fit.effects,
            scaled,
        });
    }
    if placebos.is_empty() {
        return Err(Error::DegenerateInference(
            "every placebo fit has zero pre-period error".into(),
        ));
    }
    Ok(PlaceboDistribution {
        treated_sigma,
        placebos,
        excluded,
    })
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub period: i64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Pointwise quantile band of the scaled placebos for every period.
pub fn pointwise_band(dist: &PlaceboDistribution, levels: (f64, f64)) -> Result<Vec<Band>> {
    if dist.placebos.len() < 2 {
        return Err(Error::DegenerateInference(format!(
            "{} usable placebo(s); a band needs at least 2",
            dist.placebos.len()
        )));
    }
    let first = &dist.placebos[0].scaled;
    Ok(first
        .periods()
        .map(|t| {
            let mut v = dist.at(t);
            v.sort_by(f64::total_cmp);
            Band {
                period: t,
                lo: quantile_sorted(&v, levels.0),
                hi: quantile_sorted(&v, levels.1),
            }
        })
        .collect())
}

/// Mean effect over a window, with the quantile band of the placebos'
/// window means.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedEffect {
    pub value: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub periods: Vec<i64>,
    pub n_placebos: usize,
}

impl AveragedEffect {
    pub fn significant(&self) -> bool {
        self.value < self.band_lo || self.value > self.band_hi
    }
}

fn window_mean(series: &TimeSeries, periods: &[i64]) -> Result<f64> {
    let mut sum = 0.0;
    for &t in periods {
        sum += series
            .get(t)
            .ok_or_else(|| Error::Range(format!("period {t} missing from effect series")))?;
    }
    Ok(sum / periods.len() as f64)
}

/// Averages treated effects over `periods` (normally `0..=T1`).
pub fn averaged_effect(
    fit: &SynthFit,
    dist: &PlaceboDistribution,
    periods: &[i64],
    levels: (f64, f64),
) -> Result<AveragedEffect> {
    if periods.is_empty() {
        return Err(Error::Range("no periods to average over".into()));
    }
    let value = window_mean(&fit.effects, periods)?;
    let mut means = dist
        .placebos
        .iter()
        .map(|p| window_mean(&p.scaled, periods))
        .collect::<Result<Vec<f64>>>()?;
    means.sort_by(f64::total_cmp);
    Ok(AveragedEffect {
        value,
        band_lo: quantile_sorted(&means, levels.0),
        band_hi: quantile_sorted(&means, levels.1),
        periods: periods.to_vec(),
        n_placebos: means.len(),
    })
}

/// Averaged effect over every post period of the problem the fit came from.
pub fn averaged_post_effect(
    fit: &SynthFit,
    dist: &PlaceboDistribution,
    post_periods: &[i64],
) -> Result<AveragedEffect> {
    averaged_effect(fit, dist, post_periods, DEFAULT_LEVELS)
}

/// A fit together with its placebo inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub fit: SynthFit,
    pub placebos: PlaceboDistribution,
    pub bands: Vec<Band>,
    pub averaged: AveragedEffect,
}

impl Inference {
    /// Writes `outcome,period,effect,band_lo,band_hi,n_placebos,excluded_donors`.
    pub fn write_tidy_csv<W: Write>(&self, outcome: &str, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "outcome",
            "period",
            "effect",
            "band_lo",
            "band_hi",
            "n_placebos",
            "excluded_donors",
        ])?;
        let excluded = self.placebos.excluded_names().join(";");
        let n = self.placebos.placebos.len().to_string();
        for (band, (t, effect)) in self.bands.iter().zip(self.fit.effects.iter()) {
            debug_assert_eq!(band.period, t);
            w.write_record([
                outcome,
                &t.to_string(),
                &effect.to_string(),
                &band.lo.to_string(),
                &band.hi.to_string(),
                &n,
                &excluded,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fit, placebos, pointwise bands and the averaged post effect.
pub fn run_inference(problem: &SynthProblem<'_>, config: EstimatorConfig) -> Result<Inference> {
    let fit = estimate(problem, config)?;
    let placebos = placebo_distribution(problem, config, fit.rmse_pre)?;
    let bands = pointwise_band(&placebos, DEFAULT_LEVELS)?;
    let averaged = averaged_post_effect(&fit, &placebos, problem.post_periods())?;
    Ok(Inference {
        fit,
        placebos,
        bands,
        averaged,
    })
}

/// Falsification result: the estimator fitted only on early pre-periods and
/// evaluated on the held-out stretch just before the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Falsification {
    pub inference: Inference,
    pub last_fit_period: i64,
    pub holdout: Vec<i64>,
}

/// Splits the pre-anchor periods of `panel` into a fitting window (periods
/// ending more than `cutoff_days` before the anchor) and the held-out periods
/// that overlap the final `cutoff_days`.
pub fn falsification_windows(
    panel: &PanelSeries,
    cal: &PeriodCalendar,
    cutoff_days: u32,
) -> Result<(Vec<i64>, Vec<i64>)> {
    let held = cal.periods_covering_days_before(cutoff_days);
    let first_holdout = -held;
    let range = panel.range();
    if range.last < -1 || range.first > first_holdout {
        return Err(Error::Range(format!(
            "panel periods {}..={} do not cover the {cutoff_days}-day window before the anchor",
            range.first, range.last
        )));
    }
    let fit: Vec<i64> = (range.first..first_holdout).collect();
    if fit.is_empty() {
        return Err(Error::Range(format!(
            "no pre-anchor data beyond the {cutoff_days}-day falsification window"
        )));
    }
    Ok((fit, (first_holdout..0).collect()))
}

/// Fits on data more than `cutoff_days` before the anchor and averages the
/// "effects" over the held-out final `cutoff_days`.
pub fn falsification_run(
    panel: &PanelSeries,
    treated: &str,
    donors: Vec<String>,
    cal: &PeriodCalendar,
    cutoff_days: u32,
    config: EstimatorConfig,
) -> Result<Falsification> {
    let (fit_periods, holdout) = falsification_windows(panel, cal, cutoff_days)?;
    let last_fit_period = *fit_periods.last().expect("nonempty");
    let problem = SynthProblem::new(
        panel,
        treated,
        donors,
        fit_periods.clone(),
        fit_periods,
        holdout.clone(),
    )?;
    let inference = run_inference(&problem, config)?;
    Ok(Falsification {
        inference,
        last_fit_period,
        holdout,
    })
}

/// One temporal aggregation level of the robustness suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregationLevel {
    pub days: u32,
    pub config: EstimatorConfig,
}

/// 1-day fits every 10th pre period and 7-day every 4th, both with a searched
/// V; 10- and 28-day use every pre period with identity V.
pub fn default_levels() -> Vec<AggregationLevel> {
    vec![
        AggregationLevel {
            days: 1,
            config: EstimatorConfig::subsampled(10),
        },
        AggregationLevel {
            days: 7,
            config: EstimatorConfig::subsampled(4),
        },
        AggregationLevel {
            days: 10,
            config: EstimatorConfig::default(),
        },
        AggregationLevel {
            days: 28,
            config: EstimatorConfig::default(),
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub level: AggregationLevel,
    pub panel: PanelSeries,
    pub inference: Inference,
}

/// Runs the estimator at each aggregation level. `build` produces the
/// (already restricted and transformed) panel for a calendar with the
/// level's period length.
pub fn aggregation_suite<F>(
    cal: &PeriodCalendar,
    treated: &str,
    levels: &[AggregationLevel],
    mut build: F,
) -> Result<Vec<LevelResult>>
where
    F: FnMut(&PeriodCalendar) -> Result<PanelSeries>,
{
    levels
        .iter()
        .map(|level| {
            let cal = cal.with_length(level.days)?;
            let panel = build(&cal)?;
            let donors: Vec<String> = panel
                .countries()
                .iter()
                .filter(|c| c.as_str() != treated)
                .cloned()
                .collect();
            let inference = {
                let problem = SynthProblem::standard(&panel, treated, donors)?;
                run_inference(&problem, level.config)?
            };
            Ok(LevelResult {
                level: *level,
                panel,
                inference,
            })
        })
        .collect()
}
