use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use super::svg::{Chart, Line};
use super::RunConfig;
use crate::classify::{
    bot_filter, is_proportion, read_tweets_file, twitter_outcomes, Lexicons, TweetRecord, TWITTER_OUTCOMES, USERS,
};
use crate::diffusion::{agent_simulation, equilibria, theorem1_check, DEFAULT_MAX_ROUNDS};
use crate::error::{Error, Result};
use crate::events::{event_panel, read_events_file, EventRecord, EVENTS};
use crate::inference::{
    aggregation_suite, default_levels, falsification_run, run_inference, AggregationLevel, Inference,
};
use crate::panel::{
    assign_period, normalize_at_reference, restrict_sample, PanelLayout, PanelSeries, PeriodCalendar, PeriodRange,
    SampleRestriction, TimeSeries, Transform,
};
use crate::synth::{EstimatorConfig, SynthProblem};

/// Parsed input records; tweets are already bot-filtered.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub tweets: Option<Vec<TweetRecord>>,
    pub events: Option<Vec<EventRecord>>,
    pub lexicons: Lexicons,
}

impl Inputs {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let lexicons = match &config.lexicons {
            Some(dir) => Lexicons::load_dir(dir)?,
            None => Lexicons::builtin(),
        };
        let tweets = match &config.tweets {
            Some(p) => Some(bot_filter(read_tweets_file(p)?, &lexicons)),
            None => None,
        };
        let events = config.events.as_deref().map(read_events_file).transpose()?;
        Ok(Self {
            tweets,
            events,
            lexicons,
        })
    }

    /// Requested outcomes, or every outcome the inputs support.
    pub fn outcomes(&self, config: &RunConfig) -> Result<Vec<String>> {
        let mut available: Vec<&str> = Vec::new();
        if self.tweets.is_some() {
            available.extend(TWITTER_OUTCOMES);
        }
        if self.events.is_some() {
            available.push(EVENTS);
        }
        if config.outcomes.is_empty() {
            if available.is_empty() {
                return Err(Error::Config("no tweets or events input configured".into()));
            }
            return Ok(available.iter().map(|s| s.to_string()).collect());
        }
        for o in &config.outcomes {
            if !available.contains(&o.as_str()) {
                let known = TWITTER_OUTCOMES.contains(&o.as_str()) || o == EVENTS;
                return Err(Error::Config(if known {
                    format!("outcome {o:?} needs an input file that is not configured")
                } else {
                    format!("unknown outcome {o:?}")
                }));
            }
        }
        Ok(config.outcomes.clone())
    }

    fn observed_span(&self, cal: &PeriodCalendar) -> Result<Option<(i64, i64)>> {
        let mut span: Option<(i64, i64)> = None;
        let mut see = |t: i64| span = Some(span.map_or((t, t), |(a, b)| (a.min(t), b.max(t))));
        for r in self.tweets.iter().flatten() {
            see(assign_period(r.timestamp, cal)?);
        }
        for r in self.events.iter().flatten().filter(|r| r.is_protest()) {
            see(cal.period_of_date(r.date)?);
        }
        Ok(span)
    }

    /// Observed periods clipped to `pre_days` before the anchor and, when
    /// configured, `post_days` after it.
    pub fn window(&self, config: &RunConfig, cal: &PeriodCalendar, pre_days: u32) -> Result<PeriodRange> {
        let first = -cal.periods_covering_days_before(pre_days);
        let last = config
            .post_days
            .map(|d| (d as u64).div_ceil(cal.period_length_days() as u64) as i64 - 1);
        match self.observed_span(cal)? {
            Some((lo, hi)) => {
                let hi = last.map_or(hi, |l| hi.min(l));
                PeriodRange::new(lo.max(first), hi)
            }
            None => PeriodRange::new(first, last.unwrap_or(0).max(first)),
        }
    }

    /// Level panels of every available outcome over `range`.
    pub fn level_panels(&self, cal: &PeriodCalendar, range: PeriodRange) -> Result<LevelPanels> {
        let layout = PanelLayout::with_range(range);
        let mut panels = BTreeMap::new();
        let mut undefined = BTreeMap::new();
        if let Some(tweets) = &self.tweets {
            let t = twitter_outcomes(tweets, &self.lexicons, cal, &layout)?;
            panels.extend(t.panels);
            undefined = t.undefined_cells;
        }
        if let Some(events) = &self.events {
            panels.insert(EVENTS.to_string(), event_panel(events, cal, &layout, Transform::Level)?);
        }
        Ok(LevelPanels { panels, undefined })
    }
}

pub struct LevelPanels {
    pub panels: BTreeMap<String, PanelSeries>,
    pub undefined: BTreeMap<String, Vec<(String, i64)>>,
}

impl LevelPanels {
    fn get(&self, outcome: &str) -> Result<&PanelSeries> {
        self.panels
            .get(outcome)
            .ok_or_else(|| Error::Config(format!("outcome {outcome:?} unavailable")))
    }

    /// Restricted, transformed panel ready for estimation. Twitter outcomes
    /// keep the top share of countries by mean unique users; events keep the
    /// countries present in both datasets.
    pub fn analysis_panel(&self, outcome: &str, config: &RunConfig) -> Result<PanelSeries> {
        let panel = self.get(outcome)?;
        let panel = if outcome == EVENTS {
            panel.clone()
        } else {
            let users = restrict_sample(
                self.get(USERS)?,
                &SampleRestriction::TopShare {
                    share: config.restriction,
                },
            )?;
            panel.retain_countries(users.countries())
        };
        if panel.country_index(&config.treated).is_none() {
            return Err(Error::Data(format!(
                "treated country {} is not in the {outcome} sample",
                config.treated
            )));
        }
        let transform = if is_proportion(outcome) {
            Transform::Level
        } else {
            Transform::Log1p
        };
        Ok(panel.transform(transform))
    }
}

fn level_config(days: u32) -> EstimatorConfig {
    default_levels()
        .into_iter()
        .find(|l| l.days == days)
        .map_or_else(EstimatorConfig::default, |l| l.config)
}

fn donors_of(panel: &PanelSeries, treated: &str) -> Vec<String> {
    panel
        .countries()
        .iter()
        .filter(|c| c.as_str() != treated)
        .cloned()
        .collect()
}

fn infer(panel: &PanelSeries, config: &RunConfig, estimator: EstimatorConfig) -> Result<Inference> {
    let problem = SynthProblem::standard(panel, &config.treated, donors_of(panel, &config.treated))?;
    run_inference(&problem, estimator).map_err(|e| in_outcome(e, panel.outcome()))
}

fn in_outcome(e: Error, outcome: &str) -> Error {
    match e {
        Error::DegenerateInference(m) => Error::DegenerateInference(format!("{outcome}: {m}")),
        Error::Range(m) => Error::Range(format!("{outcome}: {m}")),
        other => other,
    }
}

struct Out<'a> {
    config: &'a RunConfig,
    provenance: String,
}

impl<'a> Out<'a> {
    fn new(config: &'a RunConfig) -> Self {
        Self {
            config,
            provenance: config.provenance(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn csv(&self, name: &str, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
        let mut file = BufWriter::new(File::create(self.path(name))?);
        writeln!(file, "{}", self.provenance)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        Ok(w)
    }

    fn svg(&self, name: &str, chart: &Chart) -> Result<()> {
        std::fs::write(self.path(name), chart.render())?;
        Ok(())
    }

    fn tidy(&self, name: &str, outcome: &str, inference: &Inference) -> Result<()> {
        let mut file = BufWriter::new(File::create(self.path(name))?);
        writeln!(file, "{}", self.provenance)?;
        inference.write_tidy_csv(outcome, &mut file)?;
        file.flush()?;
        Ok(())
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn effect_chart(title: &str, inference: &Inference, vline: f64) -> Chart {
    let mut c = Chart::new(title, "period");
    c.band = inference.bands.iter().map(|b| (b.period as f64, b.lo, b.hi)).collect();
    c.lines.push(Line::new(
        "effect",
        inference.fit.effects.iter().map(|(t, v)| (t as f64, v)).collect(),
    ));
    c.vline = Some(vline);
    c.hline = Some(0.0);
    c
}

/// Writes `panel_<outcome>.csv` in long format for every selected outcome,
/// plus the proportion cells whose denominator was zero.
pub fn cmd_build_panel(config: &RunConfig) -> Result<()> {
    let inputs = Inputs::load(config)?;
    let cal = config.calendar()?;
    let range = inputs.window(config, &cal, config.pre_days)?;
    let levels = inputs.level_panels(&cal, range)?;
    let out = Out::new(config);
    for outcome in inputs.outcomes(config)? {
        let panel = levels.get(&outcome)?;
        let mut w = out.csv(
            &format!("panel_{outcome}.csv"),
            &["outcome", "country", "period", "value"],
        )?;
        for (country, row) in panel.rows() {
            for (t, v) in panel.periods().zip(row) {
                w.write_record([outcome.as_str(), country, &t.to_string(), &num(*v)])?;
            }
        }
        w.flush()?;
    }
    if inputs.tweets.is_some() {
        let mut w = out.csv("undefined_cells.csv", &["outcome", "country", "period"])?;
        for (outcome, cells) in &levels.undefined {
            for (c, t) in cells {
                w.write_record([outcome.as_str(), c, &t.to_string()])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn estimate_all(config: &RunConfig, inputs: &Inputs) -> Result<Vec<(String, PanelSeries, Inference)>> {
    let cal = config.calendar()?;
    let range = inputs.window(config, &cal, config.pre_days)?;
    let levels = inputs.level_panels(&cal, range)?;
    let estimator = level_config(config.period_days);
    inputs
        .outcomes(config)?
        .into_iter()
        .map(|o| {
            let panel = levels.analysis_panel(&o, config)?;
            let inference = infer(&panel, config, estimator)?;
            Ok((o, panel, inference))
        })
        .collect()
}

/// Effects with pointwise bands, donor weights, treated-versus-synthetic
/// paths and averaged post effects for each outcome.
pub fn cmd_estimate(config: &RunConfig) -> Result<()> {
    let inputs = Inputs::load(config)?;
    let out = Out::new(config);
    let mut summary = out.csv(
        "averaged_effects.csv",
        &[
            "outcome",
            "value",
            "band_lo",
            "band_hi",
            "n_placebos",
            "excluded_donors",
        ],
    )?;
    for (outcome, panel, inf) in estimate_all(config, &inputs)? {
        out.tidy(&format!("effects_{outcome}.csv"), &outcome, &inf)?;
        out.svg(
            &format!("effects_{outcome}.svg"),
            &effect_chart(&format!("{outcome}: effect"), &inf, -0.5),
        )?;

        let mut w = out.csv(&format!("weights_{outcome}.csv"), &["rank", "donor", "weight"])?;
        for (i, (donor, weight)) in inf.fit.ranked_weights().into_iter().enumerate() {
            w.write_record([&(i + 1).to_string(), donor, &num(weight)])?;
        }
        w.flush()?;

        let treated = panel.series(&config.treated).expect("treated is in the panel");
        let synthetic = TimeSeries::new(
            treated.first_period,
            treated
                .iter()
                .map(|(t, y)| y - inf.fit.effects.get(t).unwrap_or(0.0))
                .collect(),
        );
        let n = (panel.countries().len() - 1) as f64;
        let donor_mean = TimeSeries::new(
            treated.first_period,
            panel
                .periods()
                .map(|t| {
                    inf.fit
                        .donors
                        .iter()
                        .map(|d| panel.value(d, t).unwrap_or(0.0))
                        .sum::<f64>()
                        / n
                })
                .collect(),
        );
        let normalized = normalize_at_reference(&treated, &donor_mean, -1)?;
        let mut w = out.csv(
            &format!("synth_{outcome}.csv"),
            &["period", "treated", "synthetic", "donor_mean_normalized"],
        )?;
        for (t, y) in treated.iter() {
            w.write_record([
                &t.to_string(),
                &num(y),
                &num(synthetic.get(t).unwrap_or(f64::NAN)),
                &num(normalized.get(t).unwrap_or(f64::NAN)),
            ])?;
        }
        w.flush()?;
        let mut c = Chart::new(format!("{outcome}: {} and synthetic control", config.treated), "period");
        c.lines.push(Line::new(
            config.treated.clone(),
            treated.iter().map(|(t, v)| (t as f64, v)).collect(),
        ));
        c.lines
            .push(Line::new("synthetic", synthetic.iter().map(|(t, v)| (t as f64, v)).collect()).dashed());
        c.lines
            .push(Line::new("donor mean", normalized.iter().map(|(t, v)| (t as f64, v)).collect()).dashed());
        c.vline = Some(-0.5);
        out.svg(&format!("synth_{outcome}.svg"), &c)?;

        let a = &inf.averaged;
        summary.write_record([
            outcome.as_str(),
            &num(a.value),
            &num(a.band_lo),
            &num(a.band_hi),
            &a.n_placebos.to_string(),
            &inf.placebos.excluded_names().join(";"),
        ])?;
    }
    summary.flush()?;
    Ok(())
}

/// Every donor's raw and scaled placebo series, and the excluded donors.
pub fn cmd_placebo(config: &RunConfig) -> Result<()> {
    let inputs = Inputs::load(config)?;
    let out = Out::new(config);
    let mut excluded = out.csv("placebo_excluded.csv", &["outcome", "donor", "sigma", "reason"])?;
    for (outcome, _, inf) in estimate_all(config, &inputs)? {
        let mut w = out.csv(
            &format!("placebos_{outcome}.csv"),
            &["outcome", "donor", "sigma", "period", "raw", "scaled"],
        )?;
        for p in &inf.placebos.placebos {
            for ((t, raw), (_, scaled)) in p.raw.iter().zip(p.scaled.iter()) {
                w.write_record([
                    outcome.as_str(),
                    &p.donor,
                    &num(p.sigma),
                    &t.to_string(),
                    &num(raw),
                    &num(scaled),
                ])?;
            }
        }
        w.flush()?;
        for e in &inf.placebos.excluded {
            excluded.write_record([outcome.as_str(), &e.donor, &num(e.sigma), &e.reason])?;
        }
        let mut c = effect_chart(&format!("{outcome}: scaled placebos"), &inf, -0.5);
        for p in &inf.placebos.placebos {
            c.lines
                .push(Line::new("", p.scaled.iter().map(|(t, v)| (t as f64, v)).collect()).dashed());
        }
        out.svg(&format!("placebos_{outcome}.svg"), &c)?;
    }
    excluded.flush()?;
    Ok(())
}

/// Fits on periods ending more than `cutoff_days` before the anchor and
/// reports averaged effects over the held-out final `cutoff_days`.
pub fn cmd_falsify(config: &RunConfig) -> Result<()> {
    let inputs = Inputs::load(config)?;
    let cal = config.calendar()?;
    let range = inputs.window(config, &cal, config.pre_days + config.cutoff_days)?;
    let levels = inputs.level_panels(&cal, range)?;
    let estimator = level_config(config.period_days);
    let out = Out::new(config);
    let mut summary = out.csv(
        "falsify_summary.csv",
        &[
            "outcome",
            "last_fit_period",
            "holdout_first",
            "holdout_last",
            "value",
            "band_lo",
            "band_hi",
            "n_placebos",
        ],
    )?;
    for outcome in inputs.outcomes(config)? {
        let panel = levels.analysis_panel(&outcome, config)?;
        let f = falsification_run(
            &panel,
            &config.treated,
            donors_of(&panel, &config.treated),
            &cal,
            config.cutoff_days,
            estimator,
        )
        .map_err(|e| in_outcome(e, &outcome))?;
        out.tidy(&format!("falsify_{outcome}.csv"), &outcome, &f.inference)?;
        out.svg(
            &format!("falsify_{outcome}.svg"),
            &effect_chart(
                &format!("{outcome}: falsification"),
                &f.inference,
                f.last_fit_period as f64 + 0.5,
            ),
        )?;
        let a = &f.inference.averaged;
        summary.write_record([
            outcome.as_str(),
            &f.last_fit_period.to_string(),
            &f.holdout[0].to_string(),
            &f.holdout[f.holdout.len() - 1].to_string(),
            &num(a.value),
            &num(a.band_lo),
            &num(a.band_hi),
            &a.n_placebos.to_string(),
        ])?;
    }
    summary.flush()?;
    Ok(())
}

/// Rebuilds every panel at 1-, 7-, 10- and 28-day periods and re-estimates.
pub fn cmd_aggregate(config: &RunConfig) -> Result<()> {
    let inputs = Inputs::load(config)?;
    let cal = config.calendar()?;
    let out = Out::new(config);
    let levels: Vec<AggregationLevel> = default_levels();
    let mut summary = out.csv(
        "aggregate_summary.csv",
        &["outcome", "period_days", "value", "band_lo", "band_hi", "n_placebos"],
    )?;
    for outcome in inputs.outcomes(config)? {
        let results = aggregation_suite(&cal, &config.treated, &levels, |cal| {
            let range = inputs.window(config, cal, config.pre_days)?;
            inputs.level_panels(cal, range)?.analysis_panel(&outcome, config)
        })
        .map_err(|e| in_outcome(e, &outcome))?;
        let mut w = out.csv(
            &format!("aggregate_{outcome}.csv"),
            &["outcome", "period_days", "period", "effect", "band_lo", "band_hi"],
        )?;
        let mut chart = Chart::new(
            format!("{outcome}: averaged effect by period length"),
            "period length (days)",
        );
        let mut value = Vec::new();
        for r in &results {
            let days = r.level.days.to_string();
            for (b, (t, e)) in r.inference.bands.iter().zip(r.inference.fit.effects.iter()) {
                w.write_record([outcome.as_str(), &days, &t.to_string(), &num(e), &num(b.lo), &num(b.hi)])?;
            }
            let a = &r.inference.averaged;
            summary.write_record([
                outcome.as_str(),
                &days,
                &num(a.value),
                &num(a.band_lo),
                &num(a.band_hi),
                &a.n_placebos.to_string(),
            ])?;
            chart.band.push((r.level.days as f64, a.band_lo, a.band_hi));
            value.push((r.level.days as f64, a.value));
        }
        w.flush()?;
        chart.lines.push(Line::new("averaged effect", value));
        chart.hline = Some(0.0);
        out.svg(&format!("aggregate_{outcome}.svg"), &chart)?;
    }
    summary.flush()?;
    Ok(())
}

/// Fixed points of the participation map across `prices`, pairwise price
/// comparisons and, when `agents > 0`, best-response simulations.
pub fn cmd_diffusion(config: &RunConfig) -> Result<()> {
    let p = config.population()?;
    let v = config.response_function()?;
    let prices = &config.prices;
    if prices.is_empty() || prices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("prices must be nonempty and strictly increasing".into()));
    }
    let out = Out::new(config);
    let mut eq_csv = out.csv("diffusion_equilibria.csv", &["q", "x", "stability", "phi_minus_x"])?;
    let mut phi_csv = out.csv("diffusion_phi.csv", &["q", "x", "phi"])?;
    let mut chart = Chart::new("participation map", "x");
    chart
        .lines
        .push(Line::new("45 degree", vec![(0.0, 0.0), (1.0, 1.0)]).dashed());
    for &q in prices {
        let eq = equilibria(q, &v, &p, config.grid_n)?;
        for f in &eq.points {
            let gap = crate::diffusion::phi(f.x, q, &v, &p).map(|y| y - f.x)?;
            eq_csv.write_record([&num(q), &num(f.x), f.stability.as_str(), &num(gap)])?;
        }
        for (x, y) in &eq.grid {
            phi_csv.write_record([num(q), num(*x), y.map(num).unwrap_or_default()])?;
        }
        chart.lines.push(Line::new(
            format!("q = {q}"),
            eq.grid.iter().map(|(x, y)| (*x, y.unwrap_or(f64::NAN))).collect(),
        ));
    }
    eq_csv.flush()?;
    phi_csv.flush()?;
    out.svg("diffusion_phi.svg", &chart)?;

    let mut t1 = out.csv(
        "diffusion_theorem1.csv",
        &[
            "q",
            "q_prime",
            "omega_cw",
            "min_diff",
            "max_diff",
            "skipped",
            "violations",
            "passed",
        ],
    )?;
    let mut bad = out.csv("diffusion_theorem1_violations.csv", &["q", "q_prime", "x", "diff"])?;
    for w in prices.windows(2) {
        let r = theorem1_check(w[0], w[1], &v, &p, config.grid_n)?;
        let (lo, hi) = r
            .differences
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, d)| {
                (a.min(*d), b.max(*d))
            });
        t1.write_record([
            num(w[0]),
            num(w[1]),
            num(r.omega_cw),
            num(lo),
            num(hi),
            r.skipped.to_string(),
            r.violations.len().to_string(),
            r.passed().to_string(),
        ])?;
        for (x, d) in &r.violations {
            bad.write_record([num(w[0]), num(w[1]), num(*x), num(*d)])?;
        }
    }
    t1.flush()?;
    bad.flush()?;

    if config.agents > 0 {
        let mut sim = out.csv(
            "diffusion_simulation.csv",
            &["q", "start", "x", "rounds", "converged", "cycle", "empty_platform"],
        )?;
        for &q in prices {
            let r = agent_simulation(config.agents, q, &v, &p, config.seed, DEFAULT_MAX_ROUNDS)?;
            for b in [r.from_zero, r.from_one] {
                sim.write_record([
                    num(q),
                    num(b.start),
                    num(b.x),
                    b.rounds.to_string(),
                    b.converged.to_string(),
                    b.cycle.to_string(),
                    b.empty_platform.to_string(),
                ])?;
            }
        }
        sim.flush()?;
    }
    Ok(())
}

/// Every command; the empirical ones only when tweets or events are configured.
pub fn cmd_all_figures(config: &RunConfig) -> Result<()> {
    if config.tweets.is_some() || config.events.is_some() {
        cmd_build_panel(config)?;
        cmd_estimate(config)?;
        cmd_placebo(config)?;
        cmd_falsify(config)?;
        cmd_aggregate(config)?;
    }
    cmd_diffusion(config)
}
