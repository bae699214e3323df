//! Simulated data.
//!
//! [`factor_panel`] draws panels from a linear factor model with an additive
//! treatment effect: `Y_it = delta_t + lambda_t . mu_i + eps_it`, plus
//! `effect` for the treated unit from period 0 on. [`synthetic_corpus`]
//! draws raw tweet and event records for the full pipeline.

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::classify::TweetRecord;
use crate::events::{Dataset, EventRecord};
use crate::panel::{default_anchor, PanelSeries, PeriodRange};

pub const TREATED: &str = "TR";

#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanelConfig {
    pub donors: usize,
    pub pre_periods: usize,
    pub post_periods: usize,
    pub factors: usize,
    /// Standard deviation of the idiosyncratic error.
    pub noise_sd: f64,
    /// Standard deviation of each factor loading `lambda_t`.
    pub loading_sd: f64,
    /// Constant effect added to the treated unit in post periods.
    pub effect: f64,
    /// Level of the common component around which `delta_t` moves.
    pub baseline: f64,
}

impl Default for FactorPanelConfig {
    fn default() -> Self {
        Self {
            donors: 20,
            pre_periods: 20,
            post_periods: 10,
            factors: 2,
            noise_sd: 0.02,
            loading_sd: 0.2,
            effect: 0.0,
            baseline: 5.0,
        }
    }
}

impl FactorPanelConfig {
    pub fn donor_names(&self) -> Vec<String> {
        (0..self.donors).map(|i| format!("D{i:02}")).collect()
    }
}

/// Draws one panel. The treated unit is named [`TREATED`]; its factor
/// exposures come from the same distribution as the donors'.
pub fn factor_panel(config: &FactorPanelConfig, seed: u64) -> PanelSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let periods = config.pre_periods + config.post_periods;
    let loading = Normal::new(0.0, config.loading_sd).expect("finite sd");
    let noise = Normal::new(0.0, config.noise_sd).expect("finite sd");
    let step = Normal::new(0.0, 0.05).expect("finite sd");

    let mut delta = Vec::with_capacity(periods);
    let mut level = config.baseline;
    for _ in 0..periods {
        level += step.sample(&mut rng);
        delta.push(level);
    }
    let lambda: Vec<Vec<f64>> = (0..periods)
        .map(|_| (0..config.factors).map(|_| loading.sample(&mut rng)).collect())
        .collect();

    let mut names = vec![TREATED.to_string()];
    names.extend(config.donor_names());
    let first = -(config.pre_periods as i64);
    let rows = names
        .iter()
        .enumerate()
        .map(|(unit, _)| {
            let mu: Vec<f64> = (0..config.factors).map(|_| rng.random::<f64>()).collect();
            (0..periods)
                .map(|k| {
                    let common: f64 = lambda[k].iter().zip(&mu).map(|(l, m)| l * m).sum();
                    let treated = unit == 0 && first + k as i64 >= 0;
                    delta[k] + common + noise.sample(&mut rng) + if treated { config.effect } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let range = PeriodRange::new(first, first + periods as i64 - 1).expect("nonempty");
    PanelSeries::from_rows("y", names, range, rows).expect("consistent shape")
}

/// Raw records for a set of countries around an anchor date.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub countries: Vec<String>,
    pub treated: String,
    pub anchor: NaiveDate,
    pub pre_days: u32,
    pub post_days: u32,
    /// Mean daily tweets in the least active country.
    pub daily_tweets: f64,
    /// Proportional change in the treated country's tweeting from the anchor on.
    pub effect: f64,
    /// Mean daily protest events per dataset in the least active country.
    pub daily_events: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            countries: ["KE", "TZ", "RW", "UG", "NG", "GH", "ZA", "ET", "SN", "CM"]
                .map(String::from)
                .to_vec(),
            treated: "UG".into(),
            anchor: default_anchor(),
            pre_days: 200,
            post_days: 60,
            daily_tweets: 6.0,
            effect: -0.15,
            daily_events: 0.4,
        }
    }
}

const TEXTS: [&str; 12] = [
    "Heading to the market",
    "Good morning everyone",
    "Match day with friends",
    "Traffic is terrible today",
    "Join the protest at noon",
    "They will march against the new tax",
    "The president spoke tonight",
    "Parliament passed the budget",
    "Our MP ignored us again",
    "Boycott the tax on data",
    "Election campaign starts",
    "Nice weather for a walk",
];
const SOURCES: [&str; 4] = [
    "Twitter for Android",
    "Twitter for Android",
    "Twitter for iPhone",
    "Twitter Web Client",
];

/// Draws tweets and events. Each country has its own activity level and
/// seasonal loading on a common daily factor.
pub fn synthetic_corpus(config: &CorpusConfig, seed: u64) -> (Vec<TweetRecord>, Vec<EventRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = (config.pre_days + config.post_days) as i64;
    let start = config.anchor - Duration::days(config.pre_days as i64);
    let common: Vec<f64> = (0..days)
        .map(|d| 1.0 + 0.3 * (d as f64 * std::f64::consts::TAU / 30.0).sin())
        .collect();
    let mut tweets = Vec::new();
    let mut events = Vec::new();
    for (ci, country) in config.countries.iter().enumerate() {
        let scale = 1.0 + 0.35 * ci as f64;
        let loading: f64 = rng.random_range(0.5..1.5);
        let pool = (config.daily_tweets * scale * 4.0).ceil() as u64;
        let treated = *country == config.treated;
        for d in 0..days {
            let date = start + Duration::days(d);
            let post = date >= config.anchor;
            let mut rate = config.daily_tweets * scale * (1.0 + loading * (common[d as usize] - 1.0));
            if treated && post {
                rate *= 1.0 + config.effect;
            }
            let n = draw_count(&mut rng, rate);
            for k in 0..n {
                let user = rng.random_range(0..pool);
                let secs = rng.random_range(0..86_400);
                let timestamp = (date.and_time(NaiveTime::MIN) + Duration::seconds(secs)).and_utc();
                // every 13th account opens during the sample; earlier tweets by it are skipped
                let created = if user % 13 == 0 {
                    start + Duration::days((user * 7) as i64 % days)
                } else {
                    start - Duration::days(30 + (user * 37 % 1500) as i64)
                };
                let created = created.and_time(NaiveTime::MIN).and_utc();
                if timestamp < created {
                    continue;
                }
                let rate_per_day = if user % 3 == 0 { 0.4 } else { 3.0 };
                let statuses = ((timestamp - created).num_days() as f64 * rate_per_day) as u64;
                let description = match user % 17 {
                    0 => "Hiring now, send CV",
                    5 | 10 => "University student",
                    _ => "",
                };
                tweets.push(TweetRecord {
                    tweet_id: format!("{country}-{d:04}-{k:03}"),
                    user_id: format!("{country}{user:05}"),
                    timestamp,
                    country_code: country.clone(),
                    text: TEXTS[rng.random_range(0..TEXTS.len())].to_string(),
                    source: SOURCES[rng.random_range(0..SOURCES.len())].to_string(),
                    user_created_at: created,
                    statuses_count: statuses,
                    user_description: description.to_string(),
                    user_location: String::new(),
                    user_lang: "en".into(),
                    tweet_lang: "en".into(),
                });
            }
            for dataset in [Dataset::Acled, Dataset::Icews] {
                let n = draw_count(&mut rng, config.daily_events * scale);
                for _ in 0..n {
                    events.push(EventRecord {
                        dataset,
                        country_code: country.clone(),
                        date,
                        event_type: dataset.protest_label().to_string(),
                    });
                }
            }
        }
    }
    (tweets, events)
}

fn draw_count(rng: &mut ChaCha8Rng, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as u64
}
