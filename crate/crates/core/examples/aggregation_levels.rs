//! Re-estimates the tweet-count effect at 1-, 7-, 10- and 28-day periods on a
//! simulated corpus.
//!
//! ```text
//! cargo run --release --example aggregation_levels
//! ```

use synthpanel::classify::{bot_filter, twitter_outcomes, Lexicons, TWEETS, USERS};
use synthpanel::inference::{aggregation_suite, default_levels};
use synthpanel::panel::{restrict_sample, PanelLayout, PeriodCalendar, PeriodRange, SampleRestriction, Transform};
use synthpanel::sim::{synthetic_corpus, CorpusConfig};

fn main() -> synthpanel::Result<()> {
    let corpus = CorpusConfig {
        pre_days: 112,
        post_days: 56,
        ..CorpusConfig::default()
    };
    let lex = Lexicons::builtin();
    let (tweets, _) = synthetic_corpus(&corpus, 1);
    let tweets = bot_filter(tweets, &lex);

    let results = aggregation_suite(&PeriodCalendar::default(), &corpus.treated, &default_levels(), |cal| {
        let len = cal.period_length_days() as i64;
        let range = PeriodRange::new(-(112 / len), 56 / len - 1)?;
        let out = twitter_outcomes(&tweets, &lex, cal, &PanelLayout::with_range(range))?;
        let keep = restrict_sample(out.get(USERS)?, &SampleRestriction::TopShare { share: 0.8 })?;
        Ok(out
            .get(TWEETS)?
            .retain_countries(keep.countries())
            .transform(Transform::Log1p))
    })?;
    for r in &results {
        let a = &r.inference.averaged;
        println!(
            "{:>2}-day periods: {} periods, averaged {:+.4} in [{:+.4}, {:+.4}]",
            r.level.days,
            r.panel.range().len(),
            a.value,
            a.band_lo,
            a.band_hi
        );
    }
    Ok(())
}
