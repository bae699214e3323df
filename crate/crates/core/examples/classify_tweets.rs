//! Classifies a tweets CSV (the test fixture by default) and prints every
//! outcome panel.
//!
//! ```text
//! cargo run --example classify_tweets -- crates/core/tests/fixtures/tweets.csv
//! ```

use std::path::PathBuf;

use synthpanel::classify::{bot_filter, read_tweets_file, twitter_outcomes, Lexicons, TWITTER_OUTCOMES};
use synthpanel::panel::{PanelLayout, PeriodCalendar};

fn main() -> synthpanel::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tweets.csv"));
    let lex = Lexicons::builtin();
    let raw = read_tweets_file(&path)?;
    let n = raw.len();
    let tweets = bot_filter(raw, &lex);
    println!("{} of {n} tweets kept after the bot filter", tweets.len());

    let out = twitter_outcomes(&tweets, &lex, &PeriodCalendar::default(), &PanelLayout::default())?;
    for name in TWITTER_OUTCOMES {
        let panel = out.get(name)?;
        for (country, row) in panel.rows() {
            let cells: Vec<String> = panel.periods().zip(row).map(|(t, v)| format!("{t}:{v:.3}")).collect();
            println!("{name:<24}{country}  {}", cells.join("  "));
        }
    }
    Ok(())
}
