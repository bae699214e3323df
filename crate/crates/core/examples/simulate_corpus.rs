//! Writes a simulated tweet and event corpus for the command-line tool.
//!
//! ```text
//! cargo run --example simulate_corpus -- /tmp/corpus
//! synthpanel all-figures --tweets /tmp/corpus/tweets.csv --events /tmp/corpus/events.csv -o /tmp/figures
//! ```

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use synthpanel::classify::write_tweets;
use synthpanel::events::write_events;
use synthpanel::sim::{synthetic_corpus, CorpusConfig};

fn main() -> synthpanel::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "corpus".into()));
    std::fs::create_dir_all(&dir)?;
    let config = CorpusConfig::default();
    let (tweets, events) = synthetic_corpus(&config, 7);
    write_tweets(&tweets, BufWriter::new(File::create(dir.join("tweets.csv"))?))?;
    write_events(&events, BufWriter::new(File::create(dir.join("events.csv"))?))?;
    println!(
        "{} tweets and {} events for {} countries in {}",
        tweets.len(),
        events.len(),
        config.countries.len(),
        dir.display()
    );
    Ok(())
}
