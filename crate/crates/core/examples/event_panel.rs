//! Builds the protest event panel from an ACLED/ICEWS CSV (the test fixture
//! by default).
//!
//! ```text
//! cargo run --example event_panel -- crates/core/tests/fixtures/events.csv
//! ```

use std::path::PathBuf;

use synthpanel::events::{countries_in_both, event_panel, read_events_file};
use synthpanel::panel::{PanelLayout, PeriodCalendar, Transform};

fn main() -> synthpanel::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/events.csv"));
    let records = read_events_file(&path)?;
    println!(
        "{} records; countries in both datasets: {:?}",
        records.len(),
        countries_in_both(&records)
    );
    let panel = event_panel(
        &records,
        &PeriodCalendar::default(),
        &PanelLayout::default(),
        Transform::Level,
    )?;
    for (country, row) in panel.rows() {
        let cells: Vec<String> = panel.periods().zip(row).map(|(t, v)| format!("{t}:{v}")).collect();
        println!("{country}  {}", cells.join("  "));
    }
    Ok(())
}
