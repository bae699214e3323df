//! Fits on early pre-periods only and checks that the held-out "effects"
//! before the anchor are indistinguishable from zero.
//!
//! ```text
//! cargo run --example falsification
//! ```

use synthpanel::inference::falsification_run;
use synthpanel::panel::PeriodCalendar;
use synthpanel::sim::{factor_panel, FactorPanelConfig, TREATED};
use synthpanel::synth::EstimatorConfig;

fn main() -> synthpanel::Result<()> {
    let config = FactorPanelConfig {
        effect: -0.15,
        ..FactorPanelConfig::default()
    };
    let cal = PeriodCalendar::default();
    for seed in 0..5 {
        let panel = factor_panel(&config, seed);
        let f = falsification_run(
            &panel,
            TREATED,
            config.donor_names(),
            &cal,
            100,
            EstimatorConfig::default(),
        )?;
        let a = &f.inference.averaged;
        println!(
            "seed {seed}: fit through {}, hold-out {:?}..={:?}, averaged {:+.4} in [{:+.4}, {:+.4}]",
            f.last_fit_period,
            f.holdout.first().unwrap(),
            f.holdout.last().unwrap(),
            a.value,
            a.band_lo,
            a.band_hi
        );
    }
    Ok(())
}
