//! Fits a synthetic control to a simulated factor-model panel and prints the
//! donor weights and per-period effects.
//!
//! ```text
//! cargo run --example synthetic_control
//! ```

use synthpanel::sim::{factor_panel, FactorPanelConfig, TREATED};
use synthpanel::synth::{estimate, EstimatorConfig, SynthProblem};

fn main() -> synthpanel::Result<()> {
    let config = FactorPanelConfig {
        effect: -0.15,
        ..FactorPanelConfig::default()
    };
    let panel = factor_panel(&config, 42);
    let problem = SynthProblem::standard(&panel, TREATED, config.donor_names())?;
    let fit = estimate(&problem, EstimatorConfig::default())?;

    println!("pre-period RMSE {:.4}", fit.rmse_pre);
    println!("top weights:");
    for (donor, w) in fit.ranked_weights().into_iter().take(5) {
        println!("  {donor} {w:.4}");
    }
    for (t, e) in fit.effects.iter().filter(|(t, _)| *t >= -3) {
        println!("period {t:>3}  effect {e:+.4}");
    }
    Ok(())
}
