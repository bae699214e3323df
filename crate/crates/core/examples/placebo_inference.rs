//! Scaled placebo bands and the averaged post-period effect, with and without
//! a true effect.
//!
//! ```text
//! cargo run --example placebo_inference
//! ```

use synthpanel::inference::run_inference;
use synthpanel::sim::{factor_panel, FactorPanelConfig, TREATED};
use synthpanel::synth::{EstimatorConfig, SynthProblem};

fn main() -> synthpanel::Result<()> {
    for effect in [0.0, -0.15] {
        let config = FactorPanelConfig {
            effect,
            ..FactorPanelConfig::default()
        };
        let panel = factor_panel(&config, 3);
        let problem = SynthProblem::standard(&panel, TREATED, config.donor_names())?;
        let inf = run_inference(&problem, EstimatorConfig::default())?;

        println!("true effect {effect}");
        for (band, (t, e)) in inf
            .bands
            .iter()
            .zip(inf.fit.effects.iter())
            .filter(|(b, _)| b.period >= 0)
        {
            let mark = if band.contains(e) { "" } else { "  *" };
            println!("  period {t:>2}  {e:+.4}  [{:+.4}, {:+.4}]{mark}", band.lo, band.hi);
        }
        let a = &inf.averaged;
        println!(
            "  averaged {:+.4}  [{:+.4}, {:+.4}] from {} placebos, significant: {}",
            a.value,
            a.band_lo,
            a.band_hi,
            a.n_placebos,
            a.significant()
        );
    }
    Ok(())
}
