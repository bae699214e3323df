//! Compares the participation map at two prices for negative, zero and
//! positive cost-valuation correlation.
//!
//! ```text
//! cargo run --example price_comparison
//! ```

use synthpanel::diffusion::{theorem1_check, PopulationParams, ResponseFunction, DEFAULT_GRID};

fn main() -> synthpanel::Result<()> {
    let v = ResponseFunction::linear(1.0)?;
    for rho in [-0.8, -0.3, 0.0, 0.3, 0.8] {
        let p = PopulationParams::new(0.5, 0.0, 0.3, 1.0, rho)?;
        let r = theorem1_check(0.25, 0.75, &v, &p, DEFAULT_GRID)?;
        let (lo, hi) = r
            .differences
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, d)| {
                (a.min(*d), b.max(*d))
            });
        let stable =
            |s: &synthpanel::diffusion::EquilibriumSet| s.stable().map(|x| format!("{x:.3}")).collect::<Vec<_>>();
        println!(
            "rho {rho:+.1}: phi(q') - phi(q) in [{lo:+.5}, {hi:+.5}], passed {}, stable {:?} -> {:?}",
            r.passed(),
            stable(&r.before),
            stable(&r.after)
        );
    }
    Ok(())
}
