//! Best-response dynamics in a finite population against the analytic fixed
//! points.
//!
//! ```text
//! cargo run --release --example agent_simulation
//! ```

use synthpanel::diffusion::{
    agent_simulation, equilibria, PopulationParams, ResponseFunction, DEFAULT_GRID, DEFAULT_MAX_ROUNDS,
};

fn main() -> synthpanel::Result<()> {
    let v = ResponseFunction::Logistic {
        height: 1.0,
        steepness: 10.0,
        midpoint: 0.5,
    };
    let p = PopulationParams::new(0.5, 0.0, 0.15, 1.0, 0.0)?;
    let q = 0.2;
    let eq = equilibria(q, &v, &p, DEFAULT_GRID)?;
    println!("analytic stable points {:?}", eq.stable().collect::<Vec<_>>());
    for n in [10_000, 100_000, 1_000_000] {
        let sim = agent_simulation(n, q, &v, &p, 9, DEFAULT_MAX_ROUNDS)?;
        println!(
            "{n:>9} agents: from 0 -> {:.4} in {} rounds, from 1 -> {:.4} in {} rounds",
            sim.from_zero.x, sim.from_zero.rounds, sim.from_one.x, sim.from_one.rounds
        );
    }
    Ok(())
}
