//! Fixed points of the participation map for an S-shaped response, across
//! platform prices.
//!
//! ```text
//! cargo run --example equilibria
//! ```

use synthpanel::diffusion::{equilibria, PopulationParams, ResponseFunction, DEFAULT_GRID};

fn main() -> synthpanel::Result<()> {
    let v = ResponseFunction::Logistic {
        height: 1.0,
        steepness: 10.0,
        midpoint: 0.5,
    };
    let p = PopulationParams::new(0.5, 0.0, 0.15, 1.0, -0.5)?;
    for q in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let eq = equilibria(q, &v, &p, DEFAULT_GRID)?;
        let points: Vec<String> = eq
            .points
            .iter()
            .map(|f| format!("{:.4} ({})", f.x, f.stability.as_str()))
            .collect();
        println!("q = {q:.2}: {}", points.join(", "));
    }
    Ok(())
}
