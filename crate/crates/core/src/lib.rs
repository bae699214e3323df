//! Synthetic-control estimation on country-by-period panels built from tweet
//! and protest-event records, with scaled-placebo inference, plus a threshold
//! model of collective action in which agents pay a price to join a platform.
//!
//! The modules follow the pipeline:
//!
//! - [`panel`]: period calendar, dense panels, sample restrictions
//! - [`classify`]: tweet lexicons, bot filtering, per-user flags, Twitter outcomes
//! - [`events`]: ACLED/ICEWS protest counts averaged across datasets
//! - [`synth`]: simplex-constrained weights, V search, effect series
//! - [`inference`]: placebo distributions, quantile bands, falsification, aggregation levels
//! - [`diffusion`]: participation fixed points, price comparative statics, agent simulation
//! - [`sim`]: factor-model panel generator used by the examples and tests
//! - [`cli`]: configuration, pipelines behind each subcommand, CSV/SVG output

pub mod classify;
pub mod cli;
pub mod diffusion;
pub mod error;
pub mod events;
pub mod inference;
pub mod panel;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
