//! Run configuration and the pipelines behind each subcommand.
//!
//! A run is a pure function of its [`RunConfig`] and input files. Every CSV
//! starts with a `# synthpanel <version> config=<hash>` line and a header.

mod commands;
mod svg;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{PopulationParams, ResponseFunction};
use crate::error::{Error, Result};
use crate::panel::{PeriodCalendar, PERIOD_LENGTHS};

pub use commands::{
    cmd_aggregate, cmd_all_figures, cmd_build_panel, cmd_diffusion, cmd_estimate, cmd_falsify, cmd_placebo, Inputs,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "SYNTHPANEL_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tweets: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    /// Directory of `<kind>.txt` lexicon files; the shipped lexicons otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicons: Option<PathBuf>,
    pub anchor: String,
    pub period_days: u32,
    pub treated: String,
    /// Share of countries, ranked by mean unique users, kept as the Twitter sample.
    pub restriction: f64,
    pub pre_days: u32,
    /// Last day after the anchor to include; all available data when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_days: Option<u32>,
    pub cutoff_days: u32,
    pub out_dir: PathBuf,
    /// Outcomes to analyse; every outcome the inputs support when empty.
    pub outcomes: Vec<String>,

    pub mu_c: f64,
    pub mu_w: f64,
    pub sigma_c: f64,
    pub sigma_w: f64,
    pub rho: f64,
    /// `linear`, `logistic` or `table`.
    pub response: String,
    pub beta: f64,
    pub height: f64,
    pub steepness: f64,
    pub midpoint: f64,
    pub knots: Vec<(f64, f64)>,
    pub prices: Vec<f64>,
    pub grid_n: usize,
    /// Agents in the best-response simulation; 0 skips it.
    pub agents: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tweets: None,
            events: None,
            lexicons: None,
            anchor: "2018-07-01".into(),
            period_days: 10,
            treated: "UG".into(),
            restriction: 0.8,
            pre_days: 100,
            post_days: None,
            cutoff_days: 100,
            out_dir: PathBuf::from("out"),
            outcomes: Vec::new(),
            mu_c: 0.5,
            mu_w: 0.0,
            sigma_c: 0.3,
            sigma_w: 1.0,
            rho: -0.5,
            response: "linear".into(),
            beta: 1.0,
            height: 1.0,
            steepness: 10.0,
            midpoint: 0.5,
            knots: Vec::new(),
            prices: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            grid_n: 2001,
            agents: 20_000,
            seed: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn anchor_date(&self) -> Result<NaiveDate> {
        NaiveDate::parse_from_str(&self.anchor, "%Y-%m-%d")
            .map_err(|e| Error::Config(format!("anchor {:?}: {e}", self.anchor)))
    }

    pub fn calendar(&self) -> Result<PeriodCalendar> {
        PeriodCalendar::new(self.anchor_date()?, self.period_days)
    }

    pub fn population(&self) -> Result<PopulationParams> {
        PopulationParams::new(self.mu_c, self.mu_w, self.sigma_c, self.sigma_w, self.rho)
    }

    pub fn response_function(&self) -> Result<ResponseFunction> {
        let v = match self.response.as_str() {
            "linear" => ResponseFunction::Linear { beta: self.beta },
            "logistic" => ResponseFunction::Logistic {
                height: self.height,
                steepness: self.steepness,
                midpoint: self.midpoint,
            },
            "table" => ResponseFunction::Table {
                knots: self.knots.clone(),
            },
            other => return Err(Error::Config(format!("unknown response form {other:?}"))),
        };
        v.validate()?;
        Ok(v)
    }

    /// Checks paths and ranges before any work is done.
    pub fn validate(&self) -> Result<()> {
        for (name, path) in [
            ("tweets", &self.tweets),
            ("events", &self.events),
            ("lexicons", &self.lexicons),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!("{name} path {} does not exist", p.display())));
                }
            }
        }
        if !PERIOD_LENGTHS.contains(&self.period_days) {
            return Err(Error::Config(format!(
                "period length {} not one of {PERIOD_LENGTHS:?}",
                self.period_days
            )));
        }
        self.calendar()?;
        if !(self.restriction > 0.0 && self.restriction <= 1.0) {
            return Err(Error::Config(format!(
                "restriction {} outside (0, 1]",
                self.restriction
            )));
        }
        if self.pre_days == 0 {
            return Err(Error::Config("pre_days must be positive".into()));
        }
        if self.treated.len() != 2 || !self.treated.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(Error::Config(format!(
                "treated {:?} is not an ISO alpha-2 code",
                self.treated
            )));
        }
        if self.grid_n < 2 {
            return Err(Error::Config("grid_n must be at least 2".into()));
        }
        Ok(())
    }

    /// Short SHA-256 of the configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let text = toml::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn provenance(&self) -> String {
        format!("# synthpanel {VERSION} config={}", self.hash())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "synthpanel",
    version,
    about = "Synthetic-control panels, placebo inference and a platform-diffusion model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one level panel CSV per outcome.
    BuildPanel(Overrides),
    /// Fit synthetic controls and write effects, bands, weights and plots.
    Estimate(Overrides),
    /// Write every donor's raw and scaled placebo series.
    Placebo(Overrides),
    /// Fit on data before the cutoff and evaluate on the held-out window.
    Falsify(Overrides),
    /// Re-run the estimate at 1-, 7-, 10- and 28-day periods.
    Aggregate(Overrides),
    /// Equilibria, price comparisons and simulations of the diffusion model.
    Diffusion(Overrides),
    /// Run every command above.
    AllFigures(Overrides),
}

impl Command {
    pub fn overrides(&self) -> &Overrides {
        match self {
            Self::BuildPanel(o)
            | Self::Estimate(o)
            | Self::Placebo(o)
            | Self::Falsify(o)
            | Self::Aggregate(o)
            | Self::Diffusion(o)
            | Self::AllFigures(o) => o,
        }
    }
}

/// Flags that override values from the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tweets: Option<PathBuf>,
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub lexicons: Option<PathBuf>,
    #[arg(long)]
    pub anchor: Option<String>,
    #[arg(long)]
    pub period_days: Option<u32>,
    #[arg(long)]
    pub treated: Option<String>,
    #[arg(long)]
    pub restriction: Option<f64>,
    #[arg(long)]
    pub pre_days: Option<u32>,
    #[arg(long)]
    pub post_days: Option<u32>,
    #[arg(long)]
    pub cutoff_days: Option<u32>,
    #[arg(short, long)]
    pub out_dir: Option<PathBuf>,
    /// Repeat to select several outcomes.
    #[arg(long = "outcome")]
    pub outcomes: Vec<String>,
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(tweets, events, lexicons, post_days);
        set!(
            anchor,
            period_days,
            treated,
            restriction,
            pre_days,
            cutoff_days,
            out_dir,
            agents,
            seed
        );
        if !self.outcomes.is_empty() {
            c.outcomes = self.outcomes.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let config = cli.command.overrides().resolve()?;
    std::fs::create_dir_all(&config.out_dir)?;
    match &cli.command {
        Command::BuildPanel(_) => cmd_build_panel(&config),
        Command::Estimate(_) => cmd_estimate(&config),
        Command::Placebo(_) => cmd_placebo(&config),
        Command::Falsify(_) => cmd_falsify(&config),
        Command::Aggregate(_) => cmd_aggregate(&config),
        Command::Diffusion(_) => cmd_diffusion(&config),
        Command::AllFigures(_) => cmd_all_figures(&config),
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV}={s:?} is not a positive integer"))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "treated = \"KE\"\nperiod_days = 7\n").unwrap();
        let o = Overrides {
            config: Some(path),
            period_days: Some(28),
            ..Default::default()
        };
        let c = o.resolve().unwrap();
        assert_eq!(c.treated, "KE");
        assert_eq!(c.period_days, 28);
    }

    #[test]
    fn bad_config_rejected() {
        assert!(RunConfig::from_toml("unknown_key = 1").is_err());
        let c = RunConfig {
            period_days: 5,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = RunConfig {
            tweets: Some("/definitely/not/here.csv".into()),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            out_dir: "elsewhere".into(),
            ..a.clone()
        };
        let c = RunConfig { seed: 2, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
