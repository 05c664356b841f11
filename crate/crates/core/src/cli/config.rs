//! Flat `key = value` run configuration.

use std::path::PathBuf;
use std::str::FromStr;

use crate::fixed_point::SolverSettings;
use crate::model::ModelParams;
use crate::oracle::GridSpec;

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Finite,
    Steady,
    Constant,
    Oracle,
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "finite" => Ok(Self::Finite),
            "steady" => Ok(Self::Steady),
            "constant" => Ok(Self::Constant),
            "oracle" => Ok(Self::Oracle),
            other => Err(format!(
                "unknown policy `{other}` (finite|steady|constant|oracle)"
            )),
        }
    }
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Finite => "finite",
            Self::Steady => "steady",
            Self::Constant => "constant",
            Self::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    Closed,
    Open,
    Both,
}

impl FromStr for ModeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "closed" => Ok(Self::Closed),
            "open" => Ok(Self::Open),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown mode `{other}` (closed|open|both)")),
        }
    }
}

impl ModeChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Closed => "closed",
            Self::Open => "open",
            Self::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arrival_prob: f64,
    pub cost_max: f64,
    pub discount: f64,
    pub reset_age: f64,
    pub initial_age: f64,
    pub horizon: usize,

    pub tolerance: f64,
    pub max_iter: usize,
    pub initial_delta: f64,

    pub replications: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub constant_price: f64,
    pub mode: ModeChoice,

    /// Defaults to `1e-3 * cost_max` when unset.
    pub price_step: Option<f64>,
    pub age_step: f64,
    pub oracle_horizon: usize,

    pub horizons: Vec<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverSettings::default();
        Self {
            arrival_prob: 0.5,
            cost_max: 1.0,
            discount: 0.9,
            reset_age: 0.1,
            initial_age: 2.0,
            horizon: 100,
            tolerance: solver.tolerance,
            max_iter: solver.max_iter,
            initial_delta: solver.initial_delta,
            replications: 10_000,
            seed: 1,
            policy: PolicyKind::Finite,
            constant_price: 0.6,
            mode: ModeChoice::Both,
            price_step: None,
            age_step: 1e-2,
            oracle_horizon: 8,
            horizons: vec![20, 50, 100, 200],
            out: PathBuf::from("."),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

impl RunConfig {
    /// Read `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut config = Self::default();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", number + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "arrival_prob" => self.arrival_prob = parse(key, value)?,
            "cost_max" => self.cost_max = parse(key, value)?,
            "discount" => self.discount = parse(key, value)?,
            "reset_age" => self.reset_age = parse(key, value)?,
            "initial_age" => self.initial_age = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "initial_delta" => self.initial_delta = parse(key, value)?,
            "replications" => self.replications = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "policy" => self.policy = parse(key, value)?,
            "constant_price" => self.constant_price = parse(key, value)?,
            "mode" => self.mode = parse(key, value)?,
            "price_step" => self.price_step = Some(parse(key, value)?),
            "age_step" => self.age_step = parse(key, value)?,
            "oracle_horizon" => self.oracle_horizon = parse(key, value)?,
            "horizons" => {
                self.horizons = value
                    .split(',')
                    .map(|h| parse(key, h.trim()))
                    .collect::<Result<_, _>>()?
            }
            "out" => self.out = PathBuf::from(value),
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(
            self.arrival_prob,
            self.cost_max,
            self.discount,
            self.reset_age,
            self.initial_age,
            self.horizon,
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            initial_delta: self.initial_delta,
            tolerance: self.tolerance,
            max_iter: self.max_iter,
        }
    }

    /// Default oracle grid for `params`, with the configured steps.
    pub fn grid(&self, params: &ModelParams) -> GridSpec {
        let mut grid = GridSpec::default_for(params);
        if let Some(step) = self.price_step {
            grid.price_step = step;
        }
        grid.age_step = self.age_step;
        grid
    }

    /// Check everything up front so no command starts on a bad config.
    pub fn validate(&self) -> Result<ModelParams, CliError> {
        let params = self.params()?;
        let config_err = |e: crate::Error| CliError::Config(e.to_string());
        self.solver().validate().map_err(config_err)?;
        self.grid(&params.with_horizon(self.oracle_horizon))
            .validate()
            .map_err(config_err)?;
        if self.replications == 0 {
            return Err(CliError::Config("`replications` must be at least 1".into()));
        }
        if self.oracle_horizon == 0 {
            return Err(CliError::Config(
                "`oracle_horizon` must be at least 1".into(),
            ));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(CliError::Config(
                "`horizons` must be a nonempty list of positive slots".into(),
            ));
        }
        if !(0.0..=self.cost_max).contains(&self.constant_price) {
            return Err(CliError::Config(
                "`constant_price` must lie in [0, cost_max]".into(),
            ));
        }
        Ok(params)
    }

    /// Resolved configuration in a fixed order, for provenance headers.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("arrival_prob", self.arrival_prob.to_string()),
            ("cost_max", self.cost_max.to_string()),
            ("discount", self.discount.to_string()),
            ("reset_age", self.reset_age.to_string()),
            ("initial_age", self.initial_age.to_string()),
            ("horizon", self.horizon.to_string()),
            ("tolerance", self.tolerance.to_string()),
            ("max_iter", self.max_iter.to_string()),
            ("initial_delta", self.initial_delta.to_string()),
            ("replications", self.replications.to_string()),
            ("seed", self.seed.to_string()),
            ("policy", self.policy.as_str().to_string()),
            ("constant_price", self.constant_price.to_string()),
            ("mode", self.mode.as_str().to_string()),
            (
                "price_step",
                self.price_step
                    .map_or_else(|| (1e-3 * self.cost_max).to_string(), |s| s.to_string()),
            ),
            ("age_step", self.age_step.to_string()),
            ("oracle_horizon", self.oracle_horizon.to_string()),
            (
                "horizons",
                self.horizons
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("out", self.out.display().to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let text = "# comment\narrival_prob = 0.7\n\nhorizons = 5, 10 # trailing\npolicy=steady\nprice_step = 0.01\n";
        let cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.arrival_prob, 0.7);
        assert_eq!(cfg.horizons, vec![5, 10]);
        assert_eq!(cfg.policy, PolicyKind::Steady);
        assert_eq!(cfg.price_step, Some(0.01));
        assert_eq!(cfg.cost_max, 1.0);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::from_text("bogus = 1").is_err());
        assert!(RunConfig::from_text("horizon").is_err());
        assert!(RunConfig::from_text("horizon = ten").is_err());
        assert!(RunConfig::from_text("mode = sideways").is_err());
    }

    #[test]
    fn validation_catches_bad_params() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig {
            discount: 1.5,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(CliError::Config(_))));
        let bad = RunConfig {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RunConfig {
            constant_price: 2.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RunConfig {
            horizons: vec![],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn entries_round_trip() {
        let cfg = RunConfig {
            seed: 99,
            horizons: vec![3, 4],
            price_step: Some(0.002),
            ..Default::default()
        };
        let text: String = cfg
            .entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        assert_eq!(RunConfig::from_text(&text).unwrap(), cfg);
    }
}
