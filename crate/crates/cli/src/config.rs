//! `key=value` run configuration layered as defaults < file < `--set`.

use std::fmt;
use std::path::Path;

use dynasty_core::{MarketState, ModelParams};

pub const DEFAULT_SEED: u64 = 42;

pub const KEYS: [&str; 11] = ["a0", "a1", "a2", "lambda", "rho", "epsilon", "gamma_agg", "alpha_mean", "x", "u", "seed"];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub state: MarketState,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn new(params: ModelParams, state: MarketState) -> Self {
        RunConfig { params, state, seed: None }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim();
        let value = value.trim();
        if key == "seed" {
            let s = value.parse::<u64>().map_err(|_| ConfigError(format!("seed must be a non-negative integer, got '{value}'")))?;
            self.seed = Some(s);
            return Ok(());
        }
        let v: f64 = value.parse().map_err(|_| ConfigError(format!("{key} must be a number, got '{value}'")))?;
        if !v.is_finite() {
            return Err(ConfigError(format!("{key} must be finite, got '{value}'")));
        }
        let p = &mut self.params;
        let slot = match key {
            "a0" => &mut p.a0,
            "a1" => &mut p.a1,
            "a2" => &mut p.a2,
            "lambda" => &mut p.lambda,
            "rho" => &mut p.rho,
            "epsilon" => &mut p.epsilon,
            "gamma_agg" => &mut p.gamma_agg,
            "alpha_mean" => &mut p.alpha_mean,
            "x" => &mut self.state.x,
            "u" => &mut self.state.u,
            _ => return Err(ConfigError(format!("unknown key '{key}' (expected one of {})", KEYS.join(", ")))),
        };
        *slot = v;
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn assign(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError(format!("expected key=value, got '{assignment}'")))?;
        self.set(k, v)
    }

    /// Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.assign(line).map_err(|e| ConfigError(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// Flag, then config, then `env_seed`, then [`DEFAULT_SEED`].
    pub fn resolve_seed(&self, flag: Option<u64>, env_seed: Option<&str>) -> Result<u64, ConfigError> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match env_seed {
            Some(s) => s.trim().parse().map_err(|_| ConfigError(format!("DYNASTY_SEED must be a non-negative integer, got '{s}'"))),
            None => Ok(DEFAULT_SEED),
        }
    }
}
