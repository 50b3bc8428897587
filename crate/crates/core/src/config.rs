//! Flat key-value configuration shared by the CLI and scripting front ends.
//!
//! Every setting is a top-level key with a scalar (or, for `phi_monthly`, an
//! array) value, so the same schema works as a TOML file, as `key=value`
//! overrides on the command line, and as a host-language mapping. Unknown keys
//! are rejected by name.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{BatteryParams, CostParams, MarketParams};
use crate::data::ParseMode;
use crate::engine::{BacktestConfig, Phi, SolveMode, SolveTimeMode, MINUTE_MS};
use crate::tuner::{BrentOptions, TuneConfig, WindowSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    /// The offending key, if the error concerns one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key } | ConfigError::InvalidValue { key, .. } => Some(key),
            _ => None,
        }
    }

    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::InvalidValue { key: key.to_string(), reason: reason.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatConfig {
    pub start_ms: Option<i64>,
    pub end_ms: Option<i64>,
    /// `updates` or `interval:<minutes>`.
    pub solve_mode: String,
    pub technical_delay_ms: i64,
    /// `measured` or `fixed:<ms>`.
    pub solve_time: String,
    pub gate_closure_lead_min: f64,
    pub trading_open_lead_min: Option<f64>,
    pub max_tradable: usize,
    pub product_duration_min: f64,
    pub s_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub eta_in: f64,
    pub eta_out: f64,
    pub s0: f64,
    pub nu_trade: f64,
    pub nu_deg: f64,
    pub lot_mwh: f64,
    pub kappa: i64,
    pub m: usize,
    pub phi: f64,
    pub phi_monthly: Option<Vec<f64>>,
    /// `dp` or `oracle`.
    pub solver: String,
    pub oracle_budget: f64,
    pub parse_mode: ParseMode,
    /// `month` or `days:<n>`.
    pub tune_window: String,
    pub phi_lo: f64,
    pub phi_hi: f64,
    pub tune_tol: f64,
    pub tune_max_evals: usize,
}

impl Default for FlatConfig {
    fn default() -> Self {
        let b = BatteryParams::default();
        let c = CostParams::default();
        let mk = MarketParams::default();
        let e = BacktestConfig::default();
        let t = TuneConfig::default();
        FlatConfig {
            start_ms: None,
            end_ms: None,
            solve_mode: "updates".into(),
            technical_delay_ms: e.technical_delay_ms,
            solve_time: "measured".into(),
            gate_closure_lead_min: (e.gate_closure_lead_ms / MINUTE_MS) as f64,
            trading_open_lead_min: None,
            max_tradable: e.max_tradable,
            product_duration_min: (e.product_duration_ms / MINUTE_MS) as f64,
            s_max: b.s_max,
            f_min: b.f_min,
            f_max: b.f_max,
            eta_in: b.eta_in,
            eta_out: b.eta_out,
            s0: b.s0,
            nu_trade: c.nu_trade,
            nu_deg: c.nu_deg,
            lot_mwh: mk.lot,
            kappa: mk.kappa,
            m: e.m,
            phi: 0.0,
            phi_monthly: None,
            solver: "dp".into(),
            oracle_budget: crate::oracle::DEFAULT_BUDGET,
            parse_mode: ParseMode::Strict,
            tune_window: "month".into(),
            phi_lo: t.phi_lo,
            phi_hi: t.phi_hi,
            tune_tol: t.brent.tol,
            tune_max_evals: t.brent.max_evals,
        }
    }
}

/// Which intrinsic solver a run uses.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum SolverChoice {
    Dp,
    Oracle { budget: f64 },
}

/// Keys that are unset by default and therefore absent from [`FlatConfig::to_table`].
const OPTIONAL_KEYS: [&str; 4] = ["start_ms", "end_ms", "trading_open_lead_min", "phi_monthly"];

/// Parses a bare value the way it would appear on the right of `key = ` in
/// TOML; anything that is not valid TOML is taken as a string.
fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn minutes(key: &str, min: f64) -> Result<i64, ConfigError> {
    if !min.is_finite() {
        return Err(ConfigError::invalid(key, "must be finite"));
    }
    Ok((min * MINUTE_MS as f64).round() as i64)
}

impl FlatConfig {
    /// All recognised keys.
    pub fn keys() -> Vec<String> {
        let mut keys: Vec<String> = FlatConfig::default().to_table().keys().cloned().collect();
        keys.extend(OPTIONAL_KEYS.iter().map(|k| k.to_string()));
        keys.sort();
        keys.dedup();
        keys
    }

    /// Serialises to a TOML table. Unset optional keys are omitted.
    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("flat config serialises")
    }

    /// Sets one key from a TOML value.
    pub fn set(&mut self, key: &str, value: toml::Value) -> Result<(), ConfigError> {
        if !Self::keys().iter().any(|k| k == key) {
            return Err(ConfigError::UnknownKey { key: key.to_string() });
        }
        let mut table = self.to_table();
        // integers are accepted where floats are expected
        let float_key = matches!(table.get(key), Some(toml::Value::Float(_))) || key == "trading_open_lead_min";
        let value = match value {
            toml::Value::Integer(i) if float_key => toml::Value::Float(i as f64),
            toml::Value::Array(items) if key == "phi_monthly" => toml::Value::Array(
                items
                    .into_iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) => toml::Value::Float(i as f64),
                        v => v,
                    })
                    .collect(),
            ),
            v => v,
        };
        table.insert(key.to_string(), value);
        *self = table.try_into().map_err(|e: toml::de::Error| ConfigError::invalid(key, e.message().to_string()))?;
        Ok(())
    }

    /// Sets one key from its textual form, as given on a command line.
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        self.set(key, parse_value(raw))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let mut cfg = FlatConfig::default();
        for (k, v) in table {
            cfg.set(&k, v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
        Self::from_toml_str(&text)
    }

    /// Builds a config from string pairs, as supplied by a host-language mapping.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<Self, ConfigError> {
        let mut cfg = FlatConfig::default();
        for (k, v) in pairs {
            cfg.set_str(k.as_ref(), v.as_ref())?;
        }
        Ok(cfg)
    }

    pub fn solve_mode(&self) -> Result<SolveMode, ConfigError> {
        let raw = self.solve_mode.trim();
        if raw == "updates" {
            return Ok(SolveMode::RelevantUpdates);
        }
        let min: f64 = raw
            .strip_prefix("interval:")
            .and_then(|m| m.trim().parse().ok())
            .ok_or_else(|| ConfigError::invalid("solve_mode", format!("expected `updates` or `interval:<minutes>`, got {raw:?}")))?;
        let ms = minutes("solve_mode", min)?;
        if ms <= 0 {
            return Err(ConfigError::invalid("solve_mode", "interval must be positive"));
        }
        Ok(SolveMode::Interval(ms))
    }

    pub fn solve_time(&self) -> Result<SolveTimeMode, ConfigError> {
        let raw = self.solve_time.trim();
        if raw == "measured" {
            return Ok(SolveTimeMode::Measured);
        }
        raw.strip_prefix("fixed:")
            .and_then(|m| m.trim().parse::<i64>().ok())
            .filter(|&ms| ms >= 0)
            .map(SolveTimeMode::Fixed)
            .ok_or_else(|| ConfigError::invalid("solve_time", format!("expected `measured` or `fixed:<ms>`, got {raw:?}")))
    }

    pub fn solver(&self) -> Result<SolverChoice, ConfigError> {
        match self.solver.trim() {
            "dp" => Ok(SolverChoice::Dp),
            "oracle" if self.oracle_budget > 0.0 => Ok(SolverChoice::Oracle { budget: self.oracle_budget }),
            "oracle" => Err(ConfigError::invalid("oracle_budget", "must be positive")),
            other => Err(ConfigError::invalid("solver", format!("expected `dp` or `oracle`, got {other:?}"))),
        }
    }

    pub fn battery(&self) -> Result<BatteryParams, ConfigError> {
        let b = BatteryParams {
            s_max: self.s_max,
            f_min: self.f_min,
            f_max: self.f_max,
            eta_in: self.eta_in,
            eta_out: self.eta_out,
            s0: self.s0,
        };
        let checks = [
            ("s_max", self.s_max > 0.0 && self.s_max.is_finite()),
            ("f_min", self.f_min < 0.0 && self.f_min.is_finite()),
            ("f_max", self.f_max > 0.0 && self.f_max.is_finite()),
            ("eta_in", self.eta_in > 0.0 && self.eta_in <= 1.0),
            ("eta_out", self.eta_out > 0.0 && self.eta_out <= 1.0),
            ("s0", (0.0..=self.s_max).contains(&self.s0)),
        ];
        for (key, ok) in checks {
            if !ok {
                let reason = b.validate().err().unwrap_or_else(|| "out of range".into());
                return Err(ConfigError::invalid(key, reason));
            }
        }
        Ok(b)
    }

    pub fn backtest(&self) -> Result<BacktestConfig, ConfigError> {
        let cost = CostParams { nu_trade: self.nu_trade, nu_deg: self.nu_deg };
        for (key, v) in [("nu_trade", self.nu_trade), ("nu_deg", self.nu_deg)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(key, "must be finite and non-negative"));
            }
        }
        if !(self.lot_mwh > 0.0) {
            return Err(ConfigError::invalid("lot_mwh", "must be positive"));
        }
        if self.kappa < 1 {
            return Err(ConfigError::invalid("kappa", "must be at least 1"));
        }
        let phi = match &self.phi_monthly {
            None => Phi::Constant(self.phi),
            Some(v) => Phi::Monthly(
                v.as_slice().try_into().map_err(|_| ConfigError::invalid("phi_monthly", format!("need 12 values, got {}", v.len())))?,
            ),
        };
        let cfg = BacktestConfig {
            start: self.start_ms,
            end: self.end_ms,
            solve_mode: self.solve_mode()?,
            technical_delay_ms: self.technical_delay_ms,
            solve_time: self.solve_time()?,
            gate_closure_lead_ms: minutes("gate_closure_lead_min", self.gate_closure_lead_min)?,
            trading_open_lead_ms: self.trading_open_lead_min.map(|m| minutes("trading_open_lead_min", m)).transpose()?,
            max_tradable: self.max_tradable,
            product_duration_ms: minutes("product_duration_min", self.product_duration_min)?,
            battery: self.battery()?,
            cost,
            market: MarketParams { lot: self.lot_mwh, kappa: self.kappa },
            m: self.m,
            phi,
        };
        cfg.validate().map_err(|e| match e {
            crate::engine::EngineError::InvalidConfig { key, reason } => {
                let key = match key {
                    "start" => "start_ms",
                    "technical_delay_ms" => "technical_delay_ms",
                    "solve_time_ms" => "solve_time",
                    "gate_closure_lead_ms" => "gate_closure_lead_min",
                    "product_duration_ms" => "product_duration_min",
                    "phi" if self.phi_monthly.is_some() => "phi_monthly",
                    other => other,
                };
                ConfigError::invalid(key, reason)
            }
            other => ConfigError::invalid("config", other.to_string()),
        })?;
        Ok(cfg)
    }

    pub fn window(&self) -> Result<WindowSpec, ConfigError> {
        let raw = self.tune_window.trim();
        if raw == "month" {
            return Ok(WindowSpec::Month);
        }
        raw.strip_prefix("days:")
            .and_then(|d| d.trim().parse::<u32>().ok())
            .filter(|&d| d > 0)
            .map(WindowSpec::Days)
            .ok_or_else(|| ConfigError::invalid("tune_window", format!("expected `month` or `days:<n>`, got {raw:?}")))
    }

    pub fn tune(&self) -> Result<TuneConfig, ConfigError> {
        if !(self.phi_lo >= 0.0 && self.phi_lo.is_finite()) {
            return Err(ConfigError::invalid("phi_lo", "must be finite and non-negative"));
        }
        if !(self.phi_hi >= self.phi_lo && self.phi_hi.is_finite()) {
            return Err(ConfigError::invalid("phi_hi", "must be finite and at least phi_lo"));
        }
        if !(self.tune_tol > 0.0) {
            return Err(ConfigError::invalid("tune_tol", "must be positive"));
        }
        if self.tune_max_evals == 0 {
            return Err(ConfigError::invalid("tune_max_evals", "must be at least 1"));
        }
        Ok(TuneConfig {
            base: self.backtest()?,
            window: self.window()?,
            phi_lo: self.phi_lo,
            phi_hi: self.phi_hi,
            brent: BrentOptions { tol: self.tune_tol, max_evals: self.tune_max_evals },
        })
    }

    /// Checks every derived setting.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.solver()?;
        self.tune().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_materialise() {
        let cfg = FlatConfig::default();
        cfg.validate().unwrap();
        let b = cfg.backtest().unwrap();
        assert_eq!(b, BacktestConfig::default());
        let t = cfg.to_table();
        assert_eq!(t["m"].as_integer(), Some(11));
        assert_eq!(t["nu_trade"].as_float(), Some(0.09));
    }

    #[test]
    fn toml_round_trip() {
        let text = "m = 51\nphi = 2\nsolve_mode = \"interval:60\"\nsolve_time = \"fixed:0\"\ntrading_open_lead_min = 480\n";
        let cfg = FlatConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.m, 51);
        assert_eq!(cfg.phi, 2.0);
        let b = cfg.backtest().unwrap();
        assert_eq!(b.solve_mode, SolveMode::Interval(3_600_000));
        assert_eq!(b.solve_time, SolveTimeMode::Fixed(0));
        assert_eq!(b.trading_open_lead_ms, Some(480 * MINUTE_MS));
        let again = FlatConfig::from_toml_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = FlatConfig::from_toml_str("s_maxx = 3").unwrap_err();
        assert_eq!(err.key(), Some("s_maxx"));
        assert!(err.to_string().contains("s_maxx"));
        let err = FlatConfig::from_pairs([("bogus", "1")]).unwrap_err();
        assert_eq!(err.key(), Some("bogus"));
    }

    #[test]
    fn bad_values_are_named() {
        let err = FlatConfig::from_pairs([("m", "eleven")]).unwrap_err();
        assert_eq!(err.key(), Some("m"));
        let cfg = FlatConfig::from_pairs([("eta_in", "1.5")]).unwrap();
        assert_eq!(cfg.backtest().unwrap_err().key(), Some("eta_in"));
        let cfg = FlatConfig::from_pairs([("solve_mode", "hourly")]).unwrap();
        assert_eq!(cfg.backtest().unwrap_err().key(), Some("solve_mode"));
        let cfg = FlatConfig::from_pairs([("phi_monthly", "[1, 2]")]).unwrap();
        assert_eq!(cfg.backtest().unwrap_err().key(), Some("phi_monthly"));
        let cfg = FlatConfig::from_pairs([("m", "1")]).unwrap();
        assert_eq!(cfg.backtest().unwrap_err().key(), Some("m"));
        let cfg = FlatConfig::from_pairs([("phi_hi", "-1")]).unwrap();
        assert_eq!(cfg.tune().unwrap_err().key(), Some("phi_hi"));
    }

    #[test]
    fn pairs_accept_plain_strings() {
        let cfg = FlatConfig::from_pairs([("solver", "oracle"), ("parse_mode", "lenient"), ("s_max", "1")]).unwrap();
        assert_eq!(cfg.solver().unwrap(), SolverChoice::Oracle { budget: 1e8 });
        assert_eq!(cfg.parse_mode, ParseMode::Lenient);
        assert_eq!(cfg.s_max, 1.0);
    }

    #[test]
    fn keys_cover_optionals() {
        let keys = FlatConfig::keys();
        for k in ["start_ms", "phi_monthly", "m", "tune_window"] {
            assert!(keys.iter().any(|x| x == k), "{k}");
        }
    }
}
