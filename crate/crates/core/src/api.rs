//! Entry points for front ends: a run, a tuning schedule or a generated stream
//! from a flat configuration. The CLI and any scripting bindings go through
//! these so both see the same behaviour and the same error text.

use std::path::Path;

use thiserror::Error;

use crate::config::{ConfigError, FlatConfig, SolverChoice};
use crate::data::{generate_synthetic, parse_stream, DataError, ParseReport, SyntheticFlowSpec};
use crate::dp::DpSolver;
use crate::engine::{run_backtest_with, BacktestResult, EngineError};
use crate::lob::BookMessage;
use crate::oracle::OracleSolver;
use crate::problem::IntrinsicSolver;
use crate::tuner::{sliding_schedule, TuneReport};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Builds the solver a config asks for.
pub fn solver_for(cfg: &FlatConfig) -> Result<Box<dyn IntrinsicSolver>, ConfigError> {
    Ok(match cfg.solver()? {
        SolverChoice::Dp => Box::new(DpSolver::uniform(cfg.m)),
        SolverChoice::Oracle { budget } => Box::new(OracleSolver { budget }),
    })
}

/// Reads a message file with the config's lot size and parse mode.
pub fn load_stream(cfg: &FlatConfig, data: &Path) -> Result<(Vec<BookMessage>, ParseReport), Error> {
    cfg.validate()?;
    let parsed = parse_stream(data, cfg.lot_mwh, cfg.parse_mode)?;
    Ok((parsed.messages, parsed.report))
}

pub fn run_stream(cfg: &FlatConfig, stream: &[BookMessage]) -> Result<BacktestResult, Error> {
    let backtest = cfg.backtest()?;
    let mut solver = solver_for(cfg)?;
    Ok(run_backtest_with(&backtest, stream, solver.as_mut())?)
}

pub fn run(cfg: &FlatConfig, data: &Path) -> Result<BacktestResult, Error> {
    let (stream, _) = load_stream(cfg, data)?;
    run_stream(cfg, &stream)
}

pub fn tune_stream(cfg: &FlatConfig, stream: &[BookMessage]) -> Result<TuneReport, Error> {
    Ok(sliding_schedule(stream, &cfg.tune()?)?)
}

pub fn tune(cfg: &FlatConfig, data: &Path) -> Result<TuneReport, Error> {
    let (stream, _) = load_stream(cfg, data)?;
    tune_stream(cfg, &stream)
}

/// Generates a synthetic stream from `key=value` settings of
/// [`SyntheticFlowSpec`]; unknown keys are rejected by name.
pub fn generate<K: AsRef<str>, V: AsRef<str>>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<Vec<BookMessage>, ConfigError> {
    let mut table = toml::Table::try_from(SyntheticFlowSpec::default()).expect("spec serialises");
    for (k, v) in pairs {
        let key = k.as_ref();
        let Some(slot) = table.get(key) else {
            return Err(ConfigError::UnknownKey { key: key.to_string() });
        };
        let raw = v.as_ref().trim();
        let value = match slot {
            toml::Value::Integer(_) => raw.parse::<i64>().map(toml::Value::Integer).ok(),
            toml::Value::Float(_) => raw.parse::<f64>().map(toml::Value::Float).ok(),
            _ => None,
        }
        .ok_or_else(|| ConfigError::InvalidValue { key: key.to_string(), reason: format!("not a number: {raw:?}") })?;
        table.insert(key.to_string(), value);
    }
    let spec: SyntheticFlowSpec =
        table.try_into().map_err(|e: toml::de::Error| ConfigError::InvalidValue { key: "generator".into(), reason: e.message().to_string() })?;
    spec.validate().map_err(|reason| ConfigError::InvalidValue { key: "generator".into(), reason })?;
    Ok(generate_synthetic(&spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{planted_pair, write_stream};

    #[test]
    fn planted_pair_through_flat_config() {
        let cfg = FlatConfig::from_pairs([
            ("eta_in", "1"),
            ("eta_out", "1"),
            ("technical_delay_ms", "0"),
            ("solve_time", "fixed:0"),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pair.csv");
        write_stream(std::fs::File::create(&path).unwrap(), &planted_pair(0), 0.1).unwrap();
        let r = run(&cfg, &path).unwrap();
        assert!((r.reward - 318.20).abs() < 1e-9);
        let oracle = FlatConfig { solver: "oracle".into(), ..cfg };
        assert!((run(&oracle, &path).unwrap().reward - 318.20).abs() < 1e-9);
    }

    #[test]
    fn errors_name_the_key() {
        let err = generate([("products", "many")]).unwrap_err();
        assert_eq!(err.key(), Some("products"));
        let err = generate([("seeds", "1")]).unwrap_err();
        assert_eq!(err.key(), Some("seeds"));
        assert_eq!(generate([("products", "2"), ("seed", "3")]).unwrap(), generate([("seed", "3"), ("products", "2")]).unwrap());
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let err = run(&FlatConfig::default(), Path::new("/nonexistent/stream.csv")).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
