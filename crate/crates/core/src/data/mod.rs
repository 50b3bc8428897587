//! Message-file I/O, result files and the synthetic order-flow generator.

mod results;
mod stream;
mod synthetic;

pub use results::{read_trades, summary, write_results, TradeRow};
pub use stream::{parse_stream, read_stream, write_stream, ParseMode, ParseReport, ParsedStream};
pub use synthetic::{generate_synthetic, planted_pair, SyntheticFlowSpec};

use chrono::{DateTime, SecondsFormat};
use thiserror::Error;

use crate::lob::TimeMs;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: timestamp {timestamp} precedes the previous row at {previous}")]
    Disorder { line: u64, timestamp: TimeMs, previous: TimeMs },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl DataError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), source }
    }
}

/// `2021-02-10T10:00:00Z` style timestamp of a millisecond instant.
pub fn iso(ms: TimeMs) -> String {
    match DateTime::from_timestamp_millis(ms) {
        Some(d) if ms % 1000 == 0 => d.to_rfc3339_opts(SecondsFormat::Secs, true),
        Some(d) => d.to_rfc3339_opts(SecondsFormat::Millis, true),
        None => ms.to_string(),
    }
}

pub fn parse_iso(s: &str) -> Option<TimeMs> {
    DateTime::parse_from_rfc3339(s.trim()).ok().map(|d| d.timestamp_millis())
}

/// Decimal places needed to print multiples of `lot` exactly.
pub(crate) fn lot_decimals(lot: f64) -> usize {
    (0..=9).find(|&d| {
        let x = lot * 10f64.powi(d as i32);
        (x - x.round()).abs() < 1e-9
    })
    .unwrap_or(9)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iso_round_trip() {
        let t = 1_612_951_200_000;
        assert_eq!(iso(t), "2021-02-10T10:00:00Z");
        assert_eq!(parse_iso(&iso(t)), Some(t));
        assert_eq!(parse_iso("2021-02-10T11:00:00+01:00"), Some(t));
        assert_eq!(parse_iso("yesterday"), None);
    }

    #[test]
    fn decimals() {
        assert_eq!(lot_decimals(0.1), 1);
        assert_eq!(lot_decimals(1.0), 0);
        assert_eq!(lot_decimals(0.25), 2);
    }
}
