//! The order-message CSV format.
//!
//! ```text
//! timestamp_ms,product_start_iso,kind,order_id,side,price_eur_mwh,qty_mwh,valid_until_ms
//! 0,2021-02-10T10:00:00Z,add,1,ask,20.00,10.0,
//! ```
//!
//! Cancel rows may leave side, price and quantity empty.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{iso, lot_decimals, parse_iso, DataError};
use crate::lob::{BookMessage, LimitOrder, MessageKind, Price, Side, TimeMs};

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// The first malformed or out-of-order row is fatal.
    #[default]
    Strict,
    /// Malformed and out-of-order rows are skipped and counted.
    Lenient,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub rows: usize,
    pub messages: usize,
    pub skipped: usize,
    /// First few skip reasons, for diagnostics.
    pub skip_reasons: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedStream {
    pub messages: Vec<BookMessage>,
    pub report: ParseReport,
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    timestamp_ms: String,
    product_start_iso: String,
    kind: String,
    order_id: String,
    side: String,
    price_eur_mwh: String,
    qty_mwh: String,
    valid_until_ms: String,
}

fn field<T: std::str::FromStr>(name: &str, raw: &str) -> Result<T, String> {
    raw.trim().parse().map_err(|_| format!("bad {name} {raw:?}"))
}

fn convert(row: &Row, lot: f64) -> Result<BookMessage, String> {
    let timestamp: TimeMs = field("timestamp_ms", &row.timestamp_ms)?;
    let product = parse_iso(&row.product_start_iso).ok_or_else(|| format!("bad product_start_iso {:?}", row.product_start_iso))?;
    let kind = match row.kind.trim().to_ascii_lowercase().as_str() {
        "add" => MessageKind::Add,
        "modify" => MessageKind::Modify,
        "cancel" | "delete" => MessageKind::Cancel,
        other => return Err(format!("bad kind {other:?}")),
    };
    let order_id: u64 = field("order_id", &row.order_id)?;
    let cancel = kind == MessageKind::Cancel;
    let side = match row.side.trim().to_ascii_lowercase().as_str() {
        "bid" | "buy" => Side::Bid,
        "ask" | "sell" => Side::Ask,
        "" if cancel => Side::Bid,
        other => return Err(format!("bad side {other:?}")),
    };
    let price = if cancel && row.price_eur_mwh.trim().is_empty() {
        Price(0)
    } else {
        let eur: f64 = field("price_eur_mwh", &row.price_eur_mwh)?;
        Price::from_eur(eur).ok_or_else(|| format!("price {eur} is not on the 0.01 tick"))?
    };
    let qty = if cancel && row.qty_mwh.trim().is_empty() {
        0
    } else {
        let mwh: f64 = field("qty_mwh", &row.qty_mwh)?;
        let lots = (mwh / lot).round();
        if ((mwh / lot) - lots).abs() > 1e-6 {
            return Err(format!("quantity {mwh} MWh is not a multiple of the {lot} MWh lot"));
        }
        if lots <= 0.0 && !cancel {
            return Err(format!("quantity {mwh} MWh must be positive"));
        }
        lots as i64
    };
    let valid_until = match row.valid_until_ms.trim() {
        "" => None,
        raw => Some(field::<TimeMs>("valid_until_ms", raw)?),
    };
    Ok(BookMessage {
        timestamp,
        kind,
        order: LimitOrder { order_id, product, side, price, qty, entry_time: timestamp, valid_until },
    })
}

/// Parses an order-message CSV from any reader. `lot` is the minimum
/// trading unit in MWh that quantities must be multiples of.
pub fn read_stream<R: Read>(reader: R, lot: f64, mode: ParseMode) -> Result<ParsedStream, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut messages: Vec<BookMessage> = Vec::new();
    let mut report = ParseReport::default();
    let skip = |report: &mut ParseReport, line: u64, reason: String| {
        report.skipped += 1;
        if report.skip_reasons.len() < 10 {
            report.skip_reasons.push(format!("line {line}: {reason}"));
        }
    };
    for record in rdr.records() {
        report.rows += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                match mode {
                    ParseMode::Strict => return Err(DataError::Malformed { line, reason: e.to_string() }),
                    ParseMode::Lenient => {
                        skip(&mut report, line, e.to_string());
                        continue;
                    }
                }
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let parsed = record
            .deserialize::<Row>(None)
            .map_err(|e| e.to_string())
            .and_then(|row| convert(&row, lot));
        let msg = match parsed {
            Ok(m) => m,
            Err(reason) => match mode {
                ParseMode::Strict => return Err(DataError::Malformed { line, reason }),
                ParseMode::Lenient => {
                    skip(&mut report, line, reason);
                    continue;
                }
            },
        };
        if let Some(prev) = messages.last() {
            if msg.timestamp < prev.timestamp {
                match mode {
                    ParseMode::Strict => {
                        return Err(DataError::Disorder { line, timestamp: msg.timestamp, previous: prev.timestamp })
                    }
                    ParseMode::Lenient => {
                        skip(&mut report, line, format!("timestamp {} out of order", msg.timestamp));
                        continue;
                    }
                }
            }
        }
        messages.push(msg);
    }
    report.messages = messages.len();
    Ok(ParsedStream { messages, report })
}

pub fn parse_stream(path: &Path, lot: f64, mode: ParseMode) -> Result<ParsedStream, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_stream(std::io::BufReader::new(file), lot, mode)
}

/// Writes messages in the canonical CSV format.
pub fn write_stream<W: Write>(writer: W, messages: &[BookMessage], lot: f64) -> Result<(), DataError> {
    let decimals = lot_decimals(lot);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["timestamp_ms", "product_start_iso", "kind", "order_id", "side", "price_eur_mwh", "qty_mwh", "valid_until_ms"])?;
    for m in messages {
        let o = &m.order;
        w.serialize(Row {
            timestamp_ms: m.timestamp.to_string(),
            product_start_iso: iso(o.product),
            kind: match m.kind {
                MessageKind::Add => "add",
                MessageKind::Modify => "modify",
                MessageKind::Cancel => "cancel",
            }
            .into(),
            order_id: o.order_id.to_string(),
            side: match o.side {
                Side::Bid => "bid",
                Side::Ask => "ask",
            }
            .into(),
            price_eur_mwh: o.price.to_string(),
            qty_mwh: format!("{:.*}", decimals, o.qty as f64 * lot),
            valid_until_ms: o.valid_until.map(|v| v.to_string()).unwrap_or_default(),
        })?;
    }
    w.flush().map_err(|e| DataError::Io { path: "<writer>".into(), source: e })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "timestamp_ms,product_start_iso,kind,order_id,side,price_eur_mwh,qty_mwh,valid_until_ms\n";

    fn parse(body: &str, mode: ParseMode) -> Result<ParsedStream, DataError> {
        read_stream(format!("{HEADER}{body}").as_bytes(), 0.1, mode)
    }

    #[test]
    fn well_formed_rows() {
        let s = parse(
            "0,2021-02-10T10:00:00Z,add,1,ask,20.00,10.0,\n\
             5,2021-02-10T10:00:00Z,add,2,bid,-3.5,0.3,90000\n\
             7,2021-02-10T10:00:00Z,cancel,1,,,,\n",
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(s.report.messages, 3);
        assert_eq!(s.report.skipped, 0);
        let m = &s.messages[1];
        assert_eq!(m.order.price, Price(-350));
        assert_eq!(m.order.qty, 3);
        assert_eq!(m.order.valid_until, Some(90_000));
        assert_eq!(s.messages[2].kind, MessageKind::Cancel);
    }

    #[test]
    fn off_lot_quantity() {
        let body = "0,2021-02-10T10:00:00Z,add,1,ask,20.00,0.25,\n1,2021-02-10T10:00:00Z,add,2,ask,20.00,1.0,\n";
        match parse(body, ParseMode::Strict) {
            Err(DataError::Malformed { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let s = parse(body, ParseMode::Lenient).unwrap();
        assert_eq!(s.report.skipped, 1);
        assert_eq!(s.messages.len(), 1);
    }

    #[test]
    fn disorder() {
        let body = "5,2021-02-10T10:00:00Z,add,1,ask,20.00,1.0,\n4,2021-02-10T10:00:00Z,add,2,ask,20.00,1.0,\n";
        assert!(matches!(parse(body, ParseMode::Strict), Err(DataError::Disorder { line: 3, .. })));
        assert_eq!(parse(body, ParseMode::Lenient).unwrap().report.skipped, 1);
    }

    #[test]
    fn off_tick_price_and_bad_kind() {
        let body = "0,2021-02-10T10:00:00Z,add,1,ask,20.001,1.0,\n0,2021-02-10T10:00:00Z,amend,2,ask,20.00,1.0,\n";
        let s = parse(body, ParseMode::Lenient).unwrap();
        assert_eq!(s.report.skipped, 2);
        assert!(s.report.skip_reasons[0].contains("tick"));
    }

    #[test]
    fn round_trip() {
        let s = parse(
            "0,2021-02-10T10:00:00Z,add,1,ask,20.00,10.0,\n\
             5,2021-02-10T11:00:00Z,modify,1,bid,-3.50,0.3,90000\n",
            ParseMode::Strict,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_stream(&mut buf, &s.messages, 0.1).unwrap();
        let again = read_stream(buf.as_slice(), 0.1, ParseMode::Strict).unwrap();
        assert_eq!(again.messages, s.messages);
    }
}
