//! Backtest output files: `trades.csv`, `schedule.csv`, `reward_series.csv`
//! and `summary.json`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{iso, lot_decimals, parse_iso, DataError};
use crate::battery::MarketParams;
use crate::engine::{BacktestResult, Trade};
use crate::lob::{Price, TradeSide};

/// One line of `trades.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeRow {
    pub exec_time_ms: i64,
    pub product_start_iso: String,
    pub side: String,
    pub price: String,
    pub qty: String,
    pub fee: f64,
}

/// Flat key-value report of a run.
pub fn summary(result: &BacktestResult) -> BTreeMap<String, Value> {
    let mut s = BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        s.insert(k.to_string(), v);
    };
    put("reward", json!(result.reward));
    put("gross_cash", json!(result.gross_cash));
    put("trade_fees", json!(result.trade_fees));
    put("degradation", json!(result.degradation));
    put("solves", json!(result.solve_count()));
    put("orders", json!(result.orders_submitted()));
    put("orders_accepted", json!(result.orders_accepted));
    put("orders_rejected", json!(result.orders_rejected));
    put("traded_volume_mwh", json!(result.traded_volume_mwh));
    put("settled_volume_mwh", json!(result.settled_volume_mwh));
    put("cycles_per_day", json!(result.cycles_per_day));
    put("imbalances", json!(result.imbalances.len()));
    put("imbalance_mwh", json!(result.imbalances.iter().fold(0.0, |acc, i| acc + i.volume_mwh)));
    put("messages", json!(result.messages));
    put("rejected_messages", json!(result.rejected_messages));
    put("ignored_messages", json!(result.ignored_messages));
    put("runtime_ms", json!(result.runtime_ms));
    s
}

/// Writes the four result files into `dir`, creating it if needed.
pub fn write_results(result: &BacktestResult, market: &MarketParams, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let decimals = lot_decimals(market.lot);
    let open = |name: &str| -> Result<csv::Writer<BufWriter<File>>, DataError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| DataError::io(&path, e))?;
        Ok(csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file)))
    };

    let mut w = open("trades.csv")?;
    w.write_record(["exec_time_ms", "product_start_iso", "side", "price", "qty", "fee"])?;
    for t in &result.trades {
        w.serialize(TradeRow {
            exec_time_ms: t.exec_time,
            product_start_iso: iso(t.product),
            side: t.side.as_str().into(),
            price: t.price.to_string(),
            qty: format!("{:.*}", decimals, market.mwh(t.qty)),
            fee: t.fee,
        })?;
    }
    w.flush().map_err(|e| DataError::io(dir, e))?;

    let mut w = open("schedule.csv")?;
    w.write_record(["product_start_iso", "final_position_mwh", "soc_end_mwh"])?;
    for s in &result.schedule {
        w.write_record([iso(s.product), format!("{:.*}", decimals, market.mwh(s.position)), s.soc_end.to_string()])?;
    }
    w.flush().map_err(|e| DataError::io(dir, e))?;

    let mut w = open("reward_series.csv")?;
    w.write_record(["time_ms", "cum_reward_eur"])?;
    for (t, r) in &result.reward_series {
        w.write_record([t.to_string(), r.to_string()])?;
    }
    w.flush().map_err(|e| DataError::io(dir, e))?;

    let path = dir.join("summary.json");
    let file = File::create(&path).map_err(|e| DataError::io(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &summary(result))?;
    Ok(())
}

/// Reads `trades.csv` back into the trade log.
pub fn read_trades(path: &Path, market: &MarketParams) -> Result<Vec<Trade>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TradeRow>().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let bad = |reason: String| DataError::Malformed { line, reason };
        let product = parse_iso(&row.product_start_iso).ok_or_else(|| bad(format!("bad product {:?}", row.product_start_iso)))?;
        let side = match row.side.as_str() {
            "buy" => TradeSide::Buy,
            "sell" => TradeSide::Sell,
            other => return Err(bad(format!("bad side {other:?}"))),
        };
        let price = row
            .price
            .parse::<f64>()
            .ok()
            .and_then(Price::from_eur)
            .ok_or_else(|| bad(format!("bad price {:?}", row.price)))?;
        let qty = row
            .qty
            .parse::<f64>()
            .ok()
            .and_then(|q| market.lots(q))
            .ok_or_else(|| bad(format!("bad qty {:?}", row.qty)))?;
        out.push(Trade { exec_time: row.exec_time_ms, product, side, price, qty, fee: row.fee });
    }
    Ok(out)
}
