//! Instance builders shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use rand::Rng;
use ritrade::battery::{BatteryParams, CostParams, MarketParams};
use ritrade::data::SyntheticFlowSpec;
use ritrade::engine::{BacktestConfig, BacktestResult, SolveTimeMode, HOUR_MS};
use ritrade::lob::Price;
use ritrade::problem::{IntrinsicProblem, StageInput};

pub fn eur(p: f64) -> Price {
    Price::from_eur(p).expect("price on the tick")
}

/// Aggregated ladder of `levels` distinct prices moving away from `touch`.
fn ladder<R: Rng>(rng: &mut R, touch: i64, away: i64, levels: usize) -> Vec<(Price, i64)> {
    let mut price = touch;
    (0..levels)
        .map(|_| {
            let level = (Price(price), rng.random_range(1..=8));
            price += away * rng.random_range(1..=800);
            level
        })
        .collect()
}

/// A lossless instance with no inherited positions: up to `max_stages`
/// products, up to `max_orders` levels per side, uncrossed books and a start
/// on the lot lattice.
pub fn lossless_instance<R: Rng>(rng: &mut R, max_stages: usize, max_orders: usize) -> IntrinsicProblem {
    let lot = 0.1;
    let s_max = rng.random_range(3..=20) as f64 * lot;
    let f_max = rng.random_range(2..=10) as f64 * lot;
    let f_min = -(rng.random_range(2..=10) as f64) * lot;
    let soc = rng.random_range(0..=(s_max / lot).round() as i64) as f64 * lot;
    let stages = (0..rng.random_range(1..=max_stages))
        .map(|t| {
            let mid = rng.random_range(-3_000..=9_000);
            let half = rng.random_range(1..=500);
            let (n_asks, n_bids) = (rng.random_range(0..=max_orders), rng.random_range(0..=max_orders));
            StageInput {
                product: t as i64 * HOUR_MS,
                position: 0,
                asks: ladder(rng, mid + half, 1, n_asks),
                bids: ladder(rng, mid - half, -1, n_bids),
                penalty_per_mwh: 0.0,
            }
        })
        .collect();
    IntrinsicProblem {
        time: 0,
        soc,
        battery: BatteryParams { s_max, f_min, f_max, eta_in: 1.0, eta_out: 1.0, s0: 0.0 },
        cost: CostParams { nu_trade: rng.random_range(0..=20) as f64 / 100.0, nu_deg: rng.random_range(0..=400) as f64 / 100.0 },
        market: MarketParams { lot, kappa: 1 },
        stages,
    }
}

/// Battery and synthetic flow for the year-scale runs.
pub fn year_spec(seed: u64, days: usize) -> SyntheticFlowSpec {
    SyntheticFlowSpec {
        seed,
        products: days * 24,
        base_rate_per_hour: 1.0,
        open_lead_ms: 4 * HOUR_MS,
        ..SyntheticFlowSpec::default()
    }
}

pub fn year_config() -> BacktestConfig {
    BacktestConfig {
        solve_time: SolveTimeMode::Fixed(1),
        battery: BatteryParams { s_max: 2.0, f_min: -1.0, f_max: 1.0, ..BatteryParams::default() },
        ..BacktestConfig::default()
    }
}

/// Reward recomputed from the trade log and the settled schedule.
pub fn recomputed_reward(r: &BacktestResult, cfg: &BacktestConfig) -> f64 {
    let lot = cfg.market.lot;
    let cent_lots: i64 = r
        .trades
        .iter()
        .map(|t| match t.side {
            ritrade::lob::TradeSide::Sell => t.price.0 * t.qty,
            ritrade::lob::TradeSide::Buy => -t.price.0 * t.qty,
        })
        .sum();
    let traded: i64 = r.trades.iter().map(|t| t.qty).sum();
    let settled: i64 = r.schedule.iter().map(|s| s.position.abs()).sum();
    cent_lots as f64 * lot / 100.0 - cfg.cost.nu_trade * traded as f64 * lot - cfg.cost.nu_deg * settled as f64 * lot
}
