//! Built-in micro-benchmark for intrinsic solves per second.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::battery::{BatteryParams, CostParams, MarketParams};
use crate::dp::{solve_intrinsic, GridSpec};
use crate::engine::HOUR_MS;
use crate::lob::{BookMessage, LimitOrder, MessageKind, OrderBook, Price, Side};
use crate::problem::{IntrinsicProblem, StageInput};

/// Books of a typical decision time: `products` hourly books with
/// `orders_per_side` resting orders on each side.
pub fn representative_books(seed: u64, products: usize, orders_per_side: usize) -> Vec<OrderBook> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut id = 0;
    (0..products as i64)
        .map(|p| {
            let product = (p + 1) * HOUR_MS;
            let mut book = OrderBook::new(product);
            let mid = 50.0 + 20.0 * (p as f64 / 24.0 * std::f64::consts::TAU).sin() + rng.random_range(-5.0..5.0);
            for side in [Side::Bid, Side::Ask] {
                for _ in 0..orders_per_side {
                    id += 1;
                    let offset = 0.5 + rng.random_range(0.0..15.0);
                    let eur = if side == Side::Bid { mid - offset } else { mid + offset };
                    let order = LimitOrder {
                        order_id: id,
                        product,
                        side,
                        price: Price((eur * 100.0).round() as i64),
                        qty: rng.random_range(1..=50),
                        entry_time: 0,
                        valid_until: None,
                    };
                    book.apply(&BookMessage { timestamp: 0, kind: MessageKind::Add, order }).expect("fresh order id");
                }
            }
            book
        })
        .collect()
}

pub fn snapshot(books: &[OrderBook], battery: BatteryParams, cost: CostParams, market: MarketParams, soc: f64) -> IntrinsicProblem {
    let max_lots = market.max_trade_lots(&battery);
    IntrinsicProblem {
        time: 0,
        soc,
        battery,
        cost,
        market,
        stages: books.iter().map(|b| StageInput::from_book(b, 0, 0, 0.0, max_lots)).collect(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ThroughputReport {
    pub products: usize,
    pub orders_per_side: usize,
    pub m: usize,
    pub solves: u64,
    pub seconds: f64,
    pub solves_per_second: f64,
}

/// Repeats snapshot extraction plus a full DP solve for at least `min_time`
/// on the current thread.
pub fn measure(products: usize, orders_per_side: usize, m: usize, min_time: Duration) -> ThroughputReport {
    let books = representative_books(7, products, orders_per_side);
    let spec = GridSpec::Uniform(m);
    let battery = BatteryParams::default();
    let mut solves = 0u64;
    let mut checksum = 0.0;
    let start = Instant::now();
    while start.elapsed() < min_time || solves < 10 {
        let problem = snapshot(&books, battery, CostParams::default(), MarketParams::default(), 5.0);
        let targets = solve_intrinsic(&problem, &spec).expect("valid grid");
        checksum += targets.objective;
        solves += 1;
    }
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(checksum);
    ThroughputReport { products, orders_per_side, m, solves, seconds, solves_per_second: solves as f64 / seconds }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_shape() {
        let books = representative_books(1, 32, 50);
        assert_eq!(books.len(), 32);
        assert!(books.iter().all(|b| b.len() == 100));
        let p = snapshot(&books, BatteryParams::default(), CostParams::default(), MarketParams::default(), 5.0);
        assert_eq!(p.stages.len(), 32);
        // uncrossed books, so the solver finds the inter-temporal spread only
        let t = solve_intrinsic(&p, &GridSpec::Uniform(11)).unwrap();
        assert!(t.objective >= 0.0);
    }

    #[test]
    fn measures_something() {
        let r = measure(4, 5, 11, Duration::from_millis(5));
        assert!(r.solves >= 10);
        assert!(r.solves_per_second > 0.0);
    }
}
