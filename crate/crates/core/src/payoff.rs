//! Immediate payoff of trading a number of lots against the current book.
//!
//! Buying walks the asks cheapest-first and pays `price + nu` per MWh; selling
//! walks the bids dearest-first and earns `price - nu`. An optional spread
//! penalty `phi * spread` is charged per traded MWh. Values are precomputed as
//! prefix sums so a lookup is O(1).

use crate::lob::{OrderBook, Price, Side, TimeMs};

#[derive(Clone, Debug, PartialEq)]
pub struct PayoffCurve {
    /// `buy[n]` is the payoff of buying `n` lots (non-positive for positive prices).
    buy: Vec<f64>,
    /// `sell[n]` is the payoff of selling `n` lots.
    sell: Vec<f64>,
}

impl PayoffCurve {
    /// Builds the curve from aggregated ladders (best level first), covering at
    /// most `max_lots` lots per side.
    pub fn build(
        asks: &[(Price, i64)],
        bids: &[(Price, i64)],
        nu: f64,
        lot: f64,
        penalty_per_mwh: f64,
        max_lots: i64,
    ) -> Self {
        PayoffCurve {
            buy: prefix(asks, lot, -1.0, nu + penalty_per_mwh, max_lots),
            sell: prefix(bids, lot, 1.0, nu + penalty_per_mwh, max_lots),
        }
    }

    /// Curve for one product at `clock`, with the penalty scaled by the
    /// current bid-ask spread. One-sided books carry no spread penalty.
    pub fn from_book(book: &OrderBook, clock: TimeMs, nu: f64, lot: f64, phi: f64, max_lots: i64) -> Self {
        let spread = book.best_quotes(clock).spread.map_or(0.0, Price::eur);
        PayoffCurve::build(
            &book.depth(Side::Ask, clock, max_lots),
            &book.depth(Side::Bid, clock, max_lots),
            nu,
            lot,
            phi * spread,
            max_lots,
        )
    }

    /// Payoff of a trade of `k` lots (positive buys, negative sells), or
    /// `None` beyond the available depth.
    #[inline]
    pub fn value(&self, k: i64) -> Option<f64> {
        if k >= 0 {
            self.buy.get(k as usize).copied()
        } else {
            self.sell.get(k.unsigned_abs() as usize).copied()
        }
    }

    /// Buy payoffs indexed by lots bought.
    pub fn buys(&self) -> &[f64] {
        &self.buy
    }

    /// Sell payoffs indexed by lots sold.
    pub fn sells(&self) -> &[f64] {
        &self.sell
    }

    /// Deepest buy available, in lots.
    pub fn max_buy(&self) -> i64 {
        self.buy.len() as i64 - 1
    }

    /// Deepest sell available, in lots.
    pub fn max_sell(&self) -> i64 {
        self.sell.len() as i64 - 1
    }
}

fn prefix(levels: &[(Price, i64)], lot: f64, sign: f64, per_mwh_cost: f64, max_lots: i64) -> Vec<f64> {
    let depth: i64 = levels.iter().map(|&(_, q)| q).sum::<i64>().min(max_lots.max(0));
    let mut out = Vec::with_capacity(depth as usize + 1);
    out.push(0.0);
    // integer cents keep the price part exact
    let mut cents: i64 = 0;
    let mut n: i64 = 0;
    'outer: for &(price, qty) in levels {
        for _ in 0..qty {
            if n == depth {
                break 'outer;
            }
            cents += price.0;
            n += 1;
            let gross = cents as f64 / 100.0 * lot;
            out.push(sign * gross - per_mwh_cost * lot * n as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn eur(p: i64) -> Price {
        Price(p * 100)
    }

    #[test]
    fn buy_walks_asks_with_cost() {
        let asks = [(eur(40), 50), (eur(45), 100)];
        let curve = PayoffCurve::build(&asks, &[], 4.09, 0.1, 0.0, 1000);
        // 5 * (40 + 4.09) + 3 * (45 + 4.09)
        assert_abs_diff_eq!(curve.value(80).unwrap(), -(5.0 * 44.09 + 3.0 * 49.09), epsilon = 1e-9);
        assert_abs_diff_eq!(curve.value(80).unwrap(), -367.72, epsilon = 1e-9);
        assert_eq!(curve.max_buy(), 150);
        assert_eq!(curve.value(151), None);
        assert_eq!(curve.value(-1), None);
    }

    #[test]
    fn sell_walks_bids_with_cost() {
        let bids = [(eur(50), 40), (eur(48), 60)];
        let curve = PayoffCurve::build(&[], &bids, 4.09, 0.1, 0.0, 1000);
        assert_abs_diff_eq!(curve.value(-70).unwrap(), 4.0 * 45.91 + 3.0 * 43.91, epsilon = 1e-9);
        assert_abs_diff_eq!(curve.value(-70).unwrap(), 315.37, epsilon = 1e-9);
    }

    #[test]
    fn null_trade_is_worth_nothing() {
        let curve = PayoffCurve::build(&[(eur(10), 3)], &[(eur(5), 3)], 4.09, 0.1, 2.0, 100);
        assert_eq!(curve.value(0), Some(0.0));
        let empty = PayoffCurve::build(&[], &[], 4.09, 0.1, 0.0, 100);
        assert_eq!(empty.value(0), Some(0.0));
        assert_eq!(empty.value(1), None);
        assert_eq!(empty.value(-1), None);
    }

    #[test]
    fn spread_penalty() {
        let curve = PayoffCurve::build(&[(eur(40), 50)], &[], 0.0, 0.1, 2.0 * 5.0, 100);
        assert_abs_diff_eq!(curve.value(20).unwrap(), -(2.0 * 40.0) - 2.0 * 5.0 * 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(curve.value(20).unwrap(), -100.0, epsilon = 1e-9);
    }

    #[test]
    fn depth_cap() {
        let curve = PayoffCurve::build(&[(eur(1), 500)], &[(eur(1), 2)], 0.0, 0.1, 0.0, 200);
        assert_eq!(curve.max_buy(), 200);
        assert_eq!(curve.max_sell(), 2);
    }

    #[test]
    fn buy_convex_sell_concave() {
        let asks = [(eur(10), 7), (eur(11), 4), (eur(12), 9)];
        let bids = [(eur(9), 5), (eur(2), 3), (eur(-8), 6)];
        let c = PayoffCurve::build(&asks, &bids, 1.0, 0.1, 0.5, 100);
        // payoff is concave in the signed trade: marginal values never increase
        let vals: Vec<f64> = (-c.max_sell()..=c.max_buy()).map(|k| c.value(k).unwrap()).collect();
        for w in vals.windows(3) {
            assert!(w[2] - w[1] <= w[1] - w[0] + 1e-9);
        }
    }
}
