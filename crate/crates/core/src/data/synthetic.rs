//! Seeded synthetic order flow.
//!
//! Each hourly product gets a mid price from a daily sinusoid plus AR(1)
//! noise, with occasional negative spikes. Orders arrive as a Poisson process
//! whose rate grows exponentially toward gate closure; resting orders sit on
//! their side of the mid and are later cancelled, modified or left to expire.
//! Short-lived aggressive quotes ("transients") create arbitrage that only a
//! fast-reacting trader can catch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::engine::{DAY_MS, HOUR_MS, MINUTE_MS};
use crate::lob::{BookMessage, LimitOrder, MessageKind, Price, ProductId, Side, TimeMs};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticFlowSpec {
    pub seed: u64,
    /// Delivery start of the first product.
    pub start_ms: TimeMs,
    pub products: usize,
    pub product_duration_ms: TimeMs,
    /// Flow for a product starts this long before its delivery.
    pub open_lead_ms: TimeMs,
    /// Flow stops at gate closure.
    pub gate_closure_lead_ms: TimeMs,
    /// Arrival rate (orders per hour) when a product opens.
    pub base_rate_per_hour: f64,
    /// Log-ratio of the arrival rate at closure to the rate at opening.
    pub rate_growth: f64,
    pub mean_price: f64,
    pub daily_amplitude: f64,
    pub ar_coef: f64,
    pub ar_sigma: f64,
    /// Mean of the exponentially distributed half spread.
    pub half_spread_mean: f64,
    /// Scale of order prices behind the touch.
    pub depth_sigma: f64,
    pub mean_order_mwh: f64,
    pub max_order_mwh: f64,
    pub lot_mwh: f64,
    pub cancel_prob: f64,
    pub modify_prob: f64,
    pub expiry_prob: f64,
    /// Share of arrivals that cross the book.
    pub aggressive_prob: f64,
    pub mean_lifetime_ms: TimeMs,
    pub negative_spike_prob: f64,
    pub negative_spike_depth: f64,
    /// Expected short-lived arbitrage quotes per product.
    pub transient_rate: f64,
    /// How far a transient quote sits through the mid, EUR/MWh.
    pub transient_edge: f64,
    pub transient_mwh: f64,
    pub transient_lifetime_ms: TimeMs,
}

impl Default for SyntheticFlowSpec {
    fn default() -> Self {
        SyntheticFlowSpec {
            seed: 42,
            // 2021-01-01T00:00:00Z
            start_ms: 1_609_459_200_000,
            products: 48,
            product_duration_ms: HOUR_MS,
            open_lead_ms: 8 * HOUR_MS,
            gate_closure_lead_ms: 30 * MINUTE_MS,
            base_rate_per_hour: 2.0,
            rate_growth: 2.5,
            mean_price: 50.0,
            daily_amplitude: 15.0,
            ar_coef: 0.8,
            ar_sigma: 6.0,
            half_spread_mean: 1.5,
            depth_sigma: 4.0,
            mean_order_mwh: 1.5,
            max_order_mwh: 10.0,
            lot_mwh: 0.1,
            cancel_prob: 0.4,
            modify_prob: 0.1,
            expiry_prob: 0.1,
            aggressive_prob: 0.05,
            mean_lifetime_ms: 20 * MINUTE_MS,
            negative_spike_prob: 0.02,
            negative_spike_depth: 80.0,
            transient_rate: 1.0,
            transient_edge: 15.0,
            transient_mwh: 2.0,
            transient_lifetime_ms: 30_000,
        }
    }
}

impl SyntheticFlowSpec {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("product_duration_ms", self.product_duration_ms as f64),
            ("open_lead_ms", self.open_lead_ms as f64),
            ("gate_closure_lead_ms", self.gate_closure_lead_ms as f64),
            ("base_rate_per_hour", self.base_rate_per_hour),
            ("half_spread_mean", self.half_spread_mean),
            ("depth_sigma", self.depth_sigma),
            ("mean_order_mwh", self.mean_order_mwh),
            ("max_order_mwh", self.max_order_mwh),
            ("lot_mwh", self.lot_mwh),
            ("mean_lifetime_ms", self.mean_lifetime_ms as f64),
            ("transient_lifetime_ms", self.transient_lifetime_ms as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.open_lead_ms <= self.gate_closure_lead_ms {
            return Err("open_lead_ms must exceed gate_closure_lead_ms".into());
        }
        for (name, p) in [
            ("cancel_prob", self.cancel_prob),
            ("modify_prob", self.modify_prob),
            ("expiry_prob", self.expiry_prob),
            ("aggressive_prob", self.aggressive_prob),
            ("negative_spike_prob", self.negative_spike_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.cancel_prob + self.modify_prob + self.expiry_prob > 1.0 {
            return Err("cancel_prob + modify_prob + expiry_prob must not exceed 1".into());
        }
        if self.rate_growth < 0.0 || self.transient_rate < 0.0 || self.ar_sigma < 0.0 {
            return Err("rate_growth, transient_rate and ar_sigma must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.ar_coef.abs()) {
            return Err("ar_coef must lie in (-1, 1)".into());
        }
        Ok(())
    }

    pub fn product_ids(&self) -> Vec<ProductId> {
        (0..self.products as i64).map(|i| self.start_ms + i * self.product_duration_ms).collect()
    }
}

/// The two-message stream used throughout the tests: 10 MWh offered at 20 in
/// one hour and 10 MWh bid at 60 in the next, both posted at `t0`.
pub fn planted_pair(t0: TimeMs) -> Vec<BookMessage> {
    let a = (t0.div_euclid(HOUR_MS) + 2) * HOUR_MS;
    let order = |id, product, side, eur: i64| BookMessage {
        timestamp: t0,
        kind: MessageKind::Add,
        order: LimitOrder { order_id: id, product, side, price: Price(eur * 100), qty: 100, entry_time: t0, valid_until: None },
    };
    vec![order(1, a, Side::Ask, 20), order(2, a + HOUR_MS, Side::Bid, 60)]
}

struct ProductFlow<'a> {
    spec: &'a SyntheticFlowSpec,
    product: ProductId,
    mid: f64,
    half_spread: f64,
    open: TimeMs,
    close: TimeMs,
    /// Highest bid and lowest ask ever posted, bounds on the live touch.
    max_bid: Price,
    min_ask: Price,
    out: Vec<(BookMessage, u64)>,
}

impl ProductFlow<'_> {
    fn lots(&self, rng: &mut ChaCha8Rng, mean_mwh: f64) -> i64 {
        let exp = Exp::new(1.0 / mean_mwh).expect("positive mean");
        let mwh = exp.sample(rng).min(self.spec.max_order_mwh);
        ((mwh / self.spec.lot_mwh).ceil() as i64).max(1)
    }

    fn push(&mut self, msg: BookMessage, seq: &mut u64) {
        match (msg.kind, msg.order.side) {
            (MessageKind::Cancel, _) => {}
            (_, Side::Bid) => self.max_bid = self.max_bid.max(msg.order.price),
            (_, Side::Ask) => self.min_ask = self.min_ask.min(msg.order.price),
        }
        *seq += 1;
        self.out.push((msg, *seq));
    }

    fn add(&mut self, t: TimeMs, id: u64, side: Side, price: Price, qty: i64, valid_until: Option<TimeMs>, seq: &mut u64) -> LimitOrder {
        let order = LimitOrder { order_id: id, product: self.product, side, price, qty, entry_time: t, valid_until };
        self.push(BookMessage { timestamp: t, kind: MessageKind::Add, order: order.clone() }, seq);
        order
    }

    /// Follow-up for a resting order: cancel, modify, expire or nothing.
    fn lifecycle(&mut self, rng: &mut ChaCha8Rng, order: LimitOrder, seq: &mut u64) {
        let life = Exp::new(1.0 / self.spec.mean_lifetime_ms as f64).expect("positive lifetime");
        let u: f64 = rng.random();
        let at = order.entry_time + 1 + life.sample(rng) as TimeMs;
        if at >= self.close {
            return;
        }
        if u < self.spec.cancel_prob {
            self.push(BookMessage { timestamp: at, kind: MessageKind::Cancel, order: LimitOrder { entry_time: at, ..order } }, seq);
        } else if u < self.spec.cancel_prob + self.spec.modify_prob {
            // step a fraction of the way toward the mid, never through it
            let target = match order.side {
                Side::Bid => self.mid - self.half_spread,
                Side::Ask => self.mid + self.half_spread,
            };
            let moved = order.price.eur() + rng.random_range(0.2..0.8) * (target - order.price.eur());
            let price = match order.side {
                Side::Bid => Price((moved * 100.0).floor() as i64),
                Side::Ask => Price((moved * 100.0).ceil() as i64),
            };
            let order = LimitOrder { price, entry_time: at, ..order };
            self.push(BookMessage { timestamp: at, kind: MessageKind::Modify, order }, seq);
        }
    }
}

/// Generates a time-ordered message stream fully determined by `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticFlowSpec) -> Vec<BookMessage> {
    spec.validate().expect("invalid synthetic flow spec");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.ar_sigma.max(1e-12)).expect("finite sigma");
    let depth = Normal::new(0.0, spec.depth_sigma).expect("finite sigma");
    let spread = Exp::new(1.0 / spec.half_spread_mean).expect("positive mean");
    let window = (spec.open_lead_ms - spec.gate_closure_lead_ms) as f64;
    let rate_max = spec.base_rate_per_hour * spec.rate_growth.exp() / HOUR_MS as f64;
    let gap = Exp::new(rate_max).expect("positive rate");
    let transients = Poisson::new(spec.transient_rate.max(1e-12)).expect("positive rate");

    let mut next_id: u64 = 1;
    let mut seq: u64 = 0;
    let mut ar = 0.0;
    let mut all: Vec<(BookMessage, u64)> = Vec::new();
    for product in spec.product_ids() {
        ar = spec.ar_coef * ar + noise.sample(&mut rng);
        let hour = (product.rem_euclid(DAY_MS) as f64) / HOUR_MS as f64;
        let mut mid = spec.mean_price + spec.daily_amplitude * (std::f64::consts::TAU * (hour - 9.0) / 24.0).sin() + ar;
        if rng.random_bool(spec.negative_spike_prob) {
            mid -= spec.negative_spike_depth;
        }
        let mut flow = ProductFlow {
            spec,
            product,
            mid,
            half_spread: 0.05 + spread.sample(&mut rng),
            open: product - spec.open_lead_ms,
            close: product - spec.gate_closure_lead_ms,
            max_bid: Price(i64::MIN),
            min_ask: Price(i64::MAX),
            out: Vec::new(),
        };

        let mut arrivals: Vec<(TimeMs, bool)> = Vec::new();
        let mut t = flow.open as f64;
        loop {
            t += gap.sample(&mut rng);
            if t >= flow.close as f64 {
                break;
            }
            // thinning: accept with the ratio of the current to the peak rate
            let progress = (t - flow.open as f64) / window;
            if rng.random::<f64>() < (spec.rate_growth * (progress - 1.0)).exp() {
                arrivals.push((t as TimeMs, false));
            }
        }
        let n_transient = if spec.transient_rate > 0.0 { transients.sample(&mut rng) as usize } else { 0 };
        for _ in 0..n_transient {
            arrivals.push((rng.random_range(flow.open..flow.close), true));
        }
        arrivals.sort();

        for (t, transient) in arrivals {
            let id = next_id;
            next_id += 1;
            if transient {
                // cheap energy is offered below the mean, dear energy bid above it
                let lots = ((spec.transient_mwh / spec.lot_mwh).round() as i64).max(1);
                let (side, price) = if flow.mid < spec.mean_price {
                    let p = ((flow.mid - spec.transient_edge) * 100.0).round() as i64;
                    (Side::Ask, Price(p.max(flow.max_bid.0.saturating_add(1))))
                } else {
                    let p = ((flow.mid + spec.transient_edge) * 100.0).round() as i64;
                    (Side::Bid, Price(p.min(flow.min_ask.0.saturating_sub(1))))
                };
                let order = flow.add(t, id, side, price, lots, None, &mut seq);
                let life = Exp::new(1.0 / spec.transient_lifetime_ms as f64).expect("positive lifetime");
                let at = t + 1 + life.sample(&mut rng) as TimeMs;
                if at < flow.close {
                    flow.push(BookMessage { timestamp: at, kind: MessageKind::Cancel, order: LimitOrder { entry_time: at, ..order } }, &mut seq);
                }
                continue;
            }
            let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
            let lots = flow.lots(&mut rng, spec.mean_order_mwh);
            let offset = depth.sample(&mut rng).abs();
            let aggressive = rng.random_bool(spec.aggressive_prob);
            let eur = match (side, aggressive) {
                (Side::Ask, false) => flow.mid + flow.half_spread + offset,
                (Side::Bid, false) => flow.mid - flow.half_spread - offset,
                (Side::Ask, true) => flow.mid - flow.half_spread - offset,
                (Side::Bid, true) => flow.mid + flow.half_spread + offset,
            };
            let price = match side {
                Side::Ask => Price((eur * 100.0).ceil() as i64),
                Side::Bid => Price((eur * 100.0).floor() as i64),
            };
            let expiry = Exp::new(1.0 / spec.mean_lifetime_ms as f64).expect("positive lifetime");
            let valid_until = if !aggressive && rng.random_bool(spec.expiry_prob) {
                Some(t + 1 + expiry.sample(&mut rng) as TimeMs)
            } else {
                None
            };
            let order = flow.add(t, id, side, price, lots, valid_until, &mut seq);
            if valid_until.is_none() && !aggressive {
                flow.lifecycle(&mut rng, order, &mut seq);
            }
        }
        all.extend(flow.out);
    }
    all.sort_by_key(|(m, s)| (m.timestamp, *s));
    all.into_iter().map(|(m, _)| m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_stream;

    fn small() -> SyntheticFlowSpec {
        SyntheticFlowSpec { products: 12, ..SyntheticFlowSpec::default() }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_synthetic(&small());
        let b = generate_synthetic(&small());
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_stream(&mut x, &a, 0.1).unwrap();
        write_stream(&mut y, &b, 0.1).unwrap();
        assert_eq!(x, y);
        let other = generate_synthetic(&SyntheticFlowSpec { seed: 7, ..small() });
        assert_ne!(a, other);
    }

    #[test]
    fn ordered_and_on_grid() {
        let s = generate_synthetic(&small());
        assert!(!s.is_empty());
        assert!(s.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        for m in &s {
            assert!(m.order.qty > 0);
            assert!(m.timestamp < m.order.product - small().gate_closure_lead_ms);
            assert!(m.timestamp >= m.order.product - small().open_lead_ms);
        }
        let mut ids: Vec<_> = s.iter().filter(|m| m.kind == MessageKind::Add).map(|m| m.order.order_id).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), n);
    }

    #[test]
    fn planted_pair_shape() {
        let s = planted_pair(0);
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].order.product - s[0].order.product, HOUR_MS);
    }

    #[test]
    fn invalid_spec() {
        assert!(SyntheticFlowSpec { cancel_prob: 0.9, modify_prob: 0.2, ..small() }.validate().is_err());
        assert!(SyntheticFlowSpec { open_lead_ms: 10, ..small() }.validate().is_err());
    }
}
