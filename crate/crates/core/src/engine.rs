//! Event-driven rolling-intrinsic backtest.
//!
//! The engine replays a time-ordered message stream into one book per product.
//! Whenever the trigger policy fires it snapshots the tradable books, solves the
//! intrinsic problem and, after the solve time plus the technical delay, sends
//! every non-zero trade as an all-or-none order against the books as they are
//! at that moment. Agent fills consume resting liquidity, so later historical
//! messages clear against a book the agent has already changed.
//!
//! At each timestamp events are handled in a fixed order: gate closures, then a
//! pending execution, then the batch of messages, then the trigger decision.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{cycles, BatteryParams, CostParams, MarketParams};
use crate::dp::DpSolver;
use crate::lob::{AonOutcome, BookMessage, OrderBook, Price, ProductId, TimeMs, TradeSide};
use crate::problem::{IntrinsicProblem, IntrinsicSolver, SolveError, StageInput, TargetPositions};

pub const MINUTE_MS: TimeMs = 60_000;
pub const HOUR_MS: TimeMs = 60 * MINUTE_MS;
pub const DAY_MS: TimeMs = 24 * HOUR_MS;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMode {
    /// Solve after every message that changes the head of a tradable book.
    RelevantUpdates,
    /// Solve at fixed boundaries `start + k * interval`.
    Interval(TimeMs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveTimeMode {
    /// Wall-clock duration of the solver call, rounded up to whole milliseconds.
    Measured,
    Fixed(TimeMs),
}

/// Spread-penalty weight, either constant or looked up by calendar month
/// (UTC) of the decision time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Phi {
    Constant(f64),
    Monthly([f64; 12]),
}

impl Phi {
    pub fn at(&self, time: TimeMs) -> f64 {
        match self {
            Phi::Constant(phi) => *phi,
            Phi::Monthly(table) => {
                let month = DateTime::from_timestamp_millis(time).map_or(1, |d| d.month());
                table[month as usize - 1]
            }
        }
    }
}

impl Default for Phi {
    fn default() -> Self {
        Phi::Constant(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// First decision time; defaults to the first message.
    pub start: Option<TimeMs>,
    /// Last decision time (exclusive); defaults to the last gate closure.
    pub end: Option<TimeMs>,
    pub solve_mode: SolveMode,
    pub technical_delay_ms: TimeMs,
    pub solve_time: SolveTimeMode,
    /// Trading in a product stops this long before its delivery starts.
    pub gate_closure_lead_ms: TimeMs,
    /// A product becomes tradable this long before delivery. `None` opens it
    /// when its first message appears.
    pub trading_open_lead_ms: Option<TimeMs>,
    /// Cap on the number of products in one intrinsic problem.
    pub max_tradable: usize,
    pub product_duration_ms: TimeMs,
    pub battery: BatteryParams,
    pub cost: CostParams,
    pub market: MarketParams,
    /// Grid points of the DP value functions.
    pub m: usize,
    pub phi: Phi,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            start: None,
            end: None,
            solve_mode: SolveMode::RelevantUpdates,
            technical_delay_ms: 200,
            solve_time: SolveTimeMode::Measured,
            gate_closure_lead_ms: 30 * MINUTE_MS,
            trading_open_lead_ms: None,
            max_tradable: 32,
            product_duration_ms: HOUR_MS,
            battery: BatteryParams::default(),
            cost: CostParams::default(),
            market: MarketParams::default(),
            m: 11,
            phi: Phi::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |key: &'static str, reason: String| Err(EngineError::InvalidConfig { key, reason });
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s >= e {
                return bad("start", format!("start {s} must precede end {e}"));
            }
        }
        if self.technical_delay_ms < 0 {
            return bad("technical_delay_ms", "must be non-negative".into());
        }
        if let SolveTimeMode::Fixed(ms) = self.solve_time {
            if ms < 0 {
                return bad("solve_time_ms", "must be non-negative".into());
            }
        }
        if let SolveMode::Interval(ms) = self.solve_mode {
            if ms <= 0 {
                return bad("solve_mode", "interval must be positive".into());
            }
        }
        if self.gate_closure_lead_ms <= 0 {
            return bad("gate_closure_lead_ms", "must be positive".into());
        }
        if self.max_tradable == 0 {
            return bad("max_tradable", "must be at least 1".into());
        }
        if self.product_duration_ms <= 0 {
            return bad("product_duration_ms", "must be positive".into());
        }
        if self.m < 2 {
            return bad("m", format!("need at least 2 grid points, got {}", self.m));
        }
        let phis: Vec<f64> = match &self.phi {
            Phi::Constant(p) => vec![*p],
            Phi::Monthly(t) => t.to_vec(),
        };
        if phis.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return bad("phi", "must be finite and non-negative".into());
        }
        self.battery.validate().or_else(|r| bad("battery", r))?;
        self.cost.validate().or_else(|r| bad("cost", r))?;
        self.market.validate().or_else(|r| bad("market", r))?;
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("message {index} at {timestamp} ms precedes the previous message at {previous} ms")]
    Disorder { index: usize, timestamp: TimeMs, previous: TimeMs },
    #[error("invalid config `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
}

/// One agent fill.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub exec_time: TimeMs,
    pub product: ProductId,
    pub side: TradeSide,
    pub price: Price,
    /// Lots.
    pub qty: i64,
    /// Exchange fee in EUR.
    pub fee: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleEntry {
    pub product: ProductId,
    /// Final net position in lots.
    pub position: i64,
    /// State of charge at the end of delivery.
    pub soc_end: f64,
}

/// Position the battery could not deliver at gate closure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Imbalance {
    pub product: ProductId,
    pub volume_mwh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveRecord {
    pub time: TimeMs,
    pub solve_ms: TimeMs,
    /// Objective the solver reported for its targets.
    pub objective: f64,
    pub physical_start: bool,
    /// SoC violation of holding the positions before and after the targets.
    pub violation_before: f64,
    pub violation_after: f64,
    pub orders: usize,
    pub failed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BacktestResult {
    pub trades: Vec<Trade>,
    pub schedule: Vec<ScheduleEntry>,
    /// `(time, cumulative reward)` after trades, settlements and at midnights.
    pub reward_series: Vec<(TimeMs, f64)>,
    pub solves: Vec<SolveRecord>,
    pub imbalances: Vec<Imbalance>,
    pub orders_accepted: usize,
    pub orders_rejected: usize,
    pub messages: usize,
    /// Messages the books refused (unknown ids, duplicates, ...).
    pub rejected_messages: usize,
    /// Messages for products already past gate closure.
    pub ignored_messages: usize,
    /// Signed cash of all fills in EUR (sales positive).
    pub gross_cash: f64,
    pub trade_fees: f64,
    pub degradation: f64,
    pub reward: f64,
    pub traded_volume_mwh: f64,
    pub settled_volume_mwh: f64,
    pub withdrawn_mwh: f64,
    pub delivery_days: f64,
    pub cycles_per_day: f64,
    pub runtime_ms: f64,
}

impl BacktestResult {
    pub fn solve_count(&self) -> usize {
        self.solves.len()
    }

    pub fn orders_submitted(&self) -> usize {
        self.orders_accepted + self.orders_rejected
    }
}

/// Runs the rolling intrinsic with the DP solver configured by `config.m`.
pub fn run_backtest(config: &BacktestConfig, stream: &[BookMessage]) -> Result<BacktestResult, EngineError> {
    let mut solver = DpSolver::uniform(config.m);
    run_backtest_with(config, stream, &mut solver)
}

/// Runs the rolling intrinsic with any solver.
pub fn run_backtest_with(
    config: &BacktestConfig,
    stream: &[BookMessage],
    solver: &mut dyn IntrinsicSolver,
) -> Result<BacktestResult, EngineError> {
    config.validate()?;
    for (i, w) in stream.windows(2).enumerate() {
        if w[1].timestamp < w[0].timestamp {
            return Err(EngineError::Disorder { index: i + 1, timestamp: w[1].timestamp, previous: w[0].timestamp });
        }
    }
    let wall = Instant::now();
    let mut sim = Simulation::new(config, stream);
    sim.run(stream, solver);
    let mut result = sim.finish();
    result.runtime_ms = wall.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

struct Product {
    id: ProductId,
    closure: TimeMs,
    open: TimeMs,
}

struct Pending {
    time: TimeMs,
    targets: TargetPositions,
}

struct Simulation<'a> {
    config: &'a BacktestConfig,
    products: Vec<Product>,
    index: HashMap<ProductId, usize>,
    books: Vec<OrderBook>,
    positions: Vec<i64>,
    /// Products with index below this have passed gate closure.
    closed: usize,
    /// SoC at the end of the last settled product.
    soc: f64,
    start: TimeMs,
    end: TimeMs,
    pending: Option<Pending>,
    next_allowed: TimeMs,
    deferred: bool,
    next_interval: Option<TimeMs>,
    next_midnight: TimeMs,
    /// Signed cash in cents x lots, kept integral.
    gross_cent_lots: i64,
    /// Last problem solved and its answer, keyed with `time` zeroed.
    last: Option<(IntrinsicProblem, Result<TargetPositions, SolveError>)>,
    result: BacktestResult,
}

impl<'a> Simulation<'a> {
    fn new(config: &'a BacktestConfig, stream: &[BookMessage]) -> Self {
        let mut first_seen: BTreeMap<ProductId, TimeMs> = BTreeMap::new();
        for msg in stream {
            first_seen.entry(msg.order.product).or_insert(msg.timestamp);
        }
        let products: Vec<Product> = first_seen
            .iter()
            .map(|(&id, &seen)| Product {
                id,
                closure: id - config.gate_closure_lead_ms,
                open: config.trading_open_lead_ms.map_or(seen, |lead| id - lead),
            })
            .collect();
        let start = config.start.or_else(|| stream.first().map(|m| m.timestamp)).unwrap_or(0);
        let end = config.end.or_else(|| products.last().map(|p| p.closure)).unwrap_or(start);
        let next_interval = match config.solve_mode {
            SolveMode::Interval(_) => Some(start),
            SolveMode::RelevantUpdates => None,
        };
        let span = match (products.first(), products.last()) {
            (Some(a), Some(b)) => (b.id + config.product_duration_ms - a.id) as f64 / DAY_MS as f64,
            _ => 0.0,
        };
        Simulation {
            config,
            index: products.iter().enumerate().map(|(i, p)| (p.id, i)).collect(),
            books: products.iter().map(|p| OrderBook::new(p.id)).collect(),
            positions: vec![0; products.len()],
            products,
            closed: 0,
            soc: config.battery.s0,
            start,
            end,
            pending: None,
            next_allowed: TimeMs::MIN,
            deferred: false,
            next_interval,
            next_midnight: (start.div_euclid(DAY_MS) + 1) * DAY_MS,
            gross_cent_lots: 0,
            last: None,
            result: BacktestResult { delivery_days: span.max(1.0), ..Default::default() },
        }
    }

    fn reward(&self) -> f64 {
        self.gross_cent_lots as f64 / 100.0 * self.config.market.lot - self.result.trade_fees - self.result.degradation
    }

    fn mark(&mut self, time: TimeMs) {
        let r = self.reward();
        match self.result.reward_series.last_mut() {
            Some(last) if last.0 == time => last.1 = r,
            _ => self.result.reward_series.push((time, r)),
        }
    }

    fn run(&mut self, stream: &[BookMessage], solver: &mut dyn IntrinsicSolver) {
        let mut cursor = 0;
        loop {
            let mut next = TimeMs::MAX;
            if let Some(m) = stream.get(cursor).filter(|m| m.timestamp <= self.end) {
                next = next.min(m.timestamp);
            }
            if let Some(p) = self.products.get(self.closed).filter(|p| p.closure <= self.end) {
                next = next.min(p.closure);
            }
            if let Some(p) = &self.pending {
                next = next.min(p.time);
            }
            if self.deferred {
                next = next.min(self.next_allowed.max(self.start));
            }
            if let Some(t) = self.next_interval {
                next = next.min(t);
            }
            if next == TimeMs::MAX {
                break;
            }
            while self.next_midnight <= next && self.next_midnight <= self.end {
                let t = self.next_midnight;
                self.mark(t);
                self.next_midnight += DAY_MS;
            }
            self.step(next, stream, &mut cursor, solver);
        }
    }

    fn step(&mut self, now: TimeMs, stream: &[BookMessage], cursor: &mut usize, solver: &mut dyn IntrinsicSolver) {
        while self.products.get(self.closed).is_some_and(|p| p.closure <= now && p.closure <= self.end) {
            self.settle(self.closed);
        }
        if self.pending.as_ref().is_some_and(|p| p.time <= now) {
            let pending = self.pending.take().expect("checked above");
            self.execute(pending.time, &pending.targets);
        }
        let mut relevant = false;
        while let Some(msg) = stream.get(*cursor).filter(|m| m.timestamp == now) {
            *cursor += 1;
            relevant |= self.apply(msg);
        }
        let trading = now >= self.start && now < self.end;
        let mut fire = false;
        match self.config.solve_mode {
            SolveMode::RelevantUpdates => {
                if relevant && trading {
                    self.deferred = true;
                }
            }
            SolveMode::Interval(step) => {
                if self.next_interval == Some(now) {
                    self.deferred = trading;
                    let t = now + step;
                    self.next_interval = (t < self.end).then_some(t);
                }
            }
        }
        if self.deferred && self.pending.is_none() && now >= self.next_allowed && now >= self.start {
            self.deferred = false;
            fire = trading;
        }
        if !trading {
            self.deferred = false;
        }
        if fire {
            self.solve(now, solver);
        }
    }

    fn apply(&mut self, msg: &BookMessage) -> bool {
        self.result.messages += 1;
        let Some(&i) = self.index.get(&msg.order.product) else {
            self.result.ignored_messages += 1;
            return false;
        };
        if i < self.closed {
            self.result.ignored_messages += 1;
            return false;
        }
        let tradable = self.is_tradable(i, msg.timestamp);
        let book = &mut self.books[i];
        let expired_head = book.expire(msg.timestamp);
        let relevant = book.is_relevant_update(msg);
        if let Err(e) = book.apply(msg) {
            log::debug!("message {} rejected: {e}", msg.order.order_id);
            self.result.rejected_messages += 1;
            return tradable && expired_head;
        }
        tradable && (relevant || expired_head)
    }

    fn is_tradable(&self, i: usize, now: TimeMs) -> bool {
        i >= self.closed && self.products[i].open <= now && self.tradable(now).any(|j| j == i)
    }

    fn tradable(&self, now: TimeMs) -> impl Iterator<Item = usize> + '_ {
        (self.closed..self.products.len())
            .filter(move |&i| self.products[i].open <= now && self.products[i].closure > now)
            .take(self.config.max_tradable)
    }

    fn solve(&mut self, now: TimeMs, solver: &mut dyn IntrinsicSolver) {
        let config = self.config;
        let phi = config.phi.at(now);
        let max_lots = config.market.max_trade_lots(&config.battery);
        // untradable products that deliver before the last tradable one still
        // move the state of charge, so the chain starts at the first open product
        let tradable: Vec<usize> = self.tradable(now).collect();
        if tradable.is_empty() {
            return;
        }
        let mut soc = self.soc;
        for i in self.closed..tradable[0] {
            soc = config.battery.clamp(config.battery.transition(soc, config.market.mwh(self.positions[i])));
        }
        let stages: Vec<StageInput> = tradable
            .iter()
            .map(|&i| StageInput::from_book(&self.books[i], now, self.positions[i], phi, max_lots))
            .collect();
        let problem = IntrinsicProblem {
            time: now,
            soc,
            battery: config.battery,
            cost: config.cost,
            market: config.market,
            stages,
        };
        let began = Instant::now();
        let key = IntrinsicProblem { time: 0, ..problem.clone() };
        let outcome = match &self.last {
            Some((prev, answer)) if *prev == key => answer.clone().map(|t| TargetPositions { time: now, ..t }),
            _ => {
                let answer = solver.solve(&problem);
                self.last = Some((key, answer.clone()));
                answer
            }
        };
        let solve_ms = match config.solve_time {
            SolveTimeMode::Measured => (began.elapsed().as_secs_f64() * 1e3).ceil() as TimeMs,
            SolveTimeMode::Fixed(ms) => ms,
        };
        let violation_before = problem.violation_of(problem.stages.iter().map(|s| s.position));
        let (targets, failed) = match outcome {
            Ok(t) => (t, false),
            Err(e) => {
                log::warn!("solver {} failed at {now}: {e}", solver.name());
                (TargetPositions::null(&problem), true)
            }
        };
        let delay = solve_ms + config.technical_delay_ms;
        self.result.solves.push(SolveRecord {
            time: now,
            solve_ms,
            objective: targets.objective,
            physical_start: targets.physical_start,
            violation_before,
            violation_after: problem.violation_of(targets.products.iter().map(|p| p.target())),
            orders: targets.products.iter().filter(|p| p.delta != 0).count(),
            failed,
        });
        self.next_allowed = now + delay;
        if targets.is_null() {
            return;
        }
        if delay == 0 {
            self.execute(now, &targets);
        } else {
            self.pending = Some(Pending { time: now + delay, targets });
        }
    }

    fn execute(&mut self, now: TimeMs, targets: &TargetPositions) {
        let lot = self.config.market.lot;
        let mut traded = false;
        for target in targets.products.iter().filter(|t| t.delta != 0) {
            let i = self.index[&target.product];
            let limit = target.limit.expect("non-zero trades carry a limit");
            if i < self.closed {
                self.result.orders_rejected += 1;
                continue;
            }
            let side = if target.delta > 0 { TradeSide::Buy } else { TradeSide::Sell };
            match self.books[i].match_all_or_none(side, target.delta.abs(), limit, now) {
                AonOutcome::Rejected => self.result.orders_rejected += 1,
                AonOutcome::Filled(report) => {
                    self.result.orders_accepted += 1;
                    self.positions[i] += target.delta;
                    for fill in report.fills {
                        let fee = self.config.cost.nu_trade * fill.qty as f64 * lot;
                        let signed = fill.price.0 * fill.qty;
                        self.gross_cent_lots += if side == TradeSide::Sell { signed } else { -signed };
                        self.result.trade_fees += fee;
                        self.result.traded_volume_mwh += fill.qty as f64 * lot;
                        self.result.trades.push(Trade {
                            exec_time: now,
                            product: target.product,
                            side,
                            price: fill.price,
                            qty: fill.qty,
                            fee,
                        });
                    }
                    traded = true;
                }
            }
        }
        if traded {
            self.mark(now);
        }
    }

    fn settle(&mut self, i: usize) {
        debug_assert_eq!(i, self.closed);
        let battery = &self.config.battery;
        let f = self.config.market.mwh(self.positions[i]);
        let next = battery.transition(self.soc, f);
        let violation = battery.violation(next);
        if violation > 0.0 {
            log::warn!("forced imbalance of {violation:.3} MWh on product {}", self.products[i].id);
            self.result.imbalances.push(Imbalance { product: self.products[i].id, volume_mwh: violation });
        }
        self.soc = battery.clamp(next);
        self.result.settled_volume_mwh += f.abs();
        self.result.degradation += self.config.cost.nu_deg * f.abs();
        if f < 0.0 {
            self.result.withdrawn_mwh += -f / battery.eta_out;
        }
        self.result.schedule.push(ScheduleEntry { product: self.products[i].id, position: self.positions[i], soc_end: self.soc });
        self.closed += 1;
        let closure = self.products[i].closure;
        if f != 0.0 {
            self.mark(closure);
        }
    }

    fn finish(mut self) -> BacktestResult {
        self.result.gross_cash = self.gross_cent_lots as f64 / 100.0 * self.config.market.lot;
        self.result.reward = self.reward();
        self.result.cycles_per_day = cycles(self.result.withdrawn_mwh, self.result.delivery_days, &self.config.battery);
        if self.result.reward_series.last().is_none_or(|&(t, _)| t < self.end) {
            let end = self.end;
            self.mark(end);
        }
        self.result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lob::{LimitOrder, MessageKind, Side};
    use approx::assert_abs_diff_eq;

    const A: ProductId = 10 * HOUR_MS;
    const B: ProductId = 11 * HOUR_MS;

    fn add(t: TimeMs, id: u64, product: ProductId, side: Side, eur: i64, lots: i64) -> BookMessage {
        BookMessage {
            timestamp: t,
            kind: MessageKind::Add,
            order: LimitOrder {
                order_id: id,
                product,
                side,
                price: Price(eur * 100),
                qty: lots,
                entry_time: t,
                valid_until: None,
            },
        }
    }

    fn cancel(t: TimeMs, id: u64, product: ProductId) -> BookMessage {
        let mut m = add(t, id, product, Side::Bid, 0, 1);
        m.kind = MessageKind::Cancel;
        m
    }

    fn lossless(delay: TimeMs) -> BacktestConfig {
        BacktestConfig {
            technical_delay_ms: delay,
            solve_time: SolveTimeMode::Fixed(0),
            battery: BatteryParams { eta_in: 1.0, eta_out: 1.0, ..BatteryParams::default() },
            ..BacktestConfig::default()
        }
    }

    fn planted() -> Vec<BookMessage> {
        vec![add(0, 1, A, Side::Ask, 20, 100), add(0, 2, B, Side::Bid, 60, 100)]
    }

    #[test]
    fn planted_pair() {
        let r = run_backtest(&lossless(0), &planted()).unwrap();
        assert_eq!(r.solve_count(), 1);
        assert_eq!(r.orders_accepted, 2);
        assert_eq!(r.orders_rejected, 0);
        assert_abs_diff_eq!(r.traded_volume_mwh, 20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.gross_cash, 400.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.trade_fees, 1.8, epsilon = 1e-9);
        assert_abs_diff_eq!(r.degradation, 80.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.reward, 318.20, epsilon = 1e-9);
        assert_eq!(r.schedule.len(), 2);
        assert_abs_diff_eq!(r.schedule[0].soc_end, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.schedule[1].soc_end, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.reward_series.last().unwrap().1, 318.20, epsilon = 1e-9);
    }

    #[test]
    fn empty_stream() {
        let r = run_backtest(&lossless(0), &[]).unwrap();
        assert_eq!(r.solve_count(), 0);
        assert_eq!(r.orders_submitted(), 0);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn cancel_during_delay_rejects_the_sell() {
        let mut stream = planted();
        stream.push(cancel(100, 2, B));
        let r = run_backtest(&lossless(200), &stream).unwrap();
        assert_eq!(r.orders_accepted, 1);
        assert_eq!(r.orders_rejected, 1);
        assert_eq!(r.schedule[0].position, 100);
        assert_eq!(r.schedule[1].position, 0);
        assert!(r.imbalances.is_empty());
        // bought 10 MWh at 20 and never sold it
        assert_abs_diff_eq!(r.reward, -200.0 - 0.9 - 40.0, epsilon = 1e-9);
    }

    #[test]
    fn no_solve_during_wait() {
        let mut stream = planted();
        stream.push(add(50, 3, B, Side::Bid, 61, 1));
        stream.push(add(5_000, 4, B, Side::Bid, 62, 1));
        let mut cfg = lossless(0);
        cfg.solve_time = SolveTimeMode::Fixed(1_000);
        let r = run_backtest(&cfg, &stream).unwrap();
        let times: Vec<_> = r.solves.iter().map(|s| s.time).collect();
        // the update at 50 ms waits for the first solve to finish
        assert_eq!(times, vec![0, 1_000, 5_000]);
    }

    #[test]
    fn interval_mode_trades_at_boundaries() {
        let stream: Vec<_> = planted().into_iter().map(|mut m| {
            m.timestamp = 90 * MINUTE_MS;
            m.order.entry_time = m.timestamp;
            m
        }).collect();
        let mut cfg = lossless(0);
        cfg.start = Some(0);
        cfg.solve_mode = SolveMode::Interval(HOUR_MS);
        let r = run_backtest(&cfg, &stream).unwrap();
        assert!(r.trades.iter().all(|t| t.exec_time == 2 * HOUR_MS));
        assert_abs_diff_eq!(r.reward, 318.20, epsilon = 1e-9);
    }

    #[test]
    fn closed_products_ignore_messages() {
        let mut stream = planted();
        stream.push(add(A - 10 * MINUTE_MS, 5, A, Side::Ask, 1, 10));
        let r = run_backtest(&lossless(0), &stream).unwrap();
        assert_eq!(r.ignored_messages, 1);
        assert_abs_diff_eq!(r.reward, 318.20, epsilon = 1e-9);
    }

    #[test]
    fn disorder_is_fatal() {
        let mut stream = planted();
        stream.insert(0, add(5, 9, A, Side::Bid, 1, 1));
        assert!(matches!(run_backtest(&lossless(0), &stream), Err(EngineError::Disorder { index: 1, .. })));
    }

    #[test]
    fn monthly_phi_lookup() {
        let mut table = [0.0; 12];
        table[1] = 2.5;
        let phi = Phi::Monthly(table);
        // 2021-02-10T00:00:00Z
        assert_eq!(phi.at(1_612_915_200_000), 2.5);
        assert_eq!(phi.at(0), 0.0);
    }
}
