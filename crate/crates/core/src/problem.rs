//! The intrinsic problem at one decision time, and the shape of its answer.

use serde::Serialize;
use thiserror::Error;

use crate::battery::{BatteryParams, CostParams, MarketParams};
use crate::lob::{marginal_price, OrderBook, Price, ProductId, Side, TimeMs};
use crate::payoff::PayoffCurve;

/// Cost charged per MWh of state-of-charge violation when no physical
/// schedule is reachable with the available depth.
pub const INFEASIBILITY_PENALTY: f64 = 1e6;

/// One tradable product: inherited position and a snapshot of its book.
#[derive(Clone, Debug, PartialEq)]
pub struct StageInput {
    pub product: ProductId,
    /// Net position already held, in lots (positive = bought).
    pub position: i64,
    /// Aggregated asks, cheapest first.
    pub asks: Vec<(Price, i64)>,
    /// Aggregated bids, dearest first.
    pub bids: Vec<(Price, i64)>,
    /// Spread penalty charged per traded MWh (`phi * spread`).
    pub penalty_per_mwh: f64,
}

impl StageInput {
    pub fn from_book(book: &OrderBook, clock: TimeMs, position: i64, phi: f64, max_lots: i64) -> Self {
        let spread = book.best_quotes(clock).spread.map_or(0.0, Price::eur);
        StageInput {
            product: book.product(),
            position,
            asks: book.depth(Side::Ask, clock, max_lots),
            bids: book.depth(Side::Bid, clock, max_lots),
            penalty_per_mwh: phi * spread,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntrinsicProblem {
    pub time: TimeMs,
    /// State of charge at the start of the first stage.
    pub soc: f64,
    pub battery: BatteryParams,
    pub cost: CostParams,
    pub market: MarketParams,
    /// Products in delivery order.
    pub stages: Vec<StageInput>,
}

impl IntrinsicProblem {
    pub fn max_trade_lots(&self) -> i64 {
        self.market.max_trade_lots(&self.battery)
    }

    pub fn curve(&self, t: usize) -> PayoffCurve {
        let st = &self.stages[t];
        PayoffCurve::build(
            &st.asks,
            &st.bids,
            self.cost.nu(),
            self.market.lot,
            st.penalty_per_mwh,
            self.max_trade_lots(),
        )
    }

    /// Total state-of-charge violation of holding `positions` (lots per stage).
    pub fn violation_of(&self, positions: impl IntoIterator<Item = i64>) -> f64 {
        let mut s = self.soc;
        let mut total = 0.0;
        for f in positions {
            let next = self.battery.transition(s, self.market.mwh(f));
            total += self.battery.violation(next);
            s = self.battery.clamp(next);
        }
        total
    }

    /// Whether the inherited positions can be delivered by the battery.
    pub fn is_physical(&self) -> bool {
        self.violation_of(self.stages.iter().map(|s| s.position)) == 0.0
    }

    /// Objective of trading `deltas` (lots per stage): summed payoff minus the
    /// infeasibility penalty. `None` if a delta exceeds the book depth.
    pub fn evaluate(&self, deltas: &[i64]) -> Option<f64> {
        let mut payoff = 0.0;
        for (t, &k) in deltas.iter().enumerate() {
            payoff += self.curve(t).value(k)?;
        }
        let v = self.violation_of(self.stages.iter().zip(deltas).map(|(s, &k)| s.position + k));
        Some(payoff - INFEASIBILITY_PENALTY * v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductTarget {
    pub product: ProductId,
    /// Position held before the solve, in lots.
    pub position: i64,
    /// Trade to submit, in lots (positive buys).
    pub delta: i64,
    /// Immediate payoff of the trade as priced by the book snapshot.
    pub payoff: f64,
    /// Worst price the trade is allowed to clear at.
    pub limit: Option<Price>,
}

impl ProductTarget {
    pub fn target(&self) -> i64 {
        self.position + self.delta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetPositions {
    pub time: TimeMs,
    pub products: Vec<ProductTarget>,
    /// Summed payoff of all deltas, less any infeasibility penalty.
    pub objective: f64,
    pub physical_start: bool,
    /// State of charge at the start of each stage and after the last one.
    pub soc_path: Vec<f64>,
}

impl TargetPositions {
    /// Leaves every position unchanged.
    pub fn null(problem: &IntrinsicProblem) -> Self {
        let mut soc_path = vec![problem.soc];
        let mut s = problem.soc;
        for st in &problem.stages {
            s = problem.battery.clamp(problem.battery.transition(s, problem.market.mwh(st.position)));
            soc_path.push(s);
        }
        let physical = problem.is_physical();
        let v = problem.violation_of(problem.stages.iter().map(|s| s.position));
        TargetPositions {
            time: problem.time,
            products: problem
                .stages
                .iter()
                .map(|s| ProductTarget { product: s.product, position: s.position, delta: 0, payoff: 0.0, limit: None })
                .collect(),
            objective: -INFEASIBILITY_PENALTY * v,
            physical_start: physical,
            soc_path,
        }
    }

    /// Assembles targets from per-stage deltas and payoffs.
    pub fn from_deltas(problem: &IntrinsicProblem, deltas: &[i64], payoffs: &[f64]) -> Self {
        let mut soc_path = vec![problem.soc];
        let mut s = problem.soc;
        let mut violation = 0.0;
        let mut products = Vec::with_capacity(deltas.len());
        for ((st, &k), &payoff) in problem.stages.iter().zip(deltas).zip(payoffs) {
            let next = problem.battery.transition(s, problem.market.mwh(st.position + k));
            violation += problem.battery.violation(next);
            s = problem.battery.clamp(next);
            soc_path.push(s);
            let limit = match k {
                0 => None,
                k if k > 0 => marginal_price(&st.asks, k),
                k => marginal_price(&st.bids, -k),
            };
            products.push(ProductTarget { product: st.product, position: st.position, delta: k, payoff, limit });
        }
        TargetPositions {
            time: problem.time,
            products,
            objective: payoffs.iter().sum::<f64>() - INFEASIBILITY_PENALTY * violation,
            physical_start: problem.is_physical(),
            soc_path,
        }
    }

    pub fn deltas(&self) -> Vec<i64> {
        self.products.iter().map(|p| p.delta).collect()
    }

    pub fn is_null(&self) -> bool {
        self.products.iter().all(|p| p.delta == 0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("enumeration budget exceeded: {needed:e} action combinations > {budget:e}")]
    BudgetExceeded { needed: f64, budget: f64 },
    #[error("no schedule satisfies the storage limits")]
    Infeasible,
    #[error("unsupported instance: {0}")]
    Unsupported(String),
}

/// Anything that can answer an intrinsic problem. Solvers are expected to
/// be pure: the engine reuses the previous answer when a problem repeats.
pub trait IntrinsicSolver {
    fn name(&self) -> &str;
    fn solve(&mut self, problem: &IntrinsicProblem) -> Result<TargetPositions, SolveError>;
}
