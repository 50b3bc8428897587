//! Dynamic-programming intrinsic solver.
//!
//! Each product is a stage and the state of charge links consecutive stages.
//! The backward pass evaluates every admissible trade at every grid state and
//! stores the best value; off-grid states are read by linear interpolation.
//! The forward pass then replays the argmax from the actual starting state.

use thiserror::Error;

use crate::battery::{feasible_actions, power_actions, SOC_EPS};
use crate::payoff::PayoffCurve;
use crate::problem::{IntrinsicProblem, IntrinsicSolver, SolveError, TargetPositions, INFEASIBILITY_PENALTY};

pub use crate::problem::ProductTarget;

/// Values closer than this are treated as ties.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("a grid needs at least {min} points, got {got}")]
    TooSmall { min: usize, got: usize },
    #[error("grid points must be finite and strictly increasing")]
    NotIncreasing,
}

/// Sorted state-of-charge grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    /// Inverse spacing when the grid is equidistant, enabling O(1) lookup.
    inv_step: Option<f64>,
}

impl Grid {
    /// `m` equidistant points spanning `[0, s_max]`.
    pub fn uniform(s_max: f64, m: usize) -> Result<Self, GridError> {
        if m < 2 {
            return Err(GridError::TooSmall { min: 2, got: m });
        }
        let step = s_max / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|i| i as f64 * step).collect();
        points[m - 1] = s_max;
        Ok(Grid { points, inv_step: Some(1.0 / step) })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self, GridError> {
        if points.is_empty() {
            return Err(GridError::TooSmall { min: 1, got: 0 });
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GridError::NotIncreasing);
        }
        Ok(Grid { points, inv_step: None })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Linear interpolation of `values` (one per grid point) at `s`, clamped
    /// to the end values outside the grid.
    #[inline]
    pub fn interpolate(&self, values: &[f64], s: f64) -> f64 {
        let n = self.points.len();
        let first = self.points[0];
        if n == 1 || s <= first {
            return values[0];
        }
        if s >= self.points[n - 1] {
            return values[n - 1];
        }
        let (i, w) = match self.inv_step {
            Some(inv) => {
                let pos = (s - first) * inv;
                let i = (pos as usize).min(n - 2);
                (i, pos - i as f64)
            }
            None => {
                let i = self.points.partition_point(|&p| p <= s).saturating_sub(1).min(n - 2);
                let (lo, hi) = (self.points[i], self.points[i + 1]);
                (i, (s - lo) / (hi - lo))
            }
        };
        if w <= 1e-12 {
            values[i]
        } else if w >= 1.0 - 1e-12 {
            values[i + 1]
        } else {
            w * values[i + 1] + (1.0 - w) * values[i]
        }
    }
}

/// Which grid each stage's value function lives on.
#[derive(Clone, Debug, PartialEq)]
pub enum GridSpec {
    /// The same `m`-point equidistant grid for every stage.
    Uniform(usize),
    /// One grid per stage plus one for the terminal state (length `T + 1`).
    PerStage(Vec<Grid>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Uniform(11)
    }
}

/// Value functions `V_t` on their grids, with `V_T == 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunctionSet {
    grids: Vec<Grid>,
    values: Vec<Vec<f64>>,
}

impl ValueFunctionSet {
    pub fn grid(&self, t: usize) -> &Grid {
        if self.grids.len() == 1 {
            &self.grids[0]
        } else {
            &self.grids[t]
        }
    }

    pub fn values(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    pub fn stages(&self) -> usize {
        self.values.len() - 1
    }

    pub fn value_at(&self, t: usize, s: f64) -> f64 {
        self.grid(t).interpolate(&self.values[t], s)
    }
}

#[derive(Copy, Clone, Debug)]
struct Choice {
    k: i64,
    total: f64,
    payoff: f64,
}

/// Best trade at stage `t` from state `s`, given the next stage's values.
fn best_action(
    problem: &IntrinsicProblem,
    curve: &PayoffCurve,
    t: usize,
    s: f64,
    next_grid: &Grid,
    next_values: &[f64],
) -> Choice {
    let battery = &problem.battery;
    let market = &problem.market;
    let f0 = problem.stages[t].position;
    let (depth_lo, depth_hi) = (-curve.max_sell(), curve.max_buy());
    let u = market.lot;
    let mut best = Choice { k: 0, total: f64::NEG_INFINITY, payoff: 0.0 };
    let mut consider = |k: i64, payoff: f64, next: f64, violation: f64| {
        let total = payoff - INFEASIBILITY_PENALTY * violation + next_grid.interpolate(next_values, next);
        if total > best.total + TIE_EPS || (total > best.total - TIE_EPS && k.abs() < best.k.abs()) {
            best = Choice { k, total, payoff };
        }
    };
    if let Some(range) = feasible_actions(s, f0, battery, market).and_then(|r| r.intersect(depth_lo, depth_hi)) {
        let (buy, sell) = (curve.buys(), curve.sells());
        let mut k = range.lo;
        // discharging part first, then charging, so each loop has a fixed efficiency
        let discharge = 1.0 / battery.eta_out;
        while k <= range.hi && f0 + k <= 0 {
            let payoff = if k >= 0 { buy[k as usize] } else { sell[k.unsigned_abs() as usize] };
            let next = s + (f0 + k) as f64 * u * discharge;
            consider(k, payoff, next.clamp(0.0, battery.s_max), 0.0);
            k += range.stride;
        }
        while k <= range.hi {
            let payoff = if k >= 0 { buy[k as usize] } else { sell[k.unsigned_abs() as usize] };
            let next = s + battery.eta_in * ((f0 + k) as f64 * u);
            consider(k, payoff, next.clamp(0.0, battery.s_max), 0.0);
            k += range.stride;
        }
    } else {
        // No physical trade with the available depth: minimise the violation.
        let range = power_actions(f0, battery, market)
            .and_then(|r| r.intersect(depth_lo, depth_hi))
            .expect("the null trade is always within power and depth");
        for k in range.iter() {
            let payoff = curve.value(k).expect("range lies within depth");
            let next = battery.transition(s, (f0 + k) as f64 * u);
            let violation = battery.violation(next);
            consider(k, payoff, battery.clamp(next), violation);
        }
    }
    debug_assert!(best.total > f64::NEG_INFINITY);
    best
}

fn grids_for(problem: &IntrinsicProblem, spec: &GridSpec) -> Result<Vec<Grid>, GridError> {
    match spec {
        GridSpec::Uniform(m) => Ok(vec![Grid::uniform(problem.battery.s_max, *m)?]),
        GridSpec::PerStage(grids) => {
            let need = problem.stages.len() + 1;
            if grids.len() != need {
                return Err(GridError::TooSmall { min: need, got: grids.len() });
            }
            Ok(grids.clone())
        }
    }
}

/// Builds the value functions from the last product back to the first.
pub fn backward_pass(
    problem: &IntrinsicProblem,
    curves: &[PayoffCurve],
    spec: &GridSpec,
) -> Result<ValueFunctionSet, GridError> {
    let grids = grids_for(problem, spec)?;
    let stages = problem.stages.len();
    let mut vf = ValueFunctionSet { grids, values: vec![Vec::new(); stages + 1] };
    vf.values[stages] = vec![0.0; vf.grid(stages).len()];
    for t in (0..stages).rev() {
        let (head, tail) = vf.values.split_at_mut(t + 1);
        let next_values = &tail[0];
        let next_grid = if vf.grids.len() == 1 { &vf.grids[0] } else { &vf.grids[t + 1] };
        let grid = if vf.grids.len() == 1 { &vf.grids[0] } else { &vf.grids[t] };
        head[t] = grid
            .points()
            .iter()
            .map(|&s| best_action(problem, &curves[t], t, s, next_grid, next_values).total)
            .collect();
    }
    Ok(vf)
}

/// Replays the argmax from the actual starting state.
pub fn forward_pass(vf: &ValueFunctionSet, problem: &IntrinsicProblem, curves: &[PayoffCurve]) -> TargetPositions {
    let mut s = problem.soc;
    let mut deltas = Vec::with_capacity(curves.len());
    let mut payoffs = Vec::with_capacity(curves.len());
    for (t, curve) in curves.iter().enumerate() {
        let choice = best_action(problem, curve, t, s, vf.grid(t + 1), vf.values(t + 1));
        let next = problem.battery.transition(s, problem.market.mwh(problem.stages[t].position + choice.k));
        s = problem.battery.clamp(next);
        deltas.push(choice.k);
        payoffs.push(choice.payoff);
    }
    TargetPositions::from_deltas(problem, &deltas, &payoffs)
}

/// Backward then forward pass. A physical start never returns a plan worth
/// less than standing still.
pub fn solve_intrinsic(problem: &IntrinsicProblem, spec: &GridSpec) -> Result<TargetPositions, GridError> {
    let curves: Vec<PayoffCurve> = (0..problem.stages.len()).map(|t| problem.curve(t)).collect();
    let vf = backward_pass(problem, &curves, spec)?;
    let targets = forward_pass(&vf, problem, &curves);
    if targets.physical_start && targets.objective < 0.0 {
        return Ok(TargetPositions::null(problem));
    }
    debug_assert!(targets.soc_path.iter().all(|&s| (-SOC_EPS..=problem.battery.s_max + SOC_EPS).contains(&s)));
    Ok(targets)
}

/// The DP as a pluggable solver.
#[derive(Clone, Debug, Default)]
pub struct DpSolver {
    pub grid: GridSpec,
}

impl DpSolver {
    pub fn uniform(m: usize) -> Self {
        DpSolver { grid: GridSpec::Uniform(m) }
    }
}

impl IntrinsicSolver for DpSolver {
    fn name(&self) -> &str {
        "dp"
    }

    fn solve(&mut self, problem: &IntrinsicProblem) -> Result<TargetPositions, SolveError> {
        solve_intrinsic(problem, &self.grid).map_err(|e| SolveError::Unsupported(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::{BatteryParams, CostParams, MarketParams};
    use crate::lob::Price;
    use crate::problem::StageInput;
    use approx::assert_abs_diff_eq;

    fn eur(p: i64) -> Price {
        Price(p * 100)
    }

    fn stage(product: i64, asks: Vec<(Price, i64)>, bids: Vec<(Price, i64)>) -> StageInput {
        StageInput { product, position: 0, asks, bids, penalty_per_mwh: 0.0 }
    }

    fn two_product(nu_deg: f64) -> IntrinsicProblem {
        IntrinsicProblem {
            time: 0,
            soc: 0.0,
            battery: BatteryParams { s_max: 10.0, f_min: -10.0, f_max: 10.0, eta_in: 1.0, eta_out: 1.0, s0: 0.0 },
            cost: CostParams { nu_trade: 0.0, nu_deg },
            market: MarketParams::default(),
            stages: vec![stage(0, vec![(eur(20), 100)], vec![]), stage(1, vec![], vec![(eur(60), 100)])],
        }
    }

    #[test]
    fn interpolation_examples() {
        let g = Grid::uniform(10.0, 3).unwrap();
        let v = [0.0, 100.0, 150.0];
        assert_eq!(g.interpolate(&v, 7.5), 125.0);
        assert_eq!(g.interpolate(&v, 5.0), 100.0);
        let g = Grid::uniform(10.0, 2).unwrap();
        assert_eq!(g.interpolate(&[0.0, 80.0], 2.5), 20.0);
        let g = Grid::from_points(vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(g.interpolate(&[0.0, 10.0, 40.0], 2.5), 25.0);
        assert_eq!(g.interpolate(&[0.0, 10.0, 40.0], 4.0), 40.0);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::uniform(10.0, 1).is_err());
        assert!(Grid::from_points(vec![0.0, 0.0]).is_err());
        let g = Grid::uniform(10.0, 11).unwrap();
        assert_eq!(g.points()[10], 10.0);
        assert_abs_diff_eq!(g.points()[3], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_books_have_zero_value() {
        let mut p = two_product(0.0);
        p.stages = vec![stage(0, vec![], vec![])];
        let curves = vec![p.curve(0)];
        let vf = backward_pass(&p, &curves, &GridSpec::Uniform(11)).unwrap();
        assert!(vf.values(0).iter().all(|&v| v == 0.0));
        let targets = solve_intrinsic(&p, &GridSpec::Uniform(11)).unwrap();
        assert!(targets.is_null());
    }

    #[test]
    fn two_product_arbitrage() {
        let p = two_product(0.0);
        let curves: Vec<_> = (0..2).map(|t| p.curve(t)).collect();
        let vf = backward_pass(&p, &curves, &GridSpec::Uniform(11)).unwrap();
        assert_abs_diff_eq!(vf.value_at(0, 0.0), 400.0, epsilon = 1e-9);
        let targets = forward_pass(&vf, &p, &curves);
        assert_eq!(targets.deltas(), vec![100, -100]);
        assert_eq!(targets.products[0].limit, Some(eur(20)));
        assert_eq!(targets.products[1].limit, Some(eur(60)));

        let p = two_product(4.09);
        let targets = solve_intrinsic(&p, &GridSpec::Uniform(11)).unwrap();
        assert_abs_diff_eq!(targets.objective, 10.0 * (60.0 - 4.09) - 10.0 * (20.0 + 4.09), epsilon = 1e-9);
        assert_abs_diff_eq!(targets.objective, 318.20, epsilon = 1e-9);
    }

    #[test]
    fn full_battery_facing_only_asks_stays_put() {
        let mut p = two_product(0.0);
        p.soc = 10.0;
        p.stages[1] = stage(1, vec![(eur(1), 100)], vec![]);
        assert!(solve_intrinsic(&p, &GridSpec::Uniform(11)).unwrap().is_null());
    }

    #[test]
    fn non_physical_position_is_repaired() {
        // sold 3 MWh of the first product from an empty battery
        let mut p = two_product(0.0);
        p.stages[0].position = -30;
        p.stages[0].asks = vec![(eur(50), 100)];
        assert!(!p.is_physical());
        let targets = solve_intrinsic(&p, &GridSpec::Uniform(11)).unwrap();
        assert!(targets.products[0].delta >= 30);
        assert_eq!(p.violation_of(targets.products.iter().map(|t| t.target())), 0.0);
    }

    #[test]
    fn no_sells_beyond_depth() {
        let mut p = two_product(0.0);
        p.stages[1].bids = vec![(eur(60), 20)];
        let targets = solve_intrinsic(&p, &GridSpec::Uniform(11)).unwrap();
        assert_eq!(targets.deltas(), vec![20, -20]);
    }
}
