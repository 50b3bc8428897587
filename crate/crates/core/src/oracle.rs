//! Exhaustive exact solver over the reachable state space.
//!
//! States are identified by integer lot counts rather than floating-point
//! charge levels, so two paths that reach the same state merge exactly. The
//! solver walks the ladders directly instead of reusing [`PayoffCurve`], which
//! keeps it independent of the DP it is meant to check.
//!
//! [`PayoffCurve`]: crate::payoff::PayoffCurve

use std::collections::{BTreeSet, HashMap};

use crate::battery::{BatteryParams, MarketParams, SOC_EPS};
use crate::dp::Grid;
use crate::lob::Price;
use crate::problem::{IntrinsicProblem, IntrinsicSolver, SolveError, TargetPositions};

/// Default ceiling on the number of action combinations the oracle enumerates.
pub const DEFAULT_BUDGET: f64 = 1e8;

/// Integer identity of a charge level: lots charged and lots discharged so far.
type StateKey = (i64, i64);

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub deltas: Vec<i64>,
    pub payoffs: Vec<f64>,
    pub objective: f64,
    /// Distinct states visited per stage, including the start.
    pub states_per_stage: Vec<usize>,
}

#[derive(Copy, Clone)]
struct Lattice<'a> {
    battery: &'a BatteryParams,
    market: &'a MarketParams,
    start: f64,
    lossless: bool,
}

impl Lattice<'_> {
    fn soc(&self, (a, b): StateKey) -> f64 {
        let u = self.market.lot;
        self.start + self.battery.eta_in * u * a as f64 - u / self.battery.eta_out * b as f64
    }

    fn step(&self, (a, b): StateKey, position: i64) -> StateKey {
        let next = if position > 0 { (a + position, b) } else { (a, b - position) };
        if self.lossless {
            (next.0 - next.1, 0)
        } else {
            next
        }
    }

    fn in_bounds(&self, key: StateKey) -> bool {
        let s = self.soc(key);
        s >= -SOC_EPS && s <= self.battery.s_max + SOC_EPS
    }

    /// Total positions allowed by the power limits, on the kappa lattice.
    fn power_positions(&self) -> (i64, i64) {
        let u = self.market.lot;
        ((self.battery.f_min / u - SOC_EPS).ceil() as i64, (self.battery.f_max / u + SOC_EPS).floor() as i64)
    }
}

/// Cost of filling `lots` against `levels` (best first), or `None` if the
/// ladder is too thin.
fn walk(levels: &[(Price, i64)], lots: i64) -> Option<f64> {
    let mut left = lots;
    let mut eur = 0.0;
    for &(price, qty) in levels {
        if left == 0 {
            break;
        }
        let take = qty.min(left);
        eur += price.eur() * take as f64;
        left -= take;
    }
    (left == 0).then_some(eur)
}

fn trade_payoff(problem: &IntrinsicProblem, t: usize, k: i64) -> Option<f64> {
    let st = &problem.stages[t];
    let u = problem.market.lot;
    let per_mwh = problem.cost.nu_trade + problem.cost.nu_deg + st.penalty_per_mwh;
    let cap = problem.max_trade_lots();
    if k.abs() > cap {
        return None;
    }
    match k {
        0 => Some(0.0),
        k if k > 0 => walk(&st.asks, k).map(|eur| -eur * u - per_mwh * u * k as f64),
        k => walk(&st.bids, -k).map(|eur| eur * u - per_mwh * u * (-k) as f64),
    }
}

/// Trades to consider at stage `t`: power limits on the total position,
/// kappa lattice, and available depth.
fn candidate_trades(problem: &IntrinsicProblem, lattice: &Lattice<'_>, t: usize) -> Vec<i64> {
    let (lo, hi) = lattice.power_positions();
    let f0 = problem.stages[t].position;
    let kappa = problem.market.kappa;
    (lo - f0..=hi - f0).filter(|k| k.rem_euclid(kappa) == 0).filter(|&k| trade_payoff(problem, t, k).is_some()).collect()
}

/// Exact optimum of the intrinsic problem under hard storage limits.
pub fn solve_exact(problem: &IntrinsicProblem, budget: f64) -> Result<ExactSolution, SolveError> {
    if !problem.is_physical() {
        return Err(SolveError::Infeasible);
    }
    let lattice = Lattice {
        battery: &problem.battery,
        market: &problem.market,
        start: problem.soc,
        lossless: problem.battery.eta_in == 1.0 && problem.battery.eta_out == 1.0,
    };
    let candidates: Vec<Vec<i64>> = (0..problem.stages.len()).map(|t| candidate_trades(problem, &lattice, t)).collect();
    let needed: f64 = candidates.iter().map(|c| c.len() as f64).product();
    if needed > budget {
        return Err(SolveError::BudgetExceeded { needed, budget });
    }

    // best value reaching each state, with the trade and predecessor that achieved it
    let mut layers: Vec<HashMap<StateKey, (f64, i64, StateKey)>> = Vec::with_capacity(candidates.len() + 1);
    layers.push(HashMap::from([((0, 0), (0.0, 0, (0, 0)))]));
    for (t, trades) in candidates.iter().enumerate() {
        let mut next: HashMap<StateKey, (f64, i64, StateKey)> = HashMap::new();
        // sorted iteration keeps tie-breaking deterministic
        let mut states: Vec<_> = layers[t].iter().map(|(&k, &(v, _, _))| (k, v)).collect();
        states.sort_by_key(|&(k, _)| k);
        for (key, value) in states {
            for &k in trades {
                let to = lattice.step(key, problem.stages[t].position + k);
                if !lattice.in_bounds(to) {
                    continue;
                }
                let v = value + trade_payoff(problem, t, k).expect("candidate within depth");
                let better = match next.get(&to) {
                    None => true,
                    Some(&(best, best_k, _)) => v > best + 1e-9 || (v > best - 1e-9 && k.abs() < best_k.abs()),
                };
                if better {
                    next.insert(to, (v, k, key));
                }
            }
        }
        if next.is_empty() {
            return Err(SolveError::Infeasible);
        }
        layers.push(next);
    }

    let last = layers.last().expect("at least the start layer");
    let mut end = *last.keys().min().expect("non-empty layer");
    for (&key, &(v, _, _)) in last {
        let (best, _, _) = last[&end];
        if v > best + 1e-9 || (v > best - 1e-9 && key < end) {
            end = key;
        }
    }
    let objective = last[&end].0;
    let mut deltas = vec![0; candidates.len()];
    let mut payoffs = vec![0.0; candidates.len()];
    let mut key = end;
    for t in (0..candidates.len()).rev() {
        let (_, k, prev) = layers[t + 1][&key];
        deltas[t] = k;
        payoffs[t] = trade_payoff(problem, t, k).expect("candidate within depth");
        key = prev;
    }
    Ok(ExactSolution { deltas, payoffs, objective, states_per_stage: layers.iter().map(HashMap::len).collect() })
}

/// Every charge level reachable at each stage boundary under the power and
/// storage limits, ignoring book depth. Running the DP on these grids removes
/// all interpolation error.
pub fn exact_grid(problem: &IntrinsicProblem, max_points: usize) -> Result<Vec<Grid>, SolveError> {
    let lattice = Lattice {
        battery: &problem.battery,
        market: &problem.market,
        start: problem.soc,
        lossless: problem.battery.eta_in == 1.0 && problem.battery.eta_out == 1.0,
    };
    let (lo, hi) = lattice.power_positions();
    let kappa = problem.market.kappa;
    let positions: Vec<i64> = (lo..=hi).filter(|f| f.rem_euclid(kappa) == 0).collect();
    let mut layer: BTreeSet<StateKey> = BTreeSet::from([(0, 0)]);
    let mut grids = Vec::with_capacity(problem.stages.len() + 1);
    let mut total = 0usize;
    for t in 0..=problem.stages.len() {
        let mut socs: Vec<f64> = layer.iter().map(|&k| lattice.soc(k).clamp(0.0, problem.battery.s_max)).collect();
        socs.sort_by(f64::total_cmp);
        socs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * problem.battery.s_max.max(1.0));
        total += socs.len();
        if total > max_points {
            return Err(SolveError::BudgetExceeded { needed: total as f64, budget: max_points as f64 });
        }
        grids.push(Grid::from_points(socs).map_err(|e| SolveError::Unsupported(e.to_string()))?);
        if t == problem.stages.len() {
            break;
        }
        layer = layer
            .iter()
            .flat_map(|&key| positions.iter().map(move |&f| lattice.step(key, f)))
            .filter(|&key| lattice.in_bounds(key))
            .collect();
    }
    Ok(grids)
}

/// The exact solver as a pluggable [`IntrinsicSolver`].
#[derive(Clone, Debug)]
pub struct OracleSolver {
    pub budget: f64,
}

impl Default for OracleSolver {
    fn default() -> Self {
        OracleSolver { budget: DEFAULT_BUDGET }
    }
}

impl IntrinsicSolver for OracleSolver {
    fn name(&self) -> &str {
        "oracle"
    }

    fn solve(&mut self, problem: &IntrinsicProblem) -> Result<TargetPositions, SolveError> {
        let sol = solve_exact(problem, self.budget)?;
        Ok(TargetPositions::from_deltas(problem, &sol.deltas, &sol.payoffs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::CostParams;
    use crate::dp::{solve_intrinsic, GridSpec};
    use crate::problem::StageInput;
    use approx::assert_abs_diff_eq;

    fn eur(p: i64) -> Price {
        Price(p * 100)
    }

    fn problem(eta: f64, stages: Vec<StageInput>) -> IntrinsicProblem {
        IntrinsicProblem {
            time: 0,
            soc: 0.0,
            battery: BatteryParams { s_max: 1.0, f_min: -0.5, f_max: 0.5, eta_in: eta, eta_out: eta, s0: 0.0 },
            cost: CostParams { nu_trade: 0.0, nu_deg: 1.0 },
            market: MarketParams::default(),
            stages,
        }
    }

    fn stage(asks: Vec<(Price, i64)>, bids: Vec<(Price, i64)>) -> StageInput {
        StageInput { product: 0, position: 0, asks, bids, penalty_per_mwh: 0.0 }
    }

    #[test]
    fn buy_low_sell_high() {
        let p = problem(1.0, vec![
            stage(vec![(eur(10), 5), (eur(30), 5)], vec![]),
            stage(vec![(eur(12), 5)], vec![]),
            stage(vec![], vec![(eur(50), 10)]),
        ]);
        let sol = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        // the sell is capped at 5 lots by power, so only the cheapest buy is used
        assert_eq!(sol.deltas, vec![5, 0, -5]);
        assert_abs_diff_eq!(sol.objective, 0.5 * 49.0 - 0.5 * 11.0, epsilon = 1e-9);
    }

    #[test]
    fn lossy_states_do_not_merge() {
        let p = problem(0.9, vec![stage(vec![(eur(1), 5)], vec![(eur(1), 5)]); 2]);
        let sol = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        assert!(sol.states_per_stage[2] > sol.states_per_stage[1]);
        assert_eq!(sol.deltas, vec![0, 0]);
    }

    #[test]
    fn refuses_non_physical_and_over_budget() {
        let mut p = problem(1.0, vec![stage(vec![], vec![(eur(1), 5)])]);
        p.stages[0].position = -3;
        assert_eq!(solve_exact(&p, DEFAULT_BUDGET), Err(SolveError::Infeasible));
        let p = problem(1.0, vec![stage(vec![(eur(1), 5)], vec![(eur(1), 5)]); 4]);
        assert!(matches!(solve_exact(&p, 10.0), Err(SolveError::BudgetExceeded { .. })));
    }

    #[test]
    fn exact_grid_is_reachable_set() {
        let p = problem(1.0, vec![stage(vec![], vec![]); 3]);
        let grids = exact_grid(&p, 10_000).unwrap();
        assert_eq!(grids.len(), 4);
        assert_eq!(grids[0].points(), &[0.0]);
        assert_eq!(grids[1].len(), 6);
        assert_eq!(grids[2].len(), 11);
        assert_eq!(grids[3].len(), 11);
        let lossy = problem(0.5, vec![stage(vec![], vec![]); 2]);
        let grids = exact_grid(&lossy, 10_000).unwrap();
        // charge 1..5 lots at half efficiency, then any mix that stays in bounds
        assert_eq!(grids[1].len(), 6);
        assert!(grids[2].len() > 6);
    }

    #[test]
    fn dp_on_exact_grid_matches() {
        let p = problem(1.0, vec![
            stage(vec![(eur(20), 3), (eur(25), 4)], vec![(eur(5), 2)]),
            stage(vec![(eur(40), 9)], vec![(eur(31), 3), (eur(29), 6)]),
            stage(vec![(eur(10), 2)], vec![(eur(60), 1), (eur(45), 8)]),
        ]);
        let exact = solve_exact(&p, DEFAULT_BUDGET).unwrap();
        let grids = exact_grid(&p, 10_000).unwrap();
        let dp = solve_intrinsic(&p, &GridSpec::PerStage(grids)).unwrap();
        assert_abs_diff_eq!(dp.objective, exact.objective, epsilon = 1e-9);
    }
}
