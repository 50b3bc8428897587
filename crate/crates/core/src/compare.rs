//! DP against the exact oracle, per solve and per run.
//!
//! The per-solve rows come from a DP-driven backtest in which every snapshot
//! is also handed to the oracle, so both solvers see identical inputs. The
//! per-run figures come from two independent backtests, one driven by each
//! solver.

use std::time::Instant;

use serde::Serialize;

use crate::dp::DpSolver;
use crate::engine::{run_backtest_with, BacktestConfig, BacktestResult, EngineError};
use crate::lob::{BookMessage, TimeMs};
use crate::oracle::OracleSolver;
use crate::problem::{IntrinsicProblem, IntrinsicSolver, SolveError, TargetPositions};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub time: TimeMs,
    pub products: usize,
    pub dp_objective: f64,
    pub dp_ms: f64,
    /// `None` when the oracle refused the snapshot.
    pub oracle_objective: Option<f64>,
    pub oracle_ms: f64,
    /// `oracle - dp`; never negative up to rounding.
    pub gap: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub dp_reward: f64,
    /// `None` when the oracle-driven run could not be completed.
    pub oracle_reward: Option<f64>,
    pub dp_runtime_ms: f64,
    pub oracle_runtime_ms: f64,
    pub oracle_failed_solves: usize,
}

impl CompareReport {
    /// Relative shortfall of the DP-driven run against the oracle-driven run.
    pub fn run_gap(&self) -> Option<f64> {
        self.oracle_reward.map(|o| if o.abs() < 1e-12 { self.dp_reward - o } else { (o - self.dp_reward) / o.abs() })
    }

    pub fn skipped(&self) -> usize {
        self.rows.iter().filter(|r| r.skipped.is_some()).count()
    }

    pub fn max_gap(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.gap).fold(0.0, f64::max)
    }

    /// Mean oracle time over mean DP time, on the rows both solved.
    pub fn speed_ratio(&self) -> Option<f64> {
        let solved: Vec<&CompareRow> = self.rows.iter().filter(|r| r.gap.is_some()).collect();
        let dp: f64 = solved.iter().map(|r| r.dp_ms).sum();
        let oracle: f64 = solved.iter().map(|r| r.oracle_ms).sum();
        (dp > 0.0).then(|| oracle / dp)
    }
}

/// Drives the backtest with the DP and shadows every solve with the oracle.
struct Shadow {
    dp: DpSolver,
    oracle: OracleSolver,
    rows: Vec<CompareRow>,
}

impl IntrinsicSolver for Shadow {
    fn name(&self) -> &str {
        "dp"
    }

    fn solve(&mut self, problem: &IntrinsicProblem) -> Result<TargetPositions, SolveError> {
        let t = Instant::now();
        let dp = self.dp.solve(problem);
        let dp_ms = t.elapsed().as_secs_f64() * 1e3;
        let t = Instant::now();
        let oracle = self.oracle.solve(problem);
        let oracle_ms = t.elapsed().as_secs_f64() * 1e3;
        let dp_objective = dp.as_ref().map_or(f64::NAN, |d| d.objective);
        let (oracle_objective, skipped) = match &oracle {
            Ok(o) => (Some(o.objective), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.rows.push(CompareRow {
            time: problem.time,
            products: problem.stages.len(),
            dp_objective,
            dp_ms,
            oracle_objective,
            oracle_ms,
            gap: oracle_objective.map(|o| o - dp_objective),
            skipped,
        });
        dp
    }
}

pub fn compare(config: &BacktestConfig, stream: &[BookMessage], oracle_budget: f64) -> Result<CompareReport, EngineError> {
    let mut shadow = Shadow { dp: DpSolver::uniform(config.m), oracle: OracleSolver { budget: oracle_budget }, rows: Vec::new() };
    let dp: BacktestResult = run_backtest_with(config, stream, &mut shadow)?;
    let oracle = run_backtest_with(config, stream, &mut OracleSolver { budget: oracle_budget })?;
    let oracle_failed_solves = oracle.solves.iter().filter(|s| s.failed).count();
    Ok(CompareReport {
        rows: shadow.rows,
        dp_reward: dp.reward,
        oracle_reward: (oracle_failed_solves == 0).then_some(oracle.reward),
        dp_runtime_ms: dp.runtime_ms,
        oracle_runtime_ms: oracle.runtime_ms,
        oracle_failed_solves,
    })
}
