//! Rolling-intrinsic trading of a battery on a continuous intraday power market.
//!
//! The crate is organised bottom-up:
//!
//! * [`lob`] keeps one price-time-priority limit order book per delivery product.
//! * [`battery`] holds the physical storage model and the feasible action sets.
//! * [`payoff`] and [`dp`] build the fast dynamic-programming intrinsic solver.
//! * [`oracle`] is an exhaustive exact solver used to validate the DP, and
//!   [`compare`] runs the two side by side.
//! * [`engine`] replays a message stream and runs the rolling intrinsic policy.
//! * [`tuner`] trains the spread penalty with Brent's method over sliding windows.
//! * [`data`] reads and writes the CSV formats and generates synthetic order flow.
//! * [`config`] is the flat key-value configuration shared by all front ends,
//!   and [`api`] runs, tunes and generates from it.
//! * [`parallel`] fans independent backtests out over threads.

pub mod api;
pub mod battery;
pub mod compare;
pub mod config;
pub mod data;
pub mod dp;
pub mod engine;
pub mod lob;
pub mod oracle;
pub mod parallel;
pub mod payoff;
pub mod problem;
pub mod throughput;
pub mod tuner;

pub use battery::{BatteryParams, CostParams, MarketParams};
pub use config::{ConfigError, FlatConfig};
pub use dp::{DpSolver, GridSpec};
pub use engine::{run_backtest, run_backtest_with, BacktestConfig, BacktestResult, Phi, SolveMode, SolveTimeMode};
pub use lob::{BookMessage, LimitOrder, MessageKind, OrderBook, Price, ProductId, Side, TimeMs};
pub use oracle::OracleSolver;
pub use problem::{IntrinsicProblem, IntrinsicSolver, SolveError, TargetPositions};
