mod common;

use common::{recomputed_reward, year_config, year_spec};
use ritrade::data::{generate_synthetic, planted_pair, SyntheticFlowSpec};
use ritrade::engine::{run_backtest, run_backtest_with, BacktestConfig, SolveMode, SolveTimeMode, HOUR_MS, MINUTE_MS};
use ritrade::lob::Side;
use ritrade::oracle::OracleSolver;
use ritrade::parallel::{map_batch, map_seq};

fn week(seed: u64) -> Vec<ritrade::BookMessage> {
    generate_synthetic(&year_spec(seed, 7))
}

#[test]
fn cash_is_conserved_to_the_cent() {
    for mode in [SolveMode::RelevantUpdates, SolveMode::Interval(15 * MINUTE_MS)] {
        for (seed, cfg) in [(1, year_config()), (2, BacktestConfig { solve_time: SolveTimeMode::Fixed(1), ..BacktestConfig::default() })] {
            let cfg = BacktestConfig { solve_mode: mode, ..cfg };
            let r = run_backtest(&cfg, &week(seed)).unwrap();
            assert!(!r.trades.is_empty());
            assert!((r.reward - recomputed_reward(&r, &cfg)).abs() < 0.005, "{} vs {}", r.reward, recomputed_reward(&r, &cfg));
            assert!((r.reward - (r.gross_cash - r.trade_fees - r.degradation)).abs() < 1e-6);
        }
    }
}

#[test]
fn every_solve_from_a_physical_start_is_non_negative() {
    let r = run_backtest(&year_config(), &week(4)).unwrap();
    assert!(r.solves.iter().all(|s| !s.physical_start || s.objective >= 0.0));
    assert!(r.solves.iter().all(|s| s.physical_start));
    assert!(r.imbalances.is_empty());
}

#[test]
fn zero_delay_fills_every_order() {
    let cfg = BacktestConfig { technical_delay_ms: 0, solve_time: SolveTimeMode::Fixed(0), ..year_config() };
    for seed in 0..3 {
        let r = run_backtest(&cfg, &week(seed)).unwrap();
        let submitted: usize = r.solves.iter().map(|s| s.orders).sum();
        assert!(submitted > 0);
        assert_eq!(r.orders_rejected, 0);
        assert_eq!(r.orders_accepted, submitted);
    }
}

#[test]
fn replays_are_deterministic() {
    let cfg = year_config();
    let s = week(5);
    let a = run_backtest(&cfg, &s).unwrap();
    let b = run_backtest(&cfg, &s).unwrap();
    assert_eq!(a.trades, b.trades);
    assert_eq!(a.schedule, b.schedule);
    assert_eq!(a.reward_series, b.reward_series);
}

#[test]
fn parallel_batch_matches_sequential() {
    let seeds: Vec<u64> = (0..4).collect();
    let cfg = year_config();
    let job = |&seed: &u64| {
        let r = run_backtest(&cfg, &generate_synthetic(&year_spec(seed, 2))).unwrap();
        (r.reward, r.trades)
    };
    assert_eq!(map_batch(&seeds, job), map_seq(&seeds, job));
}

#[test]
fn oracle_driven_run_on_planted_pair() {
    let cfg = BacktestConfig { solve_time: SolveTimeMode::Fixed(0), ..BacktestConfig::default() };
    let dp = run_backtest(&cfg, &planted_pair(0)).unwrap();
    let oracle = run_backtest_with(&cfg, &planted_pair(0), &mut OracleSolver::default()).unwrap();
    assert_eq!(dp.trades, oracle.trades);
    assert!(dp.reward > 0.0);
}

#[test]
fn agent_trades_stay_within_power_and_storage() {
    let cfg = year_config();
    let r = run_backtest(&cfg, &week(6)).unwrap();
    for e in &r.schedule {
        let f = cfg.market.mwh(e.position);
        assert!(f <= cfg.battery.f_max + 1e-9 && f >= cfg.battery.f_min - 1e-9);
        assert!((-1e-9..=cfg.battery.s_max + 1e-9).contains(&e.soc_end));
    }
}

#[test]
fn generator_flow_intensifies_toward_gate_closure() {
    let spec = SyntheticFlowSpec { products: 96, ..SyntheticFlowSpec::default() };
    let stream = generate_synthetic(&spec);
    let hours = ((spec.open_lead_ms - spec.gate_closure_lead_ms) / HOUR_MS) as usize;
    let mut counts = vec![0usize; hours + 1];
    for m in &stream {
        let to_closure = m.order.product - spec.gate_closure_lead_ms - m.timestamp;
        assert!(to_closure >= 0, "flow after gate closure");
        counts[(to_closure / HOUR_MS) as usize] += 1;
    }
    // bucket 0 is the last hour before closure; counts fall moving away from it
    let full = &counts[..hours];
    assert!(full.windows(2).all(|w| w[0] > w[1]), "{counts:?}");
    assert_eq!(stream, generate_synthetic(&spec));
    assert!(stream.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    assert!(stream.iter().any(|m| m.order.side == Side::Bid) && stream.iter().any(|m| m.order.price.0 < 0));
}
