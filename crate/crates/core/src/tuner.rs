//! Training the spread penalty `phi` on past windows.
//!
//! The backtest reward as a function of `phi` is a black box: noisy, piecewise
//! constant in places and possibly multi-modal. A coarse five-point scan picks
//! the bracket, Brent's method refines it, and the best point ever evaluated is
//! returned together with flags describing how trustworthy it is.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};

use crate::engine::{run_backtest, BacktestConfig, EngineError, Phi, DAY_MS};
use crate::lob::{BookMessage, ProductId};
use crate::parallel::map_batch;

const GOLDEN: f64 = 0.381_966_011_250_105_1;
const SCAN_POINTS: usize = 5;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrentOptions {
    /// Absolute tolerance on the maximiser.
    pub tol: f64,
    pub max_evals: usize,
}

impl Default for BrentOptions {
    fn default() -> Self {
        BrentOptions { tol: 0.05, max_evals: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evals: usize,
    /// Every evaluation returned (nearly) the same value.
    pub flat: bool,
    /// The evaluation budget ran out before the tolerance was met.
    pub exhausted: bool,
    /// Brent settled on a point worse than the best scan point.
    pub scan_disagreement: bool,
}

struct Counted<F> {
    f: F,
    evals: usize,
    best: (f64, f64),
    lowest: f64,
}

impl<F: FnMut(f64) -> f64> Counted<F> {
    fn eval(&mut self, x: f64) -> f64 {
        let v = (self.f)(x);
        self.evals += 1;
        if v > self.best.1 || self.evals == 1 {
            self.best = (x, v);
        }
        self.lowest = self.lowest.min(v);
        v
    }
}

/// Maximises `f` over `[lo, hi]`.
pub fn maximize_scalar<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, opts: BrentOptions) -> Maximum {
    assert!(lo <= hi, "empty search interval [{lo}, {hi}]");
    assert!(opts.tol > 0.0, "tolerance must be positive");
    let mut c = Counted { f, evals: 0, best: (lo, f64::NEG_INFINITY), lowest: f64::INFINITY };
    if hi - lo <= opts.tol {
        let x = 0.5 * (lo + hi);
        let value = c.eval(if hi == lo { lo } else { x });
        return Maximum { x: c.best.0, value, evals: 1, flat: true, exhausted: false, scan_disagreement: false };
    }

    let xs: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| c.eval(x)).collect();
    let i = (0..SCAN_POINTS).fold(0, |b, j| if ys[j] > ys[b] { j } else { b });
    let (scan_x, scan_y) = (xs[i], ys[i]);
    let a = xs[i.saturating_sub(1)];
    let b = xs[(i + 1).min(SCAN_POINTS - 1)];

    let budget = opts.max_evals.saturating_sub(c.evals);
    let (bx, by, converged) = brent_min(|x| -c.eval(x), a, b, opts.tol, budget);
    let (bx, by) = (bx, -by);

    let scale = c.best.1.abs().max(1.0);
    let flat = c.best.1 - c.lowest <= 1e-9 * scale;
    Maximum {
        x: c.best.0,
        value: c.best.1,
        evals: c.evals,
        flat,
        exhausted: !converged,
        scan_disagreement: !flat && by < scan_y - 1e-9 * scale && bx != scan_x,
    }
}

/// Brent's derivative-free minimisation on `[a, b]`. Returns the final point,
/// its value and whether the tolerance was met within `budget` evaluations.
fn brent_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64, budget: usize) -> (f64, f64, bool) {
    if budget == 0 {
        return (a, f64::INFINITY, false);
    }
    let eps = f64::EPSILON.sqrt();
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut used = 1;
    let (mut d, mut e) = (0.0f64, 0.0f64);
    loop {
        let mid = 0.5 * (a + b);
        let tol1 = eps * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            return (x, fx, true);
        }
        if used >= budget {
            return (x, fx, false);
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let prev = e;
            e = d;
            if p.abs() < (0.5 * q * prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < mid { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < mid { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = x + if d.abs() >= tol1 { d } else { tol1.copysign(d) };
        let fu = f(u);
        used += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
}

/// How a long stream is cut into training windows.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowSpec {
    /// Calendar month (UTC) of the product's delivery.
    Month,
    /// Consecutive blocks of this many delivery days.
    Days(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub base: BacktestConfig,
    pub window: WindowSpec,
    pub phi_lo: f64,
    pub phi_hi: f64,
    pub brent: BrentOptions,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            base: BacktestConfig::default(),
            window: WindowSpec::Month,
            phi_lo: 0.0,
            phi_hi: 10.0,
            brent: BrentOptions::default(),
        }
    }
}

/// Messages of the products delivered in one window.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub label: String,
    pub messages: Vec<BookMessage>,
}

fn window_key(product: ProductId, spec: WindowSpec, origin: ProductId) -> (i64, String) {
    match spec {
        WindowSpec::Month => {
            let d = DateTime::from_timestamp_millis(product).expect("product time in range");
            let key = d.year() as i64 * 12 + d.month0() as i64;
            (key, format!("{:04}-{:02}", d.year(), d.month()))
        }
        WindowSpec::Days(n) => {
            let day0 = origin.div_euclid(DAY_MS);
            let k = (product.div_euclid(DAY_MS) - day0).div_euclid(n.max(1) as i64);
            (k, format!("days-{k}"))
        }
    }
}

/// Splits a stream by the delivery window of each message's product,
/// preserving message order inside every window.
pub fn split_windows(stream: &[BookMessage], spec: WindowSpec) -> Vec<Window> {
    let Some(origin) = stream.iter().map(|m| m.order.product).min() else {
        return Vec::new();
    };
    let mut windows: BTreeMap<i64, Window> = BTreeMap::new();
    for m in stream {
        let (k, label) = window_key(m.order.product, spec, origin);
        windows.entry(k).or_insert_with(|| Window { label, messages: Vec::new() }).messages.push(m.clone());
    }
    windows.into_values().collect()
}

fn with_phi(base: &BacktestConfig, phi: f64) -> BacktestConfig {
    BacktestConfig { phi: Phi::Constant(phi), ..base.clone() }
}

/// Reward of one backtest at constant `phi`.
pub fn reward_at(base: &BacktestConfig, stream: &[BookMessage], phi: f64) -> Result<f64, EngineError> {
    Ok(run_backtest(&with_phi(base, phi), stream)?.reward)
}

/// Finds the reward-maximising `phi` on one window.
pub fn train_phi(stream: &[BookMessage], cfg: &TuneConfig) -> Result<Maximum, EngineError> {
    with_phi(&cfg.base, cfg.phi_lo).validate()?;
    let mut failure = None;
    let best = maximize_scalar(
        |phi| match reward_at(&cfg.base, stream, phi) {
            Ok(r) => r,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        cfg.phi_lo,
        cfg.phi_hi,
        cfg.brent,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(best),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuneRow {
    /// Index of the evaluation window.
    pub window: usize,
    pub label: String,
    pub trained_on: String,
    pub phi: f64,
    pub evals: usize,
    pub in_sample_reward: f64,
    pub out_of_sample_reward: f64,
    /// Reward on the evaluation window with `phi = 0`.
    pub baseline_reward: f64,
    pub flat: bool,
    pub exhausted: bool,
    pub scan_disagreement: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuneReport {
    pub rows: Vec<TuneRow>,
    pub stitched_reward: f64,
    pub baseline_reward: f64,
    pub mean_phi: f64,
    pub std_phi: f64,
}

/// Trains on window `w - 1` and evaluates on window `w` for every `w >= 1`.
pub fn sliding_schedule(stream: &[BookMessage], cfg: &TuneConfig) -> Result<TuneReport, EngineError> {
    let windows = split_windows(stream, cfg.window);
    let jobs: Vec<usize> = (1..windows.len()).collect();
    let rows = map_batch(&jobs, |&w| -> Result<TuneRow, EngineError> {
        let (train, eval) = (&windows[w - 1], &windows[w]);
        let fit = train_phi(&train.messages, cfg)?;
        Ok(TuneRow {
            window: w,
            label: eval.label.clone(),
            trained_on: train.label.clone(),
            phi: fit.x,
            evals: fit.evals,
            in_sample_reward: fit.value,
            out_of_sample_reward: reward_at(&cfg.base, &eval.messages, fit.x)?,
            baseline_reward: reward_at(&cfg.base, &eval.messages, 0.0)?,
            flat: fit.flat,
            exhausted: fit.exhausted,
            scan_disagreement: fit.scan_disagreement,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let n = rows.len().max(1) as f64;
    let mean_phi = rows.iter().map(|r| r.phi).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r.phi - mean_phi).powi(2)).sum::<f64>() / n;
    Ok(TuneReport {
        stitched_reward: rows.iter().map(|r| r.out_of_sample_reward).sum(),
        baseline_reward: rows.iter().map(|r| r.baseline_reward).sum(),
        mean_phi,
        std_phi: var.sqrt(),
        rows,
    })
}
