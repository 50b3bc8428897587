//! Physical storage model, cost constants and feasible action sets.

use serde::{Deserialize, Serialize};

/// Slack used when rounding fractional action bounds and checking SoC limits.
pub const SOC_EPS: f64 = 1e-9;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Energy capacity in MWh.
    pub s_max: f64,
    /// Maximum withdrawal per product in MW (negative).
    pub f_min: f64,
    /// Maximum injection per product in MW.
    pub f_max: f64,
    pub eta_in: f64,
    pub eta_out: f64,
    /// Initial state of charge in MWh.
    pub s0: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams { s_max: 10.0, f_min: -10.0, f_max: 10.0, eta_in: 0.95, eta_out: 0.95, s0: 0.0 }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.s_max > 0.0) {
            return Err(format!("s_max must be positive, got {}", self.s_max));
        }
        if !(0.0..=self.s_max).contains(&self.s0) {
            return Err(format!("s0 = {} outside [0, {}]", self.s0, self.s_max));
        }
        if !(self.f_min < 0.0 && self.f_max > 0.0) {
            return Err(format!("need f_min < 0 < f_max, got [{}, {}]", self.f_min, self.f_max));
        }
        for (name, eta) in [("eta_in", self.eta_in), ("eta_out", self.eta_out)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(format!("{name} must lie in (0, 1], got {eta}"));
            }
        }
        Ok(())
    }

    /// State of charge after delivering a net position of `f` MWh starting from `s`.
    pub fn transition(&self, s: f64, f: f64) -> f64 {
        let next = if f > 0.0 { s + self.eta_in * f } else { s + f / self.eta_out };
        debug_assert!(next.is_finite());
        next
    }

    /// How far a state lies outside `[0, s_max]`.
    pub fn violation(&self, s: f64) -> f64 {
        if s < -SOC_EPS {
            -s
        } else if s > self.s_max + SOC_EPS {
            s - self.s_max
        } else {
            0.0
        }
    }

    pub fn clamp(&self, s: f64) -> f64 {
        s.clamp(0.0, self.s_max)
    }

    pub fn round_trip_efficiency(&self) -> f64 {
        self.eta_in * self.eta_out
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Exchange fee per matched MWh.
    pub nu_trade: f64,
    /// Linear degradation cost per settled MWh.
    pub nu_deg: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { nu_trade: 0.09, nu_deg: 4.0 }
    }
}

impl CostParams {
    /// Combined variable cost applied inside the optimisation.
    pub fn nu(&self) -> f64 {
        self.nu_trade + self.nu_deg
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.nu_trade < 0.0 || self.nu_deg < 0.0 {
            return Err("costs must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Minimum trading unit in MWh.
    pub lot: f64,
    /// Actions are multiples of `kappa` lots.
    pub kappa: i64,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams { lot: 0.1, kappa: 1 }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lot > 0.0) {
            return Err(format!("lot must be positive, got {}", self.lot));
        }
        if self.kappa < 1 {
            return Err(format!("kappa must be >= 1, got {}", self.kappa));
        }
        Ok(())
    }

    pub fn mwh(&self, lots: i64) -> f64 {
        lots as f64 * self.lot
    }

    /// Converts MWh to lots, or `None` if the amount is off the lot grid.
    pub fn lots(&self, mwh: f64) -> Option<i64> {
        let x = mwh / self.lot;
        let r = x.round();
        ((x - r).abs() <= 1e-6).then_some(r as i64)
    }

    /// Largest number of lots a single product can trade in one solve.
    pub fn max_trade_lots(&self, battery: &BatteryParams) -> i64 {
        ((battery.f_max - battery.f_min) / self.lot + SOC_EPS).floor() as i64
    }
}

/// Inclusive range of action multipliers `k` (trade of `k` lots), stepping by `stride`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ActionRange {
    pub lo: i64,
    pub hi: i64,
    pub stride: i64,
}

impl ActionRange {
    pub fn iter(&self) -> impl Iterator<Item = i64> {
        (self.lo..=self.hi).step_by(self.stride as usize)
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.stride + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, k: i64) -> bool {
        k >= self.lo && k <= self.hi && (k - self.lo) % self.stride == 0
    }

    /// Restricts to `[lo, hi]`, keeping the stride lattice.
    pub fn intersect(&self, lo: i64, hi: i64) -> Option<ActionRange> {
        aligned(self.lo.max(lo), self.hi.min(hi), self.stride)
    }
}

fn aligned(lo: i64, hi: i64, stride: i64) -> Option<ActionRange> {
    let lo = lo.div_euclid(stride) * stride + if lo.rem_euclid(stride) == 0 { 0 } else { stride };
    let hi = hi.div_euclid(stride) * stride;
    (lo <= hi).then_some(ActionRange { lo, hi, stride })
}

/// Power-limit interval for trades on top of an existing position of `f0_lots`.
pub fn power_actions(f0_lots: i64, battery: &BatteryParams, market: &MarketParams) -> Option<ActionRange> {
    let u = market.lot;
    let lo = ((battery.f_min / u) - SOC_EPS).ceil() as i64 - f0_lots;
    let hi = ((battery.f_max / u) + SOC_EPS).floor() as i64 - f0_lots;
    aligned(lo, hi, market.kappa)
}

/// Trades `k` (in lots) that keep both the storage and the power limits,
/// starting at state `s` with an existing position of `f0_lots`.
/// Fractional bounds are rounded inwards.
pub fn feasible_actions(s: f64, f0_lots: i64, battery: &BatteryParams, market: &MarketParams) -> Option<ActionRange> {
    let u = market.lot;
    let f0 = market.mwh(f0_lots);
    let storage_lo = (-(battery.eta_out * s + f0) / u - SOC_EPS).ceil() as i64;
    let storage_hi = ((battery.s_max - s) / (battery.eta_in * u) - f0 / u + SOC_EPS).floor() as i64;
    power_actions(f0_lots, battery, market)?.intersect(storage_lo, storage_hi)
}

/// Full cycles per day: energy withdrawn from storage over capacity and days.
pub fn cycles(total_withdrawn: f64, days: f64, battery: &BatteryParams) -> f64 {
    assert!(days >= 1.0, "cycle accounting needs at least one day");
    total_withdrawn / (battery.s_max * days)
}
