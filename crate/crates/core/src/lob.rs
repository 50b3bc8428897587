//! Per-product limit order book with price-time priority.
//!
//! Prices are integer hundredths of EUR/MWh and quantities are integer lot
//! counts, so matching never accumulates floating-point error. Historical
//! orders that cross the book clear against resting liquidity and any residual
//! rests; agent orders go through [`OrderBook::match_all_or_none`] and never rest.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since the Unix epoch.
pub type TimeMs = i64;

/// A delivery product, identified by its delivery start in milliseconds.
pub type ProductId = i64;

/// Price in hundredths of EUR/MWh (the exchange tick is 0.01).
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Price(pub i64);

impl Price {
    pub const fn from_cents(cents: i64) -> Self {
        Price(cents)
    }

    pub const fn cents(self) -> i64 {
        self.0
    }

    pub fn eur(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Converts a EUR/MWh amount, returning `None` unless it sits on the tick grid.
    pub fn from_eur(eur: f64) -> Option<Self> {
        if !eur.is_finite() {
            return None;
        }
        let scaled = eur * 100.0;
        let cents = scaled.round();
        if (scaled - cents).abs() > 1e-6 {
            return None;
        }
        Some(Price(cents as i64))
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

/// Side of a resting order: bids want to buy, asks want to sell.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

/// Direction of an agent trade.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TradeSide {
    Buy,
    Sell,
}

impl TradeSide {
    /// The resting side this trade consumes.
    pub fn hits(self) -> Side {
        match self {
            TradeSide::Buy => Side::Ask,
            TradeSide::Sell => Side::Bid,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TradeSide::Buy => "buy",
            TradeSide::Sell => "sell",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitOrder {
    pub order_id: u64,
    pub product: ProductId,
    pub side: Side,
    pub price: Price,
    /// Quantity in lots of the market's minimum trading unit.
    pub qty: i64,
    pub entry_time: TimeMs,
    pub valid_until: Option<TimeMs>,
}

impl LimitOrder {
    pub fn is_live(&self, clock: TimeMs) -> bool {
        self.valid_until.is_none_or(|v| v > clock)
    }

    fn priority(&self) -> (TimeMs, u64) {
        (self.entry_time, self.order_id)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Add,
    Modify,
    Cancel,
}

/// One historical order-book message. For cancels only `order_id` and
/// `product` of the payload are meaningful.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookMessage {
    pub timestamp: TimeMs,
    pub kind: MessageKind,
    pub order: LimitOrder,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub resting_order_id: u64,
    pub qty: i64,
    pub price: Price,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchReport {
    pub fills: Vec<Fill>,
    /// Lots of the incoming order left resting in the book.
    pub rested: i64,
}

impl MatchReport {
    pub fn filled_qty(&self) -> i64 {
        self.fills.iter().map(|f| f.qty).sum()
    }

    /// Sum of price x lots over all fills, in cents per lot.
    pub fn notional_cents(&self) -> i64 {
        self.fills.iter().map(|f| f.price.0 * f.qty).sum()
    }
}

/// Result of an all-or-none agent order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AonOutcome {
    Filled(MatchReport),
    Rejected,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct Quotes {
    pub best_bid: Option<Price>,
    pub best_ask: Option<Price>,
    pub spread: Option<Price>,
}

/// Best price level of each side with its aggregate live quantity.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct TopOfBook {
    pub bid: Option<(Price, i64)>,
    pub ask: Option<(Price, i64)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BookError {
    #[error("unknown order id {0}")]
    UnknownOrder(u64),
    #[error("duplicate order id {0}")]
    DuplicateOrder(u64),
    #[error("stale message at {timestamp} ms, book clock is {clock} ms")]
    StaleTimestamp { timestamp: TimeMs, clock: TimeMs },
    #[error("message for product {got} sent to book {expected}")]
    WrongProduct { expected: ProductId, got: ProductId },
    #[error("invalid order {order_id}: {reason}")]
    InvalidOrder { order_id: u64, reason: &'static str },
}

type Level = VecDeque<LimitOrder>;

/// Price levels of one side keyed so that ascending iteration is best-first.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Ladder {
    side: Side,
    levels: BTreeMap<i64, Level>,
}

impl Ladder {
    fn new(side: Side) -> Self {
        Ladder { side, levels: BTreeMap::new() }
    }

    fn key(&self, price: Price) -> i64 {
        match self.side {
            Side::Bid => -price.0,
            Side::Ask => price.0,
        }
    }

    fn price(&self, key: i64) -> Price {
        match self.side {
            Side::Bid => Price(-key),
            Side::Ask => Price(key),
        }
    }

    fn insert(&mut self, order: LimitOrder) {
        let level = self.levels.entry(self.key(order.price)).or_default();
        let pos = level.partition_point(|o| o.priority() < order.priority());
        level.insert(pos, order);
    }

    fn remove(&mut self, price: Price, order_id: u64) -> Option<LimitOrder> {
        let key = self.key(price);
        let level = self.levels.get_mut(&key)?;
        let pos = level.iter().position(|o| o.order_id == order_id)?;
        let order = level.remove(pos);
        if level.is_empty() {
            self.levels.remove(&key);
        }
        order
    }

    /// Best live level and its aggregate quantity.
    fn head(&self, clock: TimeMs) -> Option<(Price, i64)> {
        self.live_levels(clock).next()
    }

    fn live_levels(&self, clock: TimeMs) -> impl Iterator<Item = (Price, i64)> + '_ {
        self.levels.iter().filter_map(move |(&key, level)| {
            let qty: i64 = level.iter().filter(|o| o.is_live(clock)).map(|o| o.qty).sum();
            (qty > 0).then(|| (self.price(key), qty))
        })
    }
}

/// Does a resting order at `resting` cross an incoming order at `limit`?
fn crosses(incoming: Side, limit: Price, resting: Price) -> bool {
    match incoming {
        Side::Bid => resting <= limit,
        Side::Ask => resting >= limit,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderBook {
    product: ProductId,
    bids: Ladder,
    asks: Ladder,
    index: HashMap<u64, (Side, Price)>,
    expiries: BTreeSet<(TimeMs, u64)>,
    clock: TimeMs,
}

impl OrderBook {
    pub fn new(product: ProductId) -> Self {
        OrderBook {
            product,
            bids: Ladder::new(Side::Bid),
            asks: Ladder::new(Side::Ask),
            index: HashMap::new(),
            expiries: BTreeSet::new(),
            clock: TimeMs::MIN,
        }
    }

    pub fn product(&self) -> ProductId {
        self.product
    }

    pub fn clock(&self) -> TimeMs {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, order_id: u64) -> bool {
        self.index.contains_key(&order_id)
    }

    fn ladder(&self, side: Side) -> &Ladder {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    /// Resting orders of one side in price-time priority (expired ones included
    /// until the next purge).
    pub fn orders(&self, side: Side) -> Vec<LimitOrder> {
        self.ladder(side).levels.values().flat_map(|l| l.iter().cloned()).collect()
    }

    /// Removes every order whose validity ended at or before `clock`.
    /// Returns whether the top of book changed.
    pub fn expire(&mut self, clock: TimeMs) -> bool {
        self.clock = self.clock.max(clock);
        match self.expiries.first() {
            Some(&(t, _)) if t <= clock => {}
            _ => return false,
        }
        let before = self.top_of_book(TimeMs::MIN);
        while let Some(&(t, id)) = self.expiries.first() {
            if t > clock {
                break;
            }
            self.expiries.pop_first();
            self.remove_order(id);
        }
        before != self.top_of_book(TimeMs::MIN)
    }

    fn remove_order(&mut self, order_id: u64) -> Option<LimitOrder> {
        let (side, price) = self.index.remove(&order_id)?;
        let order = match side {
            Side::Bid => self.bids.remove(price, order_id),
            Side::Ask => self.asks.remove(price, order_id),
        }?;
        if let Some(v) = order.valid_until {
            self.expiries.remove(&(v, order_id));
        }
        Some(order)
    }

    fn rest(&mut self, order: LimitOrder) {
        self.index.insert(order.order_id, (order.side, order.price));
        if let Some(v) = order.valid_until {
            self.expiries.insert((v, order.order_id));
        }
        match order.side {
            Side::Bid => self.bids.insert(order),
            Side::Ask => self.asks.insert(order),
        }
    }

    fn validate(&self, msg: &BookMessage) -> Result<(), BookError> {
        let o = &msg.order;
        if o.product != self.product {
            return Err(BookError::WrongProduct { expected: self.product, got: o.product });
        }
        if msg.timestamp < self.clock {
            return Err(BookError::StaleTimestamp { timestamp: msg.timestamp, clock: self.clock });
        }
        match msg.kind {
            MessageKind::Cancel | MessageKind::Modify if !self.contains(o.order_id) => {
                return Err(BookError::UnknownOrder(o.order_id));
            }
            MessageKind::Add if self.contains(o.order_id) => {
                return Err(BookError::DuplicateOrder(o.order_id));
            }
            _ => {}
        }
        if msg.kind != MessageKind::Cancel {
            if o.qty <= 0 {
                return Err(BookError::InvalidOrder { order_id: o.order_id, reason: "non-positive quantity" });
            }
            if o.valid_until.is_some_and(|v| v <= msg.timestamp) {
                return Err(BookError::InvalidOrder { order_id: o.order_id, reason: "expires before entry" });
            }
        }
        Ok(())
    }

    /// Applies a historical message. Invalid messages leave the book untouched.
    pub fn apply(&mut self, msg: &BookMessage) -> Result<MatchReport, BookError> {
        self.validate(msg)?;
        self.expire(msg.timestamp);
        // an order the message refers to may just have expired
        if matches!(msg.kind, MessageKind::Cancel | MessageKind::Modify) && !self.contains(msg.order.order_id) {
            return Err(BookError::UnknownOrder(msg.order.order_id));
        }
        match msg.kind {
            MessageKind::Cancel => {
                self.remove_order(msg.order.order_id);
                Ok(MatchReport::default())
            }
            MessageKind::Modify => {
                self.remove_order(msg.order.order_id);
                Ok(self.place(msg))
            }
            MessageKind::Add => Ok(self.place(msg)),
        }
    }

    fn place(&mut self, msg: &BookMessage) -> MatchReport {
        let mut order = msg.order.clone();
        order.entry_time = msg.timestamp;
        let fills = self.sweep(order.side, order.qty, order.price, msg.timestamp);
        let filled: i64 = fills.iter().map(|f| f.qty).sum();
        order.qty -= filled;
        let rested = order.qty;
        if rested > 0 {
            self.rest(order);
        }
        MatchReport { fills, rested }
    }

    /// Consumes up to `qty` lots of the side opposite to `incoming` at prices
    /// crossing `limit`, best price first and oldest first within a level.
    fn sweep(&mut self, incoming: Side, mut qty: i64, limit: Price, clock: TimeMs) -> Vec<Fill> {
        let mut fills = Vec::new();
        let opposite = incoming.opposite();
        while qty > 0 {
            let ladder = match opposite {
                Side::Bid => &mut self.bids,
                Side::Ask => &mut self.asks,
            };
            let Some((&key, level)) = ladder.levels.iter_mut().find(|(_, l)| l.iter().any(|o| o.is_live(clock)))
            else {
                break;
            };
            let price = if opposite == Side::Bid { Price(-key) } else { Price(key) };
            if !crosses(incoming, limit, price) {
                break;
            }
            let mut i = 0;
            let mut done = Vec::new();
            while qty > 0 && i < level.len() {
                let resting = &mut level[i];
                if resting.is_live(clock) {
                    let q = qty.min(resting.qty);
                    resting.qty -= q;
                    qty -= q;
                    fills.push(Fill { resting_order_id: resting.order_id, qty: q, price });
                    if resting.qty == 0 {
                        done.push(resting.order_id);
                    }
                }
                i += 1;
            }
            for id in done {
                self.remove_order(id);
            }
        }
        fills
    }

    /// Executes an agent order completely within `limit`, or not at all.
    /// On rejection the book is left exactly as it was.
    pub fn match_all_or_none(&mut self, side: TradeSide, qty: i64, limit: Price, clock: TimeMs) -> AonOutcome {
        if qty <= 0 {
            return AonOutcome::Rejected;
        }
        let incoming = match side {
            TradeSide::Buy => Side::Bid,
            TradeSide::Sell => Side::Ask,
        };
        let available: i64 = self
            .ladder(side.hits())
            .live_levels(clock)
            .take_while(|&(p, _)| crosses(incoming, limit, p))
            .map(|(_, q)| q)
            .sum();
        if available < qty {
            return AonOutcome::Rejected;
        }
        self.clock = self.clock.max(clock);
        let fills = self.sweep(incoming, qty, limit, clock);
        debug_assert_eq!(fills.iter().map(|f| f.qty).sum::<i64>(), qty);
        AonOutcome::Filled(MatchReport { fills, rested: 0 })
    }

    pub fn best_quotes(&self, clock: TimeMs) -> Quotes {
        let best_bid = self.bids.head(clock).map(|(p, _)| p);
        let best_ask = self.asks.head(clock).map(|(p, _)| p);
        let spread = match (best_bid, best_ask) {
            (Some(b), Some(a)) => Some(Price(a.0 - b.0)),
            _ => None,
        };
        Quotes { best_bid, best_ask, spread }
    }

    pub fn top_of_book(&self, clock: TimeMs) -> TopOfBook {
        TopOfBook { bid: self.bids.head(clock), ask: self.asks.head(clock) }
    }

    /// Aggregated live price levels of one side, best first, truncated once
    /// `max_lots` lots are covered.
    pub fn depth(&self, side: Side, clock: TimeMs, max_lots: i64) -> Vec<(Price, i64)> {
        let mut out = Vec::new();
        let mut total = 0;
        for (price, qty) in self.ladder(side).live_levels(clock) {
            if total >= max_lots {
                break;
            }
            let q = qty.min(max_lots - total);
            out.push((price, q));
            total += q;
        }
        out
    }

    fn live_location(&self, order_id: u64, clock: TimeMs) -> Option<(Side, Price)> {
        let &(side, price) = self.index.get(&order_id)?;
        let ladder = self.ladder(side);
        ladder
            .levels
            .get(&ladder.key(price))?
            .iter()
            .any(|r| r.order_id == order_id && r.is_live(clock))
            .then_some((side, price))
    }

    /// Whether applying `msg` would change the best level (price or
    /// aggregate quantity) of either side.
    pub fn is_relevant_update(&self, msg: &BookMessage) -> bool {
        if self.validate(msg).is_err() {
            return false;
        }
        let clock = msg.timestamp;
        let o = &msg.order;
        let touches_head = |id: u64| -> bool {
            self.live_location(id, clock)
                .is_some_and(|(side, price)| self.ladder(side).head(clock).is_some_and(|(p, _)| p == price))
        };
        let add_changes_head = |side: Side, price: Price| -> bool {
            if let Some((p, _)) = self.ladder(side.opposite()).head(clock) {
                if crosses(side, price, p) {
                    return true;
                }
            }
            match self.ladder(side).head(clock) {
                None => true,
                Some((p, _)) => match side {
                    Side::Bid => price >= p,
                    Side::Ask => price <= p,
                },
            }
        };
        match msg.kind {
            MessageKind::Add => add_changes_head(o.side, o.price),
            MessageKind::Cancel => touches_head(o.order_id),
            MessageKind::Modify => {
                if self.live_location(o.order_id, clock).is_none() {
                    return false;
                }
                touches_head(o.order_id) || add_changes_head(o.side, o.price)
            }
        }
    }
}

/// Walks an aggregated price ladder and returns the price of the last lot
/// needed to fill `lots`, or `None` if the ladder is too shallow.
pub fn marginal_price(levels: &[(Price, i64)], lots: i64) -> Option<Price> {
    if lots <= 0 {
        return None;
    }
    let mut covered = 0;
    for &(price, qty) in levels {
        covered += qty;
        if covered >= lots {
            return Some(price);
        }
    }
    None
}
