use proptest::prelude::*;
use ritrade::lob::{AonOutcome, BookMessage, LimitOrder, MessageKind, OrderBook, Price, Side, TradeSide};

#[derive(Clone, Debug)]
enum Op {
    Add { bid: bool, price: i64, qty: i64, life: Option<i64> },
    Cancel(usize),
    Modify { which: usize, price: i64, qty: i64 },
    Aon { buy: bool, qty: i64, limit: i64 },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (any::<bool>(), 90i64..110, 1i64..20, prop::option::of(1i64..50))
            .prop_map(|(bid, price, qty, life)| Op::Add { bid, price, qty, life }),
        1 => any::<usize>().prop_map(Op::Cancel),
        1 => (any::<usize>(), 90i64..110, 1i64..20).prop_map(|(which, price, qty)| Op::Modify { which, price, qty }),
        1 => (any::<bool>(), 1i64..40, 85i64..115).prop_map(|(buy, qty, limit)| Op::Aon { buy, qty, limit }),
    ]
}

fn order(id: u64, side: Side, price: i64, qty: i64, t: i64, life: Option<i64>) -> LimitOrder {
    LimitOrder { order_id: id, product: 0, side, price: Price(price * 100), qty, entry_time: t, valid_until: life.map(|l| t + l) }
}

fn resting(book: &OrderBook, side: Side, clock: i64) -> i64 {
    book.orders(side).iter().filter(|o| o.is_live(clock)).map(|o| o.qty).sum()
}

fn check_sorted(book: &OrderBook) {
    for side in [Side::Bid, Side::Ask] {
        let orders = book.orders(side);
        for w in orders.windows(2) {
            let better = match side {
                Side::Bid => w[0].price > w[1].price,
                Side::Ask => w[0].price < w[1].price,
            };
            assert!(better || (w[0].price == w[1].price && (w[0].entry_time, w[0].order_id) < (w[1].entry_time, w[1].order_id)));
        }
    }
}

/// Replays `ops`, checking the invariants after every step, and returns the
/// reports so two replays can be compared.
fn replay(ops: &[Op]) -> (OrderBook, Vec<String>) {
    let mut book = OrderBook::new(0);
    let mut ids: Vec<u64> = Vec::new();
    let mut log = Vec::new();
    for (step, op) in ops.iter().enumerate() {
        let t = step as i64 * 3;
        match op {
            Op::Add { bid, price, qty, life } => {
                let side = if *bid { Side::Bid } else { Side::Ask };
                let id = step as u64 + 1;
                ids.push(id);
                book.expire(t);
                let opposite_before = resting(&book, side.opposite(), t);
                let r = book.apply(&BookMessage { timestamp: t, kind: MessageKind::Add, order: order(id, side, *price, *qty, t, *life) }).unwrap();
                assert_eq!(opposite_before - resting(&book, side.opposite(), t), r.filled_qty());
                assert_eq!(r.filled_qty() + r.rested, *qty);
                assert!(r.fills.iter().all(|f| f.qty > 0));
                log.push(format!("{r:?}"));
            }
            Op::Cancel(i) if !ids.is_empty() => {
                let id = ids[i % ids.len()];
                let o = order(id, Side::Bid, 0, 0, t, None);
                log.push(format!("{:?}", book.apply(&BookMessage { timestamp: t, kind: MessageKind::Cancel, order: o })));
            }
            Op::Modify { which, price, qty } if !ids.is_empty() => {
                let id = ids[which % ids.len()];
                let side = book.orders(Side::Bid).iter().any(|o| o.order_id == id).then_some(Side::Bid).unwrap_or(Side::Ask);
                let o = order(id, side, *price, *qty, t, None);
                log.push(format!("{:?}", book.apply(&BookMessage { timestamp: t, kind: MessageKind::Modify, order: o })));
            }
            Op::Aon { buy, qty, limit } => {
                let side = if *buy { TradeSide::Buy } else { TradeSide::Sell };
                book.expire(t);
                let before = book.clone();
                let hit = side.hits();
                let available = resting(&book, hit, t);
                match book.match_all_or_none(side, *qty, Price(limit * 100), t) {
                    AonOutcome::Rejected => assert_eq!(book, before, "a rejected order must not touch the book"),
                    AonOutcome::Filled(r) => {
                        assert_eq!(r.filled_qty(), *qty);
                        assert_eq!(available - resting(&book, hit, t), *qty);
                        assert!(r.fills.iter().all(|f| if *buy { f.price.0 <= limit * 100 } else { f.price.0 >= limit * 100 }));
                        log.push(format!("{r:?}"));
                    }
                }
            }
            _ => {}
        }
        check_sorted(&book);
        let q = book.best_quotes(t);
        if let (Some(b), Some(a)) = (q.best_bid, q.best_ask) {
            assert!(a > b, "crossed book after step {step}: bid {b} ask {a}");
            assert_eq!(q.spread, Some(Price(a.0 - b.0)));
        }
    }
    (book, log)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn message_sequences_keep_the_book_consistent(ops in prop::collection::vec(op(), 1..80)) {
        let (a, log_a) = replay(&ops);
        let (b, log_b) = replay(&ops);
        prop_assert_eq!(a, b);
        prop_assert_eq!(log_a, log_b);
    }
}

#[test]
fn worked_clearing_examples() {
    let mut book = OrderBook::new(0);
    book.apply(&BookMessage { timestamp: 0, kind: MessageKind::Add, order: order(1, Side::Bid, 50, 4, 0, None) }).unwrap();
    book.apply(&BookMessage { timestamp: 1, kind: MessageKind::Add, order: order(2, Side::Bid, 48, 6, 1, None) }).unwrap();
    let AonOutcome::Filled(r) = book.match_all_or_none(TradeSide::Sell, 7, Price(4700), 2) else { panic!("should fill") };
    assert_eq!(r.notional_cents(), 34_400);
    assert_eq!(book.orders(Side::Bid)[0].qty, 3);
}
