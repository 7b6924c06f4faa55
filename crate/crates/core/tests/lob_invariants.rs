mod common;

use lobsim_core::eventlog::{read_records, replay, write_records};
use lobsim_core::hawkes::Side;
use lobsim_core::lob::{LimitSlot, Lob, Owner};
use proptest::prelude::*;

#[test]
fn million_random_operations_keep_invariants_and_replay() {
    let run = common::lob_random_ops(1_000_000, 2024);
    assert!(run.violations.is_empty(), "{:?}", run.violations);
    assert!(run.fills > 100_000, "too few fills to exercise matching: {}", run.fills);
    let mut buf = Vec::new();
    write_records(&mut buf, &run.log).unwrap();
    let back = read_records(&buf[..]).unwrap();
    assert_eq!(back, run.log);
    let replayed = replay(&back, 0.01, 1000).unwrap();
    assert_eq!(replayed.book_hash(), run.lob.book_hash());
}

#[test]
fn tampered_log_fails_replay() {
    let mut run = common::lob_random_ops(5_000, 7);
    let mo = run.log.iter().rposition(|r| !r.fills.is_empty()).unwrap();
    run.log[mo].fills[0].size += 1;
    assert!(replay(&run.log, 0.01, 1000).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_sequences_keep_invariants(seed in any::<u64>(), n in 1usize..3000) {
        let run = common::lob_random_ops(n, seed);
        prop_assert!(run.violations.is_empty(), "{:?}", run.violations);
        prop_assert!(run.lob.check_invariants().is_ok());
        prop_assert_eq!(replay(&run.log, 0.01, 1000).unwrap().book_hash(), run.lob.book_hash());
    }

    #[test]
    fn market_order_fills_at_most_its_size(bids in prop::collection::vec(1u64..5, 1..20), size in 1u64..40) {
        let mut lob = Lob::new(0.01, 1000);
        lob.submit_limit_at(Owner::Exogenous, Side::Ask, 1001, 1, 0.0).unwrap();
        let mut price = 999;
        for (i, s) in bids.iter().enumerate() {
            lob.submit_limit_at(Owner::Exogenous, Side::Bid, price, *s, i as f64).unwrap();
            if i % 3 == 2 {
                price -= 1;
            }
        }
        let depth: u64 = bids.iter().sum();
        let fills = lob.submit_market(Owner::Agent(1), Side::Ask, size, 99.0).unwrap();
        let filled: u64 = fills.iter().map(|f| f.size).sum();
        prop_assert_eq!(filled, size.min(depth));
        prop_assert_eq!(lob.resting_volume(), 1 + depth - filled);
        prop_assert!(fills.windows(2).all(|w| w[0].price >= w[1].price));
    }

    #[test]
    fn limit_slots_never_cross(seed in any::<u64>(), spread in 1i64..6) {
        let mut lob = Lob::new(0.01, 1000);
        lob.submit_limit_at(Owner::Exogenous, Side::Bid, 1000, 2, 0.0).unwrap();
        lob.submit_limit_at(Owner::Exogenous, Side::Ask, 1000 + spread, 2, 0.0).unwrap();
        let slot = [LimitSlot::Deep, LimitSlot::Top, LimitSlot::Inspread][(seed % 3) as usize];
        let side = if seed % 2 == 0 { Side::Bid } else { Side::Ask };
        match lob.submit_limit(Owner::Agent(1), side, slot, 1, 1.0) {
            Ok(p) => {
                prop_assert!(lob.best_bid().unwrap() < lob.best_ask().unwrap());
                if slot == LimitSlot::Inspread {
                    prop_assert!(p.price > 1000 && p.price < 1000 + spread);
                }
            }
            Err(_) => prop_assert!(slot == LimitSlot::Inspread && spread == 1),
        }
    }
}
