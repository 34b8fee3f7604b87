//! Precision/recall of the heuristic matcher on the seeded synthetic corpus.

use softalign_core::matcher::synthetic::Tier;
use softalign_core::testkit::oracles::{matcher_quality, SYNTHETIC_PAIRS_PER_TIER, SYNTHETIC_SEED};

#[test]
fn tier_thresholds_hold_on_frozen_seed() {
    let scores = matcher_quality(SYNTHETIC_SEED, SYNTHETIC_PAIRS_PER_TIER);
    for s in &scores {
        println!(
            "{:?}: precision {:.3} recall {:.3} over {} pairs",
            s.tier, s.precision, s.recall, s.pairs
        );
        assert_eq!(s.pairs, SYNTHETIC_PAIRS_PER_TIER);
    }
    let get = |t: Tier| *scores.iter().find(|s| s.tier == t).unwrap();
    let t1 = get(Tier::RenameOnly);
    assert!(t1.precision >= 0.90 && t1.recall >= 0.90, "{t1:?}");
    let t2 = get(Tier::Restructure);
    assert!(t2.precision >= 0.75 && t2.recall >= 0.75, "{t2:?}");
}
