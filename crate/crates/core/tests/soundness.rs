//! `decide` against reachability ground truth over a grid of fields, sets
//! and targets, once with the default budgets and once with the exact
//! counting path switched off so the later rungs of the ladder answer.

mod common;

use std::collections::BTreeMap;

use common::*;
use mss::counting::{reach_table, reduce_targets, verify_witness, DpConfig, MomentTarget};
use mss::evalsets::image_set;
use mss::moments::MomentSpace;
use mss::regimes::{Answer, DecideConfig, Decider, Regime};
use mss::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn decide_is_sound_at_desk_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut regimes: BTreeMap<Regime, u64> = BTreeMap::new();
    let (mut answered, mut refused) = (0u64, 0u64);
    for q in [4u64, 5, 7, 8, 9, 11, 13, 16, 25, 27, 32, 49, 64, 81, 125, 128, 256] {
        let f = field(q);
        for desc in symbolic_sets(&f, 4, &dickson_params(q)) {
            let d = image_set(&f, &desc).unwrap();
            for m in 1..=2u32 {
                let exps: Vec<u32> = (1..=m).filter(|j| j % f.p() != 0).collect();
                let space = MomentSpace::new(&f, &exps).unwrap();
                if space.size() > 1 << 14 {
                    continue;
                }
                let half = d.len() / 2;
                let truth = reach_table(&f, d.elements(), &exps, half, DpConfig::default()).unwrap();
                let targets: Vec<MomentTarget> = sample_targets(&f, d.elements(), m, 20, &mut rng);
                // rough cost of answering every query without the exact path
                let later_rungs = 20 * (d.len() * space.size()) as u128 * (half * half / 2) as u128;
                for exact_budget in [None, Some(0)] {
                    if exact_budget.is_some() && later_rungs > 1 << 28 {
                        continue;
                    }
                    let cfg = DecideConfig {
                        exact_budget,
                        witness_cap: 1 << 16,
                        ..DecideConfig::default()
                    };
                    let mut decider = Decider::new(f.clone(), cfg);
                    for t in &targets {
                        let rt = reduce_targets(&f, t);
                        let idx = space.encode(&rt.b_active);
                        for k in 0..=half {
                            match decider.decide(&desc, t, k) {
                                Ok(out) => {
                                    answered += 1;
                                    *regimes.entry(out.regime).or_default() += 1;
                                    assert_eq!(
                                        out.answer == Answer::Yes,
                                        truth.get(k, idx),
                                        "q={q} {desc} {t} k={k} regime={}",
                                        out.regime
                                    );
                                    if let Some(w) = &out.witness {
                                        assert!(verify_witness(&f, &rt, k, w));
                                    }
                                }
                                Err(Error::BudgetExceeded(_)) => refused += 1,
                                Err(e) => panic!("q={q} {desc} {t} k={k}: {e}"),
                            }
                        }
                    }
                }
            }
        }
    }
    println!("answered {answered}, refused {refused}, regimes {regimes:?}");
    for r in [Regime::ExactDp, Regime::SmallKSearch, Regime::FallbackExact] {
        assert!(regimes.get(&r).copied().unwrap_or(0) > 0, "{r} never used");
    }
}

#[test]
fn theorem_answers_hold_where_they_fire() {
    // q = 4096 and q = 15625 are the smallest fields here where the theorems
    // apply; every certified answer is checked against reachability
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (q, ks) in [(4096u64, vec![37usize, 38, 60, 1000]), (15625, vec![5, 20, 55])] {
        let f = field(q);
        let desc = mss::EvalSetDesc::Monomial { n: 1 };
        let d = image_set(&f, &desc).unwrap();
        let kmax = *ks.iter().max().unwrap();
        let truth = reach_table(&f, d.elements(), &[1], kmax, DpConfig::default()).unwrap();
        let mut decider = Decider::new(f.clone(), DecideConfig::default());
        for _ in 0..5 {
            let t = random_consistent(&f, 1, &mut rng);
            for &k in &ks {
                let out = decider.decide(&desc, &t, k).unwrap();
                assert!(matches!(
                    out.regime,
                    Regime::MediumKTheorem | Regime::LargeKTheoremEven | Regime::LargeKTheoremOdd
                ));
                assert!(out.hypotheses.iter().all(|h| h.holds));
                assert_eq!(out.answer == Answer::Yes, truth.get(k, t.b[0].encoding() as usize));
            }
        }
    }
}
