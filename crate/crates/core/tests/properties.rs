mod common;

use common::*;
use mss::counting::{
    count_brute_with_cap, count_exact_dp_with, duality_transform, reduce_targets, verify_witness, DpConfig,
    MomentTarget, DEFAULT_BRUTE_CAP,
};
use mss::evalsets::{image_set, EvalSetDesc, ImageSet};
use mss::moments::MomentSpace;
use mss::regimes::{large_k_guarantee, ln_bounds, medium_k_guarantee, Answer, DecideConfig, Decider, Engine, RegimeParams};
use mss::{FieldCtx, FieldElement};
use num_traits::ToPrimitive;
use proptest::prelude::*;

const FIELDS: [u64; 12] = [2, 3, 4, 5, 7, 8, 9, 11, 16, 25, 27, 32];

fn explicit(ctx: &FieldCtx, mask: u64) -> EvalSetDesc {
    let elements = ctx
        .elements()
        .filter(|x| mask >> (x.encoding() % 64) & 1 == 1)
        .take(12)
        .collect();
    EvalSetDesc::Explicit { elements }
}

fn target(ctx: &FieldCtx, m: u32, raw: &[u32]) -> MomentTarget {
    let b: Vec<FieldElement> = raw.iter().take(m as usize).map(|&r| el(r % ctx.q() as u32)).collect();
    MomentTarget::new(m, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn field_axioms(qi in 0..FIELDS.len(), a in any::<u32>(), b in any::<u32>(), c in any::<u32>()) {
        let f = field(FIELDS[qi]);
        let q = f.q() as u32;
        let (a, b, c) = (el(a % q), el(b % q), el(c % q));
        prop_assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
        prop_assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
        prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
        prop_assert_eq!(f.sub(f.add(a, b), b), a);
        if !a.is_zero() {
            prop_assert_eq!(f.mul(a, f.inv(a).unwrap()), FieldElement::ONE);
        }
        prop_assert_eq!(f.pow(a, f.q()), a);
    }

    #[test]
    fn moment_index_addition(qi in 0..FIELDS.len(), m in 1u32..=2, x in any::<u32>(), y in any::<u32>()) {
        let f = field(FIELDS[qi]);
        let sp = MomentSpace::new(&f, &(1..=m).collect::<Vec<_>>()).unwrap();
        let (x, y) = (x as usize % sp.size(), y as usize % sp.size());
        let sum: Vec<FieldElement> = sp.decode(x).iter().zip(sp.decode(y)).map(|(&a, b)| f.add(a, b)).collect();
        prop_assert_eq!(sp.add(x, y), sp.encode(&sum));
        prop_assert_eq!(sp.add(x, sp.negate(x)), 0);
    }

    #[test]
    fn dp_matches_brute_on_explicit_sets(
        qi in 0..FIELDS.len(), mask in any::<u64>(), m in 1u32..=3, raw in prop::collection::vec(any::<u32>(), 3), k in 0usize..8,
    ) {
        let f = field(FIELDS[qi]);
        let desc = explicit(&f, mask);
        let d = image_set(&f, &desc).unwrap();
        let rt = reduce_targets(&f, &target(&f, m, &raw));
        let dp = count_exact_dp_with(&f, d.elements(), &rt, k, DpConfig::default()).unwrap().value;
        let brute = count_brute_with_cap(&f, d.elements(), &rt, k, DEFAULT_BRUTE_CAP).unwrap().value;
        prop_assert_eq!(dp, brute);
    }

    #[test]
    fn duality_identity(qi in 0..FIELDS.len(), mask in any::<u64>(), m in 1u32..=2, raw in prop::collection::vec(any::<u32>(), 2), k in 0usize..13) {
        let f = field(FIELDS[qi]);
        let d = image_set(&f, &explicit(&f, mask)).unwrap();
        let k = k.min(d.len());
        let rt = reduce_targets(&f, &target(&f, m, &raw));
        let (rt2, k2) = duality_transform(&f, &d, &rt, k);
        let lhs = count_brute_with_cap(&f, d.elements(), &rt, k, DEFAULT_BRUTE_CAP).unwrap().value;
        let rhs = count_brute_with_cap(&f, d.elements(), &rt2, k2, DEFAULT_BRUTE_CAP).unwrap().value;
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn subset_targets_are_consistent(qi in 0..FIELDS.len(), mask in any::<u64>(), m in 1u32..=4) {
        let f = field(FIELDS[qi]);
        let d = image_set(&f, &explicit(&f, mask)).unwrap();
        let t = MomentTarget::of_subset(&f, m, d.elements());
        let rt = reduce_targets(&f, &t);
        prop_assert!(rt.consistent);
        prop_assert!(verify_witness(&f, &rt, d.len(), d.elements()));
    }

    #[test]
    fn decide_agrees_with_every_engine(
        qi in 0..FIELDS.len(), n in 1u64..5, a in 0u32..64, m in 1u32..=2,
        raw in prop::collection::vec(any::<u32>(), 2), k in 0usize..40,
    ) {
        let f = field(FIELDS[qi]);
        let q = f.q();
        let desc = if a == 0 {
            EvalSetDesc::Monomial { n: n.min(q - 1) }
        } else {
            EvalSetDesc::Dickson { n: n.min(q - 1), a: el(a % (q as u32 - 1) + 1) }
        };
        let t = target(&f, m, &raw);
        let d: ImageSet = image_set(&f, &desc).unwrap();
        let k = k % (d.len() + 2);
        let truth = {
            let rt = reduce_targets(&f, &t);
            count_exact_dp_with(&f, d.elements(), &rt, k, DpConfig::default()).unwrap().value
        };
        for engine in [Engine::Auto, Engine::Dp, Engine::Bool] {
            let mut dec = Decider::new(f.clone(), DecideConfig { engine, ..DecideConfig::default() });
            let out = dec.decide(&desc, &t, k).unwrap();
            prop_assert_eq!(out.answer == Answer::Yes, truth.bits() > 0);
            if let Some(w) = &out.witness {
                prop_assert!(verify_witness(&f, &reduce_targets(&f, &t), k, w));
                prop_assert!(w.iter().all(|x| d.contains(*x)));
            }
        }
    }

    #[test]
    fn descriptors_round_trip(qi in 0..FIELDS.len(), n in 1u64..20, a in 0u32..64, mask in any::<u64>()) {
        let f = field(FIELDS[qi]);
        let q = f.q();
        let n = 1 + (n - 1) % (q - 1);
        for desc in [
            EvalSetDesc::Monomial { n },
            EvalSetDesc::Dickson { n, a: el(a % q as u32) },
            explicit(&f, mask),
        ] {
            let text = desc.to_string();
            prop_assert_eq!(EvalSetDesc::parse(&f, &text).unwrap(), desc);
        }
    }

    #[test]
    fn guarantees_are_pure_and_monotone(q in prop::sample::select(vec![4096u64, 15625, 16384, 78125, 65536]), k in 1u64..3000, m in 1u32..3) {
        let f = field(q);
        let rp = RegimeParams::new(&f, 1, m, k, q);
        prop_assert_eq!(medium_k_guarantee(&rp), medium_k_guarantee(&rp));
        let large = large_k_guarantee(&rp);
        prop_assert_eq!(&large, &large_k_guarantee(&rp));
        // the logarithmic condition only gets easier as k grows, up to |D|/2
        if large.applies() && 2 * (k + 1) <= q {
            prop_assert!(large_k_guarantee(&RegimeParams::new(&f, 1, m, k + 1, q)).applies());
        }
    }

    #[test]
    fn ln_bounds_bracket(q in 2u64..(1 << 40)) {
        let (lo, hi) = ln_bounds(q);
        let l = (q as f64).ln();
        prop_assert!(lo <= hi);
        prop_assert!(lo.to_f64().unwrap() <= l * (1.0 + 1e-12));
        prop_assert!(hi.to_f64().unwrap() >= l * (1.0 - 1e-12));
    }
}
