#![allow(dead_code)]

use mss::counting::MomentTarget;
use mss::evalsets::{image_set, EvalSetDesc};
use mss::field::prime_power;
use mss::{FieldCtx, FieldElement};
use rand::Rng;
use rand::seq::SliceRandom;

pub fn field(q: u64) -> FieldCtx {
    let (p, s) = prime_power(q).expect("prime power");
    FieldCtx::new(p, s, None).expect("field")
}

pub fn el(e: u32) -> FieldElement {
    FieldElement::from_encoding(e)
}

pub fn prime_powers(lo: u64, hi: u64) -> Vec<u64> {
    (lo.max(2)..=hi).filter(|&q| prime_power(q).is_some()).collect()
}

/// Up to three nonzero Dickson parameters: 1, 2 and -1.
pub fn dickson_params(q: u64) -> Vec<FieldElement> {
    let mut a: Vec<u64> = vec![1, 2, q - 1];
    a.retain(|&x| x > 0 && x < q);
    a.sort_unstable();
    a.dedup();
    a.into_iter().map(|x| el(x as u32)).collect()
}

/// Monomials `x^n` and Dickson `D_n(x, a)` for `1 <= n <= nmax`, `n < q`.
pub fn symbolic_sets(ctx: &FieldCtx, nmax: u64, params: &[FieldElement]) -> Vec<EvalSetDesc> {
    let top = nmax.min(ctx.q() - 1);
    let mut out: Vec<EvalSetDesc> = (1..=top).map(|n| EvalSetDesc::Monomial { n }).collect();
    for n in 1..=top {
        for &a in params {
            out.push(EvalSetDesc::Dickson { n, a });
        }
    }
    out
}

/// Keeps the first descriptor for each distinct image.
pub fn dedup_by_image(ctx: &FieldCtx, descs: Vec<EvalSetDesc>) -> Vec<(EvalSetDesc, Vec<FieldElement>)> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for d in descs {
        let img = image_set(ctx, &d).unwrap().elements().to_vec();
        if seen.insert(img.clone()) {
            out.push((d, img));
        }
    }
    out
}

/// A consistent target: free values on indices prime to `p`, the rest
/// forced by `b_{ip} = b_i^p`.
pub fn random_consistent(ctx: &FieldCtx, m: u32, rng: &mut impl Rng) -> MomentTarget {
    let p = ctx.p();
    let mut b: Vec<FieldElement> = Vec::with_capacity(m as usize);
    for j in 1..=m {
        let v = if j % p == 0 {
            ctx.pow(b[(j / p - 1) as usize], p as u64)
        } else {
            el(rng.random_range(0..ctx.q()) as u32)
        };
        b.push(v);
    }
    MomentTarget::new(m, b).unwrap()
}

/// `count` consistent targets, about half taken from actual subsets of `d`.
pub fn sample_targets(
    ctx: &FieldCtx,
    d: &[FieldElement],
    m: u32,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<MomentTarget> {
    (0..count)
        .map(|i| {
            if i % 2 == 0 && !d.is_empty() {
                let k = rng.random_range(0..=d.len());
                let mut pool = d.to_vec();
                pool.shuffle(rng);
                MomentTarget::of_subset(ctx, m, &pool[..k])
            } else {
                random_consistent(ctx, m, rng)
            }
        })
        .collect()
}
