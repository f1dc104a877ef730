//! The decision ladder: exact engines where affordable, a bounded search
//! for small `k`, and the medium/large-`k` positivity theorems otherwise.
//! Also the sieve quantities the theorems rest on.

use std::collections::HashMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charsum::{poly_char_sum, CharPoly};
use crate::counting::{
    binomial, count_brute_with_cap, count_limbs, duality_transform, factorial, find_witness, reachable,
    reduce_targets, table_bytes, tuple_walk, verify_witness, witness_bytes, CountTable, DpConfig, MomentTarget,
    ReducedTarget, DEFAULT_BRUTE_CAP, DEFAULT_MEMORY_CAP,
};
use crate::error::{Error, Result};
use crate::evalsets::{image_set, EvalSetDesc, ImageSet};
use crate::field::{FieldCtx, FieldElement};
use crate::moments::MomentSpace;

pub const DEFAULT_BUDGET: u128 = 1_000_000_000;

pub const WITNESS_BYTES: u128 = 256 << 20;

/// The integers the theorem thresholds are stated in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegimeParams {
    pub q: u64,
    pub p: u32,
    pub s: u32,
    pub n: u64,
    pub m: u32,
    pub m_p: u32,
    pub k: u64,
    pub d: u64,
}

impl RegimeParams {
    pub fn new(ctx: &FieldCtx, n: u64, m: u32, k: u64, d: u64) -> Self {
        RegimeParams {
            q: ctx.q(),
            p: ctx.p(),
            s: ctx.s(),
            n,
            m,
            m_p: m - m / ctx.p(),
            k,
            d,
        }
    }

    pub fn sqrt_q(&self) -> f64 {
        (self.q as f64).sqrt()
    }

    pub fn q_sixth(&self) -> f64 {
        (self.q as f64).powf(1.0 / 6.0)
    }

    pub fn q_five_twelfths(&self) -> f64 {
        (self.q as f64).powf(5.0 / 12.0)
    }

    pub fn ln_q(&self) -> f64 {
        (self.q as f64).ln()
    }

    pub fn log2_q(&self) -> f64 {
        (self.q as f64).log2()
    }

    fn mn1(&self) -> BigUint {
        BigUint::from(self.m as u64 * self.n + 1)
    }
}

/// One checked inequality `lhs <rel> rhs`, both sides as exact decimals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub lhs: String,
    pub rhs: String,
    pub holds: bool,
}

impl Hypothesis {
    fn lt(name: &str, lhs: BigUint, rhs: BigUint) -> Self {
        Hypothesis {
            name: name.into(),
            holds: lhs < rhs,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        }
    }

    fn le(name: &str, lhs: BigUint, rhs: BigUint) -> Self {
        Hypothesis {
            name: name.into(),
            holds: lhs <= rhs,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.holds { "holds" } else { "fails" };
        write!(f, "{}: {} vs {} ({mark})", self.name, self.lhs, self.rhs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    InconsistentTargets,
    ExactDp,
    ExactBrute,
    SmallKSearch,
    MediumKTheorem,
    LargeKTheoremOdd,
    LargeKTheoremEven,
    FallbackExact,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::InconsistentTargets => "inconsistent-targets",
            Regime::ExactDp => "exact-dp",
            Regime::ExactBrute => "exact-brute",
            Regime::SmallKSearch => "small-k-search",
            Regime::MediumKTheorem => "medium-k-theorem",
            Regime::LargeKTheoremOdd => "large-k-theorem-odd",
            Regime::LargeKTheoremEven => "large-k-theorem-even",
            Regime::FallbackExact => "fallback-exact",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Answer {
    Yes,
    No,
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Yes => "YES",
            Answer::No => "NO",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub answer: Answer,
    pub regime: Regime,
    pub duality_applied: bool,
    pub hypotheses: Vec<Hypothesis>,
    /// a solution subset for the original `(b, k)`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<FieldElement>>,
    /// exact `N_k` as a decimal string
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<String>,
}

impl DecisionOutcome {
    fn new(answer: Answer, regime: Regime) -> Self {
        DecisionOutcome {
            answer,
            regime,
            duality_applied: false,
            hypotheses: Vec::new(),
            witness: None,
            count: None,
        }
    }
}

/// Result of evaluating one theorem's hypotheses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuaranteeCheck {
    pub regime: Regime,
    pub hypotheses: Vec<Hypothesis>,
}

impl GuaranteeCheck {
    pub fn applies(&self) -> bool {
        self.hypotheses.iter().all(|h| h.holds)
    }

    /// The YES certificate, when every hypothesis holds.
    pub fn certificate(&self) -> Option<&[Hypothesis]> {
        self.applies().then_some(&self.hypotheses[..])
    }
}

fn big(x: u64) -> BigUint {
    BigUint::from(x)
}

/// `2n(mn+1) < q^{1/6}` and `3m_p + 1 < k < q^{5/12}`, each raised to
/// integer powers.
pub fn medium_k_guarantee(rp: &RegimeParams) -> GuaranteeCheck {
    let lhs = (big(2 * rp.n) * rp.mn1()).pow(6);
    let q = big(rp.q);
    let hypotheses = vec![
        Hypothesis::lt("(2n(mn+1))^6 < q", lhs, q.clone()),
        Hypothesis::lt("3m_p+1 < k", big(3 * rp.m_p as u64 + 1), big(rp.k)),
        Hypothesis::lt("k^12 < q^5", big(rp.k).pow(12), q.pow(5)),
    ];
    GuaranteeCheck {
        regime: Regime::MediumKTheorem,
        hypotheses,
    }
}

/// Odd characteristic: `(mn+1) sqrt q <= 0.013 |D|` and
/// `6 m_p ln q <= k <= |D|/2`. Characteristic 2: `n(mn+1) < sqrt(q)/16` and
/// `3.05 m_p log2 q < k <= |D|/2`.
pub fn large_k_guarantee(rp: &RegimeParams) -> GuaranteeCheck {
    let q = big(rp.q);
    let d = big(rp.d);
    let half = Hypothesis::le("2k <= |D|", big(2 * rp.k), d.clone());
    if rp.p == 2 {
        let n = big(rp.n);
        let mn1 = rp.mn1();
        return GuaranteeCheck {
            regime: Regime::LargeKTheoremEven,
            hypotheses: vec![
                Hypothesis::lt("256*n^2*(mn+1)^2 < q", big(256) * &n * &n * &mn1 * &mn1, q),
                Hypothesis::lt(
                    "305*m_p*log2(q) < 100*k",
                    big(305 * rp.m_p as u64 * rp.s as u64),
                    big(100 * rp.k),
                ),
                half,
            ],
        };
    }
    let mn1 = rp.mn1();
    let density = Hypothesis::le(
        "(mn+1)^2*q*10^6 <= 169*|D|^2",
        &mn1 * &mn1 * &q * big(1_000_000),
        big(169) * &d * &d,
    );
    // 6 m_p ln q is replaced by a rational upper bound rounded up
    let bound = BigRational::from_integer(BigInt::from(6 * rp.m_p)) * ln_bounds(rp.q).1;
    let lhs = ceil_decimal(&bound, 9);
    let holds = lhs.0 <= BigRational::from_integer(BigInt::from(rp.k));
    let log = Hypothesis {
        name: "6*m_p*ln(q) <= k".into(),
        lhs: lhs.1,
        rhs: rp.k.to_string(),
        holds,
    };
    GuaranteeCheck {
        regime: Regime::LargeKTheoremOdd,
        hypotheses: vec![density, log, half],
    }
}

/// `2 atanh(z) = ln((1+z)/(1-z))` truncated after `terms` terms, and an
/// upper bound on the tail. Requires `0 <= z < 1`.
fn atanh2_bounds(z: &BigRational, terms: u32) -> (BigRational, BigRational) {
    let two = BigRational::from_integer(BigInt::from(2));
    let z2 = z * z;
    let mut pow = z.clone();
    let mut sum = BigRational::zero();
    for i in 0..terms {
        sum += &pow / BigRational::from_integer(BigInt::from(2 * i + 1));
        pow = &pow * &z2;
    }
    let lower = &two * sum;
    // remaining terms are at most z^{2T+1} / ((2T+1)(1 - z^2)) each summed geometrically
    let tail = &two * &pow / (BigRational::from_integer(BigInt::from(2 * terms + 1)) * (BigRational::one() - &z2));
    let upper = &lower + tail;
    (lower, upper)
}

/// Rational `(lower, upper)` bounds on `ln q`, within about `1e-30`.
pub fn ln_bounds(q: u64) -> (BigRational, BigRational) {
    assert!(q >= 1);
    let b = 63 - q.leading_zeros() as u64;
    let r = |n: u64, d: u64| BigRational::new(BigInt::from(n), BigInt::from(d));
    // ln 2 = 2 atanh(1/3)
    let (l2_lo, l2_hi) = atanh2_bounds(&r(1, 3), 40);
    // q / 2^b in [1, 2), z = (y-1)/(y+1)
    let pb = 1u64 << b;
    let (ly_lo, ly_hi) = atanh2_bounds(&r(q - pb, q + pb), 40);
    let bb = BigRational::from_integer(BigInt::from(b));
    (&bb * l2_lo + ly_lo, &bb * l2_hi + ly_hi)
}

/// Smallest decimal with `digits` fractional digits that is `>= x`.
fn ceil_decimal(x: &BigRational, digits: u32) -> (BigRational, String) {
    let scale = BigInt::from(10u32).pow(digits);
    let scaled = x * BigRational::from_integer(scale.clone());
    let c = scaled.ceil().to_integer();
    let value = BigRational::new(c.clone(), scale.clone());
    let neg = c.is_negative();
    let a = c.abs();
    let int = &a / &scale;
    let frac = &a % &scale;
    let s = format!(
        "{}{}.{:0>width$}",
        if neg { "-" } else { "" },
        int,
        frac.to_string(),
        width = digits as usize
    );
    (value, s)
}

/// Exhaustive search for a `k`-subset meeting the active equations. The
/// first `k-1` elements are chosen in increasing order; the last is forced
/// by the linear equation. Fails with `BudgetExceeded` after `node_budget`
/// nodes.
pub fn small_k_search(
    ctx: &FieldCtx,
    elements: &[FieldElement],
    rt: &ReducedTarget,
    k: usize,
    node_budget: u128,
) -> Result<Option<Vec<FieldElement>>> {
    if !rt.consistent || k > elements.len() {
        return Ok(None);
    }
    let mut sorted = elements.to_vec();
    sorted.sort_unstable();
    if k == 0 {
        return Ok(rt.b_active.iter().all(|b| b.is_zero()).then(Vec::new));
    }
    let exps = &rt.active_indices;
    debug_assert_eq!(exps[0], 1);
    let powers: Vec<Vec<FieldElement>> = sorted
        .iter()
        .map(|&y| exps.iter().map(|&j| ctx.pow(y, j as u64)).collect())
        .collect();
    // position + 1 of each encoding in `sorted`, 0 when absent
    let mut pos = vec![0u32; ctx.q() as usize];
    for (i, y) in sorted.iter().enumerate() {
        pos[y.encoding() as usize] = i as u32 + 1;
    }
    let mut search = Search {
        ctx,
        powers: &powers,
        pos: &pos,
        target: &rt.b_active,
        nodes: 0,
        budget: node_budget,
        chosen: Vec::with_capacity(k),
    };
    let sums = vec![FieldElement::ZERO; exps.len()];
    let found = search.go(0, k, &sums)?;
    Ok(found.then(|| search.chosen.iter().map(|&i| sorted[i]).collect()))
}

struct Search<'a> {
    ctx: &'a FieldCtx,
    powers: &'a [Vec<FieldElement>],
    pos: &'a [u32],
    target: &'a [FieldElement],
    nodes: u128,
    budget: u128,
    chosen: Vec<usize>,
}

impl Search<'_> {
    fn go(&mut self, start: usize, left: usize, sums: &[FieldElement]) -> Result<bool> {
        let ctx = self.ctx;
        if left == 1 {
            let y = ctx.sub(self.target[0], sums[0]);
            let i = self.pos[y.encoding() as usize] as usize;
            if i == 0 || i - 1 < start {
                return Ok(false);
            }
            let i = i - 1;
            let ok = sums
                .iter()
                .zip(&self.powers[i])
                .zip(self.target)
                .all(|((&s, &pw), &t)| ctx.add(s, pw) == t);
            if ok {
                self.chosen.push(i);
            }
            return Ok(ok);
        }
        let n = self.powers.len();
        let mut next = sums.to_vec();
        for i in start..n + 1 - left {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::BudgetExceeded(format!(
                    "small-k search exceeded {} nodes",
                    self.budget
                )));
            }
            for ((nx, &s), &pw) in next.iter_mut().zip(sums).zip(&self.powers[i]) {
                *nx = ctx.add(s, pw);
            }
            self.chosen.push(i);
            if self.go(i + 1, left - 1, &next)? {
                return Ok(true);
            }
            self.chosen.pop();
        }
        Ok(false)
    }
}

/// [`small_k_search`] packaged as a decision.
pub fn small_k_solver(
    ctx: &FieldCtx,
    d: &ImageSet,
    rt: &ReducedTarget,
    k: usize,
    node_budget: u128,
) -> Result<DecisionOutcome> {
    let found = small_k_search(ctx, d.elements(), rt, k, node_budget)?;
    let mut out = DecisionOutcome::new(
        if found.is_some() { Answer::Yes } else { Answer::No },
        Regime::SmallKSearch,
    );
    out.witness = found;
    Ok(out)
}

/// `R`, the ordered `k`-tuples over `D` (repeats allowed) meeting the
/// equations, and `R_12`, the `(k-1)`-tuples with the first entry doubled.
#[derive(Clone, Debug)]
pub struct BrunTables {
    space: MomentSpace,
    r: Vec<BigUint>,
    r12: Vec<BigUint>,
}

impl BrunTables {
    pub fn space(&self) -> &MomentSpace {
        &self.space
    }

    pub fn r(&self, idx: usize) -> &BigUint {
        &self.r[idx]
    }

    pub fn r12(&self, idx: usize) -> &BigUint {
        &self.r12[idx]
    }
}

pub fn brun_tables(ctx: &FieldCtx, d: &[FieldElement], exponents: &[u32], k: usize) -> Result<BrunTables> {
    let space = MomentSpace::new(ctx, exponents)?;
    let needed = space.size() as u128 * 48;
    if needed > DEFAULT_MEMORY_CAP {
        return Err(Error::StateSpaceTooLarge {
            needed,
            cap: DEFAULT_MEMORY_CAP,
        });
    }
    let offsets: Vec<usize> = d.iter().map(|&y| space.offset(ctx, y)).collect();
    let two = ctx.from_int(2);
    let doubled: Vec<usize> = d
        .iter()
        .map(|&y| {
            let v: Vec<FieldElement> = exponents
                .iter()
                .map(|&j| ctx.mul(two, ctx.pow(y, j as u64)))
                .collect();
            space.encode(&v)
        })
        .collect();
    let mut unit = vec![BigUint::zero(); space.size()];
    unit[0] = BigUint::one();
    let r = tuple_walk(&space, unit, &offsets, k);
    let r12 = if k < 2 {
        vec![BigUint::zero(); space.size()]
    } else {
        let mut init = vec![BigUint::zero(); space.size()];
        for &o in &doubled {
            init[o] += 1u32;
        }
        tuple_walk(&space, init, &offsets, k - 2)
    };
    Ok(BrunTables { space, r, r12 })
}

/// `(R, R_12)` for one target.
pub fn brun_terms(ctx: &FieldCtx, d: &ImageSet, rt: &ReducedTarget, k: usize) -> Result<(BigUint, BigUint)> {
    let t = brun_tables(ctx, d.elements(), &rt.active_indices, k)?;
    let idx = t.space.encode(&rt.b_active);
    Ok((t.r[idx].clone(), t.r12[idx].clone()))
}

/// `S_D(j)` for `0 <= j <= kmax` from `S_D(1)`: `S_0 = 1`,
/// `S_j = S_1 S_{j-1} - (|D| - j + 2)(j - 1) S_{j-2}`.
pub fn choe_sequence(s1: Complex64, d: usize, kmax: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(1.0, 0.0)];
    if kmax >= 1 {
        out.push(s1);
    }
    for j in 2..=kmax {
        let c = ((d + 2 - j) * (j - 1)) as f64;
        out.push(s1 * out[j - 1] - out[j - 2] * c);
    }
    out
}

/// `S_D(j) / (9|D|/16)^j`, the same recursion rescaled so large `j` stays finite.
pub fn choe_scaled_sequence(s1: Complex64, d: usize, kmax: usize) -> Vec<Complex64> {
    let lambda = 9.0 * d as f64 / 16.0;
    let mut out = vec![Complex64::new(1.0, 0.0)];
    if kmax >= 1 {
        out.push(s1 / lambda);
    }
    for j in 2..=kmax {
        let c = ((d + 2 - j) * (j - 1)) as f64 / (lambda * lambda);
        out.push(s1 / lambda * out[j - 1] - out[j - 2] * c);
    }
    out
}

/// `S_D(k, psi_c, f)`, the sum of `psi_c(f(x_1) + .. + f(x_k))` over ordered
/// tuples of distinct elements of `D`, by the characteristic-2 recursion.
pub fn choe_recursion(ctx: &FieldCtx, d: &[FieldElement], f: &CharPoly, c: FieldElement, k: usize) -> Result<Complex64> {
    if d.len() <= 3 {
        return Err(Error::Hypothesis("recursion needs |D| > 3".into()));
    }
    if k == 0 || k > d.len() {
        return Err(Error::InvalidArgument(format!("k must satisfy 1 <= k <= |D|, got {k}")));
    }
    let s1 = poly_char_sum(ctx, d, f, c);
    Ok(choe_sequence(s1, d.len(), k)[k])
}

/// The same sum by enumerating distinct ordered tuples.
pub fn distinct_tuple_sum(ctx: &FieldCtx, d: &[FieldElement], f: &CharPoly, c: FieldElement, k: usize) -> Complex64 {
    let vals: Vec<Complex64> = d
        .iter()
        .map(|&x| crate::charsum::additive_character(ctx, c, f.eval(ctx, x)))
        .collect();
    let mut used = vec![false; d.len()];
    fn rec(vals: &[Complex64], used: &mut [bool], left: usize, acc: Complex64) -> Complex64 {
        if left == 0 {
            return acc;
        }
        let mut total = Complex64::new(0.0, 0.0);
        for i in 0..vals.len() {
            if !used[i] {
                used[i] = true;
                total += rec(vals, used, left - 1, acc * vals[i]);
                used[i] = false;
            }
        }
        total
    }
    rec(&vals, &mut used, k, Complex64::new(1.0, 0.0))
}

/// `(x)_k = x (x-1) .. (x-k+1)`, or 0 when some factor is not positive.
pub fn falling_factorial(x: f64, k: u64) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        let f = x - i as f64;
        if f <= 0.0 {
            return 0.0;
        }
        acc *= f;
    }
    acc
}

pub fn falling_factorial_int(x: u64, k: u64) -> BigUint {
    if k > x {
        return BigUint::zero();
    }
    (0..k).fold(BigUint::one(), |acc, i| acc * BigUint::from(x - i))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiWanBound {
    /// `((mn+1) sqrt q + k + |(mn+1) sqrt q - |D|| / p - 1)_k`
    pub sharp: f64,
    /// `(0.013 |D| + k + |D| / p)_k`
    pub relaxed: f64,
    /// false when a factor of the sharp form is not positive
    pub sharp_positive: bool,
}

pub fn liwan_bound(rp: &RegimeParams) -> LiWanBound {
    let a = (rp.m as u64 * rp.n + 1) as f64 * rp.sqrt_q();
    let (k, d, p) = (rp.k as f64, rp.d as f64, rp.p as f64);
    let x = a + k + (a - d).abs() / p - 1.0;
    let sharp_positive = rp.k == 0 || x - (k - 1.0) > 0.0;
    LiWanBound {
        sharp: falling_factorial(x, rp.k),
        relaxed: falling_factorial(0.013 * d + k + d / p, rp.k),
        sharp_positive,
    }
}

/// `|M_k - (|D|)_k / q^{m_p}|`, from an exact `N_k`.
pub fn liwan_deviation(n_k: &BigUint, d: u64, k: u64, q: u64, m_p: u32) -> f64 {
    let qm = BigInt::from(q).pow(m_p);
    let mk = BigInt::from(n_k * factorial(k));
    let num = (mk * &qm - BigInt::from(falling_factorial_int(d, k))).abs();
    let r = BigRational::new(num, qm);
    r.to_f64().unwrap_or(f64::INFINITY)
}

/// Which engine `decide` uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// the full ladder
    #[default]
    Auto,
    Dp,
    Brute,
    Bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecideConfig {
    /// state-transition budget for the exact engines and node budget for the search
    pub budget: u128,
    pub threads: usize,
    pub memory_cap: u128,
    pub engine: Engine,
    /// witnesses are extracted only when their snapshots fit in this many bytes
    pub witness_cap: u128,
    /// separate budget for the exact counting path; `None` uses `budget`
    pub exact_budget: Option<u128>,
}

impl Default for DecideConfig {
    fn default() -> Self {
        DecideConfig {
            budget: DEFAULT_BUDGET,
            threads: 1,
            memory_cap: DEFAULT_MEMORY_CAP,
            engine: Engine::Auto,
            witness_cap: WITNESS_BYTES,
            exact_budget: None,
        }
    }
}

impl DecideConfig {
    fn dp(&self) -> DpConfig {
        DpConfig {
            threads: self.threads,
            memory_cap: self.memory_cap,
        }
    }
}

/// One-shot [`Decider::decide`] with default settings.
pub fn decide(ctx: &FieldCtx, desc: &EvalSetDesc, t: &MomentTarget, k: usize) -> Result<DecisionOutcome> {
    Decider::new(ctx.clone(), DecideConfig::default()).decide(desc, t, k)
}

/// Runs the decision ladder, caching images and count tables across calls.
#[derive(Debug)]
pub struct Decider {
    ctx: FieldCtx,
    cfg: DecideConfig,
    images: HashMap<EvalSetDesc, ImageSet>,
    tables: HashMap<(EvalSetDesc, Vec<u32>), CountTable>,
}

impl Decider {
    pub fn new(ctx: FieldCtx, cfg: DecideConfig) -> Self {
        Decider {
            ctx,
            cfg,
            images: HashMap::new(),
            tables: HashMap::new(),
        }
    }

    pub fn ctx(&self) -> &FieldCtx {
        &self.ctx
    }

    pub fn image(&mut self, desc: &EvalSetDesc) -> Result<&ImageSet> {
        if !self.images.contains_key(desc) {
            let img = image_set(&self.ctx, desc)?;
            self.images.insert(desc.clone(), img);
        }
        Ok(&self.images[desc])
    }

    pub fn decide(&mut self, desc: &EvalSetDesc, t: &MomentTarget, k: usize) -> Result<DecisionOutcome> {
        let ctx = self.ctx.clone();
        let rt = reduce_targets(&ctx, t);
        if !rt.consistent {
            return Ok(DecisionOutcome::new(Answer::No, Regime::InconsistentTargets));
        }
        let d_set = self.image(desc)?.clone();
        let d = d_set.len();
        if k > d {
            let mut out = DecisionOutcome::new(Answer::No, Regime::ExactDp);
            out.count = Some("0".into());
            return Ok(out);
        }
        let (rt2, k2, dual) = if 2 * k > d {
            let (r, kk) = duality_transform(&ctx, &d_set, &rt, k);
            (r, kk, true)
        } else {
            (rt.clone(), k, false)
        };
        let mut out = self.ladder(desc, &d_set, t.m, &rt2, k2)?;
        out.duality_applied = dual;
        if dual {
            if let Some(w) = out.witness.take() {
                let comp: Vec<FieldElement> = d_set.elements().iter().copied().filter(|x| !w.contains(x)).collect();
                out.witness = Some(comp);
            }
        }
        if let Some(w) = &out.witness {
            if !verify_witness(&ctx, &rt, k, w) {
                return Err(Error::Hypothesis("internal: witness failed verification".into()));
            }
        }
        Ok(out)
    }

    fn states(&self, m_p: u32) -> u128 {
        (self.ctx.q() as u128).saturating_pow(m_p)
    }

    fn ladder(
        &mut self,
        desc: &EvalSetDesc,
        d_set: &ImageSet,
        m: u32,
        rt: &ReducedTarget,
        k: usize,
    ) -> Result<DecisionOutcome> {
        let ctx = self.ctx.clone();
        let d = d_set.len();
        let states = self.states(rt.m_p);
        let raw_cost = d as u128 * k.max(1) as u128 * states;
        match self.cfg.engine {
            Engine::Dp => return self.exact(desc, d_set, rt, k, Vec::new()),
            Engine::Brute => {
                let n = count_brute_with_cap(&ctx, d_set.elements(), rt, k, DEFAULT_BRUTE_CAP)?.value;
                let mut out = DecisionOutcome::new(yes_if(!n.is_zero()), Regime::ExactBrute);
                out.count = Some(n.to_string());
                return Ok(out);
            }
            Engine::Bool => return self.fallback(d_set, rt, k, Vec::new()),
            Engine::Auto => {}
        }

        // exact counting, weighted by the width of the counts
        let limbs = count_limbs(d as u64, k as u64);
        let dp_cost = raw_cost * limbs;
        let exact_budget = self.cfg.exact_budget.unwrap_or(self.cfg.budget);
        let cost_h = Hypothesis::le(
            "|D|*k*q^m_p*limbs <= budget",
            BigUint::from(dp_cost),
            BigUint::from(exact_budget),
        );
        let fits = table_bytes(d as u64, k as u64, states) <= self.cfg.memory_cap;
        if cost_h.holds && fits {
            return self.exact(desc, d_set, rt, k, vec![cost_h]);
        }
        let mut checked = vec![cost_h];

        if k as u64 <= 3 * m as u64 + 1 {
            match small_k_search(&ctx, d_set.elements(), rt, k, self.cfg.budget) {
                Ok(found) => {
                    let mut out = DecisionOutcome::new(yes_if(found.is_some()), Regime::SmallKSearch);
                    out.witness = found;
                    out.hypotheses = checked;
                    return Ok(out);
                }
                Err(Error::BudgetExceeded(_)) => {}
                Err(e) => return Err(e),
            }
        }

        if let Some(n) = desc.degree().filter(|_| desc.is_symbolic()) {
            let rp = RegimeParams::new(&ctx, n, m, k as u64, d as u64);
            for check in [medium_k_guarantee(&rp), large_k_guarantee(&rp)] {
                if check.applies() {
                    let mut out = DecisionOutcome::new(Answer::Yes, check.regime);
                    out.hypotheses = check.hypotheses;
                    return Ok(out);
                }
                checked.extend(check.hypotheses);
            }
        }
        self.fallback(d_set, rt, k, checked)
    }

    fn exact(
        &mut self,
        desc: &EvalSetDesc,
        d_set: &ImageSet,
        rt: &ReducedTarget,
        k: usize,
        hypotheses: Vec<Hypothesis>,
    ) -> Result<DecisionOutcome> {
        let ctx = self.ctx.clone();
        let d = d_set.len();
        let key = (desc.clone(), rt.active_indices.clone());
        let cached = self.tables.get(&key).is_some_and(|t| t.kmax() >= k);
        if !cached {
            // fill the table up to |D|/2 when that is affordable, so later
            // targets on the same set reuse it
            let states = self.states(rt.m_p);
            let half = d / 2;
            let wide = d as u128 * half.max(1) as u128 * states * count_limbs(d as u64, half as u64);
            let kmax = if half > k
                && wide <= self.cfg.exact_budget.unwrap_or(self.cfg.budget)
                && table_bytes(d as u64, half as u64, states) <= self.cfg.memory_cap
            {
                half
            } else {
                k
            };
            let t = CountTable::build(&ctx, d_set.elements(), &rt.active_indices, kmax, self.cfg.dp())?;
            self.tables.insert(key.clone(), t);
        }
        let n = self.tables[&key].count(k, &rt.b_active).expect("table covers k");
        let mut out = DecisionOutcome::new(yes_if(!n.is_zero()), Regime::ExactDp);
        out.count = Some(n.to_string());
        out.hypotheses = hypotheses;
        if !n.is_zero() {
            out.witness = self.witness(d_set, rt, k)?;
        }
        Ok(out)
    }

    fn witness(&self, d_set: &ImageSet, rt: &ReducedTarget, k: usize) -> Result<Option<Vec<FieldElement>>> {
        let states = self.states(rt.m_p);
        let bytes = witness_bytes(d_set.len(), k, states as usize);
        let work = d_set.len() as u128 * (k as u128 + 1) * states;
        if bytes > self.cfg.witness_cap.min(self.cfg.memory_cap) || work > self.cfg.budget {
            return Ok(None);
        }
        let space = MomentSpace::new(&self.ctx, &rt.active_indices)?;
        find_witness(
            &self.ctx,
            d_set.elements(),
            &rt.active_indices,
            k,
            space.encode(&rt.b_active),
            self.cfg.dp(),
        )
    }

    fn fallback(
        &self,
        d_set: &ImageSet,
        rt: &ReducedTarget,
        k: usize,
        hypotheses: Vec<Hypothesis>,
    ) -> Result<DecisionOutcome> {
        let states = self.states(rt.m_p);
        let cost = d_set.len() as u128 * k.max(1) as u128 * states;
        if self.cfg.engine == Engine::Auto && cost > self.cfg.budget {
            let failed: Vec<String> = hypotheses.iter().filter(|h| !h.holds).map(|h| h.to_string()).collect();
            return Err(Error::BudgetExceeded(format!(
                "outside certified regimes and the reachability DP needs {cost} transitions (budget {}); failed: {}",
                self.cfg.budget,
                failed.join("; ")
            )));
        }
        let space = MomentSpace::new(&self.ctx, &rt.active_indices)?;
        let target = space.encode(&rt.b_active);
        let hit = reachable(&self.ctx, d_set.elements(), &rt.active_indices, k, &[target], self.cfg.dp())?[0];
        let mut out = DecisionOutcome::new(yes_if(hit), Regime::FallbackExact);
        out.hypotheses = hypotheses;
        if hit {
            out.witness = self.witness(d_set, rt, k)?;
        }
        Ok(out)
    }
}

fn yes_if(b: bool) -> Answer {
    if b {
        Answer::Yes
    } else {
        Answer::No
    }
}

/// Exact `C(|D|, k)`, re-exported for certificate arithmetic.
pub fn subsets(d: u64, k: u64) -> BigUint {
    binomial(d, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{count_brute, ordered_count};
    use crate::field::prime_power;

    fn field(q: u64) -> FieldCtx {
        let (p, s) = prime_power(q).unwrap();
        FieldCtx::new(p, s, None).unwrap()
    }

    fn el(e: u32) -> FieldElement {
        FieldElement::from_encoding(e)
    }

    fn params(q: u64, n: u64, m: u32, k: u64, d: u64) -> RegimeParams {
        RegimeParams::new(&field(q), n, m, k, d)
    }

    #[test]
    fn medium_examples() {
        let c = medium_k_guarantee(&params(15625, 1, 1, 10, 15625));
        assert!(c.applies());
        assert_eq!(c.hypotheses[0].lhs, "4096");
        let c = medium_k_guarantee(&params(15625, 1, 1, 4, 15625));
        assert!(!c.applies());
        assert!(!c.hypotheses[1].holds);
        let c = medium_k_guarantee(&params(49, 2, 2, 10, 25));
        assert!(!c.hypotheses[0].holds);
        assert_eq!(c.hypotheses[0].lhs, (20u64.pow(6)).to_string());
    }

    #[test]
    fn large_examples() {
        let c = large_k_guarantee(&params(4096, 1, 1, 40, 4096));
        assert_eq!(c.regime, Regime::LargeKTheoremEven);
        assert!(c.applies(), "{:?}", c.hypotheses);
        let c = large_k_guarantee(&params(4096, 1, 1, 2048, 4096));
        assert!(c.applies());
        let c = large_k_guarantee(&params(4096, 1, 1, 2049, 4096));
        assert!(!c.applies());
        let c = large_k_guarantee(&params(4096, 1, 1, 36, 4096));
        assert!(!c.applies());
        let c = large_k_guarantee(&params(78125, 1, 1, 70, 78125));
        assert_eq!(c.regime, Regime::LargeKTheoremOdd);
        assert!(c.applies(), "{:?}", c.hypotheses);
        assert!(large_k_guarantee(&params(78125, 1, 1, 68, 78125)).applies());
        // 6 ln 78125 = 67.59..
        assert!(!large_k_guarantee(&params(78125, 1, 1, 67, 78125)).applies());
    }

    #[test]
    fn ln_bounds_bracket_ln() {
        for q in [2u64, 3, 5, 7, 8, 49, 78125, 1 << 31, 4294967291] {
            let (lo, hi) = ln_bounds(q);
            let l = (q as f64).ln();
            assert!(lo.to_f64().unwrap() <= l + 1e-12 && hi.to_f64().unwrap() >= l - 1e-12);
            assert!((&hi - &lo).to_f64().unwrap() < 1e-20);
            assert!(lo <= hi);
        }
        let (_, s) = ceil_decimal(&BigRational::new(BigInt::from(1), BigInt::from(3)), 4);
        assert_eq!(s, "0.3334");
    }

    #[test]
    fn small_k_examples() {
        let f = field(7);
        let d = image_set(&f, &EvalSetDesc::Monomial { n: 2 }).unwrap();
        for b in 0..7 {
            let rt = reduce_targets(&f, &MomentTarget::new(1, vec![el(b)]).unwrap());
            for k in 0..=4 {
                let out = small_k_solver(&f, &d, &rt, k, 1 << 20).unwrap();
                let n = count_brute(&f, &d, &rt, k).unwrap().value;
                assert_eq!(out.answer == Answer::Yes, !n.is_zero(), "b={b} k={k}");
                if let Some(w) = out.witness {
                    assert!(verify_witness(&f, &rt, k, &w));
                }
            }
        }
        let rt = reduce_targets(&f, &MomentTarget::new(1, vec![el(3)]).unwrap());
        let out = small_k_solver(&f, &d, &rt, 2, 100).unwrap();
        assert_eq!(out.witness, Some(vec![el(1), el(2)]));
        let big = image_set(&field(49), &EvalSetDesc::Monomial { n: 1 }).unwrap();
        let f49 = field(49);
        let rt = reduce_targets(&f49, &MomentTarget::new(2, vec![el(0), el(1)]).unwrap());
        assert!(matches!(
            small_k_search(&f49, big.elements(), &rt, 6, 10),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn decide_examples() {
        let f = field(7);
        let desc = EvalSetDesc::Monomial { n: 2 };
        let out = decide(&f, &desc, &MomentTarget::new(1, vec![el(3)]).unwrap(), 2).unwrap();
        assert_eq!(out.answer, Answer::Yes);
        assert_eq!(out.regime, Regime::ExactDp);
        assert_eq!(out.count.as_deref(), Some("1"));
        assert_eq!(out.witness, Some(vec![el(1), el(2)]));
        let f2 = field(4);
        let out = decide(
            &f2,
            &EvalSetDesc::Monomial { n: 1 },
            &MomentTarget::new(2, vec![el(1), el(0)]).unwrap(),
            2,
        )
        .unwrap();
        assert_eq!((out.answer, out.regime), (Answer::No, Regime::InconsistentTargets));
    }

    #[test]
    fn decide_spec_large_even() {
        let f = field(4096);
        let out = decide(&f, &EvalSetDesc::Monomial { n: 1 }, &MomentTarget::new(1, vec![el(77)]).unwrap(), 40).unwrap();
        assert_eq!(out.answer, Answer::Yes);
        assert_eq!(out.regime, Regime::LargeKTheoremEven);
        assert!(out.hypotheses.iter().all(|h| h.holds));
    }

    #[test]
    fn decide_duality_consistent() {
        let f = field(9);
        let desc = EvalSetDesc::Dickson { n: 2, a: el(1) };
        let mut dec = Decider::new(f.clone(), DecideConfig::default());
        let d = dec.image(&desc).unwrap().clone();
        for b1 in 0..9 {
            for b2 in [0u32, 4] {
                let t = MomentTarget::new(2, vec![el(b1), el(b2)]).unwrap();
                let rt = reduce_targets(&f, &t);
                for k in 0..=d.len() {
                    let out = dec.decide(&desc, &t, k).unwrap();
                    let (rt2, k2) = duality_transform(&f, &d, &rt, k);
                    let n = count_brute(&f, &d, &rt, k).unwrap().value;
                    assert_eq!(out.answer == Answer::Yes, !n.is_zero());
                    assert_eq!(out.duality_applied, 2 * k > d.len());
                    let n2 = count_brute(&f, &d, &rt2, k2).unwrap().value;
                    assert_eq!(n, n2);
                }
            }
        }
    }

    #[test]
    fn engines_agree() {
        let f = field(11);
        let desc = EvalSetDesc::Monomial { n: 2 };
        for engine in [Engine::Dp, Engine::Brute, Engine::Bool] {
            let cfg = DecideConfig {
                engine,
                ..DecideConfig::default()
            };
            let mut dec = Decider::new(f.clone(), cfg);
            let mut auto = Decider::new(f.clone(), DecideConfig::default());
            for b in 0..11 {
                let t = MomentTarget::new(1, vec![el(b)]).unwrap();
                for k in 0..=6 {
                    assert_eq!(dec.decide(&desc, &t, k).unwrap().answer, auto.decide(&desc, &t, k).unwrap().answer);
                }
            }
        }
    }

    #[test]
    fn budget_exceeded_is_reported() {
        let f = field(4096);
        let cfg = DecideConfig {
            budget: 1000,
            ..DecideConfig::default()
        };
        let mut dec = Decider::new(f, cfg);
        // k = 20 is below every theorem range at this budget
        let r = dec.decide(&EvalSetDesc::Monomial { n: 1 }, &MomentTarget::new(1, vec![el(5)]).unwrap(), 20);
        assert!(matches!(r, Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn brun_examples() {
        let f = field(7);
        let d = image_set(&f, &EvalSetDesc::Monomial { n: 2 }).unwrap();
        let t = brun_tables(&f, d.elements(), &[1], 1).unwrap();
        for v in 0..7u32 {
            let expect = d.contains(el(v)) as u32;
            assert_eq!(t.r(v as usize), &BigUint::from(expect));
        }
        for k in 1..=4usize {
            let t = brun_tables(&f, d.elements(), &[1, 2], k).unwrap();
            let total: BigUint = (0..t.space().size()).map(|i| t.r(i).clone()).sum();
            assert_eq!(total, BigUint::from(d.len()).pow(k as u32));
            for i in 0..t.space().size() {
                let b = t.space().decode(i);
                let rt = reduce_targets(&f, &MomentTarget::new(2, b).unwrap());
                let mk = ordered_count(&f, &d, &rt, k).unwrap().value;
                let rhs = BigInt::from(t.r(i).clone()) - BigInt::from(binomial(k as u64, 2) * t.r12(i));
                assert!(BigInt::from(mk) >= rhs);
            }
        }
    }

    #[test]
    fn choe_matches_direct() {
        let f = field(16);
        let d = image_set(&f, &EvalSetDesc::Monomial { n: 3 }).unwrap();
        let poly = CharPoly::new(&f, vec![el(3), el(0), el(7)]).unwrap();
        for k in 1..=4 {
            let r = choe_recursion(&f, d.elements(), &poly, el(5), k).unwrap();
            let direct = distinct_tuple_sum(&f, d.elements(), &poly, el(5), k);
            assert!((r - direct).norm() <= 1e-6 * direct.norm().max(1.0));
        }
        let s1 = poly_char_sum(&f, d.elements(), &poly, el(5));
        let plain = choe_sequence(s1, d.len(), 6);
        let scaled = choe_scaled_sequence(s1, d.len(), 6);
        let lambda = 9.0 * d.len() as f64 / 16.0;
        for j in 0..=6 {
            assert!((plain[j] / lambda.powi(j as i32) - scaled[j]).norm() < 1e-9);
        }
        assert!(choe_recursion(&f, &d.elements()[..3], &poly, el(5), 1).is_err());
    }

    #[test]
    fn falling_factorials() {
        assert_eq!(falling_factorial(5.0, 2), 20.0);
        assert_eq!(falling_factorial(3.5, 1), 3.5);
        assert_eq!(falling_factorial(2.0, 3), 0.0);
        assert_eq!(falling_factorial_int(5, 2), BigUint::from(20u32));
        assert_eq!(falling_factorial_int(2, 3), BigUint::zero());
        let b = liwan_bound(&params(7, 1, 1, 2, 7));
        assert!(b.sharp > 0.0 && b.relaxed > 0.0);
        assert_eq!(liwan_deviation(&BigUint::from(1u32), 3, 2, 7, 1), (2.0f64 - 6.0 / 7.0).abs());
    }
}
