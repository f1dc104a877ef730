//! Exact counts of k-subsets of `D` with prescribed power sums.
//!
//! `N_k(D, b, m)` counts subsets `S`, `|S| = k`, with `sum_{y in S} y^j = b_j`
//! for `1 <= j <= m`; `M_k = k! N_k` counts the ordered versions.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalsets::ImageSet;
use crate::field::{FieldCtx, FieldElement};
use crate::moments::{MomentSpace, Translation};

pub const DEFAULT_MEMORY_CAP: u128 = 2 << 30;
pub const DEFAULT_BRUTE_CAP: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MomentTarget {
    pub m: u32,
    pub b: Vec<FieldElement>,
}

impl MomentTarget {
    pub fn new(m: u32, b: Vec<FieldElement>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        if b.len() != m as usize {
            return Err(Error::InvalidArgument(format!(
                "expected {m} target values, got {}",
                b.len()
            )));
        }
        Ok(MomentTarget { m, b })
    }

    /// Comma-separated element list, one per moment.
    pub fn parse(ctx: &FieldCtx, m: u32, text: &str) -> Result<Self> {
        Self::new(m, ctx.parse_element_list(text)?)
    }

    /// The power sums `(sum y, sum y^2, .., sum y^m)` of `subset`.
    pub fn of_subset(ctx: &FieldCtx, m: u32, subset: &[FieldElement]) -> Self {
        let exps: Vec<u32> = (1..=m).collect();
        MomentTarget {
            m,
            b: power_sums(ctx, subset, &exps),
        }
    }
}

impl fmt::Display for MomentTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b: Vec<String> = self.b.iter().map(|x| x.to_string()).collect();
        write!(f, "m={} b=({})", self.m, b.join(","))
    }
}

/// The system after dropping the equations `j` with `p | j`, which are
/// `p`-th powers of earlier ones.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReducedTarget {
    pub m: u32,
    pub active_indices: Vec<u32>,
    pub b_active: Vec<FieldElement>,
    pub m_p: u32,
    pub consistent: bool,
}

/// Checks `b_i^p = b_{ip}` for `ip <= m` and keeps the indices prime to `p`.
pub fn reduce_targets(ctx: &FieldCtx, t: &MomentTarget) -> ReducedTarget {
    let p = ctx.p();
    let m = t.m;
    let mut consistent = true;
    for i in 1..=m / p {
        let ip = (i * p) as usize;
        if ctx.pow(t.b[i as usize - 1], p as u64) != t.b[ip - 1] {
            consistent = false;
        }
    }
    let active_indices: Vec<u32> = (1..=m).filter(|j| j % p != 0).collect();
    let b_active = active_indices.iter().map(|&j| t.b[j as usize - 1]).collect();
    ReducedTarget {
        m,
        m_p: active_indices.len() as u32,
        active_indices,
        b_active,
        consistent,
    }
}

/// `(sum_{y in S} y^j)_{j in exps}`.
pub fn power_sums(ctx: &FieldCtx, subset: &[FieldElement], exps: &[u32]) -> Vec<FieldElement> {
    exps.iter()
        .map(|&j| {
            subset
                .iter()
                .fold(FieldElement::ZERO, |acc, &y| ctx.add(acc, ctx.pow(y, j as u64)))
        })
        .collect()
}

/// True iff `subset` is a `k`-subset of distinct elements meeting every
/// active equation of `rt`.
pub fn verify_witness(ctx: &FieldCtx, rt: &ReducedTarget, k: usize, subset: &[FieldElement]) -> bool {
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len() == k && rt.consistent && power_sums(ctx, subset, &rt.active_indices) == rt.b_active
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountKind {
    #[serde(rename = "N_k")]
    Unordered,
    #[serde(rename = "M_k")]
    Ordered,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountResult {
    pub value: BigUint,
    pub kind: CountKind,
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

pub fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// Engine knobs shared by the dynamic programs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DpConfig {
    pub threads: usize,
    pub memory_cap: u128,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            threads: 1,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

/// Spaces smaller than this stay sequential even with several threads.
const PAR_THRESHOLD: usize = 1 << 14;

fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    if threads <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[derive(Clone, Debug)]
enum Counts {
    Small(Vec<u128>),
    Big(Vec<BigUint>),
}

/// `N_c(E, v)` for all `c <= kmax` and all moment vectors `v`, over a fixed
/// element list `E` and exponent set.
#[derive(Clone, Debug)]
pub struct CountTable {
    space: MomentSpace,
    kmax: usize,
    counts: Counts,
}

fn limbs(x: &BigUint) -> u128 {
    x.bits().div_ceil(64).max(1) as u128
}

/// Largest `C(d, c)` over `c <= kmax`, the bound on every table entry.
pub fn max_binomial(d: u64, kmax: u64) -> BigUint {
    binomial(d, kmax.min(d / 2))
}

/// Bytes a [`CountTable`] would occupy.
pub fn table_bytes(d: u64, kmax: u64, states: u128) -> u128 {
    let cells = (kmax as u128 + 1) * states;
    let top = max_binomial(d, kmax);
    if top.bits() < 128 {
        cells * 16
    } else {
        cells * (24 + 8 * limbs(&top))
    }
}

/// 64-bit limbs per count, used to weight DP cost estimates.
pub fn count_limbs(d: u64, kmax: u64) -> u128 {
    limbs(&max_binomial(d, kmax))
}

impl CountTable {
    pub fn build(
        ctx: &FieldCtx,
        elements: &[FieldElement],
        exponents: &[u32],
        kmax: usize,
        cfg: DpConfig,
    ) -> Result<Self> {
        let space = MomentSpace::new(ctx, exponents)?;
        let kmax = kmax.min(elements.len());
        let s = space.size();
        let d = elements.len() as u64;
        let needed = table_bytes(d, kmax as u64, s as u128);
        if needed > cfg.memory_cap {
            return Err(Error::StateSpaceTooLarge {
                needed,
                cap: cfg.memory_cap,
            });
        }
        let mut sorted = elements.to_vec();
        sorted.sort_unstable();
        let offsets: Vec<usize> = sorted.iter().map(|&y| space.offset(ctx, y)).collect();
        let small = max_binomial(d, kmax as u64).bits() < 128;
        let counts = with_threads(cfg.threads, || {
            if small {
                Counts::Small(run_counts::<u128>(&space, &offsets, kmax, cfg.threads))
            } else {
                Counts::Big(run_counts::<BigUint>(&space, &offsets, kmax, cfg.threads))
            }
        });
        Ok(CountTable {
            space,
            kmax,
            counts,
        })
    }

    pub fn space(&self) -> &MomentSpace {
        &self.space
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    /// `N_k` at state index `idx`; `None` when `k > kmax`.
    pub fn count_index(&self, k: usize, idx: usize) -> Option<BigUint> {
        if k > self.kmax {
            return None;
        }
        let i = k * self.space.size() + idx;
        Some(match &self.counts {
            Counts::Small(v) => BigUint::from(v[i]),
            Counts::Big(v) => v[i].clone(),
        })
    }

    pub fn is_positive(&self, k: usize, idx: usize) -> Option<bool> {
        if k > self.kmax {
            return None;
        }
        let i = k * self.space.size() + idx;
        Some(match &self.counts {
            Counts::Small(v) => v[i] != 0,
            Counts::Big(v) => !v[i].is_zero(),
        })
    }

    pub fn count(&self, k: usize, b_active: &[FieldElement]) -> Option<BigUint> {
        self.count_index(k, self.space.encode(b_active))
    }
}

pub(crate) trait Count: Clone + Zero + One + Send + Sync + for<'a> std::ops::AddAssign<&'a Self> {}
impl<T: Clone + Zero + One + Send + Sync + for<'a> std::ops::AddAssign<&'a T>> Count for T {}

fn run_counts<C: Count>(space: &MomentSpace, offsets: &[usize], kmax: usize, threads: usize) -> Vec<C> {
    let s = space.size();
    let mut table = vec![C::zero(); (kmax + 1) * s];
    table[0] = C::one();
    let par = threads > 1 && s >= PAR_THRESHOLD;
    for (t, &o) in offsets.iter().enumerate() {
        let tr: Translation = space.translation(o);
        for c in (1..=kmax.min(t + 1)).rev() {
            let (lower, upper) = table.split_at_mut(c * s);
            let src = &lower[(c - 1) * s..];
            let dst = &mut upper[..s];
            let op = |d: &mut C, x: &C| {
                if !x.is_zero() {
                    *d += x;
                }
            };
            if par {
                space.apply_par(&tr, src, dst, op);
            } else {
                space.apply(&tr, src, dst, op);
            }
        }
    }
    table
}

/// Exact `N_k` by the counting DP with default settings.
pub fn count_exact_dp(ctx: &FieldCtx, d: &ImageSet, rt: &ReducedTarget, k: usize) -> Result<CountResult> {
    count_exact_dp_with(ctx, d.elements(), rt, k, DpConfig::default())
}

pub fn count_exact_dp_with(
    ctx: &FieldCtx,
    elements: &[FieldElement],
    rt: &ReducedTarget,
    k: usize,
    cfg: DpConfig,
) -> Result<CountResult> {
    let unordered = |value| CountResult {
        value,
        kind: CountKind::Unordered,
    };
    if !rt.consistent || k > elements.len() {
        return Ok(unordered(BigUint::zero()));
    }
    let table = CountTable::build(ctx, elements, &rt.active_indices, k, cfg)?;
    Ok(unordered(table.count(k, &rt.b_active).expect("k within table")))
}

/// `M_k = k! N_k`.
pub fn ordered_count(ctx: &FieldCtx, d: &ImageSet, rt: &ReducedTarget, k: usize) -> Result<CountResult> {
    let n = count_exact_dp(ctx, d, rt, k)?;
    Ok(CountResult {
        value: n.value * factorial(k as u64),
        kind: CountKind::Ordered,
    })
}

/// Complement bijection: `N_k(D, b) = N_{|D|-k}(D, b')` with
/// `b'_j = sum_{x in D} x^j - b_j`.
pub fn duality_transform(ctx: &FieldCtx, d: &ImageSet, rt: &ReducedTarget, k: usize) -> (ReducedTarget, usize) {
    let totals = power_sums(ctx, d.elements(), &rt.active_indices);
    let b_active = totals
        .iter()
        .zip(&rt.b_active)
        .map(|(&t, &b)| ctx.sub(t, b))
        .collect();
    let out = ReducedTarget {
        b_active,
        ..rt.clone()
    };
    (out, d.len().saturating_sub(k))
}

/// Processing order for the reachability DP: a golden-ratio stride through
/// the sorted list, so early prefixes already spread over the whole set.
pub fn stride_order(d: usize) -> Vec<usize> {
    if d <= 2 {
        return (0..d).collect();
    }
    let mut stride = ((d as f64) * 0.618_033_988_749_895).round() as usize;
    stride = stride.clamp(1, d - 1);
    while gcd(stride, d) != 1 {
        stride += 1;
    }
    (0..d).map(|t| t * stride % d).collect()
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Bitset layers `R_c`, `c <= kmax`: `R_c[v]` is set iff some `c`-subset of
/// the processed elements has moment vector `v`.
#[derive(Clone, Debug)]
pub struct ReachTable {
    space: MomentSpace,
    layers: Vec<Vec<u64>>,
    pop: Vec<u64>,
    processed: usize,
}

impl ReachTable {
    fn new(space: MomentSpace, kmax: usize) -> Self {
        let words = space.size().div_ceil(64);
        let mut layers = vec![vec![0u64; words]; kmax + 1];
        layers[0][0] = 1;
        let mut pop = vec![0u64; kmax + 1];
        pop[0] = 1;
        ReachTable {
            space,
            layers,
            pop,
            processed: 0,
        }
    }

    pub fn space(&self) -> &MomentSpace {
        &self.space
    }

    pub fn kmax(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn processed(&self) -> usize {
        self.processed
    }

    pub fn get(&self, k: usize, idx: usize) -> bool {
        self.layers[k][idx / 64] >> (idx % 64) & 1 == 1
    }

    /// Number of reachable states in layer `k`.
    pub fn popcount(&self, k: usize) -> u64 {
        self.pop[k]
    }

    fn push(&mut self, offset: usize) {
        let full = self.space.size() as u64;
        let top = self.kmax().min(self.processed + 1);
        let tr = if self.space.exponents().is_empty() || is_binary(&self.space) {
            None
        } else {
            Some(self.space.translation(offset))
        };
        for c in (1..=top).rev() {
            if self.pop[c - 1] == 0 || self.pop[c] == full {
                continue;
            }
            let (lower, upper) = self.layers.split_at_mut(c);
            let src = &lower[c - 1];
            let dst = &mut upper[0];
            match &tr {
                None => xor_shift_or(src, dst, offset),
                Some(tr) => {
                    for (w, &word) in src.iter().enumerate() {
                        let mut bits = word;
                        while bits != 0 {
                            let x = w * 64 + bits.trailing_zeros() as usize;
                            let y = self.space.image(tr, x);
                            dst[y / 64] |= 1 << (y % 64);
                            bits &= bits - 1;
                        }
                    }
                }
            }
            self.pop[c] = dst.iter().map(|w| w.count_ones() as u64).sum();
        }
        self.processed += 1;
    }
}

fn is_binary(space: &MomentSpace) -> bool {
    space.size().is_power_of_two() && space.add(1, 1) == 0
}

/// Swaps bit `i` with bit `i ^ r` inside a word, `r < 64`.
#[inline]
fn permute_bits(mut x: u64, r: usize) -> u64 {
    const MASKS: [u64; 6] = [
        0x5555_5555_5555_5555,
        0x3333_3333_3333_3333,
        0x0F0F_0F0F_0F0F_0F0F,
        0x00FF_00FF_00FF_00FF,
        0x0000_FFFF_0000_FFFF,
        0x0000_0000_FFFF_FFFF,
    ];
    for (t, &m) in MASKS.iter().enumerate() {
        if r >> t & 1 == 1 {
            let sh = 1 << t;
            x = ((x & m) << sh) | ((x >> sh) & m);
        }
    }
    x
}

/// `dst[x ^ o] |= src[x]` on packed bits.
fn xor_shift_or(src: &[u64], dst: &mut [u64], o: usize) {
    let (wo, bo) = (o / 64, o % 64);
    for (w, &word) in src.iter().enumerate() {
        if word != 0 {
            dst[w ^ wo] |= permute_bits(word, bo);
        }
    }
}

/// Reachability for all layers `c <= kmax` over every element of `elements`.
/// Layers that fill up stop being updated.
pub fn reach_table(
    ctx: &FieldCtx,
    elements: &[FieldElement],
    exponents: &[u32],
    kmax: usize,
    cfg: DpConfig,
) -> Result<ReachTable> {
    let space = MomentSpace::new(ctx, exponents)?;
    let kmax = kmax.min(elements.len());
    check_bits(&space, kmax, cfg)?;
    let mut sorted = elements.to_vec();
    sorted.sort_unstable();
    let mut table = ReachTable::new(space, kmax);
    let full = table.space.size() as u64;
    for i in stride_order(sorted.len()) {
        if table.pop[1..].iter().all(|&p| p == full) {
            break;
        }
        let o = table.space.offset(ctx, sorted[i]);
        table.push(o);
    }
    Ok(table)
}

fn check_bits(space: &MomentSpace, kmax: usize, cfg: DpConfig) -> Result<()> {
    let needed = (kmax as u128 + 1) * space.size().div_ceil(64) as u128 * 8;
    if needed > cfg.memory_cap {
        return Err(Error::StateSpaceTooLarge {
            needed,
            cap: cfg.memory_cap,
        });
    }
    Ok(())
}

/// For each target index, whether some `k`-subset of `elements` reaches it.
/// Stops as soon as every target is reached.
pub fn reachable(
    ctx: &FieldCtx,
    elements: &[FieldElement],
    exponents: &[u32],
    k: usize,
    targets: &[usize],
    cfg: DpConfig,
) -> Result<Vec<bool>> {
    if k > elements.len() {
        return Ok(vec![false; targets.len()]);
    }
    let space = MomentSpace::new(ctx, exponents)?;
    check_bits(&space, k, cfg)?;
    let mut sorted = elements.to_vec();
    sorted.sort_unstable();
    let mut table = ReachTable::new(space, k);
    let done = |t: &ReachTable| targets.iter().all(|&x| t.get(k, x));
    if !done(&table) {
        for i in stride_order(sorted.len()) {
            let o = table.space.offset(ctx, sorted[i]);
            table.push(o);
            if done(&table) {
                break;
            }
        }
    }
    Ok(targets.iter().map(|&x| table.get(k, x)).collect())
}

/// Bytes [`find_witness`] needs for its per-element snapshots.
pub fn witness_bytes(d: usize, k: usize, states: usize) -> u128 {
    (d as u128 + 1) * (k as u128 + 1) * states.div_ceil(64) as u128 * 8
}

/// A `k`-subset of `elements` with moment index `target`, recovered by
/// walking the reachability layers of every prefix backwards.
pub fn find_witness(
    ctx: &FieldCtx,
    elements: &[FieldElement],
    exponents: &[u32],
    k: usize,
    target: usize,
    cfg: DpConfig,
) -> Result<Option<Vec<FieldElement>>> {
    if k > elements.len() {
        return Ok(None);
    }
    let space = MomentSpace::new(ctx, exponents)?;
    let needed = witness_bytes(elements.len(), k, space.size());
    if needed > cfg.memory_cap {
        return Err(Error::StateSpaceTooLarge {
            needed,
            cap: cfg.memory_cap,
        });
    }
    let mut sorted = elements.to_vec();
    sorted.sort_unstable();
    let offsets: Vec<usize> = sorted.iter().map(|&y| space.offset(ctx, y)).collect();
    let mut table = ReachTable::new(space, k);
    let mut snapshots = vec![table.layers.clone()];
    for &o in &offsets {
        table.push(o);
        snapshots.push(table.layers.clone());
    }
    let bit = |t: usize, c: usize, v: usize| snapshots[t][c][v / 64] >> (v % 64) & 1 == 1;
    if !bit(sorted.len(), k, target) {
        return Ok(None);
    }
    let (mut c, mut v) = (k, target);
    let mut out = Vec::with_capacity(k);
    for t in (1..=sorted.len()).rev() {
        if c == 0 {
            break;
        }
        if !bit(t - 1, c, v) {
            out.push(sorted[t - 1]);
            v = table.space.sub(v, offsets[t - 1]);
            c -= 1;
        }
    }
    debug_assert!(c == 0 && v == 0);
    out.reverse();
    Ok(Some(out))
}

/// Ordered tuples: starting from `init`, takes `steps` free choices from
/// the multiset of `offsets` (repeats allowed).
pub(crate) fn tuple_walk<C: Count>(space: &MomentSpace, init: Vec<C>, offsets: &[usize], steps: usize) -> Vec<C> {
    let trs: Vec<Translation> = offsets.iter().map(|&o| space.translation(o)).collect();
    let mut cur = init;
    for _ in 0..steps {
        let mut next = vec![C::zero(); space.size()];
        for tr in &trs {
            space.apply(tr, &cur, &mut next, |d, x| {
                if !x.is_zero() {
                    *d += x;
                }
            });
        }
        cur = next;
    }
    cur
}

/// `N_k > 0` by the reachability DP.
pub fn bool_dp_positive(ctx: &FieldCtx, d: &ImageSet, rt: &ReducedTarget, k: usize) -> Result<bool> {
    bool_dp_positive_with(ctx, d.elements(), rt, k, DpConfig::default())
}

pub fn bool_dp_positive_with(
    ctx: &FieldCtx,
    elements: &[FieldElement],
    rt: &ReducedTarget,
    k: usize,
    cfg: DpConfig,
) -> Result<bool> {
    if !rt.consistent {
        return Ok(false);
    }
    let space = MomentSpace::new(ctx, &rt.active_indices)?;
    let target = space.encode(&rt.b_active);
    Ok(reachable(ctx, elements, &rt.active_indices, k, &[target], cfg)?[0])
}

/// Exact `N_k` by enumerating `k`-subsets.
pub fn count_brute(ctx: &FieldCtx, d: &ImageSet, rt: &ReducedTarget, k: usize) -> Result<CountResult> {
    count_brute_with_cap(ctx, d.elements(), rt, k, DEFAULT_BRUTE_CAP)
}

pub fn count_brute_with_cap(
    ctx: &FieldCtx,
    elements: &[FieldElement],
    rt: &ReducedTarget,
    k: usize,
    cap: u128,
) -> Result<CountResult> {
    let unordered = |value| CountResult {
        value,
        kind: CountKind::Unordered,
    };
    let n = elements.len();
    if k > n {
        return Ok(unordered(BigUint::zero()));
    }
    let total = binomial(n as u64, k as u64);
    if total > BigUint::from(cap) {
        return Err(Error::BruteCapExceeded {
            needed: total.to_u128().unwrap_or(u128::MAX),
            cap,
        });
    }
    if !rt.consistent {
        return Ok(unordered(BigUint::zero()));
    }
    let exps = &rt.active_indices;
    let powers: Vec<Vec<FieldElement>> = elements
        .iter()
        .map(|&y| exps.iter().map(|&j| ctx.pow(y, j as u64)).collect())
        .collect();
    let mut sums = vec![FieldElement::ZERO; exps.len()];
    let mut count: u64 = 0;
    brute_rec(ctx, &powers, &rt.b_active, 0, k, &mut sums, &mut count);
    Ok(unordered(BigUint::from(count)))
}

fn brute_rec(
    ctx: &FieldCtx,
    powers: &[Vec<FieldElement>],
    target: &[FieldElement],
    start: usize,
    left: usize,
    sums: &mut Vec<FieldElement>,
    count: &mut u64,
) {
    if left == 0 {
        if sums == target {
            *count += 1;
        }
        return;
    }
    for i in start..=powers.len() - left {
        let saved = sums.clone();
        for (s, &pw) in sums.iter_mut().zip(&powers[i]) {
            *s = ctx.add(*s, pw);
        }
        brute_rec(ctx, powers, target, i + 1, left - 1, sums, count);
        *sums = saved;
    }
}

/// Counts of every subset of `D` (or every subset of size at most `K` and
/// at least `|D| - K`) by moment vector, for exponent prefixes `1..=m'` with
/// `m' <= m`. One enumeration serves all targets.
#[derive(Clone, Debug)]
pub struct SubsetTally {
    q: u64,
    m: u32,
    d: usize,
    /// `layers[m'-1][k]`, dense over `q^{m'}` states when `k` is covered
    layers: Vec<Vec<Option<Vec<u64>>>>,
}

impl SubsetTally {
    /// Enumerates all subsets when `2^|D| <= cap`, otherwise every size `k`
    /// with `C(|D|, k) <= cap` from both ends.
    pub fn build(ctx: &FieldCtx, elements: &[FieldElement], m: u32, cap: u128) -> Result<Self> {
        let q = ctx.q();
        let d = elements.len();
        let states = (q as u128).pow(m);
        if states > 1 << 24 {
            return Err(Error::StateSpaceTooLarge {
                needed: states * 8,
                cap: (1u128 << 24) * 8,
            });
        }
        let depth = if d < 127 && (1u128 << d) <= cap {
            d
        } else {
            let mut kk = 0;
            while kk < d / 2 && binomial(d as u64, kk as u64 + 1) <= BigUint::from(cap) {
                kk += 1;
            }
            kk
        };
        let mut covered = vec![false; d + 1];
        for c in 0..=depth {
            covered[c] = true;
            covered[d - c] = true;
        }
        let layers = (1..=m)
            .map(|mm| {
                let size = q.pow(mm) as usize;
                covered
                    .iter()
                    .map(|&cv| cv.then(|| vec![0u64; size]))
                    .collect()
            })
            .collect();
        let mut tally = SubsetTally { q, m, d, layers };
        let powers: Vec<Vec<FieldElement>> = elements
            .iter()
            .map(|&y| (1..=m).map(|j| ctx.pow(y, j as u64)).collect())
            .collect();
        let exps: Vec<u32> = (1..=m).collect();
        let totals = power_sums(ctx, elements, &exps);
        let complement = depth < d;
        let mut walker = Walker {
            ctx,
            powers: &powers,
            totals: &totals,
            depth,
            complement,
            tally: &mut tally,
        };
        let mut sums = vec![FieldElement::ZERO; m as usize];
        walker.visit(0, 0, &mut sums);
        Ok(tally)
    }

    pub fn max_m(&self) -> u32 {
        self.m
    }

    pub fn covers(&self, k: usize) -> bool {
        k <= self.d && self.layers[0][k].is_some()
    }

    /// `N_k` for the full (unreduced) target `b` with `b.len() <= m`.
    pub fn count(&self, k: usize, b: &[FieldElement]) -> Option<u64> {
        if k > self.d {
            return Some(0);
        }
        let mm = b.len();
        let layer = self.layers[mm - 1][k].as_ref()?;
        Some(layer[self.index(b)])
    }

    fn index(&self, b: &[FieldElement]) -> usize {
        b.iter()
            .rev()
            .fold(0u64, |acc, x| acc * self.q + x.encoding() as u64) as usize
    }

    fn record(&mut self, k: usize, sums: &[FieldElement]) {
        for mm in 1..=self.m as usize {
            let idx = self.index(&sums[..mm]);
            if let Some(layer) = self.layers[mm - 1][k].as_mut() {
                layer[idx] += 1;
            }
        }
    }
}

struct Walker<'a> {
    ctx: &'a FieldCtx,
    powers: &'a [Vec<FieldElement>],
    totals: &'a [FieldElement],
    depth: usize,
    complement: bool,
    tally: &'a mut SubsetTally,
}

impl Walker<'_> {
    fn visit(&mut self, start: usize, size: usize, sums: &mut Vec<FieldElement>) {
        self.tally.record(size, sums);
        let d = self.tally.d;
        if self.complement && d - size != size {
            let rest: Vec<FieldElement> = self
                .totals
                .iter()
                .zip(sums.iter())
                .map(|(&t, &s)| self.ctx.sub(t, s))
                .collect();
            self.tally.record(d - size, &rest);
        }
        if size == self.depth {
            return;
        }
        for i in start..self.powers.len() {
            let saved = sums.clone();
            for (s, &pw) in sums.iter_mut().zip(&self.powers[i]) {
                *s = self.ctx.add(*s, pw);
            }
            self.visit(i + 1, size + 1, sums);
            *sums = saved;
        }
    }
}
