//! Evaluation sets `D = g(F_q)` for monomials and Dickson polynomials, their
//! value-set sizes and fiber sizes.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldCtx, FieldElement};

/// Default cap on `q` for full enumeration of `F_q`.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvalSetDesc {
    Monomial { n: u64 },
    Dickson { n: u64, a: FieldElement },
    Explicit { elements: Vec<FieldElement> },
}

impl EvalSetDesc {
    /// Parses `monomial:n=<int>`, `dickson:n=<int>,a=<elem>` or
    /// `explicit:<elem>,<elem>,...`.
    pub fn parse(ctx: &FieldCtx, text: &str) -> Result<Self> {
        let colon = text
            .find(':')
            .ok_or_else(|| Error::parse(text, 0, "expected `<kind>:`"))?;
        let kind = &text[..colon];
        let body = &text[colon + 1..];
        let base = colon + 1;
        let desc = match kind {
            "monomial" => {
                let n = parse_kv_u64(text, body, base, "n")?;
                EvalSetDesc::Monomial { n }
            }
            "dickson" => {
                let comma = body
                    .find(',')
                    .ok_or_else(|| Error::parse(text, base, "expected `n=<int>,a=<elem>`"))?;
                let n = parse_kv_u64(text, &body[..comma], base, "n")?;
                let rest = &body[comma + 1..];
                let a_text = rest
                    .strip_prefix("a=")
                    .ok_or_else(|| Error::parse(text, base + comma + 1, "expected `a=`"))?;
                let a = ctx.parse_element(a_text).map_err(|e| match e {
                    Error::Parse { pos, msg, .. } => Error::parse(text, base + comma + 3 + pos, msg),
                    other => other,
                })?;
                EvalSetDesc::Dickson { n, a }
            }
            "explicit" => {
                let elements = ctx.parse_element_list(body).map_err(|e| match e {
                    Error::Parse { pos, msg, .. } => Error::parse(text, base + pos, msg),
                    other => other,
                })?;
                EvalSetDesc::Explicit { elements }
            }
            other => {
                return Err(Error::parse(
                    text,
                    0,
                    format!("unknown set kind {other:?}; expected monomial, dickson or explicit"),
                ))
            }
        };
        desc.validate(ctx)?;
        Ok(desc)
    }

    pub fn validate(&self, ctx: &FieldCtx) -> Result<()> {
        let q = ctx.q();
        match self {
            EvalSetDesc::Monomial { n } | EvalSetDesc::Dickson { n, .. } => {
                if *n < 1 || *n > q - 1 {
                    return Err(Error::InvalidDegree {
                        n: *n,
                        why: "degree must satisfy 1 <= n <= q-1",
                    });
                }
                if let EvalSetDesc::Dickson { a, .. } = self {
                    ctx.element(a.encoding() as u64)?;
                }
            }
            EvalSetDesc::Explicit { elements } => {
                let mut seen = vec![false; 0];
                for &x in elements {
                    ctx.element(x.encoding() as u64)?;
                    let i = x.encoding() as usize;
                    if i >= seen.len() {
                        seen.resize(i + 1, false);
                    }
                    if seen[i] {
                        return Err(Error::DuplicateElement(x.encoding()));
                    }
                    seen[i] = true;
                }
            }
        }
        Ok(())
    }

    /// Degree of the defining polynomial, `None` for explicit lists.
    pub fn degree(&self) -> Option<u64> {
        match self {
            EvalSetDesc::Monomial { n } | EvalSetDesc::Dickson { n, .. } => Some(*n),
            EvalSetDesc::Explicit { .. } => None,
        }
    }

    /// True for monomial and Dickson images, the sets the character-sum
    /// estimates cover.
    pub fn is_symbolic(&self) -> bool {
        !matches!(self, EvalSetDesc::Explicit { .. })
    }

    /// Evaluates the defining polynomial. Explicit sets have none.
    pub fn eval(&self, ctx: &FieldCtx, x: FieldElement) -> Option<FieldElement> {
        match self {
            EvalSetDesc::Monomial { n } => Some(ctx.pow(x, *n)),
            EvalSetDesc::Dickson { n, a } => Some(dickson_eval(ctx, *n, *a, x)),
            EvalSetDesc::Explicit { .. } => None,
        }
    }
}

impl fmt::Display for EvalSetDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalSetDesc::Monomial { n } => write!(f, "monomial:n={n}"),
            EvalSetDesc::Dickson { n, a } => write!(f, "dickson:n={n},a={a}"),
            EvalSetDesc::Explicit { elements } => {
                let e: Vec<String> = elements.iter().map(|x| x.to_string()).collect();
                write!(f, "explicit:{}", e.join(","))
            }
        }
    }
}

fn parse_kv_u64(full: &str, part: &str, base: usize, key: &str) -> Result<u64> {
    let v = part
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::parse(full, base, format!("expected `{key}=`")))?;
    v.trim()
        .parse()
        .map_err(|_| Error::parse(full, base + key.len() + 1, format!("bad integer {v:?}")))
}

/// A materialized evaluation set, sorted by encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageSet {
    elements: Vec<FieldElement>,
    source: EvalSetDesc,
}

impl ImageSet {
    pub fn elements(&self) -> &[FieldElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn source(&self) -> &EvalSetDesc {
        &self.source
    }

    pub fn contains(&self, x: FieldElement) -> bool {
        self.elements.binary_search(&x).is_ok()
    }

    pub fn index_of(&self, x: FieldElement) -> Option<usize> {
        self.elements.binary_search(&x).ok()
    }
}

/// `D_n(x, a)` by the three-term recurrence `D_j = x D_{j-1} - a D_{j-2}`
/// (seeds `D_0 = 2`, `D_1 = x`), advanced by doubling so the cost is
/// `O(log n)`:
/// `D_{2j} = D_j^2 - 2 a^j` and `D_{2j+1} = D_j D_{j+1} - x a^j`.
pub fn dickson_eval(ctx: &FieldCtx, n: u64, a: FieldElement, x: FieldElement) -> FieldElement {
    let two = ctx.from_int(2);
    if n == 0 {
        return two;
    }
    // (D_j, D_{j+1}, a^j), starting from j = 0
    let (mut dj, mut dj1, mut aj) = (two, x, FieldElement::ONE);
    for bit in (0..64 - n.leading_zeros()).rev() {
        let aj1 = ctx.mul(aj, a);
        let d2j = ctx.sub(ctx.mul(dj, dj), ctx.mul(two, aj));
        let d2j1 = ctx.sub(ctx.mul(dj, dj1), ctx.mul(x, aj));
        if (n >> bit) & 1 == 0 {
            dj = d2j;
            dj1 = d2j1;
            aj = ctx.mul(aj, aj);
        } else {
            let d2j2 = ctx.sub(ctx.mul(dj1, dj1), ctx.mul(two, aj1));
            dj = d2j1;
            dj1 = d2j2;
            aj = ctx.mul(aj1, aj);
        }
    }
    dj
}

/// `D_n(x, a)` stepping the recurrence one index at a time.
pub fn dickson_linear(ctx: &FieldCtx, n: u64, a: FieldElement, x: FieldElement) -> FieldElement {
    let two = ctx.from_int(2);
    if n == 0 {
        return two;
    }
    let (mut prev, mut cur) = (two, x);
    for _ in 1..n {
        let next = ctx.sub(ctx.mul(x, cur), ctx.mul(a, prev));
        prev = cur;
        cur = next;
    }
    cur
}

/// Coefficient `n/(n-i) * C(n-i, i)` of the closed form, over the integers.
fn dickson_coefficient(n: u64, i: u64) -> BigUint {
    let m = n - i;
    let mut binom = BigUint::from(1u32);
    for t in 0..i {
        binom = binom * BigUint::from(m - t) / BigUint::from(t + 1);
    }
    binom * BigUint::from(n) / BigUint::from(m)
}

/// `D_n(x, a) = sum_{i <= n/2} n/(n-i) C(n-i, i) (-a)^i x^{n-2i}`, with the
/// integer coefficients reduced mod p. Intended as an oracle for small `n`.
pub fn dickson_closed_form(ctx: &FieldCtx, n: u64, a: FieldElement, x: FieldElement) -> FieldElement {
    assert!(n >= 1, "closed form is degenerate at n = 0");
    let p = BigUint::from(ctx.p());
    let minus_a = ctx.neg(a);
    let mut acc = FieldElement::ZERO;
    for i in 0..=n / 2 {
        let c = (dickson_coefficient(n, i) % &p).to_u64().unwrap();
        if c == 0 {
            continue;
        }
        let term = ctx.mul(ctx.pow(minus_a, i), ctx.pow(x, n - 2 * i));
        acc = ctx.add(acc, ctx.mul(ctx.from_int(c as i64), term));
    }
    acc
}

/// Materializes `g(F_q)` by evaluating at every field element.
pub fn image_set(ctx: &FieldCtx, desc: &EvalSetDesc) -> Result<ImageSet> {
    image_set_with_cap(ctx, desc, DEFAULT_ENUMERATION_CAP)
}

pub fn image_set_with_cap(ctx: &FieldCtx, desc: &EvalSetDesc, cap: u64) -> Result<ImageSet> {
    desc.validate(ctx)?;
    if let EvalSetDesc::Explicit { elements } = desc {
        let mut elements = elements.clone();
        elements.sort_unstable();
        return Ok(ImageSet {
            elements,
            source: desc.clone(),
        });
    }
    let q = ctx.q();
    if q > cap {
        return Err(Error::EnumerationCap { q, cap });
    }
    let mut hit = vec![0u64; (q as usize).div_ceil(64)];
    for x in ctx.elements() {
        let y = desc.eval(ctx, x).expect("symbolic set").encoding() as usize;
        hit[y / 64] |= 1 << (y % 64);
    }
    let mut elements = Vec::new();
    for (w, &word) in hit.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            elements.push(FieldElement::from_encoding((w * 64 + b) as u32));
            bits &= bits - 1;
        }
    }
    Ok(ImageSet {
        elements,
        source: desc.clone(),
    })
}

/// How a value-set size was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeMethod {
    Formula,
    Enumerated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueSetSize {
    pub size: u64,
    pub method: SizeMethod,
}

fn two_adic_valuation(mut n: u64) -> u32 {
    if n == 0 {
        return 0;
    }
    let mut t = 0;
    while n % 2 == 0 {
        n /= 2;
        t += 1;
    }
    t
}

/// Strips factors of `p` from `n`, using `D_{p n_1} = D_{n_1}^p`.
fn strip_characteristic(n: u64, p: u32) -> u64 {
    let mut n = n;
    while n % p as u64 == 0 && n > 0 {
        n /= p as u64;
    }
    n
}

/// `|g(F_q)|` by closed formula. Monomials: `1 + (q-1)/gcd(n, q-1)`. Dickson
/// with `a != 0` and odd `q`:
/// `(q-1)/(2 gcd(n,q-1)) + (q+1)/(2 gcd(n,q+1)) + delta`.
pub fn value_set_size_formula(ctx: &FieldCtx, desc: &EvalSetDesc) -> Result<u64> {
    desc.validate(ctx)?;
    let q = ctx.q();
    match desc {
        EvalSetDesc::Monomial { n } => Ok(1 + (q - 1) / n.gcd(&(q - 1))),
        EvalSetDesc::Dickson { n, a } if a.is_zero() => Ok(1 + (q - 1) / n.gcd(&(q - 1))),
        EvalSetDesc::Dickson { n, a } => {
            if ctx.p() == 2 {
                return Err(Error::FormulaUnavailable(
                    "Dickson value-set formula is stated for odd q only",
                ));
            }
            let n1 = strip_characteristic(*n, ctx.p());
            let g1 = n1.gcd(&(q - 1));
            let g2 = n1.gcd(&(q + 1));
            let r = two_adic_valuation(q * q - 1);
            let t = two_adic_valuation(n1);
            let eta_a = ctx.quadratic_character(*a)?;
            let twice_delta = if t == r - 1 && eta_a == -1 {
                2
            } else if t >= 1 && t + 2 <= r {
                1
            } else {
                0
            };
            let twice = (q - 1) / g1 + (q + 1) / g2 + twice_delta;
            if twice % 2 != 0 {
                return Err(Error::Hypothesis(format!(
                    "value-set formula gave the non-integer {twice}/2"
                )));
            }
            Ok(twice / 2)
        }
        EvalSetDesc::Explicit { elements } => Ok(elements.len() as u64),
    }
}

/// Formula where available, enumeration otherwise.
pub fn value_set_size(ctx: &FieldCtx, desc: &EvalSetDesc) -> Result<ValueSetSize> {
    match value_set_size_formula(ctx, desc) {
        Ok(size) if desc.is_symbolic() => Ok(ValueSetSize {
            size,
            method: SizeMethod::Formula,
        }),
        Ok(_) | Err(Error::FormulaUnavailable(_)) => Ok(ValueSetSize {
            size: image_set(ctx, desc)?.len() as u64,
            method: SizeMethod::Enumerated,
        }),
        Err(e) => Err(e),
    }
}

/// Which case of the fiber-size theorem applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiberCase {
    /// even q, `z^2 + x0 z + a` reducible, `D_n(x0,a) != 0`
    EvenReducible,
    /// even q, `z^2 + x0 z + a` irreducible, `D_n(x0,a) != 0`
    EvenIrreducible,
    /// even q, `D_n(x0,a) = 0`
    EvenZeroValue,
    OddSquare,
    OddNonSquare,
    OddSquareConditionC,
    OddNonSquareConditionC,
    OddOtherwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FiberSize {
    pub size: Ratio<u64>,
    pub case: FiberCase,
}

/// `|D_n^{-1}(D_n(x0, a))|` by the case analysis on the discriminant of
/// `z^2 + x0 z + a` (characteristic 2: its reducibility; odd: `eta(x0^2 - 4a)`).
///
/// For `x0 = 0` in characteristic 2, `z^2 + a` is the square of
/// `z + sqrt(a)` and is treated as reducible.
pub fn preimage_count(ctx: &FieldCtx, n: u64, a: FieldElement, x0: FieldElement) -> Result<FiberSize> {
    if n < 2 {
        return Err(Error::InvalidDegree {
            n,
            why: "fiber formula needs n >= 2",
        });
    }
    if a.is_zero() {
        return Err(Error::Hypothesis("fiber formula needs a != 0".into()));
    }
    let q = ctx.q();
    let n1 = strip_characteristic(n, ctx.p());
    let g1 = n1.gcd(&(q - 1));
    let g2 = n1.gcd(&(q + 1));
    let value = dickson_eval(ctx, n1, a, x0);
    let half = |num: u64| Ratio::new(num, 2);
    if ctx.p() == 2 {
        if value.is_zero() {
            return Ok(FiberSize {
                size: half(g1 + g2),
                case: FiberCase::EvenZeroValue,
            });
        }
        let reducible = if x0.is_zero() {
            true
        } else {
            // z^2 + x0 z + a reducible iff Tr(a / x0^2) = 0
            let t = ctx.div(a, ctx.mul(x0, x0))?;
            ctx.trace(t) == 0
        };
        return Ok(if reducible {
            FiberSize {
                size: Ratio::from_integer(g1),
                case: FiberCase::EvenReducible,
            }
        } else {
            FiberSize {
                size: Ratio::from_integer(g2),
                case: FiberCase::EvenIrreducible,
            }
        });
    }

    let four_a = ctx.mul(ctx.from_int(4), a);
    let disc = ctx.sub(ctx.mul(x0, x0), four_a);
    let eta_disc = ctx.quadratic_character(disc)?;
    // ±2 a^{n/2} are the square roots of 4 a^n
    let four_an = ctx.mul(ctx.from_int(4), ctx.pow(a, n1));
    let at_special = ctx.mul(value, value) == four_an;
    let r = two_adic_valuation(q * q - 1);
    let t = two_adic_valuation(n1);
    let eta_a = ctx.quadratic_character(a)?;
    let condition_c = {
        let first = t >= 1 && t < r && eta_a == -1 && at_special;
        let second = t >= 1
            && t + 2 <= r
            && eta_a == 1
            && n1 % 2 == 0
            && value == ctx.neg(ctx.mul(ctx.from_int(2), ctx.pow(a, n1 / 2)));
        first || second
    };
    let out = match (eta_disc, at_special, condition_c) {
        (1, false, _) => FiberSize {
            size: Ratio::from_integer(g1),
            case: FiberCase::OddSquare,
        },
        (-1, false, _) => FiberSize {
            size: Ratio::from_integer(g2),
            case: FiberCase::OddNonSquare,
        },
        (1, true, true) => FiberSize {
            size: half(g1),
            case: FiberCase::OddSquareConditionC,
        },
        (-1, true, true) => FiberSize {
            size: half(g2),
            case: FiberCase::OddNonSquareConditionC,
        },
        _ => FiberSize {
            size: half(g1 + g2),
            case: FiberCase::OddOtherwise,
        },
    };
    Ok(out)
}

/// Fiber size by enumeration: `#{x : D_n(x,a) = D_n(x0,a)}`.
pub fn fiber_size_enumerated(ctx: &FieldCtx, n: u64, a: FieldElement, x0: FieldElement) -> u64 {
    let v = dickson_eval(ctx, n, a, x0);
    ctx.elements().filter(|&x| dickson_eval(ctx, n, a, x) == v).count() as u64
}

/// Multiplicity of every value of `D_n(., a)`, indexed by encoding.
pub fn fiber_table(ctx: &FieldCtx, desc: &EvalSetDesc) -> Result<Vec<u32>> {
    let q = ctx.q();
    if q > DEFAULT_ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            q,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let mut counts = vec![0u32; q as usize];
    for x in ctx.elements() {
        let y = desc
            .eval(ctx, x)
            .ok_or_else(|| Error::InvalidArgument("explicit sets have no fibers".into()))?;
        counts[y.encoding() as usize] += 1;
    }
    Ok(counts)
}

/// Sum of the fiber sizes of distinct values; equals `q` for any map.
pub fn total_fiber_mass(counts: &[u32]) -> u64 {
    counts.iter().map(|&c| c as u64).sum()
}
