//! Arithmetic in GF(p^s).
//!
//! Elements are stored by their canonical integer encoding
//! `e = c_0 + c_1 p + ... + c_{s-1} p^{s-1}`, where `c_i` are the coefficients
//! of the residue-class representative modulo the field's defining polynomial.
//! All input and output of field elements goes through this encoding.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest field order accepted by [`FieldCtx::new`].
pub const MAX_ORDER: u64 = 1 << 32;

/// Fields up to this order get discrete log / antilog tables.
const TABLE_LIMIT: u64 = 1 << 22;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u32);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    /// Wraps an encoding without range checking; use [`FieldCtx::element`]
    /// for untrusted input.
    #[inline]
    pub const fn from_encoding(e: u32) -> Self {
        FieldElement(e)
    }

    #[inline]
    pub const fn encoding(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug)]
struct LogTables {
    /// `log[x]` for nonzero `x`; `log[0]` is unused.
    log: Vec<u32>,
    /// `exp[i] = g^i` for `0 <= i < 2(q-1)`.
    exp: Vec<u32>,
}

/// A concrete finite field GF(p^s) with a fixed defining polynomial.
///
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct FieldCtx {
    p: u32,
    s: u32,
    q: u64,
    /// Monic defining polynomial, `s + 1` coefficients from low to high degree.
    modulus: Vec<u32>,
    /// `p^i` for `0 <= i <= s`.
    radix: Vec<u64>,
    /// `Tr(x^i)` for `0 <= i < s`, where `x` is the class of the indeterminate.
    trace_of_basis: Vec<u32>,
    tables: Option<LogTables>,
}

impl PartialEq for FieldCtx {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.s == other.s && self.modulus == other.modulus
    }
}

impl Eq for FieldCtx {}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Distinct prime factors of `n`, ascending.
pub fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Returns `(p, s)` when `q = p^s` for a prime `p`.
pub fn prime_power(q: u64) -> Option<(u32, u32)> {
    let factors = prime_factors(q);
    if factors.len() != 1 {
        return None;
    }
    let p = factors[0];
    let mut s = 0;
    let mut r = q;
    while r > 1 {
        r /= p;
        s += 1;
    }
    Some((p as u32, s))
}

impl FieldCtx {
    /// Builds GF(p^s). With `modulus = None` the lexicographically smallest
    /// monic irreducible polynomial (by integer encoding of its lower
    /// coefficients) is selected.
    pub fn new(p: u32, s: u32, modulus: Option<Vec<u32>>) -> Result<Self> {
        if !is_prime(p as u64) {
            return Err(Error::NotPrime(p as u64));
        }
        if s == 0 {
            return Err(Error::ZeroDegree);
        }
        let q = (p as u128).pow(s);
        if q > MAX_ORDER as u128 {
            return Err(Error::FieldTooLarge(q));
        }
        let q = q as u64;
        let modulus = match modulus {
            Some(m) => {
                if m.len() != s as usize + 1 {
                    return Err(Error::ModulusDegree {
                        expected: s,
                        got: m.len().saturating_sub(1),
                    });
                }
                if let Some(&c) = m.iter().find(|&&c| c >= p) {
                    return Err(Error::ModulusCoefficient { coeff: c as u64, p });
                }
                if m[s as usize] != 1 {
                    return Err(Error::ModulusNotMonic);
                }
                if !poly::is_irreducible(&m, p) {
                    return Err(Error::ReducibleModulus { p });
                }
                m
            }
            None => smallest_irreducible(p, s),
        };
        let radix = (0..=s).map(|i| (p as u64).pow(i)).collect();
        let mut ctx = FieldCtx {
            p,
            s,
            q,
            modulus,
            radix,
            trace_of_basis: Vec::new(),
            tables: None,
        };
        ctx.trace_of_basis = (0..s)
            .map(|i| {
                let xi = FieldElement(ctx.radix[i as usize] as u32);
                ctx.trace_slow(xi)
            })
            .collect();
        if s > 1 && q <= TABLE_LIMIT {
            ctx.tables = Some(ctx.build_tables());
        }
        Ok(ctx)
    }

    /// Parses `"p^s"`, a bare prime power `"q"`, optionally followed by
    /// `":modulus=c0,c1,...,cs"` (low to high, monic).
    pub fn parse(desc: &str) -> Result<Self> {
        let (head, modulus) = match desc.find(':') {
            Some(i) => {
                let rest = &desc[i + 1..];
                let body = rest.strip_prefix("modulus=").ok_or_else(|| {
                    Error::parse(desc, i + 1, "expected `modulus=` after `:`")
                })?;
                let offset = i + 1 + "modulus=".len();
                let mut coeffs = Vec::new();
                let mut pos = offset;
                for tok in body.split(',') {
                    let c: u32 = tok
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(desc, pos, format!("bad coefficient {tok:?}")))?;
                    coeffs.push(c);
                    pos += tok.len() + 1;
                }
                (&desc[..i], Some(coeffs))
            }
            None => (desc, None),
        };
        let (p, s) = match head.find('^') {
            Some(i) => {
                let p: u64 = head[..i]
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(desc, 0, "bad characteristic"))?;
                let s: u32 = head[i + 1..]
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(desc, i + 1, "bad extension degree"))?;
                if !is_prime(p) || p > u32::MAX as u64 {
                    return Err(Error::NotPrime(p));
                }
                (p as u32, s)
            }
            None => {
                let q: u64 = head
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(desc, 0, "expected `p^s` or a prime power"))?;
                prime_power(q).ok_or_else(|| Error::parse(desc, 0, format!("{q} is not a prime power")))?
            }
        };
        FieldCtx::new(p, s, modulus)
    }

    /// Canonical descriptor, always including the modulus.
    pub fn descriptor(&self) -> String {
        let m: Vec<String> = self.modulus.iter().map(|c| c.to_string()).collect();
        format!("{}^{}:modulus={}", self.p, self.s, m.join(","))
    }

    #[inline]
    pub fn p(&self) -> u32 {
        self.p
    }

    #[inline]
    pub fn s(&self) -> u32 {
        self.s
    }

    #[inline]
    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn modulus(&self) -> &[u32] {
        &self.modulus
    }

    /// Checked construction from an integer encoding.
    pub fn element(&self, e: u64) -> Result<FieldElement> {
        if e >= self.q {
            return Err(Error::ElementOutOfRange { value: e, q: self.q });
        }
        Ok(FieldElement(e as u32))
    }

    /// Image of an integer in the prime field.
    pub fn from_int(&self, n: i64) -> FieldElement {
        FieldElement(n.rem_euclid(self.p as i64) as u32)
    }

    pub fn from_coeffs(&self, coeffs: &[u32]) -> Result<FieldElement> {
        if coeffs.len() > self.s as usize {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients given for a degree-{} extension",
                coeffs.len(),
                self.s
            )));
        }
        let mut e = 0u64;
        for (i, &c) in coeffs.iter().enumerate() {
            if c >= self.p {
                return Err(Error::ElementOutOfRange {
                    value: c as u64,
                    q: self.p as u64,
                });
            }
            e += c as u64 * self.radix[i];
        }
        Ok(FieldElement(e as u32))
    }

    /// Parses an element: either its integer encoding or `poly:(c0,c1,...)`
    /// (coefficients low to high; parentheses optional for one coefficient).
    pub fn parse_element(&self, tok: &str) -> Result<FieldElement> {
        let t = tok.trim();
        if let Some(body) = t.strip_prefix("poly:") {
            let inner = body
                .strip_prefix('(')
                .and_then(|b| b.strip_suffix(')'))
                .unwrap_or(body);
            let mut coeffs = Vec::new();
            for c in inner.split(',') {
                let v: u32 = c
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(tok, 0, format!("bad coefficient {c:?}")))?;
                coeffs.push(v);
            }
            return self.from_coeffs(&coeffs);
        }
        let e: u64 = t
            .parse()
            .map_err(|_| Error::parse(tok, 0, "expected an integer encoding or poly:(...)"))?;
        self.element(e)
    }

    /// Parses a comma-separated element list; commas inside `poly:(...)` do
    /// not split. An empty string yields an empty list.
    pub fn parse_element_list(&self, list: &str) -> Result<Vec<FieldElement>> {
        let mut out = Vec::new();
        if list.trim().is_empty() {
            return Ok(out);
        }
        let mut depth = 0usize;
        let mut start = 0usize;
        for (i, ch) in list.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                ',' if depth == 0 => {
                    out.push(self.parse_element(&list[start..i]).map_err(|e| shift(e, list, start))?);
                    start = i + 1;
                }
                _ => {}
            }
        }
        out.push(self.parse_element(&list[start..]).map_err(|e| shift(e, list, start))?);
        Ok(out)
    }

    pub fn coeffs(&self, x: FieldElement) -> Vec<u32> {
        let mut out = vec![0u32; self.s as usize];
        self.digits_into(x, &mut out);
        out
    }

    #[inline]
    fn digits_into(&self, x: FieldElement, out: &mut [u32]) {
        let mut e = x.0 as u64;
        let p = self.p as u64;
        for d in out.iter_mut() {
            *d = (e % p) as u32;
            e /= p;
        }
    }

    /// Iterates all `q` elements in encoding order.
    pub fn elements(&self) -> impl Iterator<Item = FieldElement> + '_ {
        (0..self.q).map(|e| FieldElement(e as u32))
    }

    #[inline]
    pub fn add(&self, x: FieldElement, y: FieldElement) -> FieldElement {
        if self.s == 1 {
            let r = x.0 as u64 + y.0 as u64;
            let p = self.p as u64;
            return FieldElement(if r >= p { r - p } else { r } as u32);
        }
        if self.p == 2 {
            return FieldElement(x.0 ^ y.0);
        }
        let p = self.p as u64;
        let (mut a, mut b) = (x.0 as u64, y.0 as u64);
        let mut out = 0u64;
        for i in 0..self.s as usize {
            let d = (a % p + b % p) % p;
            out += d * self.radix[i];
            a /= p;
            b /= p;
        }
        FieldElement(out as u32)
    }

    #[inline]
    pub fn neg(&self, x: FieldElement) -> FieldElement {
        if self.s == 1 {
            return FieldElement(if x.0 == 0 { 0 } else { self.p - x.0 });
        }
        if self.p == 2 {
            return x;
        }
        let p = self.p as u64;
        let mut a = x.0 as u64;
        let mut out = 0u64;
        for i in 0..self.s as usize {
            let d = a % p;
            if d != 0 {
                out += (p - d) * self.radix[i];
            }
            a /= p;
        }
        FieldElement(out as u32)
    }

    #[inline]
    pub fn sub(&self, x: FieldElement, y: FieldElement) -> FieldElement {
        self.add(x, self.neg(y))
    }

    #[inline]
    pub fn mul(&self, x: FieldElement, y: FieldElement) -> FieldElement {
        if x.0 == 0 || y.0 == 0 {
            return FieldElement::ZERO;
        }
        if self.s == 1 {
            return FieldElement(((x.0 as u64 * y.0 as u64) % self.p as u64) as u32);
        }
        if let Some(t) = &self.tables {
            let i = t.log[x.0 as usize] as usize + t.log[y.0 as usize] as usize;
            return FieldElement(t.exp[i]);
        }
        self.mul_slow(x, y)
    }

    /// Multiplication by schoolbook polynomial product and reduction.
    fn mul_slow(&self, x: FieldElement, y: FieldElement) -> FieldElement {
        if self.s == 1 {
            return FieldElement(((x.0 as u64 * y.0 as u64) % self.p as u64) as u32);
        }
        let s = self.s as usize;
        let p = self.p as u64;
        let mut a = [0u32; 32];
        let mut b = [0u32; 32];
        self.digits_into(x, &mut a[..s]);
        self.digits_into(y, &mut b[..s]);
        let mut prod = [0u64; 64];
        for i in 0..s {
            if a[i] == 0 {
                continue;
            }
            for j in 0..s {
                prod[i + j] = (prod[i + j] + a[i] as u64 * b[j] as u64) % p;
            }
        }
        for d in (s..2 * s - 1).rev() {
            let c = prod[d];
            if c == 0 {
                continue;
            }
            // subtract c * x^(d-s) * modulus
            for i in 0..s {
                let t = c * self.modulus[i] as u64 % p;
                prod[d - s + i] = (prod[d - s + i] + p - t) % p;
            }
            prod[d] = 0;
        }
        let mut e = 0u64;
        for i in 0..s {
            e += prod[i] * self.radix[i];
        }
        FieldElement(e as u32)
    }

    fn pow_slow(&self, mut x: FieldElement, mut e: u64) -> FieldElement {
        let mut r = FieldElement::ONE;
        while e > 0 {
            if e & 1 == 1 {
                r = self.mul_slow(r, x);
            }
            x = self.mul_slow(x, x);
            e >>= 1;
        }
        r
    }

    pub fn pow(&self, x: FieldElement, e: u64) -> FieldElement {
        if e == 0 {
            return FieldElement::ONE;
        }
        if x.0 == 0 {
            return FieldElement::ZERO;
        }
        if let Some(t) = &self.tables {
            let ord = self.q - 1;
            let i = (t.log[x.0 as usize] as u128 * (e % ord) as u128 % ord as u128) as usize;
            return FieldElement(t.exp[i]);
        }
        let mut base = x;
        let mut e = e % (self.q - 1);
        if e == 0 {
            return FieldElement::ONE;
        }
        let mut r = FieldElement::ONE;
        while e > 0 {
            if e & 1 == 1 {
                r = self.mul(r, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        r
    }

    pub fn inv(&self, x: FieldElement) -> Result<FieldElement> {
        if x.0 == 0 {
            return Err(Error::InverseOfZero);
        }
        if let Some(t) = &self.tables {
            let l = t.log[x.0 as usize] as u64;
            let ord = self.q - 1;
            return Ok(FieldElement(t.exp[((ord - l) % ord) as usize]));
        }
        Ok(self.pow(x, self.q - 2))
    }

    pub fn div(&self, x: FieldElement, y: FieldElement) -> Result<FieldElement> {
        Ok(self.mul(x, self.inv(y)?))
    }

    /// Absolute trace to the prime field, returned as a residue in `[0, p)`.
    pub fn trace(&self, x: FieldElement) -> u32 {
        if self.s == 1 {
            return x.0;
        }
        let p = self.p as u64;
        let mut e = x.0 as u64;
        let mut acc = 0u64;
        for &t in &self.trace_of_basis {
            acc += (e % p) * t as u64;
            e /= p;
        }
        (acc % p) as u32
    }

    /// `x + x^p + ... + x^{p^{s-1}}` computed directly; used at construction
    /// and as a cross-check for [`FieldCtx::trace`].
    pub fn trace_slow(&self, x: FieldElement) -> u32 {
        let mut acc = FieldElement::ZERO;
        let mut y = x;
        for _ in 0..self.s {
            acc = self.add(acc, y);
            y = self.pow_slow(y, self.p as u64);
        }
        debug_assert!((acc.0 as u64) < self.p as u64);
        acc.0
    }

    /// Quadratic character: 0 at 0, +1 on nonzero squares, -1 otherwise.
    pub fn quadratic_character(&self, x: FieldElement) -> Result<i8> {
        if self.p == 2 {
            return Err(Error::EvenCharacteristic);
        }
        if x.0 == 0 {
            return Ok(0);
        }
        if let Some(t) = &self.tables {
            return Ok(if t.log[x.0 as usize] % 2 == 0 { 1 } else { -1 });
        }
        let r = self.pow(x, (self.q - 1) / 2);
        Ok(if r == FieldElement::ONE { 1 } else { -1 })
    }

    /// Frobenius `x -> x^p`.
    pub fn frobenius(&self, x: FieldElement) -> FieldElement {
        self.pow(x, self.p as u64)
    }

    /// Some square root of `x` if one exists.
    pub fn sqrt(&self, x: FieldElement) -> Option<FieldElement> {
        if x.0 == 0 {
            return Some(x);
        }
        if self.p == 2 {
            // squaring is a bijection; x^(q/2) squares to x^q = x
            return Some(self.pow(x, self.q / 2));
        }
        if self.quadratic_character(x).ok()? != 1 {
            return None;
        }
        if let Some(t) = &self.tables {
            let l = t.log[x.0 as usize] / 2;
            return Some(FieldElement(t.exp[l as usize]));
        }
        // Tonelli-Shanks over GF(q).
        let mut qm1 = self.q - 1;
        let mut e = 0;
        while qm1 % 2 == 0 {
            qm1 /= 2;
            e += 1;
        }
        let z = self
            .elements()
            .skip(1)
            .find(|&z| self.quadratic_character(z) == Ok(-1))?;
        let mut m = e;
        let mut c = self.pow(z, qm1);
        let mut t = self.pow(x, qm1);
        let mut r = self.pow(x, qm1.div_ceil(2));
        while t != FieldElement::ONE {
            let mut i = 0;
            let mut tt = t;
            while tt != FieldElement::ONE {
                tt = self.mul(tt, tt);
                i += 1;
            }
            let b = self.pow(c, 1u64 << (m - i - 1));
            m = i;
            c = self.mul(b, b);
            t = self.mul(t, c);
            r = self.mul(r, b);
        }
        Some(r)
    }

    fn build_tables(&self) -> LogTables {
        let order = self.q - 1;
        let factors = prime_factors(order);
        let g = (1..self.q)
            .map(|e| FieldElement(e as u32))
            .find(|&g| {
                factors
                    .iter()
                    .all(|&r| self.pow_slow(g, order / r) != FieldElement::ONE)
            })
            .expect("multiplicative group is cyclic");
        let n = order as usize;
        let mut exp = vec![0u32; 2 * n];
        let mut log = vec![0u32; self.q as usize];
        let mut cur = FieldElement::ONE;
        for i in 0..n {
            exp[i] = cur.0;
            exp[i + n] = cur.0;
            log[cur.0 as usize] = i as u32;
            cur = self.mul_slow(cur, g);
        }
        LogTables { log, exp }
    }
}

/// Re-anchors a token-level parse error to its position in the full list.
fn shift(e: Error, list: &str, start: usize) -> Error {
    match e {
        Error::Parse { pos, msg, .. } => Error::parse(list, start + pos, msg),
        other => other,
    }
}

/// Scans monic degree-`s` polynomials by the encoding of their lower
/// coefficients and returns the first irreducible one.
fn smallest_irreducible(p: u32, s: u32) -> Vec<u32> {
    let count = (p as u64).pow(s);
    for e in 0..count {
        let mut coeffs = Vec::with_capacity(s as usize + 1);
        let mut r = e;
        for _ in 0..s {
            coeffs.push((r % p as u64) as u32);
            r /= p as u64;
        }
        coeffs.push(1);
        if poly::is_irreducible(&coeffs, p) {
            return coeffs;
        }
    }
    unreachable!("irreducible polynomials of every degree exist over F_p")
}

/// Dense polynomials over F_p with coefficients low to high, used only for
/// the irreducibility test.
mod poly {
    use super::prime_factors;

    fn trim(a: &mut Vec<u64>) {
        while a.last() == Some(&0) {
            a.pop();
        }
    }

    fn inv_mod(a: u64, p: u64) -> u64 {
        let mut r = 1u64;
        let mut b = a % p;
        let mut e = p - 2;
        while e > 0 {
            if e & 1 == 1 {
                r = r * b % p;
            }
            b = b * b % p;
            e >>= 1;
        }
        r
    }

    fn rem(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
        let mut r = a.to_vec();
        trim(&mut r);
        let dm = m.len() - 1;
        let lead_inv = inv_mod(m[dm], p);
        while r.len() > dm {
            let d = r.len() - 1;
            let c = r[d] * lead_inv % p;
            for i in 0..=dm {
                let t = c * m[i] % p;
                r[d - dm + i] = (r[d - dm + i] + p - t) % p;
            }
            trim(&mut r);
        }
        r
    }

    fn mulmod(a: &[u64], b: &[u64], m: &[u64], p: u64) -> Vec<u64> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![0u64; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] = (out[i + j] + x * y) % p;
            }
        }
        rem(&out, m, p)
    }

    fn powmod(base: &[u64], mut e: u64, m: &[u64], p: u64) -> Vec<u64> {
        let mut r = vec![1u64];
        let mut b = rem(base, m, p);
        while e > 0 {
            if e & 1 == 1 {
                r = mulmod(&r, &b, m, p);
            }
            b = mulmod(&b, &b, m, p);
            e >>= 1;
        }
        r
    }

    fn gcd(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        trim(&mut a);
        trim(&mut b);
        while !b.is_empty() {
            let r = rem(&a, &b, p);
            a = b;
            b = r;
        }
        a
    }

    /// `x^{p^k} mod m`.
    fn frobenius_power(k: u32, m: &[u64], p: u64) -> Vec<u64> {
        let mut h = rem(&[0, 1], m, p);
        for _ in 0..k {
            h = powmod(&h, p, m, p);
        }
        h
    }

    fn minus_x(mut h: Vec<u64>, p: u64) -> Vec<u64> {
        if h.len() < 2 {
            h.resize(2, 0);
        }
        h[1] = (h[1] + p - 1) % p;
        trim(&mut h);
        h
    }

    /// Rabin's test: `f` of degree `s` is irreducible iff `x^{p^s} = x mod f`
    /// and `gcd(x^{p^{s/r}} - x, f) = 1` for every prime `r | s`.
    pub(super) fn is_irreducible(f: &[u32], p: u32) -> bool {
        let p = p as u64;
        let f: Vec<u64> = f.iter().map(|&c| c as u64).collect();
        let s = f.len() as u32 - 1;
        if s == 1 {
            return true;
        }
        if !minus_x(frobenius_power(s, &f, p), p).is_empty() {
            return false;
        }
        for r in prime_factors(s as u64) {
            let h = minus_x(frobenius_power(s / r as u32, &f, p), p);
            let g = gcd(&f, &h, p);
            if g.len() > 1 {
                return false;
            }
        }
        true
    }
}
