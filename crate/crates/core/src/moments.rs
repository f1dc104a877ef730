//! Flat indexing of moment vectors `(sum y^j)_{j in J}` in `F_q^{|J|}`.
//!
//! A vector `(v_0, .., v_{r-1})` maps to `sum_i enc(v_i) q^i`. Because `enc`
//! is itself a base-`p` number, the index is a base-`p` number with `s r`
//! digits, and adding two moment vectors is digitwise addition mod `p`. That
//! turns "add element `y`" into a fixed permutation of the index range,
//! applied here through a low/high digit split so each permutation is two
//! small lookup tables.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FieldCtx, FieldElement};

/// Index spaces beyond this many states are refused outright.
pub const MAX_STATES: u64 = 1 << 36;

#[derive(Clone, Debug)]
pub struct MomentSpace {
    p: u32,
    q: u64,
    exponents: Vec<u32>,
    size: usize,
    lo_size: usize,
    hi_size: usize,
}

/// The permutation `x -> x + o` of a [`MomentSpace`] for a fixed offset `o`.
#[derive(Clone, Debug)]
pub struct Translation {
    lo_map: Vec<u32>,
    hi_map: Vec<u32>,
    /// inverse of `hi_map`
    hi_src: Vec<u32>,
}

impl MomentSpace {
    pub fn new(ctx: &FieldCtx, exponents: &[u32]) -> Result<Self> {
        let q = ctx.q();
        let mut size: u64 = 1;
        for _ in exponents {
            size = size.checked_mul(q).filter(|&s| s <= MAX_STATES).ok_or(
                Error::StateSpaceTooLarge {
                    needed: (q as u128).pow(exponents.len() as u32) / 8,
                    cap: (MAX_STATES / 8) as u128,
                },
            )?;
        }
        let digits = ctx.s() * exponents.len() as u32;
        let lo_size = (ctx.p() as u64).pow(digits / 2) as usize;
        Ok(MomentSpace {
            p: ctx.p(),
            q,
            exponents: exponents.to_vec(),
            size: size as usize,
            lo_size,
            hi_size: size as usize / lo_size,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    /// Index of an explicit moment vector, one entry per exponent.
    pub fn encode(&self, v: &[FieldElement]) -> usize {
        debug_assert_eq!(v.len(), self.exponents.len());
        let mut idx = 0u64;
        for x in v.iter().rev() {
            idx = idx * self.q + x.encoding() as u64;
        }
        idx as usize
    }

    pub fn decode(&self, mut idx: usize) -> Vec<FieldElement> {
        let mut out = Vec::with_capacity(self.exponents.len());
        for _ in &self.exponents {
            out.push(FieldElement::from_encoding((idx as u64 % self.q) as u32));
            idx = (idx as u64 / self.q) as usize;
        }
        out
    }

    /// Index of `(y^j)_{j in J}`.
    pub fn offset(&self, ctx: &FieldCtx, y: FieldElement) -> usize {
        let v: Vec<FieldElement> = self.exponents.iter().map(|&j| ctx.pow(y, j as u64)).collect();
        self.encode(&v)
    }

    /// Digitwise sum of two indices.
    pub fn add(&self, a: usize, b: usize) -> usize {
        if self.p == 2 {
            return a ^ b;
        }
        add_digits(a, b, self.p as usize)
    }

    /// Digitwise difference `a - b`.
    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.add(a, self.negate(b))
    }

    pub fn negate(&self, a: usize) -> usize {
        if self.p == 2 {
            return a;
        }
        let p = self.p as usize;
        let (mut a, mut out, mut place) = (a, 0usize, 1usize);
        while a > 0 {
            let d = a % p;
            if d != 0 {
                out += (p - d) * place;
            }
            a /= p;
            place *= p;
        }
        out
    }

    pub fn translation(&self, offset: usize) -> Translation {
        let lo_off = offset % self.lo_size;
        let hi_off = offset / self.lo_size;
        let lo_map: Vec<u32> = (0..self.lo_size).map(|x| self.add(x, lo_off) as u32).collect();
        let hi_map: Vec<u32> = (0..self.hi_size).map(|x| self.add(x, hi_off) as u32).collect();
        let mut hi_src = vec![0u32; self.hi_size];
        for (h, &d) in hi_map.iter().enumerate() {
            hi_src[d as usize] = h as u32;
        }
        Translation {
            lo_map,
            hi_map,
            hi_src,
        }
    }

    /// `dst[x + o] op= src[x]` for all `x`, where `tr` is the translation by `o`.
    pub fn apply<T, F>(&self, tr: &Translation, src: &[T], dst: &mut [T], op: F)
    where
        F: Fn(&mut T, &T),
    {
        let l = self.lo_size;
        for (h, &dh) in tr.hi_map.iter().enumerate() {
            let s = &src[h * l..(h + 1) * l];
            let d = &mut dst[dh as usize * l..(dh as usize + 1) * l];
            for (lo, x) in s.iter().enumerate() {
                op(&mut d[tr.lo_map[lo] as usize], x);
            }
        }
    }

    /// Same as [`apply`](Self::apply), split over destination blocks.
    pub fn apply_par<T, F>(&self, tr: &Translation, src: &[T], dst: &mut [T], op: F)
    where
        T: Send + Sync,
        F: Fn(&mut T, &T) + Send + Sync,
    {
        let l = self.lo_size;
        dst.par_chunks_mut(l).enumerate().for_each(|(dh, d)| {
            let h = tr.hi_src[dh] as usize;
            let s = &src[h * l..(h + 1) * l];
            for (lo, x) in s.iter().enumerate() {
                op(&mut d[tr.lo_map[lo] as usize], x);
            }
        });
    }

    /// Destination index of `x` under `tr`.
    #[inline]
    pub fn image(&self, tr: &Translation, x: usize) -> usize {
        let l = self.lo_size;
        tr.hi_map[x / l] as usize * l + tr.lo_map[x % l] as usize
    }
}

fn add_digits(mut a: usize, mut b: usize, p: usize) -> usize {
    let (mut out, mut place) = (0usize, 1usize);
    while a > 0 || b > 0 {
        let d = (a % p + b % p) % p;
        out += d * place;
        a /= p;
        b /= p;
        place *= p;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(e: u32) -> FieldElement {
        FieldElement::from_encoding(e)
    }

    #[test]
    fn index_addition_matches_field_addition() {
        for (p, s) in [(2u32, 3u32), (3, 2), (5, 1), (7, 1)] {
            let f = FieldCtx::new(p, s, None).unwrap();
            let sp = MomentSpace::new(&f, &[1, 2]).unwrap();
            for a in 0..sp.size() {
                for b in (0..sp.size()).step_by(7) {
                    let va = sp.decode(a);
                    let vb = sp.decode(b);
                    let sum: Vec<_> = va.iter().zip(&vb).map(|(x, y)| f.add(*x, *y)).collect();
                    assert_eq!(sp.add(a, b), sp.encode(&sum));
                    assert_eq!(sp.sub(sp.add(a, b), b), a);
                }
            }
        }
    }

    #[test]
    fn translation_is_the_shift() {
        let f = FieldCtx::new(3, 2, None).unwrap();
        let sp = MomentSpace::new(&f, &[1, 2, 4]).unwrap();
        let o = sp.offset(&f, el(5));
        let tr = sp.translation(o);
        let src: Vec<u32> = (0..sp.size() as u32).collect();
        let mut dst = vec![0u32; sp.size()];
        sp.apply(&tr, &src, &mut dst, |d, s| *d = *s);
        let mut dst2 = vec![0u32; sp.size()];
        sp.apply_par(&tr, &src, &mut dst2, |d, s| *d = *s);
        assert_eq!(dst, dst2);
        for x in 0..sp.size() {
            assert_eq!(dst[sp.add(x, o)], x as u32);
            assert_eq!(sp.image(&tr, x), sp.add(x, o));
        }
    }

    #[test]
    fn refuses_huge_spaces() {
        let f = FieldCtx::new(2, 16, None).unwrap();
        assert!(MomentSpace::new(&f, &[1, 3]).is_ok());
        assert!(matches!(
            MomentSpace::new(&f, &[1, 3, 5]),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }
}
