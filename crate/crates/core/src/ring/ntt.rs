//! Exact linear convolution over the Goldilocks prime.
//!
//! Torus operands (53 bits) are split into a 27-bit and a 26-bit limb; each
//! limb is convolved with a small signed operand in `F_P`,
//! `P = 2^64 − 2^32 + 1`. As long as every true convolution value stays
//! below `P/2` in magnitude the centred lift is exact, and the limbs
//! recombine to the product modulo `2^53` bit-for-bit.

use super::{Torus, TORUS_MASK};

pub const GOLDILOCKS: u64 = 0xffff_ffff_0000_0001;
const EPSILON: u64 = 0xffff_ffff;
const GENERATOR: u64 = 7;
const LO_BITS: u32 = 27;
const LO_MASK: u64 = (1 << LO_BITS) - 1;

#[inline(always)]
fn reduce128(x: u128) -> u64 {
    let lo = x as u64;
    let hi = (x >> 64) as u64;
    let hi_hi = hi >> 32;
    let hi_lo = hi & EPSILON;
    let (mut t0, borrow) = lo.overflowing_sub(hi_hi);
    if borrow {
        t0 = t0.wrapping_sub(EPSILON);
    }
    let t1 = hi_lo * EPSILON;
    let (mut r, carry) = t0.overflowing_add(t1);
    if carry {
        r = r.wrapping_add(EPSILON);
    }
    if r >= GOLDILOCKS {
        r - GOLDILOCKS
    } else {
        r
    }
}

#[inline(always)]
pub fn mul(a: u64, b: u64) -> u64 {
    reduce128(a as u128 * b as u128)
}

#[inline(always)]
pub fn add(a: u64, b: u64) -> u64 {
    let (s, c) = a.overflowing_add(b);
    if c || s >= GOLDILOCKS {
        s.wrapping_sub(GOLDILOCKS)
    } else {
        s
    }
}

#[inline(always)]
pub fn sub(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a.wrapping_sub(b).wrapping_add(GOLDILOCKS)
    }
}

pub fn pow(mut b: u64, mut e: u64) -> u64 {
    let mut r = 1;
    while e > 0 {
        if e & 1 == 1 {
            r = mul(r, b);
        }
        b = mul(b, b);
        e >>= 1;
    }
    r
}

/// Signed integer (|x| < P) to field element.
#[inline(always)]
pub fn from_signed(x: i64) -> u64 {
    if x >= 0 {
        x as u64
    } else {
        GOLDILOCKS - x.unsigned_abs()
    }
}

/// Field element to its centred signed lift.
#[inline(always)]
pub fn to_signed(v: u64) -> i64 {
    if v > GOLDILOCKS / 2 {
        -((GOLDILOCKS - v) as i64)
    } else {
        v as i64
    }
}

/// Power-of-two transform plan (forward DIF to bit-reversed order, inverse
/// DIT back to natural order).
#[derive(Clone, Debug)]
pub struct NttPlan {
    len: usize,
    fwd: Vec<u64>,
    inv: Vec<u64>,
    inv_len: u64,
}

impl NttPlan {
    pub fn new(len: usize) -> Self {
        assert!(len.is_power_of_two() && len >= 2 && len.trailing_zeros() <= 32);
        let root = pow(GENERATOR, (GOLDILOCKS - 1) / len as u64);
        let iroot = pow(root, GOLDILOCKS - 2);
        // twiddles for butterflies of half-size h live at [h−1, 2h−1)
        let mut fwd = vec![0u64; len - 1];
        let mut inv = vec![0u64; len - 1];
        let mut h = 1;
        while h < len {
            let w = pow(root, (len / (2 * h)) as u64);
            let iw = pow(iroot, (len / (2 * h)) as u64);
            let (mut x, mut y) = (1u64, 1u64);
            for j in 0..h {
                fwd[h - 1 + j] = x;
                inv[h - 1 + j] = y;
                x = mul(x, w);
                y = mul(y, iw);
            }
            h *= 2;
        }
        let inv_len = pow(len as u64, GOLDILOCKS - 2);
        Self { len, fwd, inv, inv_len }
    }

    /// Plan long enough for a linear convolution of two length-`n` inputs.
    pub fn for_linear(n: usize) -> Self {
        Self::new((2 * n - 1).next_power_of_two().max(2))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, a: &mut [u64]) {
        assert_eq!(a.len(), self.len);
        let mut h = self.len / 2;
        while h >= 1 {
            let tw = &self.fwd[h - 1..2 * h - 1];
            for chunk in a.chunks_exact_mut(2 * h) {
                let (lo, hi) = chunk.split_at_mut(h);
                for ((x, y), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
                    let (u, v) = (*x, *y);
                    *x = add(u, v);
                    *y = mul(sub(u, v), w);
                }
            }
            h /= 2;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        assert_eq!(a.len(), self.len);
        let mut h = 1;
        while h < self.len {
            let tw = &self.inv[h - 1..2 * h - 1];
            for chunk in a.chunks_exact_mut(2 * h) {
                let (lo, hi) = chunk.split_at_mut(h);
                for ((x, y), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
                    let u = *x;
                    let v = mul(*y, w);
                    *x = add(u, v);
                    *y = sub(u, v);
                }
            }
            h *= 2;
        }
        for x in a.iter_mut() {
            *x = mul(*x, self.inv_len);
        }
    }

    /// Forward transform of a small signed polynomial.
    pub fn forward_small(&self, s: &[i64]) -> Vec<u64> {
        let mut buf = vec![0u64; self.len];
        for (b, &x) in buf.iter_mut().zip(s) {
            *b = from_signed(x);
        }
        self.forward(&mut buf);
        buf
    }

    /// Forward transforms of the two limbs of a torus polynomial.
    pub fn forward_torus(&self, v: &[Torus]) -> TorusSpectrum {
        let mut lo = vec![0u64; self.len];
        let mut hi = vec![0u64; self.len];
        for ((l, h), x) in lo.iter_mut().zip(hi.iter_mut()).zip(v) {
            *l = x.0 & LO_MASK;
            *h = x.0 >> LO_BITS;
        }
        self.forward(&mut lo);
        self.forward(&mut hi);
        TorusSpectrum { lo, hi }
    }

    /// Inverse-transforms an accumulated product and recombines limbs into
    /// the first `out_len` torus coefficients of the linear convolution.
    pub fn finish_torus(&self, mut acc: TorusSpectrum, out_len: usize) -> Vec<Torus> {
        self.inverse(&mut acc.lo);
        self.inverse(&mut acc.hi);
        acc.lo[..out_len]
            .iter()
            .zip(&acc.hi[..out_len])
            .map(|(&l, &h)| {
                let v = (to_signed(l) as u64).wrapping_add((to_signed(h) as u64) << LO_BITS);
                Torus(v & TORUS_MASK)
            })
            .collect()
    }

    /// Linear convolution `small * torus` modulo `2^53`.
    pub fn mul_small_torus(&self, small_hat: &[u64], torus: &[Torus], out_len: usize) -> Vec<Torus> {
        let mut spec = self.forward_torus(torus);
        spec.mul_assign_pointwise(small_hat);
        self.finish_torus(spec, out_len)
    }
}

/// Spectra of the low and high limbs of a torus polynomial.
#[derive(Clone, Debug)]
pub struct TorusSpectrum {
    pub lo: Vec<u64>,
    pub hi: Vec<u64>,
}

impl TorusSpectrum {
    pub fn zeros(len: usize) -> Self {
        Self { lo: vec![0; len], hi: vec![0; len] }
    }

    pub fn mul_assign_pointwise(&mut self, small_hat: &[u64]) {
        for ((l, h), &s) in self.lo.iter_mut().zip(self.hi.iter_mut()).zip(small_hat) {
            *l = mul(*l, s);
            *h = mul(*h, s);
        }
    }

    /// `self += small_hat ⊙ other`.
    pub fn add_product(&mut self, small_hat: &[u64], other: &TorusSpectrum) {
        for i in 0..self.lo.len() {
            self.lo[i] = add(self.lo[i], mul(small_hat[i], other.lo[i]));
            self.hi[i] = add(self.hi[i], mul(small_hat[i], other.hi[i]));
        }
    }
}
