//! Torus polynomials modulo the prime-power cyclotomic polynomial.
//!
//! For `M = t^α` the cyclotomic polynomial is `Φ_M = Σ_{j<t} X^{j·M/t}`, so a
//! product is reduced by one fold modulo `X^M − 1` followed by one pass of
//! `X^{r + (t−1)M/t} ≡ −Σ_{j<t−1} X^{r + jM/t}`. Everything here is exact
//! integer arithmetic; torus values are 53-bit numerators.

mod context;
pub mod dual;
pub mod ntt;
pub mod tower;

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
#[cfg(test)]
use num_traits::Zero;
use thiserror::Error;

pub use context::RingContext;
pub use dual::DualBasis;

/// Number of fractional bits of a torus numerator.
pub const TORUS_BITS: u32 = 53;
/// The ciphertext modulus `q`.
pub const TORUS_MODULUS: u64 = 1 << TORUS_BITS;
pub const TORUS_MASK: u64 = TORUS_MODULUS - 1;

/// Largest supported `M`; well above every parameter set in use.
const MAX_M: u128 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    #[error("t = {0} is not a prime >= 3")]
    BadPrime(usize),
    #[error("alpha must be at least 1")]
    BadExponent,
    #[error("ring degree t^alpha = {0} is too large")]
    TooLarge(u128),
    #[error("expected {expected} coefficients, got {got}")]
    Length { expected: usize, got: usize },
    #[error("d = {d} is not a unit modulo M = {m}")]
    NotUnit { d: i64, m: usize },
    #[error("invalid level pair {from} -> {to} for alpha = {alpha}")]
    Levels { from: u32, to: u32, alpha: u32 },
    #[error("multiplier coefficient {0} is not an integer")]
    NonInteger(String),
    #[error("dual basis construction failed: {0}")]
    DualBasis(String),
}

pub(crate) fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Geometry of `Z[X]/Φ_M` for `M = t^α`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RingParams {
    t: usize,
    alpha: u32,
    m: usize,
    n: usize,
    m_sub: usize,
}

impl RingParams {
    pub fn new(t: usize, alpha: u32) -> Result<Self, RingError> {
        if t < 3 || !is_prime(t) {
            return Err(RingError::BadPrime(t));
        }
        if alpha == 0 {
            return Err(RingError::BadExponent);
        }
        let m = (t as u128).checked_pow(alpha).unwrap_or(u128::MAX);
        if m > MAX_M {
            return Err(RingError::TooLarge(m));
        }
        let m = m as usize;
        let m_sub = m / t;
        Ok(Self { t, alpha, m, n: m_sub * (t - 1), m_sub })
    }

    pub fn t(&self) -> usize {
        self.t
    }
    pub fn alpha(&self) -> u32 {
        self.alpha
    }
    /// `M = t^α`.
    pub fn m(&self) -> usize {
        self.m
    }
    /// `N = φ(M)`, the ring degree.
    pub fn n(&self) -> usize {
        self.n
    }
    /// `M/t`, the stride of `Φ_M`.
    pub fn m_sub(&self) -> usize {
        self.m_sub
    }

    /// `t^k`.
    pub fn t_pow(&self, k: u32) -> usize {
        self.t.pow(k)
    }

    pub fn is_unit(&self, d: i64) -> bool {
        d.rem_euclid(self.t as i64) != 0
    }

    /// Representative of `d` in `[0, M)` after checking it is a unit.
    pub fn unit_residue(&self, d: i64) -> Result<usize, RingError> {
        if !self.is_unit(d) || gcd(d.unsigned_abs(), self.m as u64) != 1 {
            return Err(RingError::NotUnit { d, m: self.m });
        }
        Ok(d.rem_euclid(self.m as i64) as usize)
    }

    /// All units modulo `M` in increasing order.
    pub fn units(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.m).filter(move |d| d % self.t != 0)
    }

    /// `Tr(X^e)` over the full Galois group: the Ramanujan sum `c_M(e)`.
    pub fn monomial_trace(&self, e: usize) -> i64 {
        if e % self.m == 0 {
            self.n as i64
        } else if e % self.m_sub == 0 {
            -(self.m_sub as i64)
        } else {
            0
        }
    }
}

/// A point of the discrete torus `T_q`, stored as its numerator mod `2^53`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(transparent)]
pub struct Torus(pub(crate) u64);

impl Torus {
    pub const ZERO: Torus = Torus(0);

    pub fn from_raw(numerator: u64) -> Self {
        Torus(numerator & TORUS_MASK)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn from_signed(numerator: i64) -> Self {
        Torus(numerator as u64 & TORUS_MASK)
    }

    /// Numerator lifted to `[−q/2, q/2)`.
    pub fn signed(self) -> i64 {
        ((self.0 << (64 - TORUS_BITS)) as i64) >> (64 - TORUS_BITS)
    }

    /// Nearest grid point to `x mod 1`.
    pub fn from_f64(x: f64) -> Self {
        let frac = x - x.floor();
        Torus::from_raw((frac * TORUS_MODULUS as f64).round() as u64)
    }

    /// Value as a real number in `[−1/2, 1/2)`.
    pub fn to_f64(self) -> f64 {
        self.signed() as f64 / TORUS_MODULUS as f64
    }

    /// The message point `m / 2^p_bits`.
    pub fn from_message(m: i64, p_bits: u32) -> Self {
        Torus::from_signed(m.wrapping_shl(TORUS_BITS - p_bits))
    }

    /// `π_p`: nearest multiple of `1/p`, returned as a signed integer in
    /// `[−p/2, p/2)`.
    pub fn decode(self, p_bits: u32) -> i64 {
        let shift = TORUS_BITS - p_bits;
        let rounded = (self.0 + (1 << (shift - 1))) >> shift;
        let p = 1i64 << p_bits;
        let m = (rounded as i64) & (p - 1);
        if m >= p / 2 {
            m - p
        } else {
            m
        }
    }

    /// Distance to the nearest message point, in torus units.
    pub fn decode_residual(self, p_bits: u32) -> f64 {
        (self - Torus::from_message(self.decode(p_bits), p_bits)).to_f64()
    }
}

impl fmt::Debug for Torus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T({})", self.signed())
    }
}

impl Add for Torus {
    type Output = Torus;
    #[inline(always)]
    fn add(self, o: Torus) -> Torus {
        Torus(self.0.wrapping_add(o.0) & TORUS_MASK)
    }
}

impl Sub for Torus {
    type Output = Torus;
    #[inline(always)]
    fn sub(self, o: Torus) -> Torus {
        Torus(self.0.wrapping_sub(o.0) & TORUS_MASK)
    }
}

impl Neg for Torus {
    type Output = Torus;
    #[inline(always)]
    fn neg(self) -> Torus {
        Torus(self.0.wrapping_neg() & TORUS_MASK)
    }
}

impl Mul<i64> for Torus {
    type Output = Torus;
    #[inline(always)]
    fn mul(self, k: i64) -> Torus {
        Torus(self.0.wrapping_mul(k as u64) & TORUS_MASK)
    }
}

impl AddAssign for Torus {
    #[inline(always)]
    fn add_assign(&mut self, o: Torus) {
        *self = *self + o;
    }
}

impl SubAssign for Torus {
    #[inline(always)]
    fn sub_assign(&mut self, o: Torus) {
        *self = *self - o;
    }
}

/// Coefficient ring for [`Poly`]: torus values or exact integers.
pub trait Coeff: Copy + PartialEq + Eq + fmt::Debug + Default + Send + Sync + 'static {
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn scale(self, k: i64) -> Self;
    fn is_zero(self) -> bool {
        self == Self::default()
    }
}

impl Coeff for Torus {
    #[inline(always)]
    fn add(self, o: Self) -> Self {
        self + o
    }
    #[inline(always)]
    fn sub(self, o: Self) -> Self {
        self - o
    }
    #[inline(always)]
    fn scale(self, k: i64) -> Self {
        self * k
    }
}

impl Coeff for i64 {
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn scale(self, k: i64) -> Self {
        self * k
    }
}

impl Coeff for i128 {
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn scale(self, k: i64) -> Self {
        self * k as i128
    }
}

/// A ring element in canonical form: exactly `N` coefficients.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Poly<C> {
    coeffs: Vec<C>,
}

/// Element of `T_q[X]/Φ_M`.
pub type RingPoly = Poly<Torus>;
/// Element of `Z[X]/Φ_M`.
pub type IntPoly = Poly<i64>;

/// An integer polynomial kept modulo `X^M − 1` as a list of terms. Used for
/// sparse plaintext multipliers whose canonical form would be denser.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SparsePoly {
    terms: Vec<(usize, i64)>,
}

impl SparsePoly {
    /// Builds from `(exponent, coefficient)` pairs; exponents are taken mod
    /// `M` and merged.
    pub fn new(params: &RingParams, terms: impl IntoIterator<Item = (i64, i64)>) -> Self {
        let mut merged: Vec<(usize, i64)> = Vec::new();
        for (e, c) in terms {
            let e = e.rem_euclid(params.m as i64) as usize;
            match merged.iter_mut().find(|(x, _)| *x == e) {
                Some(slot) => slot.1 += c,
                None => merged.push((e, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0);
        merged.sort_unstable();
        Self { terms: merged }
    }

    pub fn terms(&self) -> &[(usize, i64)] {
        &self.terms
    }

    /// `P(X^d)` computed term-wise modulo `X^M − 1`.
    pub fn automorphism(&self, params: &RingParams, d: usize) -> SparsePoly {
        SparsePoly::new(params, self.terms.iter().map(|&(e, c)| (((e * d) % params.m) as i64, c)))
    }

    /// Product modulo `X^M − 1`.
    pub fn mul(&self, params: &RingParams, o: &SparsePoly) -> SparsePoly {
        let mut terms = Vec::with_capacity(self.terms.len() * o.terms.len());
        for &(e1, c1) in &self.terms {
            for &(e2, c2) in &o.terms {
                terms.push(((e1 + e2) as i64, c1 * c2));
            }
        }
        SparsePoly::new(params, terms)
    }

    /// Canonical representative modulo `Φ_M`.
    pub fn to_canonical(&self, params: &RingParams) -> IntPoly {
        let mut buf = vec![0i64; params.m];
        for &(e, c) in &self.terms {
            buf[e] += c;
        }
        fold_phi(params, &mut buf);
        buf.truncate(params.n);
        Poly { coeffs: buf }
    }
}

/// Reduces a length-`M` buffer modulo `Φ_M` in place; the result occupies
/// the first `N` entries and the tail is zeroed.
pub(crate) fn fold_phi<C: Coeff>(params: &RingParams, buf: &mut [C]) {
    debug_assert_eq!(buf.len(), params.m);
    let (n, m_sub, t) = (params.n, params.m_sub, params.t);
    for r in 0..m_sub {
        let top = buf[n + r];
        if top.is_zero() {
            continue;
        }
        buf[n + r] = C::default();
        for j in 0..t - 1 {
            let k = r + j * m_sub;
            buf[k] = buf[k].sub(top);
        }
    }
}

/// Adds `coef · X^shift · src` into a length-`M` accumulator modulo `X^M − 1`.
#[inline]
pub(crate) fn accumulate_shifted<C: Coeff>(acc: &mut [C], src: &[C], shift: usize, coef: i64) {
    let m = acc.len();
    let split = src.len().min(m - shift);
    let (head, tail) = src.split_at(split);
    match coef {
        1 => {
            for (dst, &s) in acc[shift..shift + split].iter_mut().zip(head) {
                *dst = dst.add(s);
            }
            for (dst, &s) in acc[..tail.len()].iter_mut().zip(tail) {
                *dst = dst.add(s);
            }
        }
        -1 => {
            for (dst, &s) in acc[shift..shift + split].iter_mut().zip(head) {
                *dst = dst.sub(s);
            }
            for (dst, &s) in acc[..tail.len()].iter_mut().zip(tail) {
                *dst = dst.sub(s);
            }
        }
        k => {
            for (dst, &s) in acc[shift..shift + split].iter_mut().zip(head) {
                *dst = dst.add(s.scale(k));
            }
            for (dst, &s) in acc[..tail.len()].iter_mut().zip(tail) {
                *dst = dst.add(s.scale(k));
            }
        }
    }
}

/// Reduces coefficients of arbitrary length (index = power of `X`) to the
/// canonical representative modulo `Φ_M`.
pub fn cyclotomic_reduce<C: Coeff>(params: &RingParams, raw: &[C]) -> Poly<C> {
    let mut buf = vec![C::default(); params.m];
    for (k, &c) in raw.iter().enumerate() {
        let slot = &mut buf[k % params.m];
        *slot = slot.add(c);
    }
    fold_phi(params, &mut buf);
    buf.truncate(params.n);
    Poly { coeffs: buf }
}

impl<C: Coeff> Poly<C> {
    pub fn zero(params: &RingParams) -> Self {
        Self { coeffs: vec![C::default(); params.n] }
    }

    pub fn from_coeffs(params: &RingParams, coeffs: Vec<C>) -> Result<Self, RingError> {
        if coeffs.len() != params.n {
            return Err(RingError::Length { expected: params.n, got: coeffs.len() });
        }
        Ok(Self { coeffs })
    }

    pub fn constant(params: &RingParams, c: C) -> Self {
        let mut p = Self::zero(params);
        p.coeffs[0] = c;
        p
    }

    /// `c · X^e` in canonical form; `e` is taken modulo `M`.
    pub fn monomial(params: &RingParams, e: i64, c: C) -> Self {
        let mut buf = vec![C::default(); params.m];
        buf[e.rem_euclid(params.m as i64) as usize] = c;
        fold_phi(params, &mut buf);
        buf.truncate(params.n);
        Self { coeffs: buf }
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, o: &Self) -> Self {
        Self { coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(&a, &b)| a.add(b)).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self { coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(&a, &b)| a.sub(b)).collect() }
    }

    pub fn neg(&self) -> Self {
        Self { coeffs: self.coeffs.iter().map(|&a| C::default().sub(a)).collect() }
    }

    pub fn scale(&self, k: i64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|&a| a.scale(k)).collect() }
    }

    pub fn add_assign(&mut self, o: &Self) {
        for (a, &b) in self.coeffs.iter_mut().zip(&o.coeffs) {
            *a = a.add(b);
        }
    }

    /// `P(X^d)` reduced modulo `Φ_M`.
    pub fn automorphism(&self, params: &RingParams, d: i64) -> Result<Self, RingError> {
        let d = params.unit_residue(d)?;
        Ok(sum_automorphisms(params, self, &[d]))
    }

    /// Product with a sparse integer multiplier by rotate-and-add.
    pub fn mul_sparse(&self, params: &RingParams, b: &SparsePoly) -> Self {
        let mut buf = vec![C::default(); params.m];
        for &(e, c) in b.terms() {
            accumulate_shifted(&mut buf, &self.coeffs, e, c);
        }
        fold_phi(params, &mut buf);
        buf.truncate(params.n);
        Self { coeffs: buf }
    }

    /// Exact product with an integer polynomial. Multipliers with at most two
    /// non-zero terms take the rotate-and-add path; others use schoolbook.
    pub fn mul_int(&self, params: &RingParams, b: &IntPoly) -> Self {
        let nonzero = b.coeffs.iter().filter(|&&c| c != 0).count();
        if nonzero <= 2 {
            let sparse = SparsePoly::new(
                params,
                b.coeffs.iter().enumerate().filter(|(_, &c)| c != 0).map(|(e, &c)| (e as i64, c)),
            );
            return self.mul_sparse(params, &sparse);
        }
        let mut buf = vec![C::default(); params.m];
        for (j, &bj) in b.coeffs.iter().enumerate() {
            if bj != 0 {
                accumulate_shifted(&mut buf, &self.coeffs, j, bj);
            }
        }
        fold_phi(params, &mut buf);
        buf.truncate(params.n);
        Self { coeffs: buf }
    }
}

impl IntPoly {
    /// Accepts a rational coefficient vector only if every entry is integral.
    pub fn from_rationals(params: &RingParams, coeffs: &[BigRational]) -> Result<Self, RingError> {
        if coeffs.len() != params.n {
            return Err(RingError::Length { expected: params.n, got: coeffs.len() });
        }
        let mut out = Vec::with_capacity(coeffs.len());
        for c in coeffs {
            if !c.is_integer() {
                return Err(RingError::NonInteger(c.to_string()));
            }
            let v: BigInt = c.to_integer();
            out.push(v.to_i64().ok_or_else(|| RingError::NonInteger(c.to_string()))?);
        }
        Ok(Self { coeffs: out })
    }

    pub fn to_torus(&self) -> RingPoly {
        Poly { coeffs: self.coeffs.iter().map(|&c| Torus::from_signed(c)).collect() }
    }
}

impl RingPoly {
    /// Embeds a vector of messages (coefficient `i` = `v[i] / p`), zero padded.
    pub fn from_messages(params: &RingParams, values: &[i64], p_bits: u32) -> Result<Self, RingError> {
        if values.len() > params.n {
            return Err(RingError::Length { expected: params.n, got: values.len() });
        }
        let mut p = Self::zero(params);
        for (c, &v) in p.coeffs.iter_mut().zip(values) {
            *c = Torus::from_message(v, p_bits);
        }
        Ok(p)
    }

    pub fn decode(&self, p_bits: u32) -> Vec<i64> {
        self.coeffs.iter().map(|c| c.decode(p_bits)).collect()
    }
}

/// `Σ_{d ∈ ds} P(X^d)`, accumulated in a single length-`M` buffer. The
/// entries of `ds` must already be units in `[0, M)`.
pub fn sum_automorphisms<C: Coeff>(params: &RingParams, p: &Poly<C>, ds: &[usize]) -> Poly<C> {
    let m = params.m;
    let mut buf = vec![C::default(); m];
    for &d in ds {
        let mut e = 0usize;
        for &c in &p.coeffs {
            if !c.is_zero() {
                buf[e] = buf[e].add(c);
            }
            e += d;
            if e >= m {
                e -= m;
            }
        }
    }
    fold_phi(params, &mut buf);
    buf.truncate(params.n);
    Poly { coeffs: buf }
}

/// `Tr(P) = Σ_{d ∈ (Z/M)^*} P(X^d)`, evaluated directly.
pub fn trace_direct<C: Coeff>(params: &RingParams, p: &Poly<C>) -> Poly<C> {
    let units: Vec<usize> = params.units().collect();
    sum_automorphisms(params, p, &units)
}

/// Composition of the per-level traces `T_{to+1} ∘ … ∘ T_from` along the
/// tower `K_0 ⊂ … ⊂ K_α`, with the stage representatives of
/// [`tower::lemma_stage_reps`].
pub fn partial_trace_direct<C: Coeff>(
    params: &RingParams,
    p: &Poly<C>,
    from: u32,
    to: u32,
) -> Result<Poly<C>, RingError> {
    tower::check_levels(params, from, to)?;
    let mut cur = p.clone();
    for k in (to + 1..=from).rev() {
        cur = sum_automorphisms(params, &cur, &tower::lemma_stage_reps(params, k));
    }
    Ok(cur)
}
