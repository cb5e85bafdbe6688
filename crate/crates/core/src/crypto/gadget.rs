use serde::{Deserialize, Serialize};

use super::CryptoError;
use crate::ring::{Torus, TORUS_BITS};

/// Base-`D`, depth-`l` gadget `(1/D, 1/D², …, 1/D^l)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GadgetParams {
    base: u64,
    levels: u32,
}

impl GadgetParams {
    pub fn new(base: u64, levels: u32) -> Result<Self, CryptoError> {
        let err = CryptoError::Gadget { base, levels };
        // digits must stay small enough for the exact transform path
        if !(2..=1 << 16).contains(&base) || levels == 0 {
            return Err(err);
        }
        let total = (base as u128).checked_pow(levels).ok_or(err.clone())?;
        if total > 1u128 << TORUS_BITS {
            return Err(err);
        }
        Ok(Self { base, levels })
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    fn span(&self) -> u128 {
        (self.base as u128).pow(self.levels)
    }

    /// Rounds `x` to the grid `Z/D^l` and returns balanced digits
    /// `g_1, …, g_l` with `|g_j| ≤ D/2` and `Σ g_j / D^j ≡ x` up to
    /// `1/(2D^l)`.
    pub fn decompose_value(&self, x: Torus, out: &mut [i64]) {
        let span = self.span();
        let q = 1u128 << TORUS_BITS;
        let mut v = (x.raw() as u128 * span + q / 2) >> TORUS_BITS;
        if v == span {
            v = 0;
        }
        let base = self.base as u128;
        let half = self.base / 2;
        for j in (0..self.levels as usize).rev() {
            let mut d = (v % base) as u64;
            v /= base;
            if d > half {
                d = d.wrapping_sub(self.base);
                v += 1;
            }
            out[j] = d as i64;
        }
    }

    /// Digits of every coefficient, laid out level-major: `digits[j][i]`.
    pub fn decompose(&self, coeffs: &[Torus]) -> Vec<Vec<i64>> {
        let l = self.levels as usize;
        let mut digits = vec![vec![0i64; coeffs.len()]; l];
        let mut tmp = vec![0i64; l];
        for (i, &c) in coeffs.iter().enumerate() {
            self.decompose_value(c, &mut tmp);
            for j in 0..l {
                digits[j][i] = tmp[j];
            }
        }
        digits
    }

    /// `round(c·q / D^j)` for level `j` in `1..=l`, reduced mod `q`.
    pub fn scaled(&self, c: i64, level: u32) -> Torus {
        let den = (self.base as i128).pow(level);
        let num = (c as i128) << TORUS_BITS;
        let r = (2 * num + den).div_euclid(2 * den);
        Torus::from_signed(r as i64)
    }

    /// `Σ g_j / D^j` evaluated exactly on the `1/D^l` grid, as a torus value.
    pub fn recompose(&self, digits: &[i64]) -> Torus {
        let base = self.base as i128;
        let mut acc: i128 = 0;
        for &g in digits {
            acc = acc * base + g as i128;
        }
        let span = self.span() as i128;
        let num = (acc.rem_euclid(span) << TORUS_BITS) / span;
        Torus::from_raw(num as u64)
    }
}
