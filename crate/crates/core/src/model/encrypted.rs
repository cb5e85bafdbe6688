use rayon::prelude::*;

use super::linear::{LoweredLayer, SparseLinear};
use super::{ModelError, QuantModel};
use crate::crypto::RlweCiphertext;
use crate::ring::{RingParams, RingPoly, Torus};

/// `E` ciphertext rows of `2M` torus lanes each: lanes `[0, N)` hold the
/// mask, lanes `[M, M+N)` the body, the rest is zero padding. Linear layers
/// act on rows with the `2M` lanes as a batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtMatrix {
    params: RingParams,
    rows: usize,
    lanes: Vec<Torus>,
}

impl CtMatrix {
    pub fn zeros(params: &RingParams, rows: usize) -> Self {
        Self { params: *params, rows, lanes: vec![Torus::ZERO; rows * 2 * params.m()] }
    }

    pub fn from_ciphertexts(params: &RingParams, cts: &[RlweCiphertext]) -> Result<Self, ModelError> {
        let mut out = Self::zeros(params, cts.len());
        for (i, ct) in cts.iter().enumerate() {
            out.set_row(i, ct)?;
        }
        Ok(out)
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn row_count(&self) -> usize {
        self.rows
    }

    pub fn lane_count(&self) -> usize {
        2 * self.params.m()
    }

    pub fn row(&self, i: usize) -> &[Torus] {
        let w = self.lane_count();
        &self.lanes[i * w..(i + 1) * w]
    }

    pub fn set_row(&mut self, i: usize, ct: &RlweCiphertext) -> Result<(), ModelError> {
        let (n, m) = (self.params.n(), self.params.m());
        if ct.a.coeffs().len() != n || ct.b.coeffs().len() != n {
            return Err(ModelError::Shape(format!(
                "ciphertext of degree {} in a ring of degree {n}",
                ct.a.coeffs().len()
            )));
        }
        let w = self.lane_count();
        let row = &mut self.lanes[i * w..(i + 1) * w];
        row[..n].copy_from_slice(ct.a.coeffs());
        row[m..m + n].copy_from_slice(ct.b.coeffs());
        Ok(())
    }

    pub fn ciphertext(&self, i: usize) -> RlweCiphertext {
        let (n, m) = (self.params.n(), self.params.m());
        let row = self.row(i);
        let a = RingPoly::from_coeffs(&self.params, row[..n].to_vec()).expect("length N");
        let b = RingPoly::from_coeffs(&self.params, row[m..m + n].to_vec()).expect("length N");
        RlweCiphertext::new(a, b)
    }

    pub fn ciphertexts(&self) -> Vec<RlweCiphertext> {
        (0..self.rows).map(|i| self.ciphertext(i)).collect()
    }

    /// Row relabeling: output row `i` is input row `src[i]`.
    pub fn gather_rows(&self, src: &[usize]) -> Result<Self, ModelError> {
        let w = self.lane_count();
        let mut lanes = Vec::with_capacity(src.len() * w);
        for &s in src {
            if s >= self.rows {
                return Err(ModelError::Shape(format!("row {s} of {}", self.rows)));
            }
            lanes.extend_from_slice(self.row(s));
        }
        Ok(Self { params: self.params, rows: src.len(), lanes })
    }

    pub fn add(&self, o: &Self) -> Result<Self, ModelError> {
        if self.rows != o.rows || self.params != o.params {
            return Err(ModelError::Shape(format!("adding {} rows to {}", o.rows, self.rows)));
        }
        let lanes = self.lanes.iter().zip(&o.lanes).map(|(&x, &y)| x + y).collect();
        Ok(Self { params: self.params, rows: self.rows, lanes })
    }
}

/// Row combination `out_j = Σ_i w_ji·in_i + bias_j·unit` over all lanes,
/// where `unit` is a row whose decryption pipeline yields the value 1.
pub fn encrypted_linear(layer: &SparseLinear, input: &CtMatrix, unit: &[Torus]) -> Result<CtMatrix, ModelError> {
    if input.row_count() != layer.inputs {
        return Err(ModelError::Shape(format!("layer takes {} rows, got {}", layer.inputs, input.row_count())));
    }
    let w = input.lane_count();
    if unit.len() != w {
        return Err(ModelError::Shape(format!("unit row has {} lanes, expected {w}", unit.len())));
    }
    let mut lanes = vec![Torus::ZERO; layer.outputs() * w];
    lanes.par_chunks_mut(w).zip(layer.rows.par_iter().zip(&layer.bias)).for_each(|(out, (row, &bias))| {
        // wrapping u64 arithmetic is exact modulo 2^53 after masking
        let mut acc = vec![0u64; w];
        let mut add = |src: &[Torus], k: i64| {
            let k = k as u64;
            for (a, s) in acc.iter_mut().zip(src) {
                *a = a.wrapping_add(s.raw().wrapping_mul(k));
            }
        };
        for &(i, wt) in row {
            add(input.row(i as usize), wt);
        }
        if bias != 0 {
            add(unit, bias);
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = Torus::from_raw(a);
        }
    });
    Ok(CtMatrix { params: input.params, rows: layer.outputs(), lanes })
}

/// A server round in lowered form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedRound {
    pub layers: Vec<LoweredLayer>,
    pub input_len: usize,
    pub output_len: usize,
}

impl EncryptedRound {
    pub fn evaluate(&self, input: CtMatrix, unit: &[Torus]) -> Result<CtMatrix, ModelError> {
        let mut vals = vec![input];
        for layer in &self.layers {
            let cur = vals.last().expect("non-empty");
            let next = match layer {
                LoweredLayer::Linear(sl) => encrypted_linear(sl, cur, unit)?,
                LoweredLayer::Residual(idx) => cur.add(&vals[*idx])?,
                LoweredLayer::Identity => cur.clone(),
            };
            vals.push(next);
        }
        Ok(vals.pop().expect("non-empty"))
    }

    /// Same computation on cleartext integers.
    pub fn evaluate_clear(&self, x: &[i64]) -> Vec<i64> {
        let mut vals = vec![x.to_vec()];
        for layer in &self.layers {
            let cur = vals.last().expect("non-empty");
            let next = match layer {
                LoweredLayer::Linear(sl) => sl.apply(cur),
                LoweredLayer::Residual(idx) => cur.iter().zip(&vals[*idx]).map(|(a, b)| a + b).collect(),
                LoweredLayer::Identity => cur.clone(),
            };
            vals.push(next);
        }
        vals.pop().expect("non-empty")
    }
}

impl QuantModel {
    /// Lowers every round for the encrypted evaluator.
    pub fn lower(&self) -> Result<Vec<EncryptedRound>, ModelError> {
        let geo = self.validate()?;
        self.rounds
            .iter()
            .zip(geo)
            .map(|(round, g)| {
                let layers =
                    round.layers.iter().enumerate().map(|(j, l)| l.lower(j + 1)).collect::<Result<Vec<_>, _>>()?;
                Ok(EncryptedRound { layers, input_len: g.input_len, output_len: g.output_len })
            })
            .collect()
    }
}
