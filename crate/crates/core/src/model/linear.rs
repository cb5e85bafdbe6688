use super::layers::{AvgPool, Conv2d, FullyConnected};
use super::ModelError;

/// `y_j = bias_j + Σ_{(i, w) ∈ rows[j]} w·x_i`. Convolutions and pooling
/// lower to this form by im2col over row indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseLinear {
    pub inputs: usize,
    pub rows: Vec<Vec<(u32, i64)>>,
    pub bias: Vec<i64>,
}

/// A layer as seen by the evaluators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoweredLayer {
    Linear(SparseLinear),
    /// Add the round value at this index (0 = round input).
    Residual(usize),
    Identity,
}

impl SparseLinear {
    pub fn outputs(&self) -> usize {
        self.rows.len()
    }

    pub fn from_dense(f: &FullyConnected) -> Self {
        let rows = (0..f.outputs)
            .map(|o| {
                (0..f.inputs)
                    .filter_map(|i| {
                        let w = f.weights[o * f.inputs + i] as i64;
                        (w != 0).then_some((i as u32, w))
                    })
                    .collect()
            })
            .collect();
        Self { inputs: f.inputs, rows, bias: f.bias.iter().map(|&b| b as i64).collect() }
    }

    pub fn from_conv(c: &Conv2d) -> Result<Self, ModelError> {
        let [h, w, cin] = c.in_shape;
        let [oh, ow, cout] = c.out_shape()?;
        let [kh, kw] = c.kernel;
        let mut rows = vec![Vec::new(); oh * ow * cout];
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let (Some(iy), Some(ix)) = (
                            (oy * c.stride + ky).checked_sub(c.padding).filter(|&v| v < h),
                            (ox * c.stride + kx).checked_sub(c.padding).filter(|&v| v < w),
                        ) else {
                            continue;
                        };
                        for ci in 0..cin {
                            let src = ((iy * w + ix) * cin + ci) as u32;
                            for co in 0..cout {
                                let wt = c.weights[((ky * kw + kx) * cin + ci) * cout + co] as i64;
                                if wt != 0 {
                                    rows[(oy * ow + ox) * cout + co].push((src, wt));
                                }
                            }
                        }
                    }
                }
            }
        }
        let bias = (0..oh * ow * cout).map(|j| c.bias[j % cout] as i64).collect();
        Ok(Self { inputs: h * w * cin, rows, bias })
    }

    pub fn from_pool(p: &AvgPool) -> Result<Self, ModelError> {
        let [h, w, c] = p.in_shape;
        let [oh, ow, _] = p.out_shape()?;
        let mut rows = Vec::with_capacity(oh * ow * c);
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut row = Vec::with_capacity(p.kernel * p.kernel);
                    for ky in 0..p.kernel {
                        for kx in 0..p.kernel {
                            row.push(((((oy * p.stride + ky) * w + ox * p.stride + kx) * c + ch) as u32, 1));
                        }
                    }
                    rows.push(row);
                }
            }
        }
        Ok(Self { inputs: h * w * c, rows, bias: vec![0; oh * ow * c] })
    }

    pub fn apply(&self, x: &[i64]) -> Vec<i64> {
        self.rows
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| b + row.iter().map(|&(i, w)| w * x[i as usize]).sum::<i64>())
            .collect()
    }

    /// Elementwise worst-case output bounds for inputs in `[lo_i, hi_i]`.
    pub fn interval(&self, lo: &[i64], hi: &[i64]) -> (Vec<i64>, Vec<i64>) {
        self.rows
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| {
                row.iter().fold((b, b), |(l, h), &(i, w)| {
                    let (a, c) = (w * lo[i as usize], w * hi[i as usize]);
                    (l + a.min(c), h + a.max(c))
                })
            })
            .unzip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_lowering_and_interval() {
        let f = FullyConnected { inputs: 3, outputs: 2, weights: vec![1, 0, -2, 3, 1, 0], bias: vec![5, -1] };
        let s = SparseLinear::from_dense(&f);
        assert_eq!(s.rows[0], vec![(0, 1), (2, -2)]);
        assert_eq!(s.apply(&[1, 2, 3]), vec![5 + 1 - 6, -1 + 3 + 2]);
        let (lo, hi) = s.interval(&[0, 0, 0], &[3, 3, 3]);
        assert_eq!(lo, vec![5 - 6, -1]);
        assert_eq!(hi, vec![5 + 3, -1 + 12]);
    }

    #[test]
    fn pool_rows_cover_windows() {
        let p = AvgPool { in_shape: [4, 4, 1], kernel: 2, stride: 2 };
        let s = SparseLinear::from_pool(&p).unwrap();
        assert_eq!(s.outputs(), 4);
        assert_eq!(s.rows[3], vec![(10, 1), (11, 1), (14, 1), (15, 1)]);
    }
}
