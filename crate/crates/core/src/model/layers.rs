use serde::{Deserialize, Serialize};

use super::linear::{LoweredLayer, SparseLinear};
use super::ModelError;

/// `[H, W, C]`, flattened row-major with channels last.
pub type Shape = [usize; 3];

pub(crate) fn volume(s: Shape) -> usize {
    s[0] * s[1] * s[2]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Identity,
    /// Terminal activation; the round output are the class scores.
    Softmax,
}

/// Client-side non-linearity closing a round: `clip(⌊f(y)/η⌉)`, or softmax
/// of `y/η` for the final round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub eta: f64,
    pub clip: [i64; 2],
}

/// 2-D convolution with HWIO weights `[kh][kw][c_in][c_out]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub in_shape: Shape,
    pub out_channels: usize,
    pub kernel: [usize; 2],
    pub stride: usize,
    pub padding: usize,
    pub weights: Vec<i32>,
    pub bias: Vec<i32>,
}

impl Conv2d {
    pub fn out_shape(&self) -> Result<Shape, ModelError> {
        let [h, w, _] = self.in_shape;
        let [kh, kw] = self.kernel;
        let (s, p) = (self.stride, self.padding);
        if s == 0 || kh == 0 || kw == 0 || h + 2 * p < kh || w + 2 * p < kw {
            return Err(ModelError::Shape(format!("conv kernel {kh}x{kw} s{s} p{p} on {h}x{w}")));
        }
        Ok([(h + 2 * p - kh) / s + 1, (w + 2 * p - kw) / s + 1, self.out_channels])
    }

    fn weight(&self, ky: usize, kx: usize, ci: usize, co: usize) -> i64 {
        let [_, kw] = self.kernel;
        self.weights[((ky * kw + kx) * self.in_shape[2] + ci) * self.out_channels + co] as i64
    }
}

/// Dense layer with weights `[out][in]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FullyConnected {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<i32>,
    pub bias: Vec<i32>,
}

/// Window sum without padding; the `1/k²` factor belongs in the next `η`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AvgPool {
    pub in_shape: Shape,
    pub kernel: usize,
    pub stride: usize,
}

impl AvgPool {
    pub fn out_shape(&self) -> Result<Shape, ModelError> {
        let [h, w, c] = self.in_shape;
        let (k, s) = (self.kernel, self.stride);
        if k == 0 || s == 0 || h < k || w < k {
            return Err(ModelError::Shape(format!("pool {k} s{s} on {h}x{w}")));
        }
        Ok([(h - k) / s + 1, (w - k) / s + 1, c])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layer {
    Conv2d(Conv2d),
    FullyConnected(FullyConnected),
    AvgPool(AvgPool),
    /// Adds the output of layer `from` of the same round (`-1`: the round
    /// input) to the running value.
    ResidualAdd {
        from: i32,
    },
    Flatten,
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::FullyConnected(_) => "fully_connected",
            Layer::AvgPool(_) => "avg_pool",
            Layer::ResidualAdd { .. } => "residual_add",
            Layer::Flatten => "flatten",
        }
    }

    /// Output shape given the running shape and the shapes of earlier values
    /// in the round (`earlier[0]` is the round input).
    pub(crate) fn out_shape(&self, input: Shape, earlier: &[Shape]) -> Result<Shape, ModelError> {
        match self {
            Layer::Conv2d(c) => {
                if c.in_shape != input {
                    return Err(ModelError::Shape(format!("conv expects {:?}, got {:?}", c.in_shape, input)));
                }
                let [kh, kw] = c.kernel;
                check_len("conv weights", c.weights.len(), kh * kw * c.in_shape[2] * c.out_channels)?;
                check_len("conv bias", c.bias.len(), c.out_channels)?;
                c.out_shape()
            }
            Layer::FullyConnected(f) => {
                if f.inputs != volume(input) {
                    return Err(ModelError::Shape(format!("dense expects {} inputs, got {:?}", f.inputs, input)));
                }
                check_len("dense weights", f.weights.len(), f.inputs * f.outputs)?;
                check_len("dense bias", f.bias.len(), f.outputs)?;
                Ok([1, 1, f.outputs])
            }
            Layer::AvgPool(p) => {
                if p.in_shape != input {
                    return Err(ModelError::Shape(format!("pool expects {:?}, got {:?}", p.in_shape, input)));
                }
                p.out_shape()
            }
            Layer::ResidualAdd { from } => {
                let idx = residual_source(*from, earlier.len())?;
                if volume(earlier[idx]) != volume(input) {
                    return Err(ModelError::Shape(format!("residual joins {:?} and {:?}", earlier[idx], input)));
                }
                Ok(input)
            }
            Layer::Flatten => Ok([1, 1, volume(input)]),
        }
    }

    fn weights(&self) -> impl Iterator<Item = i64> + '_ {
        let w: &[i32] = match self {
            Layer::Conv2d(c) => &c.weights,
            Layer::FullyConnected(f) => &f.weights,
            _ => &[],
        };
        w.iter().map(|&x| x as i64)
    }

    /// Direct integer evaluation (gather loops, no lowering).
    pub(crate) fn forward(&self, x: &[i64], earlier: &[Vec<i64>]) -> Vec<i64> {
        match self {
            Layer::Conv2d(c) => {
                let [h, w, ci_n] = c.in_shape;
                let [oh, ow, co_n] = c.out_shape().expect("validated");
                let [kh, kw] = c.kernel;
                let mut out = vec![0i64; oh * ow * co_n];
                for oy in 0..oh {
                    for ox in 0..ow {
                        for co in 0..co_n {
                            let mut acc = c.bias[co] as i64;
                            for ky in 0..kh {
                                let iy = (oy * c.stride + ky) as isize - c.padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * c.stride + kx) as isize - c.padding as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let base = (iy as usize * w + ix as usize) * ci_n;
                                    for ci in 0..ci_n {
                                        acc += c.weight(ky, kx, ci, co) * x[base + ci];
                                    }
                                }
                            }
                            out[(oy * ow + ox) * co_n + co] = acc;
                        }
                    }
                }
                out
            }
            Layer::FullyConnected(f) => (0..f.outputs)
                .map(|o| {
                    let row = &f.weights[o * f.inputs..(o + 1) * f.inputs];
                    f.bias[o] as i64 + row.iter().zip(x).map(|(&w, &v)| w as i64 * v).sum::<i64>()
                })
                .collect(),
            Layer::AvgPool(p) => {
                let [_, w, c] = p.in_shape;
                let [oh, ow, _] = p.out_shape().expect("validated");
                let mut out = vec![0i64; oh * ow * c];
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ch in 0..c {
                            let mut acc = 0;
                            for ky in 0..p.kernel {
                                for kx in 0..p.kernel {
                                    acc += x[((oy * p.stride + ky) * w + ox * p.stride + kx) * c + ch];
                                }
                            }
                            out[(oy * ow + ox) * c + ch] = acc;
                        }
                    }
                }
                out
            }
            Layer::ResidualAdd { from } => {
                let src = &earlier[residual_source(*from, earlier.len()).expect("validated")];
                x.iter().zip(src).map(|(a, b)| a + b).collect()
            }
            Layer::Flatten => x.to_vec(),
        }
    }

    /// Row-combination form used by the encrypted evaluator.
    pub fn lower(&self, earlier_len: usize) -> Result<LoweredLayer, ModelError> {
        Ok(match self {
            Layer::Conv2d(c) => LoweredLayer::Linear(SparseLinear::from_conv(c)?),
            Layer::FullyConnected(f) => LoweredLayer::Linear(SparseLinear::from_dense(f)),
            Layer::AvgPool(p) => LoweredLayer::Linear(SparseLinear::from_pool(p)?),
            Layer::ResidualAdd { from } => LoweredLayer::Residual(residual_source(*from, earlier_len)?),
            Layer::Flatten => LoweredLayer::Identity,
        })
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), ModelError> {
    if got != want {
        return Err(ModelError::Shape(format!("{what}: {got} values, expected {want}")));
    }
    Ok(())
}

/// Index into the round's value list for a residual source.
pub(crate) fn residual_source(from: i32, available: usize) -> Result<usize, ModelError> {
    let idx = from + 1;
    if idx < 0 || idx as usize >= available {
        return Err(ModelError::Shape(format!("residual source {from} not available")));
    }
    Ok(idx as usize)
}

/// One server round: linear layers closed by a client-side activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Round {
    pub layers: Vec<Layer>,
    pub activation: ActivationSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantModel {
    pub name: String,
    pub input_shape: Shape,
    pub input_range: [i64; 2],
    pub accumulator_bits: u32,
    pub weight_bits: u32,
    pub activation_bits: u32,
    pub rounds: Vec<Round>,
}

/// Per-round sizes derived at validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundGeometry {
    pub input_len: usize,
    pub output_len: usize,
}

impl QuantModel {
    /// Checks shapes, bit-widths and the worst-case accumulator bound.
    pub fn validate(&self) -> Result<Vec<RoundGeometry>, ModelError> {
        if !(2..=16).contains(&self.accumulator_bits) {
            return Err(ModelError::Manifest(format!("accumulator_bits {} outside 2..=16", self.accumulator_bits)));
        }
        if !(1..=16).contains(&self.weight_bits) || !(1..=16).contains(&self.activation_bits) {
            return Err(ModelError::Manifest("weight_bits and activation_bits must lie in 1..=16".into()));
        }
        if self.rounds.is_empty() {
            return Err(ModelError::Manifest("model has no rounds".into()));
        }
        self.check_range("input_range", self.input_range)?;
        let wmax = (1i64 << (self.weight_bits - 1)) - 1;
        let wmin = -(1i64 << (self.weight_bits - 1));
        let amax = (1i64 << (self.accumulator_bits - 1)) - 1;
        let amin = -(1i64 << (self.accumulator_bits - 1));
        let mut shape = self.input_shape;
        let mut range = self.input_range;
        let mut geo = Vec::with_capacity(self.rounds.len());
        let last = self.rounds.len() - 1;
        for (r, round) in self.rounds.iter().enumerate() {
            let act = round.activation;
            let is_last = r == last;
            if (act.kind == ActivationKind::Softmax) != is_last {
                return Err(ModelError::Activation(format!(
                    "round {r}: softmax must close the final round and only that round"
                )));
            }
            if !(act.eta.is_finite() && act.eta > 0.0) {
                return Err(ModelError::Activation(format!("round {r}: eta must be positive")));
            }
            if !is_last {
                self.check_range("clip", act.clip)?;
            }
            if round.layers.is_empty() {
                return Err(ModelError::Manifest(format!("round {r} has no layers")));
            }
            let input_len = volume(shape);
            let mut shapes = vec![shape];
            let mut lo = vec![range[0]; input_len];
            let mut hi = vec![range[1]; input_len];
            let mut bounds = vec![(lo.clone(), hi.clone())];
            for (j, layer) in round.layers.iter().enumerate() {
                if let Some(v) = layer.weights().find(|&w| w < wmin || w > wmax) {
                    return Err(ModelError::WeightRange {
                        layer: format!("round {r} layer {j} ({})", layer.kind_name()),
                        value: v,
                        bits: self.weight_bits,
                    });
                }
                shape = layer.out_shape(shape, &shapes)?;
                match layer.lower(shapes.len())? {
                    LoweredLayer::Linear(sl) => (lo, hi) = sl.interval(&lo, &hi),
                    LoweredLayer::Residual(idx) => {
                        let (slo, shi) = &bounds[idx];
                        lo = lo.iter().zip(slo).map(|(a, b)| a + b).collect();
                        hi = hi.iter().zip(shi).map(|(a, b)| a + b).collect();
                    }
                    LoweredLayer::Identity => {}
                }
                for &v in lo.iter().chain(&hi) {
                    if v < amin || v > amax {
                        return Err(ModelError::AccumulatorBound {
                            round: r,
                            layer: j,
                            value: v,
                            bits: self.accumulator_bits,
                        });
                    }
                }
                shapes.push(shape);
                bounds.push((lo.clone(), hi.clone()));
            }
            geo.push(RoundGeometry { input_len, output_len: volume(shape) });
            range = act.clip;
        }
        Ok(geo)
    }

    fn check_range(&self, what: &str, r: [i64; 2]) -> Result<(), ModelError> {
        if r[0] > r[1] || (r[1] - r[0]) >= 1i64 << self.activation_bits {
            return Err(ModelError::Activation(format!(
                "{what} [{}, {}] does not fit {} activation bits",
                r[0], r[1], self.activation_bits
            )));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        volume(self.input_shape)
    }

    pub fn num_classes(&self) -> Result<usize, ModelError> {
        Ok(self.validate()?.last().map(|g| g.output_len).unwrap_or(0))
    }
}
