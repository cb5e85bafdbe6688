//! Model files: a JSON manifest plus a little-endian `i32` weights blob.
//! Tensor references give a byte `offset` into the blob and an element
//! count `len`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{ActivationSpec, AvgPool, Conv2d, FullyConnected, Layer, QuantModel, Round, Shape};
use super::ModelError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRef {
    pub offset: u64,
    pub len: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerManifest {
    Conv2d {
        in_shape: Shape,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        weights: TensorRef,
        bias: TensorRef,
    },
    FullyConnected {
        inputs: usize,
        outputs: usize,
        weights: TensorRef,
        bias: TensorRef,
    },
    AvgPool {
        in_shape: Shape,
        kernel: usize,
        stride: usize,
    },
    ResidualAdd {
        from: i32,
    },
    Flatten,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundManifest {
    pub layers: Vec<LayerManifest>,
    pub activation: ActivationSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub name: String,
    pub input_shape: Shape,
    pub input_range: [i64; 2],
    pub accumulator_bits: u32,
    pub weight_bits: u32,
    pub activation_bits: u32,
    /// Blob file name, relative to the manifest.
    pub weights: String,
    pub rounds: Vec<RoundManifest>,
}

fn read_tensor(blob: &[u8], r: TensorRef, want: usize, what: &str) -> Result<Vec<i32>, ModelError> {
    if r.len as usize != want {
        return Err(ModelError::Manifest(format!("{what}: len {} but shape needs {want}", r.len)));
    }
    if r.offset % 4 != 0 {
        return Err(ModelError::Blob(format!("{what}: offset {} not 4-byte aligned", r.offset)));
    }
    let start = r.offset as usize;
    let end = r.len.checked_mul(4).and_then(|b| b.checked_add(r.offset)).map(|e| e as usize);
    match end {
        Some(end) if end <= blob.len() => {
            Ok(blob[start..end].chunks_exact(4).map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
        }
        _ => Err(ModelError::Blob(format!("{what}: range beyond {} bytes", blob.len()))),
    }
}

/// Builds and validates a model from manifest text and blob bytes.
pub fn parse_model(manifest: &str, blob: &[u8]) -> Result<QuantModel, ModelError> {
    let raw: serde_json::Value = serde_json::from_str(manifest)?;
    match raw.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(ModelError::Version(v as u32)),
        None => return Err(ModelError::Manifest("missing version".into())),
    }
    let man: Manifest = serde_json::from_value(raw)?;
    let mut rounds = Vec::with_capacity(man.rounds.len());
    for (r, rm) in man.rounds.iter().enumerate() {
        let mut layers = Vec::with_capacity(rm.layers.len());
        for (j, lm) in rm.layers.iter().enumerate() {
            let tag = |s: &str| format!("round {r} layer {j} {s}");
            layers.push(match *lm {
                LayerManifest::Conv2d { in_shape, out_channels, kernel, stride, padding, weights, bias } => {
                    let nw = kernel[0] * kernel[1] * in_shape[2] * out_channels;
                    Layer::Conv2d(Conv2d {
                        in_shape,
                        out_channels,
                        kernel,
                        stride,
                        padding,
                        weights: read_tensor(blob, weights, nw, &tag("weights"))?,
                        bias: read_tensor(blob, bias, out_channels, &tag("bias"))?,
                    })
                }
                LayerManifest::FullyConnected { inputs, outputs, weights, bias } => {
                    Layer::FullyConnected(FullyConnected {
                        inputs,
                        outputs,
                        weights: read_tensor(blob, weights, inputs * outputs, &tag("weights"))?,
                        bias: read_tensor(blob, bias, outputs, &tag("bias"))?,
                    })
                }
                LayerManifest::AvgPool { in_shape, kernel, stride } => {
                    Layer::AvgPool(AvgPool { in_shape, kernel, stride })
                }
                LayerManifest::ResidualAdd { from } => Layer::ResidualAdd { from },
                LayerManifest::Flatten => Layer::Flatten,
            });
        }
        rounds.push(Round { layers, activation: rm.activation });
    }
    let model = QuantModel {
        name: man.name,
        input_shape: man.input_shape,
        input_range: man.input_range,
        accumulator_bits: man.accumulator_bits,
        weight_bits: man.weight_bits,
        activation_bits: man.activation_bits,
        rounds,
    };
    model.validate()?;
    Ok(model)
}

impl QuantModel {
    /// Manifest and blob; tensors are laid out in layer order, weights
    /// before bias.
    pub fn to_manifest(&self, blob_name: &str) -> (Manifest, Vec<u8>) {
        let mut blob = Vec::new();
        let mut put = |v: &[i32]| {
            let r = TensorRef { offset: blob.len() as u64, len: v.len() as u64 };
            for x in v {
                blob.extend_from_slice(&x.to_le_bytes());
            }
            r
        };
        let rounds = self
            .rounds
            .iter()
            .map(|round| RoundManifest {
                layers: round
                    .layers
                    .iter()
                    .map(|l| match l {
                        Layer::Conv2d(c) => LayerManifest::Conv2d {
                            in_shape: c.in_shape,
                            out_channels: c.out_channels,
                            kernel: c.kernel,
                            stride: c.stride,
                            padding: c.padding,
                            weights: put(&c.weights),
                            bias: put(&c.bias),
                        },
                        Layer::FullyConnected(f) => LayerManifest::FullyConnected {
                            inputs: f.inputs,
                            outputs: f.outputs,
                            weights: put(&f.weights),
                            bias: put(&f.bias),
                        },
                        Layer::AvgPool(p) => {
                            LayerManifest::AvgPool { in_shape: p.in_shape, kernel: p.kernel, stride: p.stride }
                        }
                        Layer::ResidualAdd { from } => LayerManifest::ResidualAdd { from: *from },
                        Layer::Flatten => LayerManifest::Flatten,
                    })
                    .collect(),
                activation: round.activation,
            })
            .collect();
        let man = Manifest {
            version: FORMAT_VERSION,
            name: self.name.clone(),
            input_shape: self.input_shape,
            input_range: self.input_range,
            accumulator_bits: self.accumulator_bits,
            weight_bits: self.weight_bits,
            activation_bits: self.activation_bits,
            weights: blob_name.to_string(),
            rounds,
        };
        (man, blob)
    }
}

/// Reads a manifest and the blob it names (resolved next to the manifest).
pub fn load_model(manifest_path: impl AsRef<Path>) -> Result<QuantModel, ModelError> {
    let path = manifest_path.as_ref();
    let text = fs::read_to_string(path)?;
    let man: serde_json::Value = serde_json::from_str(&text)?;
    let blob_name = man
        .get("weights")
        .and_then(|w| w.as_str())
        .ok_or_else(|| ModelError::Manifest("missing weights file name".into()))?;
    let blob_path = path.parent().unwrap_or_else(|| Path::new(".")).join(blob_name);
    let blob =
        fs::read(&blob_path).map_err(|e| ModelError::Blob(format!("cannot read {}: {e}", blob_path.display())))?;
    parse_model(&text, &blob)
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`.
pub fn save_model(model: &QuantModel, dir: impl AsRef<Path>, stem: &str) -> Result<std::path::PathBuf, ModelError> {
    let dir = dir.as_ref();
    let blob_name = format!("{stem}.bin");
    let (man, blob) = model.to_manifest(&blob_name);
    let path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&man)?;
    text.push('\n');
    fs::write(&path, text)?;
    fs::write(dir.join(blob_name), blob)?;
    Ok(path)
}
