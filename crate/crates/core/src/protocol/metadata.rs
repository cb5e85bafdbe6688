use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::model::{ActivationKind, ActivationSpec, QuantModel, Shape};
use crate::params::FheParams;
use crate::ring::RingParams;
use crate::trace_pack::{extraction_exponents, pack_factor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundMeta {
    pub input_len: usize,
    pub output_len: usize,
    pub activation: ActivationSpec,
}

/// What the client needs to run its side of every round without seeing
/// weights. Chunking and slot layout follow from `params` and the sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub model: String,
    pub input_shape: Shape,
    pub input_range: [i64; 2],
    pub params: FheParams,
    pub rounds: Vec<RoundMeta>,
}

impl ModelMetadata {
    pub fn from_model(model: &QuantModel, params: FheParams) -> Result<Self, ProtocolError> {
        let geo = model.validate()?;
        Ok(Self {
            model: model.name.clone(),
            input_shape: model.input_shape,
            input_range: model.input_range,
            params,
            rounds: model
                .rounds
                .iter()
                .zip(geo)
                .map(|(r, g)| RoundMeta { input_len: g.input_len, output_len: g.output_len, activation: r.activation })
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metadata serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        let m: Self = serde_json::from_str(text).map_err(|e| ProtocolError::Metadata(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    /// Structural sanity: rounds chain, softmax closes the last one.
    pub fn check(&self) -> Result<(), ProtocolError> {
        self.params.validate().map_err(|e| ProtocolError::Metadata(e.to_string()))?;
        let bad = |s: String| Err(ProtocolError::Metadata(s));
        if self.rounds.is_empty() {
            return bad("no rounds".into());
        }
        if self.rounds[0].input_len != self.input_shape.iter().product::<usize>() {
            return bad("first round does not take the input shape".into());
        }
        for w in self.rounds.windows(2) {
            if w[0].output_len != w[1].input_len {
                return bad("round sizes do not chain".into());
            }
        }
        for (i, r) in self.rounds.iter().enumerate() {
            if (r.activation.kind == ActivationKind::Softmax) != (i + 1 == self.rounds.len()) {
                return bad(format!("round {}: softmax must close exactly the final round", i + 1));
            }
            if r.input_len == 0 || r.output_len == 0 {
                return bad(format!("round {} is empty", i + 1));
            }
        }
        Ok(())
    }

    pub fn ring(&self) -> RingParams {
        self.params.ring().expect("validated params")
    }

    pub fn round_count(&self) -> u32 {
        self.rounds.len() as u32
    }

    /// Metadata of 1-based round `r`.
    pub fn round(&self, r: u32) -> Option<&RoundMeta> {
        r.checked_sub(1).and_then(|i| self.rounds.get(i as usize))
    }

    /// `⌈E/N⌉` chunks for a state vector of length `len`.
    pub fn chunks(&self, len: usize) -> usize {
        len.div_ceil(self.params.n())
    }

    /// Ciphertexts per chunk: one per extraction exponent.
    pub fn bundle_ciphertexts(&self) -> usize {
        extraction_exponents(&self.ring(), self.params.gamma).expect("validated params").len()
    }

    pub fn packed_count(&self, len: usize) -> usize {
        len.div_ceil(pack_factor(&self.ring(), self.params.beta))
    }

    pub fn upload_ciphertexts(&self, r: u32) -> usize {
        self.round(r).map(|m| self.chunks(m.input_len) * self.bundle_ciphertexts()).unwrap_or(0)
    }

    pub fn download_ciphertexts(&self, r: u32) -> usize {
        self.round(r).map(|m| self.packed_count(m.output_len)).unwrap_or(0)
    }

    /// Ciphertext payload uploaded in round `r`: `k · |bundle| · 16M` bytes.
    pub fn upload_bytes(&self, r: u32) -> usize {
        self.upload_ciphertexts(r) * self.params.ciphertext_bytes()
    }

    pub fn download_bytes(&self, r: u32) -> usize {
        self.download_ciphertexts(r) * self.params.ciphertext_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::toy::toy_model;

    #[test]
    fn sizes_and_json() {
        let m = toy_model(8, 1).unwrap();
        let up: Vec<usize> = (0..=2)
            .map(|g| {
                let md = ModelMetadata::from_model(&m, FheParams::preset(8, g).unwrap()).unwrap();
                assert_eq!(md.round_count(), 3);
                assert_eq!(md.chunks(64), 1);
                assert_eq!(md.chunks(1458), 1);
                assert_eq!(md.chunks(1459), 2);
                assert_eq!(md.packed_count(32), 1);
                assert_eq!(ModelMetadata::from_json(&md.to_json()).unwrap(), md);
                md.upload_bytes(1)
            })
            .collect();
        // 1, t−1 = 2 and (t−1)t = 6 ciphertexts per chunk at M = 3^7
        assert_eq!(up, vec![16 * 2187, 2 * 16 * 2187, 6 * 16 * 2187]);
        let mut md = ModelMetadata::from_model(&m, FheParams::preset(8, 0).unwrap()).unwrap();
        md.rounds[1].input_len = 31;
        assert!(md.check().is_err());
        assert!(ModelMetadata::from_json("{}").is_err());
    }
}
