use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, QuantModel};

/// One golden pair: an integer input tensor and its expected class scores.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestVector {
    pub input: Vec<i64>,
    pub scores: Vec<i64>,
}

pub fn read_vectors(path: impl AsRef<Path>) -> Result<Vec<TestVector>, ModelError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_vectors(path: impl AsRef<Path>, vectors: &[TestVector]) -> Result<(), ModelError> {
    let mut text = serde_json::to_string(vectors)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

impl QuantModel {
    /// Checks every vector against the integer oracle; returns the indices
    /// that disagree.
    pub fn check_vectors(&self, vectors: &[TestVector]) -> Result<Vec<usize>, ModelError> {
        let mut bad = Vec::new();
        for (i, v) in vectors.iter().enumerate() {
            if v.input.len() != self.input_len() {
                return Err(ModelError::Vectors(format!("vector {i}: {} inputs", v.input.len())));
            }
            if self.forward(&v.input)?.scores != v.scores {
                bad.push(i);
            }
        }
        Ok(bad)
    }
}
