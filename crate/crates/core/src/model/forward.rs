use super::layers::{ActivationKind, ActivationSpec, QuantModel};
use super::ModelError;

/// Result of the exact integer forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    /// Linear output of every round, before the activation.
    pub pre_activations: Vec<Vec<i64>>,
    /// Requantized input of every round after the first.
    pub activations: Vec<Vec<i64>>,
    /// Final-round linear output.
    pub scores: Vec<i64>,
    pub probabilities: Vec<f64>,
}

impl Forward {
    pub fn argmax(&self) -> usize {
        argmax(&self.scores)
    }
}

pub(crate) fn argmax(v: &[i64]) -> usize {
    // first maximum wins, so ties resolve identically everywhere
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

pub fn relu(y: i64) -> i64 {
    y.max(0)
}

/// `clip(⌊y/η⌉)` with ties rounded away from zero.
pub fn requantize(y: i64, eta: f64, clip: [i64; 2]) -> i64 {
    let q = (y as f64 / eta).round();
    (q as i64).clamp(clip[0], clip[1])
}

/// Applies a non-terminal activation and requantizes.
pub fn activation_apply(values: &[i64], spec: &ActivationSpec) -> Result<Vec<i64>, ModelError> {
    let f: fn(i64) -> i64 = match spec.kind {
        ActivationKind::Relu => relu,
        ActivationKind::Identity => |y| y,
        ActivationKind::Softmax => {
            return Err(ModelError::Activation("softmax is terminal; use softmax()".into()));
        }
    };
    Ok(values.iter().map(|&y| requantize(f(y), spec.eta, spec.clip)).collect())
}

/// Softmax of `scores / η`, stabilized by subtracting the maximum.
pub fn softmax(scores: &[i64], eta: f64) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let mx = scores.iter().copied().max().unwrap_or(0);
    let e: Vec<f64> = scores.iter().map(|&s| ((s - mx) as f64 / eta).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

impl QuantModel {
    /// Exact integer inference: each round runs its layers at full
    /// precision, then the activation and requantization.
    pub fn forward(&self, input: &[i64]) -> Result<Forward, ModelError> {
        let geo = self.validate()?;
        if input.len() != self.input_len() {
            return Err(ModelError::Shape(format!(
                "input has {} values, model takes {}",
                input.len(),
                self.input_len()
            )));
        }
        let [lo, hi] = self.input_range;
        if let Some((index, &value)) = input.iter().enumerate().find(|(_, &v)| v < lo || v > hi) {
            return Err(ModelError::InputRange { index, value, lo, hi });
        }
        let amax = (1i64 << (self.accumulator_bits - 1)) - 1;
        let amin = -(1i64 << (self.accumulator_bits - 1));
        let mut x = input.to_vec();
        let mut out = Forward {
            pre_activations: Vec::new(),
            activations: Vec::new(),
            scores: Vec::new(),
            probabilities: Vec::new(),
        };
        for (r, round) in self.rounds.iter().enumerate() {
            let mut vals = vec![x.clone()];
            for (j, layer) in round.layers.iter().enumerate() {
                let y = layer.forward(vals.last().expect("round input present"), &vals);
                if let Some(&value) = y.iter().find(|&&v| v < amin || v > amax) {
                    return Err(ModelError::Overflow { round: r, layer: j, value });
                }
                vals.push(y);
            }
            let y = vals.pop().expect("at least one layer");
            debug_assert_eq!(y.len(), geo[r].output_len);
            if round.activation.kind == ActivationKind::Softmax {
                out.probabilities = softmax(&y, round.activation.eta);
                out.scores = y.clone();
                out.pre_activations.push(y);
            } else {
                x = activation_apply(&y, &round.activation)?;
                out.pre_activations.push(y);
                out.activations.push(x.clone());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requantize_rules() {
        assert_eq!(requantize(0, 3.0, [0, 15]), 0);
        assert_eq!(requantize(7, 2.0, [0, 15]), 4);
        assert_eq!(requantize(-7, 2.0, [-15, 15]), -4);
        assert_eq!(requantize(100, 2.0, [0, 15]), 15);
        assert_eq!(requantize(-5, 1.0, [0, 15]), 0);
        assert_eq!(relu(-3), 0);
        assert_eq!(relu(3), 3);
    }

    #[test]
    fn requantize_monotone_and_idempotent() {
        let mut prev = i64::MIN;
        for y in -200..200 {
            let q = requantize(y, 3.7, [0, 15]);
            assert!(q >= prev);
            prev = q;
        }
        for v in 0..=15 {
            assert_eq!(requantize(v, 1.0, [0, 15]), v);
        }
    }

    #[test]
    fn softmax_normalized_and_stable() {
        let p = softmax(&[1000, 999, -5], 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1] && p[1] > p[2]);
        assert!(softmax(&[], 1.0).is_empty());
        let u = softmax(&[3, 3, 3, 3], 2.0);
        assert!(u.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn argmax_first_max() {
        assert_eq!(argmax(&[1, 5, 5, 2]), 1);
        assert_eq!(argmax(&[-3]), 0);
    }
}
