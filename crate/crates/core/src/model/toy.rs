//! Deterministic toy CNNs: `8×8×1 → conv(3×3, s2) → conv(3×3, s2) → dense`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::layers::{ActivationKind, ActivationSpec, Conv2d, FullyConnected, Layer, QuantModel, Round};
use super::ModelError;

pub const TOY_CLASSES: usize = 10;

/// Value ranges per accumulator width: weights `[w_lo, w_hi]`, activations
/// `[0, a_hi]`, requantization scale `η`.
struct Profile {
    weight_bits: u32,
    w: (i32, i32),
    activation_bits: u32,
    a_hi: i64,
    eta: f64,
}

fn profile(b: u32) -> Result<Profile, ModelError> {
    Ok(match b {
        8 => Profile { weight_bits: 2, w: (-2, 1), activation_bits: 2, a_hi: 3, eta: 2.0 },
        12 => Profile { weight_bits: 4, w: (-8, 7), activation_bits: 3, a_hi: 7, eta: 8.0 },
        16 => Profile { weight_bits: 4, w: (-8, 7), activation_bits: 4, a_hi: 15, eta: 16.0 },
        _ => return Err(ModelError::Manifest(format!("no toy profile for b = {b}"))),
    })
}

/// The toy model for accumulator width `b ∈ {8, 12, 16}`. Seeds whose
/// weights would break the accumulator bound are skipped deterministically.
pub fn toy_model(b: u32, seed: u64) -> Result<QuantModel, ModelError> {
    let prof = profile(b)?;
    for attempt in 0..64u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(attempt));
        let mut w = |n: usize| -> Vec<i32> { (0..n).map(|_| rng.gen_range(prof.w.0..=prof.w.1)).collect() };
        let conv1 = Conv2d {
            in_shape: [8, 8, 1],
            out_channels: 2,
            kernel: [3, 3],
            stride: 2,
            padding: 1,
            weights: w(9 * 2),
            bias: w(2),
        };
        let conv2 = Conv2d {
            in_shape: [4, 4, 2],
            out_channels: 4,
            kernel: [3, 3],
            stride: 2,
            padding: 1,
            weights: w(18 * 4),
            bias: w(4),
        };
        let fc =
            FullyConnected { inputs: 16, outputs: TOY_CLASSES, weights: w(16 * TOY_CLASSES), bias: w(TOY_CLASSES) };
        let act = ActivationSpec { kind: ActivationKind::Relu, eta: prof.eta, clip: [0, prof.a_hi] };
        let model = QuantModel {
            name: format!("toy-cnn-b{b}"),
            input_shape: [8, 8, 1],
            input_range: [0, prof.a_hi],
            accumulator_bits: b,
            weight_bits: prof.weight_bits,
            activation_bits: prof.activation_bits,
            rounds: vec![
                Round { layers: vec![Layer::Conv2d(conv1)], activation: act },
                Round { layers: vec![Layer::Conv2d(conv2)], activation: act },
                Round {
                    layers: vec![Layer::Flatten, Layer::FullyConnected(fc)],
                    activation: ActivationSpec { kind: ActivationKind::Softmax, eta: prof.eta, clip: [0, 0] },
                },
            ],
        };
        if model.validate().is_ok() {
            return Ok(model);
        }
    }
    Err(ModelError::Manifest(format!("no valid toy model found for b = {b}, seed = {seed}")))
}

/// Uniform random input in the model's input range.
pub fn random_input(model: &QuantModel, rng: &mut impl Rng) -> Vec<i64> {
    let [lo, hi] = model.input_range;
    (0..model.input_len()).map(|_| rng.gen_range(lo..=hi)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_models_validate() {
        for b in [8, 12, 16] {
            let m = toy_model(b, 7).unwrap();
            let geo = m.validate().unwrap();
            assert_eq!(
                geo.iter().map(|g| (g.input_len, g.output_len)).collect::<Vec<_>>(),
                vec![(64, 32), (32, 16), (16, 10)]
            );
            assert_eq!(m.num_classes().unwrap(), TOY_CLASSES);
            assert_eq!(toy_model(b, 7).unwrap(), m);
        }
        assert_ne!(toy_model(8, 1).unwrap(), toy_model(8, 2).unwrap());
        assert!(toy_model(9, 0).is_err());
    }
}
