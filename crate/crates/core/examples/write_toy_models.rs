//! Regenerates `models/toy_cnn_b{8,12,16}.{json,bin}` and their vectors.
//!
//! Usage: `cargo run --example write_toy_models [-- <output dir>]`

use std::path::PathBuf;

use hyfhe_core::model::toy::{random_input, toy_model};
use hyfhe_core::model::{save_model, write_vectors, TestVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Seed of the shipped weights; vectors use `VECTOR_SEED + b`.
const MODEL_SEED: u64 = 1;
const VECTOR_SEED: u64 = 100;
const VECTORS: usize = 10;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models"));
    std::fs::create_dir_all(&dir)?;
    for b in [8u32, 12, 16] {
        let model = toy_model(b, MODEL_SEED)?;
        let stem = format!("toy_cnn_b{b}");
        let path = save_model(&model, &dir, &stem)?;
        let mut rng = ChaCha20Rng::seed_from_u64(VECTOR_SEED + b as u64);
        let vectors = (0..VECTORS)
            .map(|_| {
                let input = random_input(&model, &mut rng);
                let scores = model.forward(&input).map(|f| f.scores)?;
                Ok(TestVector { input, scores })
            })
            .collect::<Result<Vec<_>, hyfhe_core::model::ModelError>>()?;
        write_vectors(dir.join(format!("{stem}.vectors.json")), &vectors)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
