//! Finite-difference checks of the full hierarchical loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sample_loss, shapes, ModelConfig, ModelError, ModelInput, Weights};
use crate::mstmap::MstMap;
use crate::tensor::{grad_check_many, GradCheckReport, Tensor};

/// Weights with every entry drawn uniformly from `base +- scale`, where the
/// base is 1 for layer-norm gains and 0 elsewhere.
pub fn scrambled_weights(cfg: &ModelConfig, seed: u64, scale: f64) -> Weights<Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shapes(cfg).map(|name, s| {
        let base = if name.ends_with(".gain") { 1.0 } else { 0.0 };
        Tensor::from_fn(s, |_| base + scale * rng.random_range(-1.0..1.0))
    })
}

/// Random maps shaped for `cfg`.
pub fn random_input(cfg: &ModelConfig, seed: u64) -> Result<ModelInput, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = |rows: usize| MstMap {
        rows,
        t: cfg.w,
        channels: cfg.c,
        values: (0..rows * cfg.w * cfg.c).map(|_| rng.random::<f64>()).collect(),
        normalized: true,
        subset_index: (1..=rows as u32).collect(),
    };
    let face = map(cfg.h_face);
    let bg = cfg.use_bg_branch.then(|| map(cfg.h_bg));
    ModelInput::from_maps(cfg, &face, bg.as_ref())
}

/// Gradient of the total loss with respect to every parameter against
/// central differences, for both labels. At most `max_entries` entries per
/// parameter tensor are probed.
pub fn loss_gradcheck(
    cfg: &ModelConfig,
    seed: u64,
    max_entries: Option<usize>,
) -> Result<Vec<(String, GradCheckReport)>, ModelError> {
    cfg.validate()?;
    let w = scrambled_weights(cfg, seed, 0.3);
    let input = random_input(cfg, seed + 1)?;
    let mut out = Vec::new();
    for label in [0.0, 1.0] {
        let report = grad_check_many(
            |tape, vars| {
                let wv = w.with_values(vars.to_vec()).expect("one variable per parameter");
                sample_loss(tape, cfg, &wv, &input, label).map(|t| t.total)
            },
            &w.to_vec(),
            1e-5,
            max_entries,
        )?;
        out.push((format!("loss(label={label})"), report));
    }
    Ok(out)
}
