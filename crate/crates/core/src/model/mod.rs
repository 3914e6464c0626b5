//! Two-branch transformer over face and background maps.
//!
//! Face and background patch sequences share one encoder stack; their patch
//! tokens are then concatenated behind a joint class token and passed through
//! a separate fusion layer. Three linear heads score the face summary, the
//! background summary, and the joint summary.

mod attention;
mod budget;
mod checkpoint;
mod config;
mod diag;
mod forward;
mod weights;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use attention::{export_attention, fusion_attention};
pub use budget::{flop_count, param_count, FlopReport, ParamBreakdown};
pub use checkpoint::Checkpoint;
pub use config::{token_grid, windows, ModelConfig};
pub use diag::{loss_gradcheck, random_input, scrambled_weights};
pub use forward::{
    embed, encode_tokens, encoder_layer, forward, hierarchical_loss, register, sequentialize, AttentionRecord,
    LayerAttention, Logits, LossTerms, ModelInput, PatchSequence,
};
pub use weights::{shapes, HeadWeights, LayerWeights, ModelWeights, Weights};

use crate::tensor::{sigmoid, Scalar, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model setting {key}: {message}")]
    InvalidConfig { key: &'static str, message: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ModelError::Io { path: path.to_path_buf(), source }
    }
}

/// Logits and score of one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub face_logit: f64,
    pub bg_logit: Option<f64>,
    pub combined_logit: f64,
}

impl Prediction {
    /// Probability of a live face.
    pub fn score(&self) -> f64 {
        sigmoid(self.combined_logit)
    }
}

/// Loss values of one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleLoss {
    pub total: f64,
    pub face: f64,
    pub bg: Option<f64>,
    pub combined: f64,
}

/// Forward pass plus loss for a labelled sample on any tape.
pub fn sample_loss<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    w: &Weights<Var>,
    input: &ModelInput,
    label: f64,
) -> Result<LossTerms, ModelError> {
    let logits = forward(tape, cfg, w, input, None)?;
    let terms = hierarchical_loss(tape, &logits, label)?;
    tape.ensure_finite("loss")?;
    Ok(terms)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransRppg {
    pub cfg: ModelConfig,
    pub weights: ModelWeights,
}

fn scalar_of<T: Scalar>(tape: &Tape<T>, v: Var) -> f64 {
    tape.value(v).data()[0].as_f64()
}

impl TransRppg {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let weights = ModelWeights::init(&cfg, seed);
        Ok(Self { cfg, weights })
    }

    pub fn from_weights(cfg: ModelConfig, weights: ModelWeights) -> Result<Self, ModelError> {
        cfg.validate()?;
        let expected = shapes(&cfg);
        let ok = expected.named().len() == weights.named().len()
            && expected.named().iter().zip(weights.named()).all(|((n1, s), (n2, t))| *n1 == n2 && s.as_slice() == t.shape());
        if !ok {
            return Err(ModelError::Shape("weights do not match the model configuration".into()));
        }
        Ok(Self { cfg, weights })
    }

    fn run(&self, input: &ModelInput, record: Option<&mut AttentionRecord>) -> Result<Prediction, ModelError> {
        let mut tape = Tape::<f32>::new();
        let w = self.weights.map(|_, t| tape.constant(t.clone()));
        let l = forward(&mut tape, &self.cfg, &w, input, record)?;
        Ok(Prediction {
            face_logit: scalar_of(&tape, l.face),
            bg_logit: l.bg.map(|b| scalar_of(&tape, b)),
            combined_logit: scalar_of(&tape, l.combined),
        })
    }

    pub fn predict(&self, input: &ModelInput) -> Result<Prediction, ModelError> {
        self.run(input, None)
    }

    pub fn predict_with_attention(&self, input: &ModelInput) -> Result<(Prediction, AttentionRecord), ModelError> {
        let mut rec = AttentionRecord::default();
        let p = self.run(input, Some(&mut rec))?;
        Ok((p, rec))
    }

    /// Loss and gradients (canonical parameter order) for one sample.
    pub fn loss_and_grad(&self, input: &ModelInput, label: f64) -> Result<(SampleLoss, Vec<Vec<f32>>), ModelError> {
        let mut tape = Tape::<f32>::new();
        let w = register(&mut tape, &self.weights);
        let terms = sample_loss(&mut tape, &self.cfg, &w, input, label)?;
        let mut grads = tape.backward(terms.total)?;
        let loss = SampleLoss {
            total: scalar_of(&tape, terms.total),
            face: scalar_of(&tape, terms.face),
            bg: terms.bg.map(|b| scalar_of(&tape, b)),
            combined: scalar_of(&tape, terms.combined),
        };
        let g = w
            .to_vec()
            .into_iter()
            .map(|v| grads.take(v).unwrap_or_else(|| vec![0.0; tape.value(v).len()]))
            .collect();
        Ok((loss, g))
    }

    pub fn params(&self) -> ParamBreakdown {
        param_count(&self.cfg)
    }

    pub fn flops(&self) -> FlopReport {
        flop_count(&self.cfg)
    }
}

#[cfg(test)]
mod tests;
