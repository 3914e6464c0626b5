use super::weights::{HeadWeights, LayerWeights, Weights};
use super::{ModelConfig, ModelError};
use crate::mstmap::MstMap;
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Flattened overlapping patches of one map, row-major over the patch grid.
///
/// Each patch is flattened as `(row, frame, channel)` with the channel
/// varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSequence {
    pub grid: (usize, usize),
    pub patch_dim: usize,
    pub data: Vec<f32>,
}

impl PatchSequence {
    pub fn len(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_fn(&[self.len(), self.patch_dim], |i| T::lit(self.data[i] as f64))
    }
}

/// Cuts a map into `P_H x P_W` patches at stride `S_H x S_W`.
pub fn sequentialize(map: &MstMap, cfg: &ModelConfig) -> Result<PatchSequence, ModelError> {
    let (h, w, c) = map.shape();
    let grid = super::token_grid(h, w, cfg.patch_h, cfg.patch_w, cfg.step_h, cfg.step_w).ok_or_else(|| {
        ModelError::Shape(format!("patch {}x{} does not fit map {h}x{w}", cfg.patch_h, cfg.patch_w))
    })?;
    let patch_dim = cfg.patch_h * cfg.patch_w * c;
    let mut data = Vec::with_capacity(grid.0 * grid.1 * patch_dim);
    for i in 0..grid.0 {
        for j in 0..grid.1 {
            for r in i * cfg.step_h..i * cfg.step_h + cfg.patch_h {
                let start = (r * w + j * cfg.step_w) * c;
                data.extend(map.values[start..start + cfg.patch_w * c].iter().map(|&v| v as f32));
            }
        }
    }
    Ok(PatchSequence { grid, patch_dim, data })
}

/// Patch sequences for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub face: PatchSequence,
    pub bg: Option<PatchSequence>,
}

impl ModelInput {
    /// Checks both maps against the configured geometry before cutting them.
    pub fn from_maps(cfg: &ModelConfig, face: &MstMap, bg: Option<&MstMap>) -> Result<Self, ModelError> {
        let check = |what: &str, m: &MstMap, h: usize| -> Result<(), ModelError> {
            let got = m.shape();
            if got != (h, cfg.w, cfg.c) {
                return Err(ModelError::Shape(format!(
                    "{what} map is {}x{}x{}, model expects {h}x{}x{}",
                    got.0, got.1, got.2, cfg.w, cfg.c
                )));
            }
            Ok(())
        };
        check("face", face, cfg.h_face)?;
        let bg = if cfg.use_bg_branch {
            let m = bg.ok_or_else(|| ModelError::Shape("background map required by the background branch".into()))?;
            check("background", m, cfg.h_bg)?;
            Some(sequentialize(m, cfg)?)
        } else {
            None
        };
        Ok(Self { face: sequentialize(face, cfg)?, bg })
    }

    fn check(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        let expect = |what: &str, seq: &PatchSequence, n: usize| -> Result<(), ModelError> {
            if seq.len() != n || seq.patch_dim != cfg.patch_dim() {
                return Err(ModelError::Shape(format!(
                    "{what} input has {} patches of width {}, model expects {n} of width {}",
                    seq.len(),
                    seq.patch_dim,
                    cfg.patch_dim()
                )));
            }
            Ok(())
        };
        expect("face", &self.face, cfg.face_patches())?;
        match (&self.bg, cfg.use_bg_branch) {
            (Some(bg), true) => expect("background", bg, cfg.bg_patches()),
            (None, true) => Err(ModelError::Shape("background input missing".into())),
            _ => Ok(()),
        }
    }
}

/// Attention matrices of one layer application, one `S x S` matrix per head.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerAttention {
    pub label: String,
    pub heads: Vec<Tensor<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionRecord {
    pub layers: Vec<LayerAttention>,
}

impl AttentionRecord {
    pub fn get(&self, label: &str) -> Option<&LayerAttention> {
        self.layers.iter().find(|l| l.label == label)
    }
}

/// Tape handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Logits {
    pub face: Var,
    pub bg: Option<Var>,
    pub combined: Var,
}

/// Parameters registered on a tape.
pub fn register<T: Scalar>(tape: &mut Tape<T>, weights: &Weights<Tensor<T>>) -> Weights<Var> {
    weights.map(|_, t| tape.param(t.clone()))
}

fn linear<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var, ModelError> {
    let y = tape.matmul(x, w)?;
    Ok(tape.add_row(y, b)?)
}

/// Linear patch projection, optional class token, optional position embedding.
pub fn embed<T: Scalar>(
    tape: &mut Tape<T>,
    w: &Weights<Var>,
    patches: Var,
    cls: Option<Var>,
    pos: Option<Var>,
) -> Result<Var, ModelError> {
    let mut z = linear(tape, patches, w.patch_w, w.patch_b)?;
    if let Some(cls) = cls {
        z = tape.concat_rows(&[cls, z])?;
    }
    if let Some(pos) = pos {
        z = tape.add(z, pos)?;
    }
    Ok(z)
}

/// Pre-norm layer: `z + MHSA(LN(z))`, then `z + MLP(LN(z))`.
pub fn encoder_layer<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    lw: &LayerWeights<Var>,
    z: Var,
    mut record: Option<&mut Vec<Tensor<f64>>>,
) -> Result<Var, ModelError> {
    let d = cfg.dim;
    let dh = cfg.head_dim();
    let eps = T::lit(cfg.ln_eps);
    let scale = T::lit(1.0 / (dh as f64).sqrt());

    let h = tape.layer_norm(z, lw.ln1_gain, lw.ln1_bias, eps)?;
    let qkv = tape.matmul(h, lw.qkv)?;
    let mut outs = Vec::with_capacity(cfg.heads);
    for head in 0..cfg.heads {
        let q = tape.slice_cols(qkv, head * dh, dh)?;
        let k = tape.slice_cols(qkv, d + head * dh, dh)?;
        let v = tape.slice_cols(qkv, 2 * d + head * dh, dh)?;
        let s = tape.matmul_ex(q, k, false, true, scale)?;
        let a = tape.softmax(s, 1)?;
        if let Some(rec) = record.as_deref_mut() {
            rec.push(tape.value(a).cast());
        }
        outs.push(tape.matmul(a, v)?);
    }
    let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    let msa = linear(tape, cat, lw.proj_w, lw.proj_b)?;
    let z1 = tape.add(z, msa)?;

    let h2 = tape.layer_norm(z1, lw.ln2_gain, lw.ln2_bias, eps)?;
    let f1 = linear(tape, h2, lw.fc1_w, lw.fc1_b)?;
    let g = tape.gelu(f1)?;
    let f2 = linear(tape, g, lw.fc2_w, lw.fc2_b)?;
    Ok(tape.add(z1, f2)?)
}

fn summary<T: Scalar>(tape: &mut Tape<T>, cfg: &ModelConfig, z: Var) -> Result<Var, ModelError> {
    Ok(if cfg.use_class_token { tape.slice_rows(z, 0, 1)? } else { tape.mean_rows(z)? })
}

fn head<T: Scalar>(tape: &mut Tape<T>, h: &HeadWeights<Var>, x: Var) -> Result<Var, ModelError> {
    linear(tape, x, h.w, h.b)
}

/// Runs one branch through the shared encoder stack.
fn encode_branch<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    w: &Weights<Var>,
    z: Var,
    branch: &str,
    mut record: Option<&mut AttentionRecord>,
) -> Result<Var, ModelError> {
    let mut z = z;
    for (i, lw) in w.encoder.iter().enumerate() {
        let mut heads = Vec::new();
        z = encoder_layer(tape, cfg, lw, z, record.is_some().then_some(&mut heads))?;
        tape.ensure_finite(&format!("{branch} encoder layer {i}"))?;
        if let Some(rec) = record.as_deref_mut() {
            rec.layers.push(LayerAttention { label: format!("{branch}.{i}"), heads });
        }
    }
    Ok(z)
}

/// Full forward pass: shared encoder on both branches, fusion layer on the
/// concatenated patch tokens, three logits.
///
/// Attention matrices are labelled `face.<i>`, `bg.<i>` and `fusion`.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    w: &Weights<Var>,
    input: &ModelInput,
    mut record: Option<&mut AttentionRecord>,
) -> Result<Logits, ModelError> {
    input.check(cfg)?;
    let cls = cfg.use_class_token;

    let face_x = tape.constant(input.face.to_tensor());
    let face_z0 = embed(tape, w, face_x, w.face_cls, w.face_pos)?;
    let face_z = encode_branch(tape, cfg, w, face_z0, "face", record.as_deref_mut())?;
    let face_sum = summary(tape, cfg, face_z)?;
    let face_logit = head(tape, &w.face_head, face_sum)?;

    let mut fusion_parts = Vec::new();
    if let Some(c) = w.combined_cls {
        fusion_parts.push(c);
    }
    let n = cfg.face_patches();
    fusion_parts.push(if cls { tape.slice_rows(face_z, 1, n)? } else { face_z });

    let mut bg_logit = None;
    if cfg.use_bg_branch {
        let bg = input.bg.as_ref().expect("checked above");
        let bg_x = tape.constant(bg.to_tensor());
        let bg_z0 = embed(tape, w, bg_x, w.bg_cls, w.bg_pos)?;
        let bg_z = encode_branch(tape, cfg, w, bg_z0, "bg", record.as_deref_mut())?;
        let bg_sum = summary(tape, cfg, bg_z)?;
        let bh = w.bg_head.as_ref().ok_or_else(|| ModelError::Shape("background head missing".into()))?;
        bg_logit = Some(head(tape, bh, bg_sum)?);
        let m = cfg.bg_patches();
        fusion_parts.push(if cls { tape.slice_rows(bg_z, 1, m)? } else { bg_z });
    }

    let fused_in = tape.concat_rows(&fusion_parts)?;
    let mut heads = Vec::new();
    let fused = encoder_layer(tape, cfg, &w.fusion, fused_in, record.is_some().then_some(&mut heads))?;
    tape.ensure_finite("fusion layer")?;
    if let Some(rec) = record {
        rec.layers.push(LayerAttention { label: "fusion".into(), heads });
    }
    let comb_sum = summary(tape, cfg, fused)?;
    let combined = head(tape, &w.combined_head, comb_sum)?;
    Ok(Logits { face: face_logit, bg: bg_logit, combined })
}

/// Loss terms of one sample.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub face: Var,
    pub bg: Option<Var>,
    pub combined: Var,
    pub total: Var,
}

/// `BCE(face, y) + BCE(bg, 0) + BCE(combined, y)`. The background target is
/// always 0: background regions carry no pulse for either class.
pub fn hierarchical_loss<T: Scalar>(tape: &mut Tape<T>, logits: &Logits, label: f64) -> Result<LossTerms, ModelError> {
    let y = T::lit(label);
    let face = tape.bce_with_logits(logits.face, y)?;
    let combined = tape.bce_with_logits(logits.combined, y)?;
    let mut total = tape.add(face, combined)?;
    let bg = match logits.bg {
        Some(b) => {
            let l = tape.bce_with_logits(b, T::zero())?;
            total = tape.add(total, l)?;
            Some(l)
        }
        None => None,
    };
    Ok(LossTerms { face, bg, combined, total })
}

/// Runs the encoder stack on an arbitrary token matrix. Used to check
/// equivariance properties without the embedding.
pub fn encode_tokens<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    w: &Weights<Var>,
    tokens: Var,
) -> Result<Var, ModelError> {
    encode_branch(tape, cfg, w, tokens, "tokens", None)
}
