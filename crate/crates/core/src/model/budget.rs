//! Parameter and compute accounting.

use super::weights::shapes;
use super::ModelConfig;

/// Parameter counts per group, summed from the actual weight shapes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBreakdown {
    pub patch_embed: usize,
    pub encoder: usize,
    pub fusion: usize,
    pub pos_embed: usize,
    pub cls_tokens: usize,
    pub heads: usize,
}

impl ParamBreakdown {
    /// Patch embedding plus all transformer layers.
    pub fn backbone(&self) -> usize {
        self.patch_embed + self.encoder + self.fusion
    }

    pub fn total(&self) -> usize {
        self.backbone() + self.pos_embed + self.cls_tokens + self.heads
    }

    pub fn total_without_pos(&self) -> usize {
        self.total() - self.pos_embed
    }

    pub fn report(&self) -> String {
        format!(
            "patch_embed={}\nencoder={}\nfusion={}\npos_embed={}\ncls_tokens={}\nheads={}\nbackbone={}\ntotal_without_pos={}\ntotal={}\n",
            self.patch_embed,
            self.encoder,
            self.fusion,
            self.pos_embed,
            self.cls_tokens,
            self.heads,
            self.backbone(),
            self.total_without_pos(),
            self.total()
        )
    }
}

pub fn param_count(cfg: &ModelConfig) -> ParamBreakdown {
    let mut b = ParamBreakdown { patch_embed: 0, encoder: 0, fusion: 0, pos_embed: 0, cls_tokens: 0, heads: 0 };
    for (name, shape) in shapes(cfg).named() {
        let n: usize = shape.iter().product();
        let slot = if name.starts_with("patch_embed") {
            &mut b.patch_embed
        } else if name.starts_with("encoder.") {
            &mut b.encoder
        } else if name.starts_with("fusion.") {
            &mut b.fusion
        } else if name.ends_with("pos_embed") {
            &mut b.pos_embed
        } else if name.ends_with("cls_token") {
            &mut b.cls_tokens
        } else {
            &mut b.heads
        };
        *slot += n;
    }
    b
}

/// Multiply-accumulate counts for one sample.
///
/// `linear` covers every dense projection (patch embedding, QKV, output
/// projection, MLP, classifier heads) applied per token. `attention` covers
/// the two sequence-length-squared products per head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlopReport {
    pub embed: u64,
    pub encoder_linear: u64,
    pub encoder_attention: u64,
    pub fusion_linear: u64,
    pub fusion_attention: u64,
    pub heads: u64,
}

impl FlopReport {
    pub fn linear(&self) -> u64 {
        self.embed + self.encoder_linear + self.fusion_linear + self.heads
    }

    pub fn attention(&self) -> u64 {
        self.encoder_attention + self.fusion_attention
    }

    pub fn total(&self) -> u64 {
        self.linear() + self.attention()
    }

    pub fn report(&self) -> String {
        format!(
            "embed={}\nencoder_linear={}\nencoder_attention={}\nfusion_linear={}\nfusion_attention={}\nheads={}\nlinear_macs={}\nattention_macs={}\ntotal_macs={}\n",
            self.embed,
            self.encoder_linear,
            self.encoder_attention,
            self.fusion_linear,
            self.fusion_attention,
            self.heads,
            self.linear(),
            self.attention(),
            self.total()
        )
    }
}

pub fn flop_count(cfg: &ModelConfig) -> FlopReport {
    let d = cfg.dim as u64;
    let r = cfg.mlp_dim() as u64;
    let layer_linear = |s: u64| s * (3 * d * d + d * d + 2 * d * r);
    let layer_attn = |s: u64| 2 * s * s * d;
    let l = cfg.layers as u64;
    let face_s = cfg.face_seq_len() as u64;
    let bg_s = if cfg.use_bg_branch { cfg.bg_seq_len() as u64 } else { 0 };
    let fusion_s = cfg.fusion_seq_len() as u64;
    let patches = (cfg.face_patches() + cfg.bg_patches()) as u64;
    let n_heads = if cfg.use_bg_branch { 3 } else { 2 };
    FlopReport {
        embed: patches * cfg.patch_dim() as u64 * d,
        encoder_linear: l * (layer_linear(face_s) + layer_linear(bg_s)),
        encoder_attention: l * (layer_attn(face_s) + layer_attn(bg_s)),
        fusion_linear: layer_linear(fusion_s),
        fusion_attention: layer_attn(fusion_s),
        heads: n_heads * d,
    }
}
