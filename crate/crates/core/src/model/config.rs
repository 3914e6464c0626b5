use super::ModelError;

/// Architecture hyperparameters.
///
/// Defaults: 63x300x3 face map, 15x300 background map, 3x30 patches with a
/// 1x15 stride, width 96 split over 3 heads, 6 shared encoder layers plus
/// one fusion layer, MLP hidden width 2x.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub h_face: usize,
    pub h_bg: usize,
    pub w: usize,
    pub c: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub step_h: usize,
    pub step_w: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub mlp_ratio: usize,
    pub use_class_token: bool,
    pub use_pos_embed: bool,
    pub use_bg_branch: bool,
    pub init_std: f64,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            h_face: 63,
            h_bg: 15,
            w: 300,
            c: 3,
            patch_h: 3,
            patch_w: 30,
            step_h: 1,
            step_w: 15,
            dim: 96,
            heads: 3,
            layers: 6,
            mlp_ratio: 2,
            use_class_token: true,
            use_pos_embed: true,
            use_bg_branch: true,
            init_std: 0.02,
            ln_eps: 1e-6,
        }
    }
}

/// Sliding-window placements along one axis: `floor((len - patch + step) / step)`.
pub fn windows(len: usize, patch: usize, step: usize) -> Option<usize> {
    if patch == 0 || step == 0 || patch > len {
        return None;
    }
    Some((len - patch + step) / step)
}

/// `(N_H, N_W)` for a map of `h x w`.
pub fn token_grid(h: usize, w: usize, patch_h: usize, patch_w: usize, step_h: usize, step_w: usize) -> Option<(usize, usize)> {
    Some((windows(h, patch_h, step_h)?, windows(w, patch_w, step_w)?))
}

impl ModelConfig {
    /// The small geometry used for finite-difference checks.
    pub fn mini() -> Self {
        Self { h_face: 9, h_bg: 3, w: 60, dim: 12, heads: 3, layers: 2, ..Self::default() }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_h * self.patch_w * self.c
    }

    pub fn mlp_dim(&self) -> usize {
        self.dim * self.mlp_ratio
    }

    pub fn face_grid(&self) -> Option<(usize, usize)> {
        token_grid(self.h_face, self.w, self.patch_h, self.patch_w, self.step_h, self.step_w)
    }

    pub fn bg_grid(&self) -> Option<(usize, usize)> {
        token_grid(self.h_bg, self.w, self.patch_h, self.patch_w, self.step_h, self.step_w)
    }

    /// Patch tokens from the face map (N).
    pub fn face_patches(&self) -> usize {
        self.face_grid().map_or(0, |(a, b)| a * b)
    }

    /// Patch tokens from the background map (M), 0 without the branch.
    pub fn bg_patches(&self) -> usize {
        if self.use_bg_branch {
            self.bg_grid().map_or(0, |(a, b)| a * b)
        } else {
            0
        }
    }

    fn cls(&self) -> usize {
        usize::from(self.use_class_token)
    }

    /// Sequence length in the face branch (N + 1 with a class token).
    pub fn face_seq_len(&self) -> usize {
        self.face_patches() + self.cls()
    }

    pub fn bg_seq_len(&self) -> usize {
        self.bg_patches() + self.cls()
    }

    /// Sequence length seen by the fusion layer.
    pub fn fusion_seq_len(&self) -> usize {
        self.face_patches() + self.bg_patches() + self.cls()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |key: &'static str, message: String| Err(ModelError::InvalidConfig { key, message });
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return fail("dim", format!("width {} must be a positive multiple of heads {}", self.dim, self.heads));
        }
        if self.c == 0 {
            return fail("c", "channel count must be positive".into());
        }
        if self.mlp_ratio == 0 {
            return fail("mlp_ratio", "must be positive".into());
        }
        if self.step_h == 0 || self.step_w == 0 {
            return fail("step", format!("steps must be >= 1, got {}x{}", self.step_h, self.step_w));
        }
        if self.patch_h == 0 || self.patch_w == 0 {
            return fail("patch", "patch extents must be positive".into());
        }
        if self.face_grid().is_none() {
            return fail(
                "patch",
                format!("patch {}x{} larger than face map {}x{}", self.patch_h, self.patch_w, self.h_face, self.w),
            );
        }
        if self.use_bg_branch && self.bg_grid().is_none() {
            return fail(
                "h_bg",
                format!("patch {}x{} larger than background map {}x{}", self.patch_h, self.patch_w, self.h_bg, self.w),
            );
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return fail("init_std", format!("must be >= 0, got {}", self.init_std));
        }
        if !(self.ln_eps.is_finite() && self.ln_eps > 0.0) {
            return fail("ln_eps", format!("must be > 0, got {}", self.ln_eps));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_token_counts() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.face_grid(), Some((61, 19)));
        assert_eq!(cfg.face_patches(), 1159);
        assert_eq!(cfg.bg_patches(), 247);
        assert_eq!(cfg.face_seq_len(), 1160);
        assert_eq!(cfg.bg_seq_len(), 248);
        assert_eq!(cfg.fusion_seq_len(), 1407);
        assert_eq!(cfg.head_dim(), 32);
    }

    #[test]
    fn exact_tiling() {
        assert_eq!(token_grid(6, 60, 3, 30, 3, 30), Some((2, 2)));
        assert_eq!(windows(2, 3, 1), None);
    }

    #[test]
    fn validation_errors() {
        let bad = ModelConfig { heads: 5, ..ModelConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { patch_h: 20, ..ModelConfig::default() };
        assert!(matches!(bad.validate(), Err(ModelError::InvalidConfig { key: "h_bg", .. })));
        let ok = ModelConfig { patch_h: 20, use_bg_branch: false, ..ModelConfig::default() };
        ok.validate().unwrap();
        ModelConfig::mini().validate().unwrap();
    }
}
