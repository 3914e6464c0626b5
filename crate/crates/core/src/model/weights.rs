//! Parameter containers shared by concrete tensors and tape variables.
//!
//! Every traversal visits parameters in one canonical order; checkpoints,
//! optimizer state and gradient vectors all rely on it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ModelConfig;
use crate::tensor::{Scalar, Tensor};

/// One pre-norm transformer layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights<P> {
    pub ln1_gain: P,
    pub ln1_bias: P,
    /// `D x 3D`, no bias.
    pub qkv: P,
    pub proj_w: P,
    pub proj_b: P,
    pub ln2_gain: P,
    pub ln2_bias: P,
    pub fc1_w: P,
    pub fc1_b: P,
    pub fc2_w: P,
    pub fc2_b: P,
}

/// Linear classifier from a `1 x D` summary to one logit.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadWeights<P> {
    pub w: P,
    pub b: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Weights<P> {
    pub patch_w: P,
    pub patch_b: P,
    pub face_cls: Option<P>,
    pub bg_cls: Option<P>,
    pub combined_cls: Option<P>,
    pub face_pos: Option<P>,
    pub bg_pos: Option<P>,
    pub encoder: Vec<LayerWeights<P>>,
    pub fusion: LayerWeights<P>,
    pub face_head: HeadWeights<P>,
    pub bg_head: Option<HeadWeights<P>>,
    pub combined_head: HeadWeights<P>,
}

/// Concrete parameters for training and inference.
pub type ModelWeights = Weights<Tensor<f32>>;

impl<P> LayerWeights<P> {
    fn try_map<'a, Q, E>(
        &'a self,
        prefix: &str,
        f: &mut impl FnMut(&str, &'a P) -> Result<Q, E>,
    ) -> Result<LayerWeights<Q>, E> {
        let mut g = |suffix: &str, p: &'a P| f(&format!("{prefix}.{suffix}"), p);
        Ok(LayerWeights {
            ln1_gain: g("ln1.gain", &self.ln1_gain)?,
            ln1_bias: g("ln1.bias", &self.ln1_bias)?,
            qkv: g("attn.qkv", &self.qkv)?,
            proj_w: g("attn.proj.weight", &self.proj_w)?,
            proj_b: g("attn.proj.bias", &self.proj_b)?,
            ln2_gain: g("ln2.gain", &self.ln2_gain)?,
            ln2_bias: g("ln2.bias", &self.ln2_bias)?,
            fc1_w: g("mlp.fc1.weight", &self.fc1_w)?,
            fc1_b: g("mlp.fc1.bias", &self.fc1_b)?,
            fc2_w: g("mlp.fc2.weight", &self.fc2_w)?,
            fc2_b: g("mlp.fc2.bias", &self.fc2_b)?,
        })
    }

    fn refs_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>) {
        let LayerWeights { ln1_gain, ln1_bias, qkv, proj_w, proj_b, ln2_gain, ln2_bias, fc1_w, fc1_b, fc2_w, fc2_b } = self;
        for (suffix, p) in [
            ("ln1.gain", ln1_gain),
            ("ln1.bias", ln1_bias),
            ("attn.qkv", qkv),
            ("attn.proj.weight", proj_w),
            ("attn.proj.bias", proj_b),
            ("ln2.gain", ln2_gain),
            ("ln2.bias", ln2_bias),
            ("mlp.fc1.weight", fc1_w),
            ("mlp.fc1.bias", fc1_b),
            ("mlp.fc2.weight", fc2_w),
            ("mlp.fc2.bias", fc2_b),
        ] {
            out.push((format!("{prefix}.{suffix}"), p));
        }
    }
}

impl<P> HeadWeights<P> {
    fn try_map<'a, Q, E>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a P) -> Result<Q, E>) -> Result<HeadWeights<Q>, E> {
        Ok(HeadWeights { w: f(&format!("{prefix}.weight"), &self.w)?, b: f(&format!("{prefix}.bias"), &self.b)? })
    }
}

impl<P> Weights<P> {
    /// Builds a parallel structure in canonical order. `f` receives the
    /// canonical parameter name.
    pub fn try_map<'a, Q, E>(&'a self, mut f: impl FnMut(&str, &'a P) -> Result<Q, E>) -> Result<Weights<Q>, E> {
        let f = &mut f;
        let opt = |name: &str, p: &'a Option<P>, f: &mut dyn FnMut(&str, &'a P) -> Result<Q, E>| -> Result<Option<Q>, E> {
            p.as_ref().map(|p| f(name, p)).transpose()
        };
        let patch_w = f("patch_embed.weight", &self.patch_w)?;
        let patch_b = f("patch_embed.bias", &self.patch_b)?;
        let face_cls = opt("face.cls_token", &self.face_cls, f)?;
        let bg_cls = opt("bg.cls_token", &self.bg_cls, f)?;
        let combined_cls = opt("combined.cls_token", &self.combined_cls, f)?;
        let face_pos = opt("face.pos_embed", &self.face_pos, f)?;
        let bg_pos = opt("bg.pos_embed", &self.bg_pos, f)?;
        let encoder = self
            .encoder
            .iter()
            .enumerate()
            .map(|(i, l)| l.try_map(&format!("encoder.{i}"), f))
            .collect::<Result<Vec<_>, E>>()?;
        let fusion = self.fusion.try_map("fusion", f)?;
        let face_head = self.face_head.try_map("head.face", f)?;
        let bg_head = self.bg_head.as_ref().map(|h| h.try_map("head.bg", f)).transpose()?;
        let combined_head = self.combined_head.try_map("head.combined", f)?;
        Ok(Weights {
            patch_w,
            patch_b,
            face_cls,
            bg_cls,
            combined_cls,
            face_pos,
            bg_pos,
            encoder,
            fusion,
            face_head,
            bg_head,
            combined_head,
        })
    }

    pub fn map<'a, Q>(&'a self, mut f: impl FnMut(&str, &'a P) -> Q) -> Weights<Q> {
        self.try_map::<Q, std::convert::Infallible>(|n, p| Ok(f(n, p))).unwrap_or_else(|e| match e {})
    }

    /// `(name, &param)` pairs in canonical order.
    pub fn named(&self) -> Vec<(String, &P)> {
        let mut out = Vec::new();
        self.map(|n, p| out.push((n.to_string(), p)));
        out
    }

    /// `(name, &mut param)` pairs in canonical order.
    pub fn named_mut(&mut self) -> Vec<(String, &mut P)> {
        let mut out = Vec::new();
        let Weights {
            patch_w,
            patch_b,
            face_cls,
            bg_cls,
            combined_cls,
            face_pos,
            bg_pos,
            encoder,
            fusion,
            face_head,
            bg_head,
            combined_head,
        } = self;
        out.push(("patch_embed.weight".to_string(), patch_w));
        out.push(("patch_embed.bias".to_string(), patch_b));
        for (name, p) in [
            ("face.cls_token", face_cls),
            ("bg.cls_token", bg_cls),
            ("combined.cls_token", combined_cls),
            ("face.pos_embed", face_pos),
            ("bg.pos_embed", bg_pos),
        ] {
            if let Some(p) = p {
                out.push((name.to_string(), p));
            }
        }
        for (i, l) in encoder.iter_mut().enumerate() {
            l.refs_mut(&format!("encoder.{i}"), &mut out);
        }
        fusion.refs_mut("fusion", &mut out);
        out.push(("head.face.weight".to_string(), &mut face_head.w));
        out.push(("head.face.bias".to_string(), &mut face_head.b));
        if let Some(h) = bg_head {
            out.push(("head.bg.weight".to_string(), &mut h.w));
            out.push(("head.bg.bias".to_string(), &mut h.b));
        }
        out.push(("head.combined.weight".to_string(), &mut combined_head.w));
        out.push(("head.combined.bias".to_string(), &mut combined_head.b));
        out
    }

    /// Parameters in canonical order.
    pub fn to_vec(&self) -> Vec<P>
    where
        P: Clone,
    {
        let mut out = Vec::new();
        self.map(|_, p| out.push(p.clone()));
        out
    }

    /// Rebuilds a structure with this layout from values in canonical order.
    /// Returns `None` when the count does not match.
    pub fn with_values<Q>(&self, values: Vec<Q>) -> Option<Weights<Q>> {
        let count = self.named().len();
        if values.len() != count {
            return None;
        }
        let mut it = values.into_iter();
        Some(self.map(|_, _| it.next().expect("length checked")))
    }
}

/// Initial shape of every parameter for `cfg`.
pub fn shapes(cfg: &ModelConfig) -> Weights<Vec<usize>> {
    let d = cfg.dim;
    let r = cfg.mlp_dim();
    let layer = || LayerWeights {
        ln1_gain: vec![1, d],
        ln1_bias: vec![1, d],
        qkv: vec![d, 3 * d],
        proj_w: vec![d, d],
        proj_b: vec![1, d],
        ln2_gain: vec![1, d],
        ln2_bias: vec![1, d],
        fc1_w: vec![d, r],
        fc1_b: vec![1, r],
        fc2_w: vec![r, d],
        fc2_b: vec![1, d],
    };
    let head = || HeadWeights { w: vec![d, 1], b: vec![1, 1] };
    let cls = cfg.use_class_token.then(|| vec![1, d]);
    let bg = cfg.use_bg_branch;
    Weights {
        patch_w: vec![cfg.patch_dim(), d],
        patch_b: vec![1, d],
        face_cls: cls.clone(),
        bg_cls: cls.clone().filter(|_| bg),
        combined_cls: cls,
        face_pos: cfg.use_pos_embed.then(|| vec![cfg.face_seq_len(), d]),
        bg_pos: (cfg.use_pos_embed && bg).then(|| vec![cfg.bg_seq_len(), d]),
        encoder: (0..cfg.layers).map(|_| layer()).collect(),
        fusion: layer(),
        face_head: head(),
        bg_head: bg.then(head),
        combined_head: head(),
    }
}

enum InitKind {
    Zeros,
    Ones,
    TruncNormal,
}

fn init_kind(name: &str) -> InitKind {
    if name.ends_with(".gain") {
        InitKind::Ones
    } else if name.ends_with(".bias") || name.ends_with("cls_token") {
        InitKind::Zeros
    } else {
        InitKind::TruncNormal
    }
}

/// Normal(0, std) truncated to +-2 std by rejection.
fn trunc_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

impl<T: Scalar> Weights<Tensor<T>> {
    /// Projection weights and position embeddings are drawn from a truncated
    /// normal; biases, class tokens and layer-norm offsets start at 0 and
    /// layer-norm gains at 1. Parameters are filled in canonical order.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        shapes(cfg).map(|name, shape| match init_kind(name) {
            InitKind::Zeros => Tensor::zeros(shape),
            InitKind::Ones => Tensor::full(shape, T::one()),
            InitKind::TruncNormal => Tensor::from_fn(shape, |_| T::lit(trunc_normal(&mut rng, cfg.init_std))),
        })
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_, t| Tensor::zeros(t.shape()))
    }

    pub fn cast<U: Scalar>(&self) -> Weights<Tensor<U>> {
        self.map(|_, t| t.cast())
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}
