//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! seed = 1
//! synth.subjects = 8
//! model.dim = 96
//! train.max_epochs = 60
//! eval.input = full
//! ```
//!
//! Keys are `seed` or carry one of the prefixes `synth.`, `model.`,
//! `train.`, `eval.`. Unknown keys are errors. All randomness derives from
//! `seed`: traces use `seed`, weight init `seed + 1000`, batch shuffling
//! `seed + 2000`. A later `synth.seed` line pins the traces alone, so one
//! dataset can be trained under several seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::eval::AblationAxis;
use crate::model::ModelConfig;
use crate::mstmap::{ColorSpace, MapOptions};
use crate::synth::SynthConfig;
use crate::train::{InputMode, TrainConfig};

pub const INIT_SEED_OFFSET: u64 = 1000;
pub const SHUFFLE_SEED_OFFSET: u64 = 2000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    InvalidValue { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Evaluation and sweep options.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub input: InputMode,
    pub ablate_axis: Option<AblationAxis>,
    /// Empty means the axis defaults.
    pub ablate_values: Vec<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { input: InputMode::Full, ablate_axis: None, ablate_values: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub map: MapOptions,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            seed: 1,
            synth: SynthConfig::default(),
            map: MapOptions::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
        };
        c.set_seed(1);
        c
    }
}

fn parse<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn parse_range(v: &str) -> Result<(f64, f64), String> {
    let (a, b) = v.split_once(',').ok_or("expected `low, high`")?;
    Ok((parse(a.trim())?, parse(b.trim())?))
}

fn input_mode(v: &str) -> Result<InputMode, String> {
    match v {
        "full" => Ok(InputMode::Full),
        "background" => Ok(InputMode::BackgroundOnly),
        _ => Err("expected `full` or `background`".into()),
    }
}

impl RunConfig {
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed.wrapping_add(SHUFFLE_SEED_OFFSET);
    }

    pub fn init_seed(&self) -> u64 {
        self.seed.wrapping_add(INIT_SEED_OFFSET)
    }

    /// Model geometry for the configured input mode.
    pub fn model_for_input(&self) -> ModelConfig {
        self.eval.input.model_config(&self.model)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<bool, String> {
        let s = &mut self.synth;
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "seed" => {
                let seed = parse(v)?;
                self.set_seed(seed);
            }
            "synth.seed" => s.seed = parse(v)?,
            "synth.subjects" => s.subjects = parse(v)?,
            "synth.samples_per_subject_per_class" => s.samples_per_subject_per_class = parse(v)?,
            "synth.fps" => s.fps = parse(v)?,
            "synth.duration_s" => s.duration_s = parse(v)?,
            "synth.face_regions" => s.face_regions = parse(v)?,
            "synth.bg_regions" => s.bg_regions = parse(v)?,
            "synth.heart_rate_range" => s.heart_rate_range = parse_range(v)?,
            "synth.pulse_amplitude" => s.pulse_amplitude = parse(v)?,
            "synth.mask_attenuation" => s.mask_attenuation = parse(v)?,
            "synth.noise_sigma" => s.noise_sigma = parse(v)?,
            "synth.illumination_drift_amplitude" => s.illumination_drift_amplitude = parse(v)?,
            "synth.region_phase_jitter" => s.region_phase_jitter = parse(v)?,
            "model.fps" => self.map.target_fps = parse(v)?,
            "model.seconds" => self.map.seconds = parse(v)?,
            "model.color_space" => self.map.color_space = parse::<ColorSpace>(v)?,
            "model.replicate_channels" => self.map.replicate_channels = parse(v)?,
            "model.h_face" => m.h_face = parse(v)?,
            "model.h_bg" => m.h_bg = parse(v)?,
            "model.patch_h" => m.patch_h = parse(v)?,
            "model.patch_w" => m.patch_w = parse(v)?,
            "model.step_h" => m.step_h = parse(v)?,
            "model.step_w" => m.step_w = parse(v)?,
            "model.dim" => m.dim = parse(v)?,
            "model.heads" => m.heads = parse(v)?,
            "model.layers" => m.layers = parse(v)?,
            "model.mlp_ratio" => m.mlp_ratio = parse(v)?,
            "model.use_class_token" => m.use_class_token = parse(v)?,
            "model.use_pos_embed" => m.use_pos_embed = parse(v)?,
            "model.use_bg_branch" => m.use_bg_branch = parse(v)?,
            "model.init_std" => m.init_std = parse(v)?,
            "model.ln_eps" => m.ln_eps = parse(v)?,
            "train.lr" => t.lr = parse(v)?,
            "train.weight_decay" => t.weight_decay = parse(v)?,
            "train.batch_size" => t.batch_size = parse(v)?,
            "train.max_epochs" => t.max_epochs = parse(v)?,
            "train.lr_halve_epoch" => t.lr_halve_epoch = parse(v)?,
            "train.beta1" => t.beta1 = parse(v)?,
            "train.beta2" => t.beta2 = parse(v)?,
            "train.adam_epsilon" => t.adam_epsilon = parse(v)?,
            "train.shuffle" => t.shuffle = parse(v)?,
            "eval.input" => self.eval.input = input_mode(v)?,
            "eval.ablate_axis" => self.eval.ablate_axis = Some(parse::<AblationAxis>(v)?),
            "eval.ablate_values" => {
                self.eval.ablate_values =
                    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Applies `text` on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            match self.set(key, value) {
                Ok(true) => {}
                Ok(false) => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
                Err(message) => return Err(ConfigError::InvalidValue { line, key: key.to_string(), message }),
            }
        }
        self.finish()
    }

    /// Derives the map width and channel count and validates every section.
    pub fn finish(&mut self) -> Result<(), ConfigError> {
        self.model.w = self.map.frames();
        self.model.c = self.map.color_space.channels(self.map.replicate_channels);
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.synth.validate().map_err(|e| invalid(&e))?;
        self.model_for_input().validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        if !(self.map.target_fps > 0.0 && self.map.seconds > 0.0) {
            return Err(ConfigError::Invalid("model.fps and model.seconds must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text)
    }

    /// Every key with its current value; parsing the output reproduces `self`.
    pub fn to_text(&self) -> String {
        let (s, m, t) = (&self.synth, &self.model, &self.train);
        let mut o = String::new();
        let mut kv = |k: &str, v: String| writeln!(o, "{k} = {v}").unwrap();
        kv("seed", self.seed.to_string());
        kv("synth.seed", s.seed.to_string());
        kv("synth.subjects", s.subjects.to_string());
        kv("synth.samples_per_subject_per_class", s.samples_per_subject_per_class.to_string());
        kv("synth.fps", s.fps.to_string());
        kv("synth.duration_s", s.duration_s.to_string());
        kv("synth.face_regions", s.face_regions.to_string());
        kv("synth.bg_regions", s.bg_regions.to_string());
        kv("synth.heart_rate_range", format!("{}, {}", s.heart_rate_range.0, s.heart_rate_range.1));
        kv("synth.pulse_amplitude", s.pulse_amplitude.to_string());
        kv("synth.mask_attenuation", s.mask_attenuation.to_string());
        kv("synth.noise_sigma", s.noise_sigma.to_string());
        kv("synth.illumination_drift_amplitude", s.illumination_drift_amplitude.to_string());
        kv("synth.region_phase_jitter", s.region_phase_jitter.to_string());
        kv("model.fps", self.map.target_fps.to_string());
        kv("model.seconds", self.map.seconds.to_string());
        kv("model.color_space", self.map.color_space.to_string());
        kv("model.replicate_channels", self.map.replicate_channels.to_string());
        kv("model.h_face", m.h_face.to_string());
        kv("model.h_bg", m.h_bg.to_string());
        kv("model.patch_h", m.patch_h.to_string());
        kv("model.patch_w", m.patch_w.to_string());
        kv("model.step_h", m.step_h.to_string());
        kv("model.step_w", m.step_w.to_string());
        kv("model.dim", m.dim.to_string());
        kv("model.heads", m.heads.to_string());
        kv("model.layers", m.layers.to_string());
        kv("model.mlp_ratio", m.mlp_ratio.to_string());
        kv("model.use_class_token", m.use_class_token.to_string());
        kv("model.use_pos_embed", m.use_pos_embed.to_string());
        kv("model.use_bg_branch", m.use_bg_branch.to_string());
        kv("model.init_std", m.init_std.to_string());
        kv("model.ln_eps", m.ln_eps.to_string());
        kv("train.lr", t.lr.to_string());
        kv("train.weight_decay", t.weight_decay.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.max_epochs", t.max_epochs.to_string());
        kv("train.lr_halve_epoch", t.lr_halve_epoch.to_string());
        kv("train.beta1", t.beta1.to_string());
        kv("train.beta2", t.beta2.to_string());
        kv("train.adam_epsilon", t.adam_epsilon.to_string());
        kv("train.shuffle", t.shuffle.to_string());
        kv("eval.input", if self.eval.input == InputMode::Full { "full" } else { "background" }.to_string());
        if let Some(a) = self.eval.ablate_axis {
            kv("eval.ablate_axis", a.to_string());
        }
        if !self.eval.ablate_values.is_empty() {
            kv("eval.ablate_values", self.eval.ablate_values.join(", "));
        }
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_seed_offsets() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.model.w, 300);
        assert_eq!(c.model.c, 3);
        assert_eq!(c.synth.seed, 1);
        assert_eq!(c.init_seed(), 1001);
        assert_eq!(c.train.seed, 2001);
        let c = RunConfig::parse("seed = 7").unwrap();
        assert_eq!((c.synth.seed, c.init_seed(), c.train.seed), (7, 1007, 2007));
    }

    #[test]
    fn values_comments_and_derived_fields() {
        let text = "# run\nmodel.dim = 48  # narrower\nmodel.seconds = 5\nmodel.color_space = G\n\ntrain.max_epochs=15\ntrain.lr_halve_epoch = 12\nsynth.heart_rate_range = 60, 90\neval.ablate_axis = depth\neval.ablate_values = 3, 6\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.model.dim, 48);
        assert_eq!(c.model.w, 150);
        assert_eq!(c.model.c, 1);
        assert_eq!(c.train.max_epochs, 15);
        assert_eq!(c.synth.heart_rate_range, (60.0, 90.0));
        assert_eq!(c.eval.ablate_axis, Some(AblationAxis::Depth));
        assert_eq!(c.eval.ablate_values, vec!["3", "6"]);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = RunConfig::parse("seed = 1\nmodel.dimm = 4\n").unwrap_err().to_string();
        assert_eq!(e, "line 2: unknown key `model.dimm`");
        let e = RunConfig::parse("train.lr = fast").unwrap_err().to_string();
        assert!(e.starts_with("line 1: bad value for `train.lr`"), "{e}");
        assert!(matches!(RunConfig::parse("just words"), Err(ConfigError::Syntax { line: 1 })));
        let e = RunConfig::parse("synth.heart_rate_range = 90, 60").unwrap_err().to_string();
        assert!(e.contains("heart_rate_range"), "{e}");
        let e = RunConfig::parse("model.heads = 5").unwrap_err().to_string();
        assert!(e.contains("dim"), "{e}");
    }
}
