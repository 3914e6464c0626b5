//! Leave-one-subject-out runs and ablation sweeps.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use super::{EvalError, MetricsReport, ScoredSet};
use crate::eval::metrics::{eer, hter_per_sample};
use crate::model::{ModelConfig, TransRppg};
use crate::mstmap::{ColorSpace, MapOptions, RegionTraceSet};
use crate::train::{fit, prepare_samples, InputMode, TrainConfig, TrainLog, TrainSample};

/// Liveness scores of a trained model on `samples`.
pub fn score_samples(model: &TransRppg, samples: &[TrainSample]) -> Result<ScoredSet, EvalError> {
    let scores = samples
        .par_iter()
        .map(|s| model.predict(&s.input).map(|p| p.score()))
        .collect::<Result<Vec<_>, _>>()?;
    ScoredSet::new(
        scores,
        samples.iter().map(|s| s.label.as_u8()).collect(),
        samples.iter().map(|s| s.subject.clone()).collect(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct LosoOptions {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub init_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub subject: String,
    pub train_subjects: Vec<String>,
    pub scores: ScoredSet,
    /// EER threshold on the fold's own training pool, if it has both classes.
    pub threshold: Option<f64>,
    /// Metrics on the held-out subject; `None` when it lacks a class.
    pub report: Option<MetricsReport>,
    pub log: TrainLog,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LosoResult {
    pub folds: Vec<FoldResult>,
    /// Held-out scores of all folds, in fold order.
    pub pooled_scores: ScoredSet,
    /// Metrics over the pooled scores. HTER applies each fold's own
    /// training threshold to that fold's samples.
    pub pooled: MetricsReport,
}

impl LosoResult {
    /// Pooled metrics line followed by one line per fold.
    pub fn to_text(&self) -> String {
        let mut out = format!("pooled {}\n", self.pooled.line());
        for f in &self.folds {
            let line = f.report.as_ref().map_or("unavailable (single class)".to_string(), |r| r.line());
            writeln!(out, "fold {} {line}", f.subject).unwrap();
        }
        out
    }
}

/// Subject ids in sorted order.
pub fn subjects_of(samples: &[TrainSample]) -> Vec<String> {
    let mut s: Vec<String> = samples.iter().map(|x| x.subject.clone()).collect();
    s.sort();
    s.dedup();
    s
}

fn run_fold(data: &[TrainSample], subject: &str, opts: &LosoOptions) -> Result<FoldResult, EvalError> {
    let train: Vec<TrainSample> = data.iter().filter(|s| s.subject != subject).cloned().collect();
    let test: Vec<TrainSample> = data.iter().filter(|s| s.subject == subject).cloned().collect();
    if let Some(leak) = train.iter().find(|s| s.subject == subject) {
        return Err(EvalError::Leak { subject: leak.subject.clone() });
    }
    let state = fit(&opts.model, opts.init_seed, &train, &opts.train)?;
    let train_scores = score_samples(&state.model, &train)?;
    let threshold = eer(&train_scores).ok().map(|(_, t)| t);
    let scores = score_samples(&state.model, &test)?;
    let report = MetricsReport::compute(&scores, threshold).ok();
    Ok(FoldResult {
        subject: subject.to_string(),
        train_subjects: subjects_of(&train),
        scores,
        threshold,
        report,
        log: state.log,
    })
}

/// Trains one model per held-out subject and scores that subject.
///
/// Folds run concurrently on separate models and are merged in subject
/// order, so results do not depend on scheduling.
pub fn loso_run(data: &[TrainSample], opts: &LosoOptions) -> Result<LosoResult, EvalError> {
    let subjects = subjects_of(data);
    if subjects.len() < 2 {
        return Err(EvalError::TooFewSubjects(subjects.len()));
    }
    let folds = subjects.par_iter().map(|s| run_fold(data, s, opts)).collect::<Result<Vec<_>, _>>()?;
    let mut pooled_scores = ScoredSet::default();
    let mut thresholds = Vec::new();
    for f in &folds {
        pooled_scores.extend(&f.scores);
        thresholds.extend(std::iter::repeat_n(f.threshold, f.scores.len()));
    }
    let mut pooled = MetricsReport::compute(&pooled_scores, None)?;
    if thresholds.iter().all(Option::is_some) {
        let t: Vec<f64> = thresholds.into_iter().flatten().collect();
        pooled.hter = Some(hter_per_sample(&pooled_scores, &t));
    }
    Ok(LosoResult { folds, pooled_scores, pooled })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AblationAxis {
    ColorSpace,
    PatchSize,
    VideoLength,
    Depth,
    Width,
    BgBranch,
    ClassToken,
    PosEmbed,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 8] = [
        AblationAxis::ColorSpace,
        AblationAxis::PatchSize,
        AblationAxis::VideoLength,
        AblationAxis::Depth,
        AblationAxis::Width,
        AblationAxis::BgBranch,
        AblationAxis::ClassToken,
        AblationAxis::PosEmbed,
    ];

    /// Values swept when none are given.
    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            AblationAxis::ColorSpace => &["RGB", "G", "YUV", "CHROM", "POS"],
            AblationAxis::PatchSize => &["1x30", "3x30", "6x30", "3x60", "3x30/3x30"],
            AblationAxis::VideoLength => &["3", "5", "7", "10"],
            AblationAxis::Depth => &["3", "6", "9", "12"],
            AblationAxis::Width => &["48", "96", "192"],
            AblationAxis::BgBranch | AblationAxis::ClassToken | AblationAxis::PosEmbed => &["true", "false"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationAxis::ColorSpace => "color_space",
            AblationAxis::PatchSize => "patch_size",
            AblationAxis::VideoLength => "video_length",
            AblationAxis::Depth => "depth",
            AblationAxis::Width => "width",
            AblationAxis::BgBranch => "bg_branch",
            AblationAxis::ClassToken => "class_token",
            AblationAxis::PosEmbed => "pos_embed",
        })
    }
}

impl FromStr for AblationAxis {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationAxis::ALL.into_iter().find(|a| a.to_string() == s).ok_or_else(|| EvalError::InvalidAxis(s.to_string()))
    }
}

/// Shared settings of an ablation sweep; each value changes one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationBase {
    pub map: MapOptions,
    pub loso: LosoOptions,
}

fn parse_pair(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once('x')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Applies one axis value. Patch sizes are `PHxPW`, optionally followed by
/// `/SHxSW` to override the step.
pub fn apply_axis(
    axis: AblationAxis,
    value: &str,
    map: &mut MapOptions,
    model: &mut ModelConfig,
) -> Result<(), EvalError> {
    let bad = |message: &str| EvalError::InvalidValue { axis, value: value.to_string(), message: message.to_string() };
    let flag = || match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad("expected true or false")),
    };
    match axis {
        AblationAxis::ColorSpace => {
            let space: ColorSpace = value.parse().map_err(|_| bad("unknown color space"))?;
            map.color_space = space;
            model.c = space.channels(map.replicate_channels);
        }
        AblationAxis::PatchSize => {
            let (patch, step) = match value.split_once('/') {
                Some((p, s)) => (parse_pair(p), Some(parse_pair(s).ok_or_else(|| bad("step must be SHxSW"))?)),
                None => (parse_pair(value), None),
            };
            let (ph, pw) = patch.ok_or_else(|| bad("patch must be PHxPW"))?;
            model.patch_h = ph;
            model.patch_w = pw;
            if let Some((sh, sw)) = step {
                model.step_h = sh;
                model.step_w = sw;
            }
        }
        AblationAxis::VideoLength => {
            let secs: f64 = value.parse().map_err(|_| bad("expected seconds"))?;
            if !(secs > 0.0) {
                return Err(bad("length must be positive"));
            }
            map.seconds = secs;
            model.w = map.frames();
        }
        AblationAxis::Depth => model.layers = value.parse().map_err(|_| bad("expected a layer count"))?,
        AblationAxis::Width => model.dim = value.parse().map_err(|_| bad("expected an embedding width"))?,
        AblationAxis::BgBranch => model.use_bg_branch = flag()?,
        AblationAxis::ClassToken => model.use_class_token = flag()?,
        AblationAxis::PosEmbed => model.use_pos_embed = flag()?,
    }
    model.validate().map_err(|e| bad(&e.to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub axis: AblationAxis,
    pub value: String,
    pub report: MetricsReport,
}

/// One LOSO run per value on the same traces and seeds.
pub fn ablation_sweep(
    sets: &[RegionTraceSet],
    axis: AblationAxis,
    values: &[String],
    base: &AblationBase,
) -> Result<Vec<AblationRow>, EvalError> {
    // Reject bad values before any training starts.
    let variants = values
        .iter()
        .map(|v| {
            let mut map = base.map.clone();
            let mut model = base.loso.model.clone();
            apply_axis(axis, v, &mut map, &mut model)?;
            Ok((v.clone(), map, model))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    variants
        .into_iter()
        .map(|(value, map, model)| {
            let data = prepare_samples(sets, &map, &model, InputMode::Full)?;
            let opts = LosoOptions { model, ..base.loso.clone() };
            let result = loso_run(&data, &opts)?;
            Ok(AblationRow { axis, value, report: result.pooled })
        })
        .collect()
}

/// `axis,value,auc,eer,ffr` with 6-decimal metrics.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("axis,value,auc,eer,ffr\n");
    for r in rows {
        writeln!(out, "{},{},{:.6},{:.6},{:.6}", r.axis, r.value, r.report.auc, r.report.eer, r.report.ffr_at_flr_001)
            .unwrap();
    }
    out
}
