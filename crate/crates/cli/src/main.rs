//! Command-line front end: data generation, maps, training, evaluation and
//! diagnostics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use transrppg::eval::{
    ablation_csv, ablation_sweep, loso_run, score_samples, AblationAxis, AblationBase, LosoOptions, MetricsReport,
    ScoredSet,
};
use transrppg::model::{
    export_attention, flop_count, loss_gradcheck, param_count, Checkpoint, ModelConfig, ModelInput, TransRppg,
};
use transrppg::mstmap::{io, prepare_maps, ColorSpace, RegionTraceSet};
use transrppg::synth::{generate_dataset, load_manifest, write_dataset};
use transrppg::tensor::op_suite;
use transrppg::train::{prepare_samples, train_until, InputMode, TrainState};
use transrppg::RunConfig;

#[derive(Parser)]
#[command(name = "transrppg", version, about = "rPPG transformer for 3D mask presentation attack detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct DataArg {
    /// Trace manifest written by `gen`; synthetic data from the config is
    /// generated in memory when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic trace files and a manifest.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build face and background maps from one trace file.
    Mstmap {
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// RGB, G, YUV, CHROM or POS; overrides `model.color_space`.
        #[arg(long)]
        space: Option<String>,
        /// Also write PGM/PPM renderings.
        #[arg(long)]
        image: bool,
    },
    /// Train one model on the whole dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written by `train`.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this epoch instead of `train.max_epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a dataset with a trained checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fixed threshold for HTER.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Leave-one-subject-out cross-validation.
    Loso {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// LOSO once per value of one ablation axis.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `eval.ablate_axis`.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated; overrides `eval.ablate_values`.
        #[arg(long)]
        values: Option<String>,
    },
    /// Export fusion-layer attention for one trace file.
    Attn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every operation and the full loss.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parameter and multiply-accumulate counts.
    Params {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
        cfg.finish()?;
    }
    Ok(cfg)
}

fn load_sets(cfg: &RunConfig, data: &DataArg) -> Result<Vec<RegionTraceSet>> {
    Ok(match &data.data {
        Some(m) => load_manifest(m).with_context(|| format!("loading {}", m.display()))?,
        None => generate_dataset(&cfg.synth)?,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn scores_csv(s: &ScoredSet) -> String {
    let mut out = String::from("subject,label,score\n");
    for ((sub, l), sc) in s.subjects.iter().zip(&s.labels).zip(&s.scores) {
        writeln!(out, "{sub},{l},{sc:.8}").unwrap();
    }
    out
}

fn cmd_gen(common: &Common, out: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let sets = generate_dataset(&cfg.synth)?;
    out_dir(out)?;
    let manifest = write_dataset(&sets, out)?;
    println!("wrote {} trace files and {}", sets.len(), manifest.display());
    Ok(())
}

fn cmd_mstmap(trace: &Path, common: &Common, out: &Path, space: Option<&str>, image: bool) -> Result<()> {
    let cfg = load_config(common)?;
    let mut opts = cfg.map.clone();
    if let Some(s) = space {
        opts.color_space = s.parse::<ColorSpace>()?;
    }
    let set = RegionTraceSet::read(trace)?;
    let maps = prepare_maps(&set, &opts)?;
    out_dir(out)?;
    let stem = trace.file_stem().and_then(|s| s.to_str()).unwrap_or("sample");
    let mut parts = vec![("face", &maps.face)];
    if let Some(bg) = &maps.bg {
        parts.push(("bg", bg));
    }
    for (tag, map) in parts {
        let (h, w, c) = map.shape();
        let path = out.join(format!("{stem}_{tag}.mstm"));
        io::write_map(map, &path)?;
        println!("{tag}: {h}x{w}x{c} -> {}", path.display());
        if image {
            let ext = if c == 1 { "pgm" } else { "ppm" };
            let img = out.join(format!("{stem}_{tag}.{ext}"));
            io::write_image(map, &img)?;
            println!("{tag}: image -> {}", img.display());
        }
    }
    Ok(())
}

fn cmd_train(common: &Common, data: &DataArg, out: &Path, resume: Option<&Path>, epochs: Option<usize>) -> Result<()> {
    let cfg = load_config(common)?;
    let model_cfg = cfg.model_for_input();
    let samples = prepare_samples(&load_sets(&cfg, data)?, &cfg.map, &model_cfg, cfg.eval.input)?;
    let mut state = match resume {
        Some(p) => TrainState::from_checkpoint(model_cfg.clone(), &Checkpoint::read(p)?)?,
        None => TrainState::new(TransRppg::new(model_cfg.clone(), cfg.init_seed())?),
    };
    let until = epochs.unwrap_or(cfg.train.max_epochs);
    train_until(&mut state, &samples, &cfg.train, until)?;
    out_dir(out)?;
    state.to_checkpoint().write(&out.join("model.ckpt"))?;
    write(&out.join("train_log.txt"), state.log.to_text())?;
    write(&out.join("run.cfg"), cfg.to_text())?;
    print!("{}", state.log.to_text());
    Ok(())
}

fn cmd_eval(common: &Common, data: &DataArg, ckpt: &Path, out: &Path, threshold: Option<f64>) -> Result<()> {
    let cfg = load_config(common)?;
    let model_cfg = cfg.model_for_input();
    let model = TrainState::from_checkpoint(model_cfg.clone(), &Checkpoint::read(ckpt)?)?.model;
    let samples = prepare_samples(&load_sets(&cfg, data)?, &cfg.map, &model_cfg, cfg.eval.input)?;
    let scores = score_samples(&model, &samples)?;
    let report = MetricsReport::compute(&scores, threshold)?;
    out_dir(out)?;
    write(&out.join("scores.csv"), scores_csv(&scores))?;
    write(&out.join("metrics.txt"), format!("{}\n", report.line()))?;
    println!("{}", report.line());
    Ok(())
}

fn cmd_loso(common: &Common, data: &DataArg, out: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let model_cfg = cfg.model_for_input();
    let samples = prepare_samples(&load_sets(&cfg, data)?, &cfg.map, &model_cfg, cfg.eval.input)?;
    let opts = LosoOptions { model: model_cfg, train: cfg.train.clone(), init_seed: cfg.init_seed() };
    let result = loso_run(&samples, &opts)?;
    out_dir(out)?;
    let logs = out.join("logs");
    out_dir(&logs)?;
    for f in &result.folds {
        write(&logs.join(format!("fold_{}.txt", f.subject)), f.log.to_text())?;
    }
    write(&out.join("scores.csv"), scores_csv(&result.pooled_scores))?;
    write(&out.join("metrics.txt"), result.to_text())?;
    print!("{}", result.to_text());
    Ok(())
}

fn cmd_ablate(common: &Common, data: &DataArg, out: &Path, axis: Option<&str>, values: Option<&str>) -> Result<()> {
    let cfg = load_config(common)?;
    let axis = match axis {
        Some(a) => a.parse::<AblationAxis>()?,
        None => cfg.eval.ablate_axis.context("no ablation axis: pass --axis or set eval.ablate_axis")?,
    };
    let values: Vec<String> = match values {
        Some(v) => v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None if !cfg.eval.ablate_values.is_empty() => cfg.eval.ablate_values.clone(),
        None => axis.default_values(),
    };
    let sets = load_sets(&cfg, data)?;
    let base = AblationBase {
        map: cfg.map.clone(),
        loso: LosoOptions { model: cfg.model.clone(), train: cfg.train.clone(), init_seed: cfg.init_seed() },
    };
    let rows = ablation_sweep(&sets, axis, &values, &base)?;
    out_dir(out)?;
    let csv = ablation_csv(&rows);
    write(&out.join("ablation.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_attn(common: &Common, ckpt: &Path, trace: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    if cfg.eval.input != InputMode::Full {
        bail!("attention export needs the two-branch model (eval.input = full)");
    }
    let model = TrainState::from_checkpoint(cfg.model.clone(), &Checkpoint::read(ckpt)?)?.model;
    let maps = prepare_maps(&RegionTraceSet::read(trace)?, &cfg.map)?;
    let input = ModelInput::from_maps(&cfg.model, &maps.face, maps.bg.as_ref())?;
    let (pred, rec) = model.predict_with_attention(&input)?;
    let files = export_attention(&rec, &cfg.model, out)?;
    println!("score={:.6}", pred.score());
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn cmd_gradcheck(trials: usize, seed: u64) -> Result<bool> {
    const TOL: f64 = 1e-4;
    let mut checks = op_suite(seed, trials)?;
    let mini = ModelConfig::mini();
    checks.extend(loss_gradcheck(&mini, seed, None)?);
    for variant in [
        ModelConfig { use_class_token: false, ..mini.clone() },
        ModelConfig { use_pos_embed: false, use_bg_branch: false, ..mini.clone() },
    ] {
        let tag = if variant.use_class_token { "no-pos-no-bg" } else { "gap" };
        for (name, r) in loss_gradcheck(&variant, seed, Some(16))? {
            checks.push((format!("{name}[{tag}]"), r));
        }
    }
    let mut worst = 0.0f64;
    let mut failed = 0;
    for (name, r) in &checks {
        let ok = r.passed(TOL);
        failed += usize::from(!ok);
        worst = worst.max(r.max_rel_err);
        println!("{} {name} max_rel_err={:.3e} entries={}", if ok { "ok  " } else { "FAIL" }, r.max_rel_err, r.checked);
    }
    println!("checks={} failed={failed} worst_rel_err={worst:.3e} tolerance={TOL:e}", checks.len());
    Ok(failed == 0)
}

fn cmd_params(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let b = param_count(&cfg.model);
    print!("{}", b.report());
    print!("{}", flop_count(&cfg.model).report());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen { common, out } => cmd_gen(&common, &out)?,
        Command::Mstmap { trace, common, out, space, image } => {
            cmd_mstmap(&trace, &common, &out, space.as_deref(), image)?
        }
        Command::Train { common, data, out, resume, epochs } => {
            cmd_train(&common, &data, &out, resume.as_deref(), epochs)?
        }
        Command::Eval { common, data, checkpoint, out, threshold } => {
            cmd_eval(&common, &data, &checkpoint, &out, threshold)?
        }
        Command::Loso { common, data, out } => cmd_loso(&common, &data, &out)?,
        Command::Ablate { common, data, out, axis, values } => {
            cmd_ablate(&common, &data, &out, axis.as_deref(), values.as_deref())?
        }
        Command::Attn { common, checkpoint, trace, out } => cmd_attn(&common, &checkpoint, &trace, &out)?,
        Command::Gradcheck { trials, seed } => return cmd_gradcheck(trials, seed),
        Command::Params { common } => cmd_params(&common)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
