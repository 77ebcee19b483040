//! Command-line front end. Every verb writes a JSON sidecar with a provenance block.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use super::config::{validate_config, FoldConfig, PipelineConfig, SchemeName};
use super::provenance::provenance;
use super::sweep::{embed_sentences, run_sweep};
use crate::cv::{cross_validate, make_folds, CvReport};
use crate::error::{Error, Result};
use crate::hrf::{convolve_track_with, EventShape, HrfParams};
use crate::lm::{
    load_model, pretrain, save_model, tune, LmConfig, ModelMeta, OptimizerConfig, OptimizerKind,
    PretrainSpec, SentenceSet, TaskDataset, TuneConfig,
};
use crate::matrix_io::{
    load_stimulus_track, read_matrix, read_matrix_with, save_stimulus_track, write_matrix, BoldRun,
    DenseMatrix, ReadOptions, RoiAtlas,
};
use crate::ridge::{fit_path, Penalty, RidgeConfig};
use crate::stats::{compare_models, summarize_map, Alternative, CompareOptions, Direction};
use crate::synth::{derive_seed, generate, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "voxelenc", version, about = "Voxel-wise fMRI encoding toolkit")]
pub struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true, env = "VOXELENC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-subject dataset.
    Synth(SynthArgs),
    /// HRF-convolve a stimulus track into a TR-aligned design matrix.
    Convolve(ConvolveArgs),
    /// Fit encoding weights over a lambda grid on all TRs.
    Fit(FitArgs),
    /// Cross-validated encoding scores.
    Score(ScoreArgs),
    /// Voxel-wise paired comparison of two models across subjects.
    Groupstats(GroupArgs),
    /// Per-network summary of a score map.
    Report(ReportArgs),
    /// Tune the toy transformer on a task.
    Toytune(ToytuneArgs),
    /// Embed sentences with a toy model into a stimulus track.
    Embed(EmbedArgs),
    /// Tuned-proportion sweep on a synthetic brain.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    Boxcar,
    Impulse,
}

#[derive(Debug, Args)]
pub struct ConvolveArgs {
    #[arg(long)]
    pub track: PathBuf,
    /// Seconds per TR.
    #[arg(long = "tr")]
    pub tr_s: Option<f64>,
    #[arg(long)]
    pub n_trs: usize,
    /// Output `.vem`; a `.json` sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Seven comma-separated HRF parameters.
    #[arg(long)]
    pub hrf: Option<String>,
    #[arg(long, value_enum, default_value = "boxcar")]
    pub shape: ShapeArg,
    /// Pipeline config supplying tr_s and hrf; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PenaltyArg {
    Ridge,
    Lasso,
}

#[derive(Debug, Args)]
pub struct RidgeArgs {
    /// Comma-separated ascending lambda grid.
    #[arg(long)]
    pub lambdas: Option<String>,
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
    /// Pipeline config supplying ridge and fold settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub bold: PathBuf,
    #[command(flatten)]
    pub ridge: RidgeArgs,
    /// Output `.vem` of stacked weights, one `D x N_V` block per lambda.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Contiguous,
    ByRun,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub bold: PathBuf,
    #[command(flatten)]
    pub ridge: RidgeArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Comma-separated run lengths in TRs, for `by-run`.
    #[arg(long)]
    pub run_lengths: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlternativeArg {
    TwoSided,
    AGreater,
    BGreater,
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    /// Glob matching model-A score directories, one per subject.
    #[arg(long)]
    pub a: String,
    /// Glob matching model-B score directories, paired with A in sorted order.
    #[arg(long)]
    pub b: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub fisher_z: bool,
    #[arg(long, value_enum, default_value = "two-sided")]
    pub alternative: AlternativeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Score directory, or an `r.vem` file.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub atlas: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Full,
    Partial,
    Prefix,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
pub struct ToytuneArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub proportion: Option<f64>,
    #[arg(long)]
    pub prefix_len: Option<usize>,
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output `.vem`; the `.json` metadata is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Starting model; without it a base model is pretrained from `--seed`.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub sentences: PathBuf,
    /// Output track JSON; vectors go to the sibling `.vem`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated proportions overriding the config; empty for baseline only.
    #[arg(long)]
    pub proportions: Option<String>,
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Argument(format!("--{flag}: cannot parse `{t}`")))
        })
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

/// Loads a BOLD matrix: a sidecar-described run if one exists, else a bare `.vem`.
fn load_bold(path: &Path) -> Result<DenseMatrix> {
    if path.with_extension("json").exists() {
        Ok(BoldRun::load(path)?.signal)
    } else {
        read_matrix(path)
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<Option<PipelineConfig>> {
    path.map(validate_config).transpose()
}

fn ridge_config(args: &RidgeArgs, base: Option<&PipelineConfig>) -> Result<RidgeConfig> {
    let mut cfg = base.map(|c| c.ridge.clone()).unwrap_or_default();
    if let Some(l) = &args.lambdas {
        cfg.lambdas = parse_list("lambdas", l)?;
    }
    if let Some(p) = args.penalty {
        cfg.penalty = match p {
            PenaltyArg::Ridge => Penalty::L2,
            PenaltyArg::Lasso => Penalty::L1,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&a.spec).map_err(|e| Error::io(&a.spec, e))?;
    let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::json(&a.spec, e))?;
    let ds = generate(&spec)?;
    let mut written = ds.save(&a.out)?;
    // toy-model inputs for toytune/embed on the same seed
    let vocab = LmConfig::default().vocab;
    let toy = a.out.join("toy");
    fs::create_dir_all(&toy).map_err(|e| Error::io(&toy, e))?;
    crate::lm::topic_task(vocab, 200, 7, derive_seed(spec.seed, "toy/task"))?.save(toy.join("task.json"))?;
    SentenceSet::synthetic(vocab, 150, derive_seed(spec.seed, "toy/sentences")).save(toy.join("sentences.json"))?;
    written.extend([toy.join("task.json"), toy.join("sentences.json")]);
    let files: Vec<String> = written
        .iter()
        .map(|p| p.strip_prefix(&a.out).unwrap_or(p).to_string_lossy().replace('\\', "/"))
        .collect();
    write_json(
        &a.out.join("provenance.json"),
        &json!({
            "files": files,
            "provenance": provenance("synth", &spec, json!({"seed": spec.seed})),
        }),
    )
}

fn cmd_convolve(a: &ConvolveArgs) -> Result<()> {
    let cfg = load_config(a.config.as_ref())?;
    let tr_s = a
        .tr_s
        .or(cfg.as_ref().map(|c| c.tr_s))
        .ok_or_else(|| Error::Argument("--tr is required (or a --config with tr_s)".into()))?;
    let hrf = match &a.hrf {
        Some(s) => HrfParams::parse_list(s)?,
        None => cfg.as_ref().map(|c| c.hrf).unwrap_or_default(),
    };
    let shape = match a.shape {
        ShapeArg::Boxcar => EventShape::Boxcar,
        ShapeArg::Impulse => EventShape::Impulse,
    };
    let track = load_stimulus_track(&a.track)?;
    let conv = convolve_track_with(&track, &hrf, tr_s, a.n_trs, shape)?;
    if conv.truncated > 0 {
        warn!("{} event(s) run past the end of the scan", conv.truncated);
    }
    ensure_parent(&a.out)?;
    write_matrix(&conv.design, &a.out)?;
    let settings = json!({"tr_s": tr_s, "n_trs": a.n_trs, "hrf": hrf, "shape": shape});
    write_json(
        &a.out.with_extension("json"),
        &json!({
            "rows": conv.design.rows(),
            "cols": conv.design.cols(),
            "truncated": conv.truncated,
            "settings": settings,
            "provenance": provenance("convolve", &settings, json!({})),
        }),
    )
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let base = load_config(a.ridge.config.as_ref())?;
    let cfg = ridge_config(&a.ridge, base.as_ref())?;
    let z = read_matrix(&a.design)?;
    let x = load_bold(&a.bold)?;
    let path = fit_path(&z, &x, &cfg)?;
    let (d, nv) = (z.cols(), x.cols());
    let mut stacked = Vec::with_capacity(path.len() * d * nv);
    let mut intercepts = Vec::with_capacity(path.len() * nv);
    for w in &path {
        stacked.extend_from_slice(w.weights.data());
        intercepts.extend_from_slice(&w.intercepts);
    }
    ensure_parent(&a.out)?;
    write_matrix(&DenseMatrix::new(path.len() * d, nv, stacked)?, &a.out)?;
    write_matrix(
        &DenseMatrix::new(path.len(), nv, intercepts)?,
        a.out.with_extension("intercepts.vem"),
    )?;
    let excluded: Vec<usize> = path
        .first()
        .map(|w| (0..nv).filter(|&v| w.excluded[v]).collect())
        .unwrap_or_default();
    write_json(
        &a.out.with_extension("json"),
        &json!({
            "lambdas": cfg.lambdas,
            "block_rows": d,
            "n_voxels": nv,
            "excluded_voxels": excluded,
            "ridge": cfg,
            "provenance": provenance("fit", &cfg, json!({})),
        }),
    )
}

fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let base = load_config(a.ridge.config.as_ref())?;
    let cfg = ridge_config(&a.ridge, base.as_ref())?;
    let mut folds: FoldConfig = base.as_ref().map(|c| c.folds.clone()).unwrap_or_default();
    if let Some(n) = a.folds {
        folds.n_folds = n;
    }
    if let Some(s) = a.scheme {
        folds.scheme = match s {
            SchemeArg::Contiguous => SchemeName::Contiguous,
            SchemeArg::ByRun => SchemeName::ByRun,
        };
    }
    if let Some(r) = &a.run_lengths {
        folds.run_lengths = Some(parse_list("run-lengths", r)?);
    }
    if let Some(s) = a.seed {
        folds.seed = s;
    }
    let z = read_matrix(&a.design)?;
    let x = load_bold(&a.bold)?;
    let plan = make_folds(x.rows(), folds.n_folds, folds.scheme(), folds.seed)?;
    let report = cross_validate(&z, &x, &plan, &cfg)?;
    report.save(&a.out)?;
    let settings = json!({"ridge": cfg, "folds": folds});
    write_json(
        &a.out.join("report.json"),
        &json!({
            "n_voxels": report.n_voxels(),
            "n_excluded": report.excluded_mask.iter().filter(|&&e| e).count(),
            "mean_r": report.mean_r(),
            "fold_sizes": plan.fold_sizes(),
            "settings": settings,
            "provenance": provenance("score", &settings, json!({"folds": folds.seed})),
        }),
    )
}

fn expand_glob(flag: &str, pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern)
        .map_err(|e| Error::Argument(format!("--{flag}: bad glob `{pattern}`: {e}")))?
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Argument(format!("--{flag}: {e}")))?;
    if paths.is_empty() {
        return Err(Error::Argument(format!("--{flag}: `{pattern}` matched nothing")));
    }
    let mut paths = paths;
    paths.sort();
    Ok(paths)
}

fn cmd_groupstats(a: &GroupArgs) -> Result<()> {
    let dirs_a = expand_glob("a", &a.a)?;
    let dirs_b = expand_glob("b", &a.b)?;
    if dirs_a.len() != dirs_b.len() {
        return Err(Error::Argument(format!(
            "--a matched {} directories but --b matched {}",
            dirs_a.len(),
            dirs_b.len()
        )));
    }
    let load = |ds: &[PathBuf]| ds.iter().map(CvReport::load).collect::<Result<Vec<_>>>();
    let (ra, rb) = (load(&dirs_a)?, load(&dirs_b)?);
    let alternative = match a.alternative {
        AlternativeArg::TwoSided => Alternative::TwoSided,
        AlternativeArg::AGreater => Alternative::AGreater,
        AlternativeArg::BGreater => Alternative::BGreater,
    };
    let opts = CompareOptions {
        alpha: a.alpha,
        alternative,
        fisher_z: a.fisher_z,
    };
    let map = compare_models(&ra, &rb, opts)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let row = |v: &[f64]| DenseMatrix::row_vector(v.to_vec());
    write_matrix(&row(&map.t), a.out.join("t.vem"))?;
    write_matrix(&row(&map.p), a.out.join("p.vem"))?;
    write_matrix(&row(&map.q), a.out.join("q.vem"))?;
    let reject: Vec<f64> = map.reject.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
    write_matrix(&row(&reject), a.out.join("reject.vem"))?;
    let rejected = map.rejected();
    let count = |d: Direction| rejected.iter().filter(|&&v| map.direction[v] == d).count();
    let show = |ps: &[PathBuf]| ps.iter().map(|p| p.to_string_lossy().into_owned()).collect::<Vec<_>>();
    let settings = json!({
        "a": show(&dirs_a),
        "b": show(&dirs_b),
        "alpha": a.alpha,
        "alternative": alternative,
        "fisher_z": a.fisher_z,
    });
    write_json(
        &a.out.join("summary.json"),
        &json!({
            "n_subjects": ra.len(),
            "n_voxels": map.t.len(),
            "df": map.df,
            "n_rejected": rejected.len(),
            "n_b_greater": count(Direction::BGreater),
            "n_a_greater": count(Direction::AGreater),
            "rejected": rejected,
            "settings": settings,
            "provenance": provenance("groupstats", &settings, json!({})),
        }),
    )
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let (r, excluded) = if a.report.is_dir() {
        let rep = CvReport::load(&a.report)?;
        (rep.r, rep.excluded_mask)
    } else {
        let r = read_matrix_with(&a.report, ReadOptions { allow_nonfinite: true })?.into_data();
        let dir = a.report.parent().unwrap_or(Path::new("."));
        let excluded = crate::cv::read_excluded(dir, r.len())?;
        (r, excluded)
    };
    let atlas = RoiAtlas::load(&a.atlas)?;
    let summary = summarize_map(&r, &excluded, &atlas)?;
    let settings = json!({"report": a.report, "atlas": a.atlas});
    write_json(
        &a.out,
        &json!({
            "networks": summary.networks,
            "provenance": provenance("report", &settings, json!({})),
        }),
    )
}

fn cmd_toytune(a: &ToytuneArgs) -> Result<()> {
    let task = TaskDataset::load(&a.task)?;
    let mut optimizer = OptimizerConfig::default();
    if let Some(s) = a.steps {
        optimizer.steps = s;
    }
    if let Some(lr) = a.lr {
        optimizer.lr = lr;
    }
    if let Some(b) = a.batch_size {
        optimizer.batch_size = b;
    }
    if let Some(o) = a.optimizer {
        optimizer.kind = match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        };
    }
    let mode = match a.mode {
        ModeArg::Full => "full",
        ModeArg::Partial => "partial",
        ModeArg::Prefix => "prefix",
    };
    let mut raw = json!({"mode": mode, "optimizer": optimizer, "seed": a.seed});
    if let Some(p) = a.proportion {
        raw["proportion"] = json!(p);
    }
    if let Some(k) = a.prefix_len {
        raw["prefix_len"] = json!(k);
    }
    let cfg: TuneConfig = serde_json::from_value(raw.clone()).map_err(|e| Error::Config(vec![e.to_string()]))?;

    let (params, base_desc) = match &a.base {
        Some(path) => {
            let (model, _) = load_model(path)?;
            (model.params, json!(path))
        }
        None => {
            let config = LmConfig {
                vocab: task.vocab,
                ..LmConfig::default()
            };
            let spec = PretrainSpec {
                seed: a.seed,
                ..PretrainSpec::default()
            };
            info!("pretraining base model (seed {})", a.seed);
            (pretrain(config, &spec)?.0, json!({"pretrain": spec}))
        }
    };
    let outcome = tune(&params, &task, &cfg)?;
    if !outcome.flagged.is_empty() {
        warn!("smoothed loss rose at early step(s) {:?}", outcome.flagged);
    }
    let settings = json!({"tune": raw, "task": a.task, "base": base_desc});
    let meta = ModelMeta {
        config: params.config,
        mode: mode.to_string(),
        proportion: a.proportion,
        prefix_len: outcome.model.prefix.as_ref().map_or(0, |p| p.prefix_len()),
        n_params: params.n_params(),
        provenance: Some(provenance("toytune", &settings, json!({"seed": a.seed}))),
    };
    ensure_parent(&a.out)?;
    save_model(&outcome.model, &meta, &a.out)?;
    write_json(
        &a.out.with_extension("train.json"),
        &json!({
            "losses": outcome.losses,
            "flagged_steps": outcome.flagged,
            "trainable": outcome.trainable,
        }),
    )
}

fn cmd_embed(a: &EmbedArgs) -> Result<()> {
    let (model, meta) = load_model(&a.model)?;
    let sentences = SentenceSet::load(&a.sentences)?;
    let track = embed_sentences(&model, &sentences)?;
    ensure_parent(&a.out)?;
    save_stimulus_track(&track, &a.out)?;
    let settings = json!({"model": a.model, "sentences": a.sentences, "mode": meta.mode});
    write_json(
        &a.out.with_extension("provenance.json"),
        &provenance("embed", &settings, json!({})),
    )
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = validate_config(&a.config)?;
    let proportions = match &a.proportions {
        Some(s) => parse_list("proportions", s)?,
        None => cfg.sweep.proportions.clone(),
    };
    let out = a
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Argument("--out is required when the config has no output_dir".into()))?;
    let report = run_sweep(&cfg, &proportions, &out)?;
    for (net, rho) in &report.spearman {
        info!("{net}: spearman(p, mean_r) = {rho:?}");
    }
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(a),
        Command::Convolve(a) => cmd_convolve(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::Groupstats(a) => cmd_groupstats(a),
        Command::Report(a) => cmd_report(a),
        Command::Toytune(a) => cmd_toytune(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Parses `args` and runs one verb. Returns the process exit code:
/// 0 on success, 2 for invalid input or config, 3 for runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return 2;
        }
        // a second call in one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

