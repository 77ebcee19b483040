//! Declarative pipeline configuration.
//!
//! Validation collects every problem (unknown keys, type errors, semantic
//! violations) before reporting, so one run surfaces the whole list.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cv::FoldScheme;
use crate::error::{Error, Result};
use crate::hrf::HrfParams;
use crate::lm::{LmConfig, OptimizerConfig, PretrainSpec};
use crate::ridge::RidgeConfig;
use crate::synth::{NoiseModel, Snr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    #[default]
    Contiguous,
    ByRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldConfig {
    pub n_folds: usize,
    pub scheme: SchemeName,
    /// Run lengths in TRs, required by `by-run`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_lengths: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for FoldConfig {
    fn default() -> Self {
        FoldConfig {
            n_folds: 5,
            scheme: SchemeName::Contiguous,
            run_lengths: None,
            seed: 0,
        }
    }
}

impl FoldConfig {
    pub fn scheme(&self) -> FoldScheme {
        match self.scheme {
            SchemeName::Contiguous => FoldScheme::Contiguous,
            SchemeName::ByRun => FoldScheme::ByRun(self.run_lengths.clone().unwrap_or_default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub n_examples: usize,
    pub seq_len: usize,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            n_examples: 200,
            seq_len: 7,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneSection {
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for TuneSection {
    fn default() -> Self {
        TuneSection {
            optimizer: OptimizerConfig {
                steps: 150,
                ..OptimizerConfig::default()
            },
            seed: 0,
        }
    }
}

/// Synthetic brain whose planted signal is driven by the untuned model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BrainSpec {
    pub n_subjects: usize,
    pub n_voxels: usize,
    /// SNR in the language network; other networks carry pure noise.
    pub snr: Snr,
    pub n_sentences: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for BrainSpec {
    fn default() -> Self {
        BrainSpec {
            n_subjects: 12,
            n_voxels: 400,
            snr: Snr(1.0),
            n_sentences: 150,
            noise: NoiseModel::White,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub proportions: Vec<f64>,
    pub model: LmConfig,
    pub pretrain: PretrainSpec,
    pub task: TaskSpec,
    pub tune: TuneSection,
    pub brain: BrainSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            proportions: vec![0.25, 0.5, 0.75, 1.0],
            model: LmConfig::default(),
            pretrain: PretrainSpec::default(),
            task: TaskSpec::default(),
            tune: TuneSection::default(),
            brain: BrainSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Seconds per TR; required.
    pub tr_s: f64,
    pub hrf: HrfParams,
    pub ridge: RidgeConfig,
    pub folds: FoldConfig,
    pub alpha: f64,
    pub datasets: Vec<PathBuf>,
    pub comparisons: Vec<Comparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub sweep: SweepConfig,
}

const ROOT_KEYS: &[&str] = &[
    "tr_s",
    "hrf",
    "ridge",
    "folds",
    "alpha",
    "datasets",
    "comparisons",
    "output_dir",
    "sweep",
];
const HRF_KEYS: &[&str] = &[
    "peak_shape",
    "undershoot_shape",
    "peak_scale",
    "undershoot_scale",
    "undershoot_ratio",
    "length_s",
    "oversample_hz",
];
const RIDGE_KEYS: &[&str] = &["lambdas", "penalty", "standardize", "fit_intercept"];
const FOLD_KEYS: &[&str] = &["n_folds", "scheme", "run_lengths", "seed"];
const SWEEP_KEYS: &[&str] = &["proportions", "model", "pretrain", "task", "tune", "brain"];
const MODEL_KEYS: &[&str] = &["n_layers", "d_model", "n_heads", "vocab", "context", "d_ff"];
const PRETRAIN_KEYS: &[&str] = &[
    "seed",
    "steps",
    "batch_size",
    "seq_len",
    "n_sequences",
    "fanout",
    "lr",
];
const TASK_KEYS: &[&str] = &["n_examples", "seq_len", "seed"];
const TUNE_KEYS: &[&str] = &["optimizer", "seed"];
const OPTIMIZER_KEYS: &[&str] = &["kind", "lr", "steps", "batch_size"];
const BRAIN_KEYS: &[&str] = &["n_subjects", "n_voxels", "snr", "n_sentences", "noise", "seed"];
const NOISE_KEYS: &[&str] = &["kind", "rho"];
const COMPARISON_KEYS: &[&str] = &["a", "b"];

/// Drops keys not in `allowed` from the object at `path`, recording each.
fn strip_unknown(v: &mut Value, path: &str, allowed: &[&str], errs: &mut Vec<String>) {
    let Some(obj) = v.as_object_mut() else {
        errs.push(format!("{path}: expected an object"));
        *v = Value::Object(Map::new());
        return;
    };
    let unknown: Vec<String> = obj
        .keys()
        .filter(|k| !allowed.contains(&k.as_str()))
        .cloned()
        .collect();
    for k in unknown {
        let full = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        errs.push(format!("unknown key `{full}`"));
        obj.remove(&k);
    }
}

fn child<'a>(v: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    v.as_object_mut().and_then(|o| o.get_mut(key))
}

fn parse_section<T: DeserializeOwned + Default>(v: Option<&Value>, path: &str, errs: &mut Vec<String>) -> T {
    match v {
        None => T::default(),
        Some(v) => serde_json::from_value(v.clone()).unwrap_or_else(|e| {
            errs.push(format!("{path}: {e}"));
            T::default()
        }),
    }
}

/// Parses and cross-checks a config document.
pub fn parse_config(mut root: Value, base_dir: &Path) -> Result<PipelineConfig> {
    let mut errs = Vec::new();
    strip_unknown(&mut root, "", ROOT_KEYS, &mut errs);
    for (key, allowed) in [("hrf", HRF_KEYS), ("ridge", RIDGE_KEYS), ("folds", FOLD_KEYS), ("sweep", SWEEP_KEYS)] {
        if let Some(v) = child(&mut root, key) {
            strip_unknown(v, key, allowed, &mut errs);
        }
    }
    if let Some(sweep) = child(&mut root, "sweep") {
        for (key, allowed) in [
            ("model", MODEL_KEYS),
            ("pretrain", PRETRAIN_KEYS),
            ("task", TASK_KEYS),
            ("tune", TUNE_KEYS),
            ("brain", BRAIN_KEYS),
        ] {
            if let Some(v) = child(sweep, key) {
                strip_unknown(v, &format!("sweep.{key}"), allowed, &mut errs);
            }
        }
        if let Some(opt) = child(sweep, "tune").and_then(|t| child(t, "optimizer")) {
            strip_unknown(opt, "sweep.tune.optimizer", OPTIMIZER_KEYS, &mut errs);
        }
        if let Some(noise) = child(sweep, "brain").and_then(|b| child(b, "noise")) {
            strip_unknown(noise, "sweep.brain.noise", NOISE_KEYS, &mut errs);
        }
    }
    if let Some(Value::Array(items)) = child(&mut root, "comparisons") {
        for (i, item) in items.iter_mut().enumerate() {
            strip_unknown(item, &format!("comparisons[{i}]"), COMPARISON_KEYS, &mut errs);
        }
    }

    let obj = root.as_object().cloned().unwrap_or_default();
    let tr_s = match obj.get("tr_s") {
        None => {
            errs.push("missing required key `tr_s` (seconds per TR; never defaulted)".into());
            f64::NAN
        }
        Some(v) => match v.as_f64() {
            Some(t) if t.is_finite() && t > 0.0 => t,
            _ => {
                errs.push(format!("tr_s: must be a number > 0, got {v}"));
                f64::NAN
            }
        },
    };
    let hrf: HrfParams = parse_section(obj.get("hrf"), "hrf", &mut errs);
    let ridge: RidgeConfig = parse_section(obj.get("ridge"), "ridge", &mut errs);
    let folds: FoldConfig = parse_section(obj.get("folds"), "folds", &mut errs);
    let alpha: f64 = match obj.get("alpha") {
        None => 0.05,
        Some(v) => v.as_f64().unwrap_or_else(|| {
            errs.push(format!("alpha: expected a number, got {v}"));
            0.05
        }),
    };
    let datasets: Vec<PathBuf> = parse_section(obj.get("datasets"), "datasets", &mut errs);
    let comparisons: Vec<Comparison> = parse_section(obj.get("comparisons"), "comparisons", &mut errs);
    let output_dir: Option<PathBuf> = parse_section(obj.get("output_dir"), "output_dir", &mut errs);
    let sweep_obj = obj.get("sweep").and_then(|s| s.as_object()).cloned().unwrap_or_default();
    let defaults = SweepConfig::default();
    let sweep = SweepConfig {
        proportions: match sweep_obj.get("proportions") {
            None => defaults.proportions,
            Some(v) => parse_section(Some(v), "sweep.proportions", &mut errs),
        },
        model: parse_section(sweep_obj.get("model"), "sweep.model", &mut errs),
        pretrain: parse_section(sweep_obj.get("pretrain"), "sweep.pretrain", &mut errs),
        task: parse_section(sweep_obj.get("task"), "sweep.task", &mut errs),
        tune: parse_section(sweep_obj.get("tune"), "sweep.tune", &mut errs),
        brain: parse_section(sweep_obj.get("brain"), "sweep.brain", &mut errs),
    };

    // semantic checks
    if let Err(e) = hrf.validate() {
        errs.push(format!("hrf: {e}"));
    }
    if let Err(e) = ridge.validate() {
        errs.push(format!("ridge.lambdas: {e}"));
    }
    if folds.n_folds < 2 {
        errs.push(format!("folds.n_folds: must be >= 2, got {}", folds.n_folds));
    }
    match (folds.scheme, &folds.run_lengths) {
        (SchemeName::ByRun, None) => errs.push("folds.run_lengths: required by scheme `by-run`".into()),
        (SchemeName::Contiguous, Some(_)) => {
            errs.push("folds.run_lengths: only valid with scheme `by-run`".into())
        }
        _ => {}
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        errs.push(format!("alpha: must be in (0, 1), got {alpha}"));
    }
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
    for (i, d) in datasets.iter().enumerate() {
        if !resolve(d).exists() {
            errs.push(format!("datasets[{i}]: path `{}` does not exist", d.display()));
        }
    }
    for (i, c) in comparisons.iter().enumerate() {
        for (side, p) in [("a", &c.a), ("b", &c.b)] {
            if !resolve(p).exists() {
                errs.push(format!("comparisons[{i}].{side}: path `{}` does not exist", p.display()));
            }
        }
    }
    if let Some(p) = sweep.proportions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        errs.push(format!("sweep.proportions: {p} is outside [0, 1]"));
    }
    if let Err(e) = sweep.model.validate() {
        errs.push(format!("sweep.model: {e}"));
    }
    let b = &sweep.brain;
    if b.n_subjects == 0 || b.n_voxels == 0 || b.n_sentences == 0 {
        errs.push("sweep.brain: n_subjects, n_voxels and n_sentences must be >= 1".into());
    }
    if !(b.snr.0 >= 0.0) {
        errs.push(format!("sweep.brain.snr: must be >= 0, got {}", b.snr.0));
    }
    let o = &sweep.tune.optimizer;
    if !(o.lr > 0.0) || o.batch_size == 0 {
        errs.push("sweep.tune.optimizer: lr must be > 0 and batch_size >= 1".into());
    }
    if sweep.task.seq_len % 2 == 0 {
        errs.push(format!("sweep.task.seq_len: must be odd, got {}", sweep.task.seq_len));
    }

    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let datasets = datasets.iter().map(|d| resolve(d)).collect();
    let comparisons = comparisons
        .iter()
        .map(|c| Comparison {
            a: resolve(&c.a),
            b: resolve(&c.b),
        })
        .collect();
    Ok(PipelineConfig {
        tr_s,
        hrf,
        ridge,
        folds,
        alpha,
        datasets,
        comparisons,
        output_dir: output_dir.map(|p| resolve(&p)),
        sweep,
    })
}

/// Reads and validates a config file. Relative paths resolve against its directory.
pub fn validate_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(vec![format!("{}: not valid JSON: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(root, base)
}
