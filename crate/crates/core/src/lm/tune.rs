//! Tuning regimes (full, partial by layer proportion, prefix), the training
//! loop, simulated pretraining and the finite-difference gradient check.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{LmConfig, ParamLayout};
use super::data::{BigramSource, TaskDataset, TokenSequence};
use super::model::{sequence_loss, Gradient};
use super::params::{PrefixBank, ToyLmParams};
use crate::error::{Error, Result};

pub const DEFAULT_PREFIX_LEN: usize = 8;

/// Which parameters a tuning run may change.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableMask {
    /// One flag per tensor in `ParamLayout::tensors` order.
    pub tensors: Vec<bool>,
    pub prefix: bool,
}

impl TrainableMask {
    pub fn all(layout: &ParamLayout) -> Self {
        TrainableMask {
            tensors: vec![true; layout.tensors.len()],
            prefix: false,
        }
    }

    pub fn prefix_only(layout: &ParamLayout) -> Self {
        TrainableMask {
            tensors: vec![false; layout.tensors.len()],
            prefix: true,
        }
    }

    pub(crate) fn layer_any(&self, layout: &ParamLayout, l: usize) -> bool {
        let s = layout.layer_start(l);
        self.tensors[s..s + 12].iter().any(|&b| b)
    }

    /// Number of trainable scalars; the prefix counts `prefix_values` entries.
    pub fn count(&self, layout: &ParamLayout, prefix_values: usize) -> usize {
        let params: usize = layout
            .tensors
            .iter()
            .zip(&self.tensors)
            .filter(|(_, &on)| on)
            .map(|(t, _)| t.len())
            .sum();
        params + if self.prefix { prefix_values } else { 0 }
    }

    pub fn trainable_names(&self, layout: &ParamLayout) -> Vec<String> {
        layout
            .tensors
            .iter()
            .zip(&self.tensors)
            .filter(|(_, &on)| on)
            .map(|(t, _)| t.name())
            .collect()
    }
}

/// Top `ceil(p * n)` layers plus `W_out`; `p = 1` also frees the embeddings,
/// `p = 0` leaves only `W_out`.
pub fn select_trainable(layout: &ParamLayout, p: f64) -> Result<TrainableMask> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Argument(format!("proportion must be in [0, 1], got {p}")));
    }
    if p == 1.0 {
        return Ok(TrainableMask::all(layout));
    }
    let n = layout.n_layers();
    // tolerance keeps products like 0.3 * 10 from rounding up to 4
    let k = ((p * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut tensors = vec![false; layout.tensors.len()];
    for l in n - k.min(n)..n {
        let s = layout.layer_start(l);
        tensors[s..s + 12].fill(true);
    }
    tensors[layout.w_out_index()] = true;
    Ok(TrainableMask {
        tensors,
        prefix: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuneMode {
    Full,
    Partial { proportion: f64 },
    Prefix { prefix_len: usize },
}

impl TuneMode {
    pub fn name(&self) -> &'static str {
        match self {
            TuneMode::Full => "full",
            TuneMode::Partial { .. } => "partial",
            TuneMode::Prefix { .. } => "prefix",
        }
    }

    pub fn mask(&self, layout: &ParamLayout) -> Result<TrainableMask> {
        match *self {
            TuneMode::Full => Ok(TrainableMask::all(layout)),
            TuneMode::Partial { proportion } => select_trainable(layout, proportion),
            TuneMode::Prefix { .. } => Ok(TrainableMask::prefix_only(layout)),
        }
    }
}

impl fmt::Display for TuneMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TuneMode::Full => write!(f, "full"),
            TuneMode::Partial { proportion } => write!(f, "partial(p={proportion})"),
            TuneMode::Prefix { prefix_len } => write!(f, "prefix(len={prefix_len})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr: 0.05,
            steps: 200,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeName {
    Full,
    Partial,
    Prefix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTuneConfig {
    mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    proportion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prefix_len: Option<usize>,
    #[serde(default)]
    optimizer: OptimizerConfig,
    #[serde(default)]
    seed: u64,
}

/// A tuning run. Only the active mode's fields exist: `proportion` for
/// partial, `prefix_len` for prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTuneConfig", into = "RawTuneConfig")]
pub struct TuneConfig {
    pub mode: TuneMode,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl TryFrom<RawTuneConfig> for TuneConfig {
    type Error = Error;

    fn try_from(raw: RawTuneConfig) -> Result<Self> {
        let mut errs = Vec::new();
        let mode = match raw.mode {
            ModeName::Full => TuneMode::Full,
            ModeName::Partial => match raw.proportion {
                Some(p) => TuneMode::Partial { proportion: p },
                None => {
                    errs.push("partial mode requires `proportion`".to_string());
                    TuneMode::Full
                }
            },
            ModeName::Prefix => TuneMode::Prefix {
                prefix_len: raw.prefix_len.unwrap_or(DEFAULT_PREFIX_LEN),
            },
        };
        if raw.proportion.is_some() && raw.mode != ModeName::Partial {
            errs.push("`proportion` is only valid in partial mode".to_string());
        }
        if raw.prefix_len.is_some() && raw.mode != ModeName::Prefix {
            errs.push("`prefix_len` is only valid in prefix mode".to_string());
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let cfg = TuneConfig {
            mode,
            optimizer: raw.optimizer,
            seed: raw.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<TuneConfig> for RawTuneConfig {
    fn from(c: TuneConfig) -> Self {
        let (mode, proportion, prefix_len) = match c.mode {
            TuneMode::Full => (ModeName::Full, None, None),
            TuneMode::Partial { proportion } => (ModeName::Partial, Some(proportion), None),
            TuneMode::Prefix { prefix_len } => (ModeName::Prefix, None, Some(prefix_len)),
        };
        RawTuneConfig {
            mode,
            proportion,
            prefix_len,
            optimizer: c.optimizer,
            seed: c.seed,
        }
    }
}

impl TuneConfig {
    pub fn new(mode: TuneMode, optimizer: OptimizerConfig, seed: u64) -> Result<Self> {
        let c = TuneConfig {
            mode,
            optimizer,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match self.mode {
            TuneMode::Partial { proportion } if !(0.0..=1.0).contains(&proportion) => {
                errs.push(format!("proportion must be in [0, 1], got {proportion}"))
            }
            TuneMode::Prefix { prefix_len: 0 } => errs.push("prefix_len must be >= 1".into()),
            _ => {}
        }
        let o = &self.optimizer;
        if !(o.lr.is_finite() && o.lr > 0.0) {
            errs.push(format!("optimizer.lr must be > 0, got {}", o.lr));
        }
        if o.batch_size == 0 {
            errs.push("optimizer.batch_size must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Parameters plus an optional prefix bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm {
    pub params: ToyLmParams,
    pub prefix: Option<PrefixBank>,
}

impl ToyLm {
    pub fn untuned(params: ToyLmParams) -> Self {
        ToyLm {
            params,
            prefix: None,
        }
    }

    pub fn config(&self) -> &LmConfig {
        &self.params.config
    }

    pub fn embed(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        super::model::embed_sequence(&self.params, self.prefix.as_ref(), tokens)
    }

    pub fn forward(&self, tokens: &[usize]) -> Result<crate::DenseMatrix> {
        super::model::forward(&self.params, self.prefix.as_ref(), tokens)
    }

    /// Summed continuation NLL over a dataset.
    pub fn loss(&self, data: &[TokenSequence]) -> Result<f64> {
        let mut total = 0.0;
        for s in data {
            total += sequence_loss(&self.params, self.prefix.as_ref(), s, None)?.0;
        }
        Ok(total)
    }

    /// Mean continuation NLL per example.
    pub fn mean_loss(&self, data: &[TokenSequence]) -> Result<f64> {
        Ok(self.loss(data)? / data.len().max(1) as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub model: ToyLm,
    /// Mean per-example loss of each step's mini-batch, before the update.
    pub losses: Vec<f64>,
    /// Steps within the first 10 whose window-5 smoothed loss went up.
    pub flagged: Vec<usize>,
    pub trainable: usize,
}

/// Steps `i` in `5..10` with `mean(losses[i-4..=i]) > mean(losses[i-5..i])`.
pub fn smoothed_increases(losses: &[f64]) -> Vec<usize> {
    const W: usize = 5;
    let end = losses.len().min(10);
    let ma = |i: usize| losses[i + 1 - W..=i].iter().sum::<f64>() / W as f64;
    (W..end).filter(|&i| ma(i) > ma(i - 1)).collect()
}

fn batch_gradient(
    model: &ToyLm,
    batch: &[&TokenSequence],
    mask: &TrainableMask,
) -> Result<(f64, Gradient)> {
    let per: Vec<Result<(f64, Option<Gradient>)>> = batch
        .par_iter()
        .map(|s| sequence_loss(&model.params, model.prefix.as_ref(), s, Some(mask)))
        .collect();
    let mut loss = 0.0;
    let mut acc: Option<Gradient> = None;
    // index-ordered reduction keeps results independent of the thread count
    for r in per {
        let (l, g) = r?;
        let g = g.expect("mask given so gradient computed");
        loss += l;
        match acc.as_mut() {
            None => acc = Some(g),
            Some(a) => {
                for (x, y) in a.params.iter_mut().zip(&g.params) {
                    *x += y;
                }
                for (x, y) in a.prefix.iter_mut().zip(&g.prefix) {
                    *x += y;
                }
            }
        }
    }
    let mut g = acc.expect("batch is non-empty");
    let n = batch.len() as f64;
    g.params.iter_mut().for_each(|x| *x /= n);
    g.prefix.iter_mut().for_each(|x| *x /= n);
    Ok((loss / n, g))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    pm: Vec<f64>,
    pv: Vec<f64>,
    t: i32,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[inline]
fn adam_step(x: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, c1: f64, c2: f64) {
    *m = ADAM_B1 * *m + (1.0 - ADAM_B1) * g;
    *v = ADAM_B2 * *v + (1.0 - ADAM_B2) * g * g;
    *x -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
}

/// Minimizes mean continuation NLL over `data` for the tensors in `mask`.
/// Frozen tensors are never written.
pub fn train(
    mut model: ToyLm,
    data: &TaskDataset,
    mask: &TrainableMask,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<TuneOutcome> {
    data.validate()?;
    if data.vocab != model.params.config.vocab {
        return Err(Error::Validation(format!(
            "task vocab {} does not match model vocab {}",
            data.vocab, model.params.config.vocab
        )));
    }
    let layout = model.params.layout.clone();
    let ranges: Vec<std::ops::Range<usize>> = layout
        .tensors
        .iter()
        .zip(&mask.tensors)
        .filter(|(_, &on)| on)
        .map(|(t, _)| t.range())
        .collect();
    let train_prefix = mask.prefix && model.prefix.is_some();
    let prefix_values = model.prefix.as_ref().map_or(0, |b| b.len());
    let trainable = mask.count(&layout, prefix_values);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.examples.len()).collect();
    order.shuffle(&mut rng);
    let bs = opt.batch_size.min(order.len());
    let mut cursor = 0;
    let mut adam = (opt.kind == OptimizerKind::Adam).then(|| Adam {
        m: vec![0.0; layout.total],
        v: vec![0.0; layout.total],
        pm: vec![0.0; prefix_values],
        pv: vec![0.0; prefix_values],
        t: 0,
    });
    let mut losses = Vec::with_capacity(opt.steps);

    for step in 0..opt.steps {
        if cursor + bs > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch: Vec<&TokenSequence> = order[cursor..cursor + bs]
            .iter()
            .map(|&i| &data.examples[i])
            .collect();
        cursor += bs;
        let (loss, grad) = batch_gradient(&model, &batch, mask)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step,
                msg: format!("loss is {loss}"),
            });
        }
        losses.push(loss);
        match adam.as_mut() {
            None => {
                for r in &ranges {
                    for (x, g) in model.params.data[r.clone()].iter_mut().zip(&grad.params[r.clone()]) {
                        *x -= opt.lr * g;
                    }
                }
                if train_prefix {
                    let bank = model.prefix.as_mut().expect("checked above");
                    for (x, g) in bank.data_mut().iter_mut().zip(&grad.prefix) {
                        *x -= opt.lr * g;
                    }
                }
            }
            Some(st) => {
                st.t += 1;
                let c1 = 1.0 - ADAM_B1.powi(st.t);
                let c2 = 1.0 - ADAM_B2.powi(st.t);
                for r in &ranges {
                    for i in r.clone() {
                        adam_step(
                            &mut model.params.data[i],
                            grad.params[i],
                            &mut st.m[i],
                            &mut st.v[i],
                            opt.lr,
                            c1,
                            c2,
                        );
                    }
                }
                if train_prefix {
                    let bank = model.prefix.as_mut().expect("checked above");
                    for (i, x) in bank.data_mut().iter_mut().enumerate() {
                        adam_step(x, grad.prefix[i], &mut st.pm[i], &mut st.pv[i], opt.lr, c1, c2);
                    }
                }
            }
        }
        if model.params.data[..].iter().any(|x| !x.is_finite()) {
            return Err(Error::Training {
                step,
                msg: "parameters became non-finite".into(),
            });
        }
    }

    let flagged = smoothed_increases(&losses);
    if !flagged.is_empty() {
        log::warn!("smoothed training loss increased at early step(s) {flagged:?}");
    }
    Ok(TuneOutcome {
        model,
        losses,
        flagged,
        trainable,
    })
}

/// Salt separating the prefix-initialization stream from the batch stream.
const PREFIX_SEED_SALT: u64 = 0x5052_4546_4958_0001;

/// Tunes a copy of `params` on `data` under `cfg`. Prefix mode starts from a
/// fresh random bank and leaves `params` untouched.
pub fn tune(params: &ToyLmParams, data: &TaskDataset, cfg: &TuneConfig) -> Result<TuneOutcome> {
    cfg.validate()?;
    let mask = cfg.mode.mask(&params.layout)?;
    let prefix = match cfg.mode {
        TuneMode::Prefix { prefix_len } => Some(PrefixBank::random(
            &params.config,
            prefix_len,
            cfg.seed ^ PREFIX_SEED_SALT,
        )?),
        _ => None,
    };
    let model = ToyLm {
        params: params.clone(),
        prefix,
    };
    train(model, data, &mask, &cfg.optimizer, cfg.seed)
}

/// Simulated pretraining: seeded init, then language modeling on bigram text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSpec {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub n_sequences: usize,
    pub fanout: usize,
    pub lr: f64,
}

impl Default for PretrainSpec {
    fn default() -> Self {
        PretrainSpec {
            seed: 0,
            steps: 100,
            batch_size: 8,
            seq_len: 16,
            n_sequences: 256,
            fanout: 4,
            lr: 0.02,
        }
    }
}

pub fn pretrain(config: LmConfig, spec: &PretrainSpec) -> Result<(ToyLmParams, Vec<f64>)> {
    let params = ToyLmParams::init(config, spec.seed)?;
    if spec.steps == 0 {
        return Ok((params, Vec::new()));
    }
    let src = BigramSource::new(config.vocab, spec.fanout.max(1), spec.seed.wrapping_add(1));
    let corpus = src.corpus(config.vocab, spec.n_sequences.max(1), spec.seq_len, spec.seed.wrapping_add(2));
    let opt = OptimizerConfig {
        kind: OptimizerKind::Sgd,
        lr: spec.lr,
        steps: spec.steps,
        batch_size: spec.batch_size,
    };
    let mask = TrainableMask::all(&params.layout);
    let out = train(ToyLm::untuned(params), &corpus, &mask, &opt, spec.seed.wrapping_add(3))?;
    Ok((out.model.params, out.losses))
}

fn entry(m: &mut ToyLm, is_prefix: bool, i: usize) -> &mut f64 {
    if is_prefix {
        &mut m.prefix.as_mut().expect("prefix present").data_mut()[i]
    } else {
        &mut m.params.data[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor holding the worst entry.
    pub worst: String,
    pub n_checked: usize,
    /// Largest absolute analytic gradient on a frozen entry; zero when the mask is honored.
    pub frozen_max_abs: f64,
}

/// Relative-error floor so entries with near-zero gradient are judged absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Compares analytic gradients of the summed continuation NLL against central
/// differences. Per trainable tensor, checks `per_tensor` random entries plus
/// the entry with the largest analytic gradient.
pub fn grad_check(
    model: &ToyLm,
    mode: &TuneMode,
    samples: &[TokenSequence],
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if samples.is_empty() {
        return Err(Error::Argument("grad_check needs at least one sample".into()));
    }
    let mask = mode.mask(&model.params.layout)?;
    if mask.prefix && model.prefix.is_none() {
        return Err(Error::Argument("prefix mode grad_check needs a prefix bank".into()));
    }
    let mut grad = vec![0.0; model.params.layout.total];
    let mut gprefix = vec![0.0; model.prefix.as_ref().map_or(0, |b| b.len())];
    for s in samples {
        let (_, g) = sequence_loss(&model.params, model.prefix.as_ref(), s, Some(&mask))?;
        let g = g.expect("mask given");
        for (a, b) in grad.iter_mut().zip(&g.params) {
            *a += b;
        }
        for (a, b) in gprefix.iter_mut().zip(&g.prefix) {
            *a += b;
        }
    }

    let layout = &model.params.layout;
    let mut frozen_max_abs = 0.0f64;
    for (t, &on) in layout.tensors.iter().zip(&mask.tensors) {
        if !on {
            for &g in &grad[t.range()] {
                frozen_max_abs = frozen_max_abs.max(g.abs());
            }
        }
    }
    if !mask.prefix {
        for &g in &gprefix {
            frozen_max_abs = frozen_max_abs.max(g.abs());
        }
    }

    // (name, flat indices, is_prefix)
    let mut groups: Vec<(String, Vec<usize>, bool)> = Vec::new();
    for (t, &on) in layout.tensors.iter().zip(&mask.tensors) {
        if on {
            groups.push((t.name(), t.range().collect(), false));
        }
    }
    if mask.prefix {
        let bank = model.prefix.as_ref().expect("checked above");
        for l in 0..model.params.config.n_layers {
            let idx = (0..bank.prefix_len())
                .flat_map(|p| (0..model.params.config.d_model).map(move |c| (p, c)))
                .map(|(p, c)| bank.index(p, l, c))
                .collect();
            groups.push((format!("prefix.layer{l}"), idx, true));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = model.clone();
    let loss_of = |m: &ToyLm| -> Result<f64> { m.loss(samples) };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        n_checked: 0,
        frozen_max_abs,
    };
    for (name, idx, is_prefix) in &groups {
        let analytic = |i: usize| if *is_prefix { gprefix[i] } else { grad[i] };
        let mut picks: Vec<usize> = (0..per_tensor.min(idx.len()))
            .map(|_| idx[rng.random_range(0..idx.len())])
            .collect();
        let argmax = *idx
            .iter()
            .max_by(|&&a, &&b| analytic(a).abs().total_cmp(&analytic(b).abs()))
            .expect("tensors are non-empty");
        picks.push(argmax);
        picks.sort_unstable();
        picks.dedup();
        for i in picks {
            let orig = *entry(&mut work, *is_prefix, i);
            *entry(&mut work, *is_prefix, i) = orig + GRAD_CHECK_STEP;
            let lp = loss_of(&work)?;
            *entry(&mut work, *is_prefix, i) = orig - GRAD_CHECK_STEP;
            let lm = loss_of(&work)?;
            *entry(&mut work, *is_prefix, i) = orig;
            let numeric = (lp - lm) / (2.0 * GRAD_CHECK_STEP);
            let a = analytic(i);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            report.n_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = name.clone();
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::config::TensorKind;
    use crate::lm::data::topic_task;

    fn tiny() -> LmConfig {
        LmConfig {
            n_layers: 4,
            d_model: 8,
            n_heads: 2,
            vocab: 24,
            context: 24,
            d_ff: 16,
        }
    }

    fn jittered(seed: u64) -> ToyLmParams {
        let mut p = ToyLmParams::init(tiny(), seed).unwrap();
        let noise = ToyLmParams::init(tiny(), seed + 99).unwrap();
        for (x, n) in p.data.iter_mut().zip(&noise.data) {
            *x += 0.2 * n;
        }
        p
    }

    #[test]
    fn selection_rule() {
        let layout = ParamLayout::new(&LmConfig::default());
        let all = select_trainable(&layout, 1.0).unwrap();
        assert!(all.tensors.iter().all(|&b| b));

        let head = select_trainable(&layout, 0.0).unwrap();
        assert_eq!(head.trainable_names(&layout), vec!["w_out".to_string()]);

        let half = select_trainable(&layout, 0.5).unwrap();
        for (t, &on) in layout.tensors.iter().zip(&half.tensors) {
            let expect = matches!(t.layer, Some(2) | Some(3)) || t.kind == TensorKind::WOut;
            assert_eq!(on, expect, "{}", t.name());
        }
        assert!(half.count(&layout, 0) < all.count(&layout, 0));
        let q = select_trainable(&layout, 0.25).unwrap();
        assert!(q.count(&layout, 0) < all.count(&layout, 0));
        assert!(select_trainable(&layout, 1.5).is_err());

        let ten = ParamLayout::new(&LmConfig { n_layers: 10, ..LmConfig::default() });
        let m = select_trainable(&ten, 0.3).unwrap();
        assert_eq!((0..10).filter(|&l| m.layer_any(&ten, l)).count(), 3);
    }

    #[test]
    fn tune_config_fields_follow_mode() {
        let c: TuneConfig = serde_json::from_str(r#"{"mode":"prefix"}"#).unwrap();
        assert_eq!(c.mode, TuneMode::Prefix { prefix_len: DEFAULT_PREFIX_LEN });
        assert!(serde_json::from_str::<TuneConfig>(r#"{"mode":"partial"}"#).is_err());
        assert!(serde_json::from_str::<TuneConfig>(r#"{"mode":"full","proportion":0.5}"#).is_err());
        assert!(serde_json::from_str::<TuneConfig>(r#"{"mode":"partial","proportion":0.5,"prefix_len":3}"#).is_err());
        assert!(serde_json::from_str::<TuneConfig>(r#"{"mode":"full","lr":1}"#).is_err());
        let p: TuneConfig =
            serde_json::from_str(r#"{"mode":"partial","proportion":0.25,"optimizer":{"lr":0.1}}"#).unwrap();
        let back: TuneConfig = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
        assert_eq!(p.optimizer.steps, OptimizerConfig::default().steps);
    }

    fn samples() -> Vec<TokenSequence> {
        vec![
            TokenSequence::new(vec![1, 5, 9, 2], vec![23]),
            TokenSequence::new(vec![7, 3], vec![11, 0, 4]),
        ]
    }

    #[test]
    fn grad_check_all_modes() {
        let params = jittered(1);
        let full = ToyLm::untuned(params.clone());
        let r = grad_check(&full, &TuneMode::Full, &samples(), 4, 0).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert_eq!(r.frozen_max_abs, 0.0);

        let r = grad_check(&full, &TuneMode::Partial { proportion: 0.5 }, &samples(), 4, 1).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert_eq!(r.frozen_max_abs, 0.0);

        let pre = ToyLm {
            params,
            prefix: Some(PrefixBank::random(&tiny(), 3, 2).unwrap()),
        };
        let mode = TuneMode::Prefix { prefix_len: 3 };
        let r = grad_check(&pre, &mode, &samples(), 6, 2).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert_eq!(r.frozen_max_abs, 0.0);
    }

    #[test]
    fn frozen_tensors_stay_bit_identical() {
        let params = jittered(2);
        let data = topic_task(24, 16, 5, 0).unwrap();
        let opt = OptimizerConfig {
            lr: 0.2,
            steps: 25,
            batch_size: 4,
            ..OptimizerConfig::default()
        };
        let pre = tune(&params, &data, &TuneConfig::new(TuneMode::Prefix { prefix_len: 2 }, opt, 3).unwrap()).unwrap();
        assert_eq!(pre.model.params.data, params.data);
        assert_ne!(pre.model.prefix, PrefixBank::random(&tiny(), 2, 3 ^ PREFIX_SEED_SALT).ok());

        let part = tune(&params, &data, &TuneConfig::new(TuneMode::Partial { proportion: 0.25 }, opt, 3).unwrap()).unwrap();
        let mask = select_trainable(&params.layout, 0.25).unwrap();
        for (t, &on) in params.layout.tensors.iter().zip(&mask.tensors) {
            let same = part.model.params.data[t.range()] == params.data[t.range()];
            assert_eq!(same, !on, "{}", t.name());
        }
        assert_eq!(part.trainable, mask.count(&params.layout, 0));
    }

    #[test]
    fn tuning_is_deterministic() {
        let params = jittered(4);
        let data = topic_task(24, 12, 5, 1).unwrap();
        let cfg = TuneConfig::new(
            TuneMode::Full,
            OptimizerConfig { steps: 6, batch_size: 5, ..OptimizerConfig::default() },
            9,
        )
        .unwrap();
        let a = tune(&params, &data, &cfg).unwrap();
        let b = tune(&params, &data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn zero_loss_point_is_stationary() {
        let mut params = jittered(5);
        for l in 0..tiny().n_layers {
            for k in [TensorKind::Wo, TensorKind::W2, TensorKind::B2] {
                params.tensor_mut(k, Some(l)).fill(0.0);
            }
        }
        // With the residual branches zeroed, h at position t is tok_emb + pos_emb.
        let seq = TokenSequence::new(vec![3, 8, 2], vec![17]);
        let d = tiny().d_model;
        let u: Vec<f64> = (0..d)
            .map(|c| params.tensor(TensorKind::TokEmb, None)[2 * d + c] + params.tensor(TensorKind::PosEmb, None)[2 * d + c])
            .collect();
        let norm2: f64 = u.iter().map(|x| x * x).sum();
        let v = tiny().vocab;
        let w_out = params.tensor_mut(TensorKind::WOut, None);
        for c in 0..d {
            w_out[c * v + 17] = 50.0 * u[c] / norm2;
        }
        let model = ToyLm::untuned(params);
        let mask = TrainableMask::all(&model.params.layout);
        let (loss, g) = sequence_loss(&model.params, None, &seq, Some(&mask)).unwrap();
        let gn: f64 = g.unwrap().params.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(loss < 1e-12, "loss {loss}");
        assert!(gn < 1e-6, "grad norm {gn}");
    }

    #[test]
    fn nan_loss_reports_step() {
        let mut params = jittered(6);
        params.data[0] = f64::NAN;
        let data = TaskDataset {
            vocab: 24,
            examples: vec![TokenSequence::new(vec![0], vec![1])],
        };
        let cfg = TuneConfig::new(TuneMode::Full, OptimizerConfig { steps: 3, ..OptimizerConfig::default() }, 0).unwrap();
        assert!(matches!(tune(&params, &data, &cfg), Err(Error::Training { step: 0, .. })));
    }

    #[test]
    fn smoothing_flags_rises_only() {
        let down: Vec<f64> = (0..12).map(|i| 10.0 - i as f64).collect();
        assert!(smoothed_increases(&down).is_empty());
        let mut bump = down.clone();
        bump[7] = 50.0;
        assert_eq!(smoothed_increases(&bump), vec![7]);
        assert!(smoothed_increases(&[1.0, 2.0]).is_empty());
    }
}
