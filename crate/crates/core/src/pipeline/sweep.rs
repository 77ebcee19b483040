//! Tuned-proportion sweep: tune, embed, convolve, score, aggregate.
//!
//! The synthetic brain's language network is driven by the untuned model's
//! sentence embeddings; every other network is pure noise.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use serde::Serialize;
use serde_json::json;

use super::config::PipelineConfig;
use super::provenance::provenance;
use crate::cv::{cross_validate, make_folds};
use crate::error::{Error, Result};
use crate::hrf::convolve_track;
use crate::lm::{pretrain, topic_task, tune, SentenceSet, ToyLm, TuneConfig, TuneMode};
use crate::matrix_io::{StimulusEvent, StimulusTrack};
use crate::stats::{spearman, summarize_map};
use crate::synth::{generate_with_track, SynthDataset, SynthSpec, NETWORKS};

/// Seconds of scan kept after the last sentence ends.
const TAIL_S: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// `None` for the untuned baseline.
    pub proportion: Option<f64>,
    pub network: String,
    /// Mean over subjects of the per-subject network mean r.
    pub mean_r: f64,
    /// Sample standard deviation of the same over subjects.
    pub std_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Spearman correlation of proportion (untuned = 0) with mean_r, per network.
    pub spearman: BTreeMap<String, Option<f64>>,
}

impl SweepReport {
    pub fn mean_r(&self, proportion: Option<f64>, network: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.proportion == proportion && r.network == network)
            .map(|r| r.mean_r)
    }
}

/// Embeds each sentence and lays the vectors out as a stimulus track.
/// Vectors are rounded to f32, matching the on-disk track precision.
pub fn embed_sentences(model: &ToyLm, sentences: &SentenceSet) -> Result<StimulusTrack> {
    let events = sentences
        .sentences
        .iter()
        .map(|s| {
            Ok(StimulusEvent {
                onset_s: s.onset_s,
                duration_s: s.duration_s,
                vector: model.embed(&s.tokens)?.iter().map(|&v| v as f32 as f64).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    StimulusTrack::new(sentences.run_id.clone(), model.config().d_model, events)
}

fn n_trs_for(sentences: &SentenceSet, tr_s: f64) -> usize {
    let end = sentences
        .sentences
        .iter()
        .map(|s| s.onset_s + s.duration_s)
        .fold(0.0, f64::max);
    ((end + TAIL_S) / tr_s).ceil() as usize
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Scores one embedding track against every subject; one row per network.
fn score_variant(
    cfg: &PipelineConfig,
    track: &StimulusTrack,
    brain: &SynthDataset,
    proportion: Option<f64>,
) -> Result<Vec<SweepRow>> {
    let n_trs = brain.spec.n_trs;
    let mut z = convolve_track(track, &cfg.hrf, cfg.tr_s, n_trs)
        .map_err(|e| e.in_stage("convolve"))?
        .design;
    z.zscore_columns();
    let plan = make_folds(n_trs, cfg.folds.n_folds, cfg.folds.scheme(), cfg.folds.seed)
        .map_err(|e| e.in_stage("folds"))?;
    let mut per_network: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for subject in &brain.subjects {
        let report = cross_validate(&z, &subject.bold.signal, &plan, &cfg.ridge)
            .map_err(|e| e.in_stage(&format!("score {}", subject.bold.subject_id)))?;
        let summary = summarize_map(&report.r, &report.excluded_mask, &brain.atlas)?;
        for name in NETWORKS {
            let m = summary.get(name).and_then(|n| n.mean_r).unwrap_or(f64::NAN);
            per_network.entry(name).or_default().push(m);
        }
    }
    Ok(NETWORKS
        .iter()
        .map(|&name| {
            let (mean_r, std_r) = mean_std(&per_network[name]);
            SweepRow {
                proportion,
                network: name.to_string(),
                mean_r,
                std_r,
            }
        })
        .collect())
}

fn csv_line(row: &SweepRow) -> String {
    let p = row.proportion.map_or("untuned".to_string(), |p| p.to_string());
    format!("{p},{},{},{}\n", row.network, row.mean_r, row.std_r)
}

/// Runs the sweep, writing `sweep.csv` row by row and `sweep.json` at the end.
/// A failing stage leaves the rows written so far in place.
pub fn run_sweep(cfg: &PipelineConfig, proportions: &[f64], out_dir: &Path) -> Result<SweepReport> {
    if let Some(p) = proportions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Argument(format!("proportion {p} is outside [0, 1]")));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let sw = &cfg.sweep;
    let csv_path = out_dir.join("sweep.csv");
    let mut csv = BufWriter::new(File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?);
    let io_err = |e| Error::io(&csv_path, e);
    csv.write_all(b"proportion,network,mean_r,std_r\n").map_err(io_err)?;
    csv.flush().map_err(io_err)?;

    info!("pretraining base model");
    let (base, _) = pretrain(sw.model, &sw.pretrain).map_err(|e| e.in_stage("pretrain"))?;
    let task = topic_task(sw.model.vocab, sw.task.n_examples, sw.task.seq_len, sw.task.seed)
        .map_err(|e| e.in_stage("task"))?;
    let sentences = SentenceSet::synthetic(sw.model.vocab, sw.brain.n_sentences, sw.brain.seed);
    let untuned = ToyLm::untuned(base.clone());
    let base_track = embed_sentences(&untuned, &sentences).map_err(|e| e.in_stage("embed untuned"))?;

    let n_trs = n_trs_for(&sentences, cfg.tr_s);
    let mut spec = SynthSpec::new(sw.brain.n_voxels, n_trs, cfg.tr_s, sw.model.d_model, sw.brain.snr.0, sw.brain.seed);
    spec.n_subjects = sw.brain.n_subjects;
    spec.noise = sw.brain.noise;
    spec.hrf = cfg.hrf;
    for &name in &NETWORKS[1..] {
        spec.network_snr.insert(name.to_string(), crate::synth::Snr(0.0));
    }
    let brain = generate_with_track(&spec, base_track.clone()).map_err(|e| e.in_stage("brain"))?;

    let mut rows = Vec::new();
    let mut variants: Vec<Option<f64>> = vec![None];
    variants.extend(proportions.iter().map(|&p| Some(p)));
    for variant in variants {
        let stage = variant.map_or("untuned".to_string(), |p| format!("p={p}"));
        info!("sweep variant {stage}");
        let track = match variant {
            None => base_track.clone(),
            Some(p) => {
                let tcfg = TuneConfig::new(TuneMode::Partial { proportion: p }, sw.tune.optimizer, sw.tune.seed)?;
                let outcome = tune(&base, &task, &tcfg).map_err(|e| e.in_stage(&format!("tune {stage}")))?;
                embed_sentences(&outcome.model, &sentences).map_err(|e| e.in_stage(&format!("embed {stage}")))?
            }
        };
        let variant_rows = score_variant(cfg, &track, &brain, variant).map_err(|e| e.in_stage(&stage))?;
        for row in &variant_rows {
            csv.write_all(csv_line(row).as_bytes()).map_err(io_err)?;
        }
        csv.flush().map_err(io_err)?;
        rows.extend(variant_rows);
    }

    let spearman_map = NETWORKS
        .iter()
        .map(|&name| {
            let (ps, rs): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.network == name)
                .map(|r| (r.proportion.unwrap_or(0.0), r.mean_r))
                .unzip();
            (name.to_string(), spearman(&ps, &rs))
        })
        .collect();
    let report = SweepReport {
        rows,
        spearman: spearman_map,
    };
    let json_path = out_dir.join("sweep.json");
    let doc = json!({
        "proportions": proportions,
        "n_trs": n_trs,
        "rows": report.rows,
        "spearman": report.spearman,
        "provenance": provenance("sweep", cfg, json!({
            "pretrain": sw.pretrain.seed,
            "task": sw.task.seed,
            "tune": sw.tune.seed,
            "brain": sw.brain.seed,
            "folds": cfg.folds.seed,
        })),
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::json(&json_path, e))?;
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    Ok(report)
}
