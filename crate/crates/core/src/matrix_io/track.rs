use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_matrix, write_matrix, DenseMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusEvent {
    pub onset_s: f64,
    pub duration_s: f64,
    pub vector: Vec<f64>,
}

/// Timestamped embedding events for one scan run.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusTrack {
    pub run_id: String,
    pub dim: usize,
    pub events: Vec<StimulusEvent>,
}

impl StimulusTrack {
    pub fn new(run_id: impl Into<String>, dim: usize, events: Vec<StimulusEvent>) -> Result<Self> {
        let t = StimulusTrack {
            run_id: run_id.into(),
            dim,
            events,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = 0.0f64;
        for (i, e) in self.events.iter().enumerate() {
            if !(e.onset_s.is_finite() && e.onset_s >= 0.0) {
                return Err(Error::Validation(format!(
                    "event {i}: onset {} is not a non-negative finite time",
                    e.onset_s
                )));
            }
            if !(e.duration_s.is_finite() && e.duration_s >= 0.0) {
                return Err(Error::Validation(format!(
                    "event {i}: duration {} is invalid",
                    e.duration_s
                )));
            }
            if e.onset_s < prev {
                return Err(Error::Validation(format!(
                    "event {i}: onsets not sorted ({} after {prev})",
                    e.onset_s
                )));
            }
            if e.vector.len() != self.dim {
                return Err(Error::Validation(format!(
                    "event {i}: vector length {} != dim {}",
                    e.vector.len(),
                    self.dim
                )));
            }
            if e.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("event {i}: non-finite vector entry")));
            }
            prev = e.onset_s;
        }
        Ok(())
    }

    /// Same event timing, vectors replaced by `f(vector)`.
    pub fn map_vectors(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let events: Vec<_> = self
            .events
            .iter()
            .map(|e| StimulusEvent {
                onset_s: e.onset_s,
                duration_s: e.duration_s,
                vector: f(&e.vector),
            })
            .collect();
        let dim = events.first().map_or(self.dim, |e| e.vector.len());
        StimulusTrack::new(self.run_id.clone(), dim, events)
    }

    pub fn vectors(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.events.len(), self.dim, |r, c| self.events[r].vector[c])
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackFile {
    dim: usize,
    run_id: String,
    /// VEM1 file with one event vector per row, relative to the JSON file.
    /// Defaults to the JSON path with a `.vem` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vectors: Option<String>,
    events: Vec<EventEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventEntry {
    onset_s: f64,
    duration_s: f64,
    vector_row: usize,
}

fn sibling_vectors(json_path: &Path, explicit: Option<&str>) -> PathBuf {
    match explicit {
        Some(rel) => json_path
            .parent()
            .map(|p| p.join(rel))
            .unwrap_or_else(|| PathBuf::from(rel)),
        None => json_path.with_extension("vem"),
    }
}

pub fn load_stimulus_track(path: impl AsRef<Path>) -> Result<StimulusTrack> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TrackFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let vec_path = sibling_vectors(path, file.vectors.as_deref());
    let vectors = read_matrix(&vec_path)?;
    if !file.events.is_empty() && vectors.cols() != file.dim {
        return Err(Error::Validation(format!(
            "{}: vector matrix has {} columns but dim is {}",
            vec_path.display(),
            vectors.cols(),
            file.dim
        )));
    }
    let mut events = Vec::with_capacity(file.events.len());
    for (i, e) in file.events.iter().enumerate() {
        if e.vector_row >= vectors.rows() {
            return Err(Error::Index(format!(
                "event {i}: vector_row {} out of range (matrix has {} rows)",
                e.vector_row,
                vectors.rows()
            )));
        }
        events.push(StimulusEvent {
            onset_s: e.onset_s,
            duration_s: e.duration_s,
            vector: vectors.row(e.vector_row).to_vec(),
        });
    }
    StimulusTrack::new(file.run_id, file.dim, events)
}

/// Writes `<path>` (JSON) and its sibling `.vem` vector matrix (f32 rows).
pub fn save_stimulus_track(track: &StimulusTrack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let vec_path = path.with_extension("vem");
    write_matrix(&track.vectors().to_f32(), &vec_path)?;
    let file = TrackFile {
        dim: track.dim,
        run_id: track.run_id.clone(),
        vectors: vec_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned()),
        events: track
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| EventEntry {
                onset_s: e.onset_s,
                duration_s: e.duration_s,
                vector_row: i,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
