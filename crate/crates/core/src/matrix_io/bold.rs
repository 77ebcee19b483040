use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_matrix, write_matrix, DenseMatrix};
use crate::error::{Error, Result};

/// Measured voxel responses for one run, `n_trs x n_voxels`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoldRun {
    pub signal: DenseMatrix,
    pub tr_s: f64,
    pub subject_id: String,
    pub run_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoldMeta {
    tr_s: f64,
    subject_id: String,
    run_id: String,
}

impl BoldRun {
    pub fn new(
        signal: DenseMatrix,
        tr_s: f64,
        subject_id: impl Into<String>,
        run_id: impl Into<String>,
    ) -> Result<Self> {
        if !(tr_s.is_finite() && tr_s > 0.0) {
            return Err(Error::Validation(format!("tr_s must be > 0, got {tr_s}")));
        }
        if signal.rows() < 2 {
            return Err(Error::Validation(format!(
                "a BOLD run needs at least 2 samples, got {}",
                signal.rows()
            )));
        }
        Ok(BoldRun {
            signal,
            tr_s,
            subject_id: subject_id.into(),
            run_id: run_id.into(),
        })
    }

    pub fn n_trs(&self) -> usize {
        self.signal.rows()
    }

    pub fn n_voxels(&self) -> usize {
        self.signal.cols()
    }

    /// Writes `path` (VEM1) plus a `.json` sidecar carrying TR and ids.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_matrix(&self.signal, path)?;
        let meta = BoldMeta {
            tr_s: self.tr_s,
            subject_id: self.subject_id.clone(),
            run_id: self.run_id.clone(),
        };
        let json_path = path.with_extension("json");
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&json_path, e))?;
        fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
    }

    /// Loads a run saved by [`BoldRun::save`]. The sidecar is mandatory:
    /// there is no default TR.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let signal = read_matrix(path)?;
        let json_path = path.with_extension("json");
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let meta: BoldMeta = serde_json::from_str(&text).map_err(|e| Error::json(&json_path, e))?;
        BoldRun::new(signal, meta.tr_s, meta.subject_id, meta.run_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants() {
        assert!(BoldRun::new(DenseMatrix::zeros(4, 2), 0.0, "s", "r").is_err());
        assert!(BoldRun::new(DenseMatrix::zeros(1, 2), 2.0, "s", "r").is_err());
        assert!(BoldRun::new(DenseMatrix::zeros(2, 2), 2.0, "s", "r").is_ok());
    }

    #[test]
    fn save_load() {
        let dir = tempfile::tempdir().unwrap();
        let run = BoldRun::new(DenseMatrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64), 1.5, "sub-01", "run-1").unwrap();
        let p = dir.path().join("bold.vem");
        run.save(&p).unwrap();
        assert_eq!(BoldRun::load(&p).unwrap(), run);
    }

    #[test]
    fn missing_sidecar_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bold.vem");
        write_matrix(&DenseMatrix::zeros(3, 2), &p).unwrap();
        assert!(BoldRun::load(&p).is_err());
    }
}
