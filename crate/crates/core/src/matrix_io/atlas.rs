use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_matrix, write_matrix, DenseMatrix};
use crate::error::{Error, Result};

/// Per-voxel functional network labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiAtlas {
    pub labels: Vec<i64>,
    pub names: BTreeMap<i64, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AtlasMeta {
    names: BTreeMap<i64, String>,
}

impl RoiAtlas {
    pub fn new(labels: Vec<i64>, names: BTreeMap<i64, String>) -> Result<Self> {
        if let Some(code) = labels.iter().find(|c| !names.contains_key(c)) {
            return Err(Error::Validation(format!(
                "atlas label {code} has no network name"
            )));
        }
        Ok(RoiAtlas { labels, names })
    }

    pub fn n_voxels(&self) -> usize {
        self.labels.len()
    }

    pub fn check_voxels(&self, n_voxels: usize) -> Result<()> {
        if self.labels.len() != n_voxels {
            return Err(Error::Shape(format!(
                "atlas covers {} voxels, data has {n_voxels}",
                self.labels.len()
            )));
        }
        Ok(())
    }

    /// Writes labels as a 1 x N_V VEM1 matrix and names as a `.json` sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let m = DenseMatrix::row_vector(self.labels.iter().map(|&c| c as f64).collect());
        write_matrix(&m, path)?;
        let json_path = path.with_extension("json");
        let text = serde_json::to_string_pretty(&AtlasMeta {
            names: self.names.clone(),
        })
        .map_err(|e| Error::json(&json_path, e))?;
        fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
    }

    /// Loads labels from a 1 x N_V or N_V x 1 matrix of integer codes. Names
    /// come from the `.json` sidecar when present, else `network_<code>`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let m = read_matrix(path)?;
        if m.rows() != 1 && m.cols() != 1 {
            return Err(Error::Shape(format!(
                "atlas must be a vector, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let mut labels = Vec::with_capacity(m.data().len());
        for (i, &v) in m.data().iter().enumerate() {
            if v.fract() != 0.0 {
                return Err(Error::Validation(format!(
                    "atlas entry {i} = {v} is not an integer code"
                )));
            }
            labels.push(v as i64);
        }
        let json_path = path.with_extension("json");
        let names = if json_path.exists() {
            let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
            let meta: AtlasMeta =
                serde_json::from_str(&text).map_err(|e| Error::json(&json_path, e))?;
            meta.names
        } else {
            labels
                .iter()
                .map(|&c| (c, format!("network_{c}")))
                .collect()
        };
        RoiAtlas::new(labels, names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unnamed_code_rejected() {
        let names = BTreeMap::from([(1, "language".to_string())]);
        assert!(RoiAtlas::new(vec![1, 2], names).is_err());
    }

    #[test]
    fn round_trip_and_default_names() {
        let dir = tempfile::tempdir().unwrap();
        let names = BTreeMap::from([(1, "language".to_string()), (2, "visual".to_string())]);
        let a = RoiAtlas::new(vec![1, 1, 2], names).unwrap();
        let p = dir.path().join("atlas.vem");
        a.save(&p).unwrap();
        assert_eq!(RoiAtlas::load(&p).unwrap(), a);

        fs::remove_file(p.with_extension("json")).unwrap();
        let b = RoiAtlas::load(&p).unwrap();
        assert_eq!(b.names[&2], "network_2");
    }
}
