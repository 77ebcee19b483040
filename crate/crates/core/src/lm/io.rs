use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::LmConfig;
use super::params::{PrefixBank, ToyLmParams};
use super::tune::ToyLm;
use crate::error::{Error, Result};
use crate::matrix_io::{read_matrix, write_matrix, DenseMatrix};

/// JSON sidecar of a model file. The `.vem` payload is a `1 x (n_params +
/// prefix_len * n_layers * d_model)` f64 row: parameters, then the prefix bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub config: LmConfig,
    /// `untuned`, `full`, `partial` or `prefix`.
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proportion: Option<f64>,
    pub prefix_len: usize,
    pub n_params: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

pub fn save_model(model: &ToyLm, meta: &ModelMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut flat = model.params.data.clone();
    if let Some(bank) = &model.prefix {
        flat.extend_from_slice(bank.data());
    }
    write_matrix(&DenseMatrix::row_vector(flat), path)?;
    let json_path = path.with_extension("json");
    let text = serde_json::to_string_pretty(meta).map_err(|e| Error::json(&json_path, e))?;
    fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ToyLm, ModelMeta)> {
    let path = path.as_ref();
    let json_path = path.with_extension("json");
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| Error::json(&json_path, e))?;
    meta.config.validate()?;
    let m = read_matrix(path)?;
    if m.rows() != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("model payload must be a row vector, got {}x{}", m.rows(), m.cols()),
        });
    }
    let mut data = m.into_data();
    let n_prefix = meta.prefix_len * meta.config.n_layers * meta.config.d_model;
    if data.len() != meta.n_params + n_prefix {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!(
                "payload has {} values, sidecar declares {} parameters + {n_prefix} prefix values",
                data.len(),
                meta.n_params
            ),
        });
    }
    let prefix_data = data.split_off(meta.n_params);
    let params = ToyLmParams::from_data(meta.config, data)?;
    let prefix = if meta.prefix_len > 0 {
        Some(PrefixBank::new(&meta.config, meta.prefix_len, prefix_data)?)
    } else {
        None
    };
    Ok((ToyLm { params, prefix }, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_prefix() {
        let cfg = LmConfig {
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            vocab: 20,
            context: 16,
            d_ff: 16,
        };
        let params = ToyLmParams::init(cfg, 4).unwrap();
        let model = ToyLm {
            prefix: Some(PrefixBank::random(&cfg, 3, 1).unwrap()),
            params,
        };
        let meta = ModelMeta {
            config: cfg,
            mode: "prefix".into(),
            proportion: None,
            prefix_len: 3,
            n_params: model.params.n_params(),
            provenance: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.vem");
        save_model(&model, &meta, &p).unwrap();
        let (back, m2) = load_model(&p).unwrap();
        assert_eq!(back, model);
        assert_eq!(m2, meta);

        let bad = ModelMeta { prefix_len: 2, ..meta };
        save_model(&model, &bad, &p).unwrap();
        assert!(matches!(load_model(&p), Err(Error::Format { .. })));
    }
}
