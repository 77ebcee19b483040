use serde::{Deserialize, Serialize};

use crate::cv::CvReport;
use crate::error::Result;
use crate::matrix_io::RoiAtlas;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub code: i64,
    pub name: String,
    /// `None` when the network has no scored voxels.
    pub mean_r: Option<f64>,
    /// Population standard deviation over voxels.
    pub std_r: Option<f64>,
    pub n_voxels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSummary {
    pub networks: Vec<NetworkSummary>,
}

impl RoiSummary {
    pub fn get(&self, name: &str) -> Option<&NetworkSummary> {
        self.networks.iter().find(|n| n.name == name)
    }
}

pub fn summarize_roi(report: &CvReport, atlas: &RoiAtlas) -> Result<RoiSummary> {
    summarize_map(&report.r, &report.excluded_mask, atlas)
}

/// Mean/std of `r` per network over non-excluded voxels, in code order.
pub fn summarize_map(r: &[f64], excluded: &[bool], atlas: &RoiAtlas) -> Result<RoiSummary> {
    atlas.check_voxels(r.len())?;
    atlas.check_voxels(excluded.len())?;
    let networks = atlas
        .names
        .iter()
        .map(|(&code, name)| {
            let vals: Vec<f64> = (0..r.len())
                .filter(|&v| atlas.labels[v] == code && !excluded[v])
                .map(|v| r[v])
                .collect();
            let n = vals.len();
            let (mean_r, std_r) = if n == 0 {
                (None, None)
            } else {
                // shifted by the first value so constant blocks are exact
                let x0 = vals[0];
                let mean = x0 + vals.iter().map(|x| x - x0).sum::<f64>() / n as f64;
                let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
                (Some(mean), Some(var.sqrt()))
            };
            NetworkSummary {
                code,
                name: name.clone(),
                mean_r,
                std_r,
                n_voxels: n,
            }
        })
        .collect();
    Ok(RoiSummary { networks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn atlas(labels: Vec<i64>, names: &[(i64, &str)]) -> RoiAtlas {
        RoiAtlas::new(
            labels,
            names.iter().map(|(c, n)| (*c, n.to_string())).collect::<BTreeMap<_, _>>(),
        )
        .unwrap()
    }

    #[test]
    fn single_network_is_global_mean() {
        let r = [0.1, 0.3, 0.5, 0.2];
        let a = atlas(vec![1; 4], &[(1, "language")]);
        let s = summarize_map(&r, &[false; 4], &a).unwrap();
        assert!((s.networks[0].mean_r.unwrap() - 0.275).abs() < 1e-15);
        assert_eq!(s.networks[0].n_voxels, 4);
    }

    #[test]
    fn constant_blocks_and_empty_network() {
        let r = [0.2, 0.2, 0.4, 0.4, 0.4];
        let a = atlas(vec![1, 1, 2, 2, 2], &[(1, "dmn"), (2, "visual"), (3, "dorsal_attention")]);
        let s = summarize_map(&r, &[false; 5], &a).unwrap();
        assert_eq!(s.get("dmn").unwrap().mean_r, Some(0.2));
        assert_eq!(s.get("visual").unwrap().mean_r, Some(0.4));
        let empty = s.get("dorsal_attention").unwrap();
        assert_eq!((empty.n_voxels, empty.mean_r), (0, None));
    }

    #[test]
    fn excluded_voxels_skipped_and_shape_checked() {
        let a = atlas(vec![1, 1, 1], &[(1, "x")]);
        let s = summarize_map(&[0.5, 0.0, 0.3], &[false, true, false], &a).unwrap();
        assert_eq!(s.networks[0].n_voxels, 2);
        assert!((s.networks[0].mean_r.unwrap() - 0.4).abs() < 1e-15);
        assert!(summarize_map(&[0.1; 2], &[false; 2], &a).is_err());
    }
}
