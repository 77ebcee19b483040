//! Tuned-proportion sweep on a synthetic brain driven by the untuned model.

use std::path::PathBuf;
use std::time::Instant;

use serde_json::json;
use voxelenc::pipeline::{parse_config, run_sweep};

fn main() -> voxelenc::Result<()> {
    let cfg = parse_config(json!({"tr_s": 2.0}), std::path::Path::new("."))?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("voxelenc-sweep"));
    let t0 = Instant::now();
    let report = run_sweep(&cfg, &cfg.sweep.proportions, &out)?;
    for row in &report.rows {
        let p = row.proportion.map_or("untuned".to_string(), |p| p.to_string());
        println!("{p:>8} {:<17} mean_r {:+.4} std_r {:.4}", row.network, row.mean_r, row.std_r);
    }
    println!("spearman: {:?}", report.spearman);
    println!("wrote {} in {:.1?}", out.display(), t0.elapsed());
    Ok(())
}
