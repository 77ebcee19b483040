//! Plant a known effect in model B and recover it with the voxel-wise paired test.

use voxelenc::cv::{cross_validate, make_folds, CvReport, FoldScheme};
use voxelenc::ridge::RidgeConfig;
use voxelenc::stats::{compare_models, CompareOptions};
use voxelenc::synth::{generate, plant_effect, SynthDataset, SynthSpec};

fn score(ds: &SynthDataset) -> voxelenc::Result<Vec<CvReport>> {
    let plan = make_folds(ds.spec.n_trs, 5, FoldScheme::Contiguous, 0)?;
    let cfg = RidgeConfig::default();
    ds.subjects.iter().map(|s| cross_validate(&ds.design, &s.bold.signal, &plan, &cfg)).collect()
}

fn main() -> voxelenc::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let spec = SynthSpec::new(200, 300, 2.0, 8, 0.25, seed);
    let a = generate(&spec)?;
    let planted: Vec<usize> = (0..10).map(|i| 5 + 20 * i).collect();
    let b = plant_effect(&a, 0.15, &planted)?;
    let map = compare_models(&score(&a)?, &score(&b)?, CompareOptions::default())?;
    let rejected = map.rejected();
    let hits = rejected.iter().filter(|v| planted.contains(v)).count();
    let jaccard = hits as f64 / (rejected.len() + planted.len() - hits) as f64;
    let positive = planted.iter().filter(|&&v| map.t[v] > 0.0).count();
    let t_planted: Vec<String> = planted.iter().map(|&v| format!("{:.1}", map.t[v])).collect();
    println!("rejected {:?}", rejected);
    println!("t at planted voxels [{}]", t_planted.join(" "));
    println!("jaccard vs planted {jaccard:.3}, planted voxels with t > 0: {positive}/10");
    Ok(())
}
