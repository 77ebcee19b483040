//! Cross-validated encoding scores on a synthetic subject, with and without noise.

use voxelenc::cv::{cross_validate, make_folds, FoldScheme};
use voxelenc::ridge::RidgeConfig;
use voxelenc::stats::summarize_roi;
use voxelenc::synth::{generate, SynthSpec};

fn main() -> voxelenc::Result<()> {
    for snr in [f64::INFINITY, 1.0, 0.0] {
        let mut spec = SynthSpec::new(200, 400, 2.0, 16, snr, 42);
        spec.n_subjects = 1;
        let ds = generate(&spec)?;
        let plan = make_folds(spec.n_trs, 5, FoldScheme::Contiguous, 0)?;
        let report = cross_validate(&ds.design, &ds.subjects[0].bold.signal, &plan, &RidgeConfig::default())?;
        let min = report.r.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("snr {snr:>4}: mean r {:+.4}, min r {:+.4}", report.mean_r(), min);
        for net in summarize_roi(&report, &ds.atlas)?.networks {
            println!("    {:<17} {:+.4}", net.name, net.mean_r.unwrap_or(f64::NAN));
        }
    }
    Ok(())
}
