//! Sample the canonical HRF and build a convolved design matrix.

use voxelenc::hrf::{convolve_track, Hrf, HrfParams};
use voxelenc::matrix_io::{StimulusEvent, StimulusTrack};

fn main() -> voxelenc::Result<()> {
    let hrf = Hrf::new(HrfParams::default())?;
    let grid: Vec<f64> = (0..=32_000).map(|i| i as f64 * 1e-3).collect();
    let vals: Vec<f64> = grid.iter().map(|&t| hrf.sample(t)).collect::<voxelenc::Result<_>>()?;
    let (i_max, _) = vals.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let (i_min, _) = vals.iter().enumerate().fold((0, f64::MAX), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
    println!("peak at {:.3} s, undershoot minimum at {:.3} s", grid[i_max], grid[i_min]);

    let track = StimulusTrack::new(
        "run-01",
        2,
        vec![
            StimulusEvent { onset_s: 2.0, duration_s: 3.0, vector: vec![1.0, 0.0] },
            StimulusEvent { onset_s: 12.0, duration_s: 2.0, vector: vec![0.0, 1.0] },
            StimulusEvent { onset_s: 20.0, duration_s: 4.0, vector: vec![0.5, -0.5] },
        ],
    )?;
    let conv = convolve_track(&track, &HrfParams::default(), 2.0, 24)?;
    for r in 0..conv.design.rows() {
        let row = conv.design.row(r);
        println!("TR {r:>2}: {:+.4} {:+.4}", row[0], row[1]);
    }
    Ok(())
}
