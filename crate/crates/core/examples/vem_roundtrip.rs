//! Write and read back VEM1 matrices and a stimulus track.

use voxelenc::matrix_io::{load_stimulus_track, read_matrix, save_stimulus_track, write_matrix};
use voxelenc::synth::random_track;
use voxelenc::DenseMatrix;

fn main() -> voxelenc::Result<()> {
    let dir = tempdir();
    let m = DenseMatrix::from_fn(3, 4, |r, c| r as f64 + 0.25 * c as f64);
    let path = dir.join("m.vem");
    write_matrix(&m, &path)?;
    let back = read_matrix(&path)?;
    println!("{}x{} matrix, max abs diff after round trip {}", back.rows(), back.cols(), m.max_abs_diff(&back));

    let f32_path = dir.join("m32.vem");
    write_matrix(&m.to_f32(), &f32_path)?;
    println!("f32 copy: {} bytes on disk", std::fs::metadata(&f32_path).map(|md| md.len()).unwrap_or(0));

    let track = random_track(6, 120.0, 3);
    let track_path = dir.join("track.json");
    save_stimulus_track(&track, &track_path)?;
    let loaded = load_stimulus_track(&track_path)?;
    println!("track with {} events of dim {} survives: {}", loaded.events.len(), loaded.dim, loaded == track);
    Ok(())
}

fn tempdir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("voxelenc-vem-{}", std::process::id()));
    std::fs::create_dir_all(&d).expect("create temp dir");
    d
}
