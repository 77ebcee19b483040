use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use voxelenc::matrix_io::{load_stimulus_track, read_matrix};

fn voxelenc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxelenc"))
        .args(args)
        .env_remove("VOXELENC_THREADS")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_every_verb() {
    let out = voxelenc(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for verb in ["synth", "convolve", "fit", "score", "groupstats", "report", "toytune", "embed", "sweep"] {
        assert!(text.contains(verb), "missing {verb}");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(voxelenc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(voxelenc(&["convolve", "--track", "x.json"]).status.code(), Some(2));
    assert_eq!(voxelenc(&["--threads", "0", "sweep", "--config", "c.json"]).status.code(), Some(2));
}

#[test]
fn config_errors_are_all_listed_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"ridge": {"lambdas": [5, 1]}, "colour": 1, "datasets": ["missing"]}"#).unwrap();
    let out = voxelenc(&["sweep", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["tr_s", "ridge.lambdas", "colour", "datasets[0]"] {
        assert!(err.contains(needle), "missing {needle} in {err}");
    }
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let task = dir.path().join("task.json");
    voxelenc::lm::topic_task(64, 8, 5, 0).unwrap().save(&task).unwrap();
    let base = dir.path().join("base.vem");
    let config = voxelenc::lm::LmConfig { n_layers: 1, d_model: 8, n_heads: 2, vocab: 64, context: 16, d_ff: 8 };
    let model = voxelenc::lm::ToyLm::untuned(voxelenc::lm::ToyLmParams::init(config, 0).unwrap());
    let meta = voxelenc::lm::ModelMeta {
        config,
        mode: "untuned".into(),
        proportion: None,
        prefix_len: 0,
        n_params: model.params.n_params(),
        provenance: None,
    };
    voxelenc::lm::save_model(&model, &meta, &base).unwrap();
    let out = voxelenc(&[
        "toytune", "--mode", "full", "--task", p(&task), "--base", p(&base), "--lr", "1e30", "--steps", "5",
        "--out", p(&dir.path().join("m.vem")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn mode_fields_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let task = dir.path().join("task.json");
    voxelenc::lm::topic_task(64, 8, 5, 0).unwrap().save(&task).unwrap();
    let out = voxelenc(&[
        "toytune", "--mode", "prefix", "--proportion", "0.5", "--task", p(&task), "--out",
        p(&dir.path().join("m.vem")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("proportion"));
}

/// A track written the way an external extractor would: hand-built JSON plus
/// a little-endian f32 VEM1 payload.
#[test]
fn external_track_files_convolve() {
    let dir = tempfile::tempdir().unwrap();
    let (rows, cols) = (3u64, 4u64);
    let mut bytes = b"VEM1".to_vec();
    bytes.extend_from_slice(&[0, 2, 0, 0]);
    bytes.extend_from_slice(&rows.to_le_bytes());
    bytes.extend_from_slice(&cols.to_le_bytes());
    for i in 0..rows * cols {
        bytes.extend_from_slice(&(i as f32 * 0.5).to_le_bytes());
    }
    fs::write(dir.path().join("emb.vem"), &bytes).unwrap();
    let json = r#"{"dim": 4, "run_id": "run-01", "vectors": "emb.vem", "events": [
        {"onset_s": 0.5, "duration_s": 2.0, "vector_row": 0},
        {"onset_s": 3.0, "duration_s": 2.5, "vector_row": 1},
        {"onset_s": 7.25, "duration_s": 1.0, "vector_row": 2}]}"#;
    let track_path = dir.path().join("emb.json");
    fs::write(&track_path, json).unwrap();

    let track = load_stimulus_track(&track_path).unwrap();
    assert_eq!(track.events[2].vector, vec![4.0, 4.5, 5.0, 5.5]);

    let out_path = dir.path().join("Z.vem");
    let out = voxelenc(&["convolve", "--track", p(&track_path), "--tr", "1.5", "--n-trs", "20", "--out", p(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let z = read_matrix(&out_path).unwrap();
    assert_eq!(z.shape(), (20, 4));
    let side: serde_json::Value = serde_json::from_slice(&fs::read(out_path.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side["truncated"], 0);
    assert_eq!(side["provenance"]["verb"], "convolve");
    assert_eq!(side["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn sweep_with_no_proportions_emits_only_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"tr_s": 2.0, "sweep": {
            "model": {"n_layers": 2, "d_model": 8, "n_heads": 2, "vocab": 40, "context": 16, "d_ff": 16},
            "pretrain": {"steps": 2}, "brain": {"n_subjects": 2, "n_voxels": 20, "n_sentences": 30}}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = voxelenc(&["sweep", "--config", p(&cfg), "--out", p(&out_dir), "--proportions", ""]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "proportion,network,mean_r,std_r");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.starts_with("untuned,")));
}
