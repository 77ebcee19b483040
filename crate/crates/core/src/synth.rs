//! Synthetic multi-subject datasets with planted encoding weights.
//!
//! Every subject hears the same stimulus track. BOLD is `Z W* + noise` with `Z`
//! the z-scored convolved design and `W*` column-normalized. Noise at each voxel
//! is rescaled to the exact empirical variance `var(signal) / snr`, so the
//! realized SNR equals the requested one.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hrf::{convolve_track, HrfParams};
use crate::matrix_io::{
    save_stimulus_track, write_matrix, BoldRun, DenseMatrix, RoiAtlas, StimulusEvent, StimulusTrack,
};

pub const NETWORKS: [&str; 4] = ["language", "default_mode", "visual", "dorsal_attention"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum NoiseModel {
    #[default]
    White,
    Ar1 { rho: f64 },
}

/// SNR as a variance ratio. Serialized as a number, or `"inf"` for noise-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr(pub f64);

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Snr(v)),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => {
                Ok(Snr(f64::INFINITY))
            }
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid snr `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_subjects")]
    pub n_subjects: usize,
    pub n_voxels: usize,
    pub n_trs: usize,
    pub tr_s: f64,
    pub dim: usize,
    pub snr: Snr,
    /// Per-network SNR overriding `snr`, keyed by network name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub network_snr: BTreeMap<String, Snr>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hrf: HrfParams,
}

fn default_subjects() -> usize {
    12
}

impl SynthSpec {
    pub fn new(n_voxels: usize, n_trs: usize, tr_s: f64, dim: usize, snr: f64, seed: u64) -> Self {
        SynthSpec {
            n_subjects: default_subjects(),
            n_voxels,
            n_trs,
            tr_s,
            dim,
            snr: Snr(snr),
            network_snr: BTreeMap::new(),
            noise: NoiseModel::White,
            seed,
            hrf: HrfParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("n_subjects", self.n_subjects),
            ("n_voxels", self.n_voxels),
            ("dim", self.dim),
        ] {
            if v == 0 {
                errs.push(format!("{name} must be >= 1"));
            }
        }
        if self.n_trs < 2 {
            errs.push("n_trs must be >= 2".into());
        }
        if !(self.tr_s.is_finite() && self.tr_s > 0.0) {
            errs.push(format!("tr_s must be > 0, got {}", self.tr_s));
        }
        for (name, snr) in std::iter::once(("snr", &self.snr))
            .chain(self.network_snr.iter().map(|(k, v)| (k.as_str(), v)))
        {
            if !(snr.0 >= 0.0) {
                errs.push(format!("{name}: snr must be >= 0, got {}", snr.0));
            }
        }
        for k in self.network_snr.keys() {
            if !NETWORKS.contains(&k.as_str()) {
                errs.push(format!("network_snr: unknown network `{k}`"));
            }
        }
        if let NoiseModel::Ar1 { rho } = self.noise {
            if !(rho > -1.0 && rho < 1.0) {
                errs.push(format!("AR1 rho must be in (-1, 1), got {rho}"));
            }
        }
        if let Err(e) = self.hrf.validate() {
            errs.push(e.to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Requested SNR at every voxel.
    pub fn voxel_snr(&self, atlas: &RoiAtlas) -> Vec<f64> {
        atlas
            .labels
            .iter()
            .map(|code| {
                let name = &atlas.names[code];
                self.network_snr.get(name).unwrap_or(&self.snr).0
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSubject {
    pub bold: BoldRun,
    /// Noise-free part of `bold.signal`.
    pub signal: DenseMatrix,
    pub noise: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub track: StimulusTrack,
    /// Z-scored design, `n_trs x dim`.
    pub design: DenseMatrix,
    /// Planted weights, `dim x n_voxels`, unit-norm columns.
    pub weights: DenseMatrix,
    pub atlas: RoiAtlas,
    pub subjects: Vec<SynthSubject>,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Stable stream seed for `(seed, label)`; independent of platform and thread count.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    mix64(seed ^ mix64(fnv1a(label)))
}

pub fn subject_id(i: usize) -> String {
    format!("sub-{:02}", i + 1)
}

/// Four contiguous networks, sizes differing by at most one voxel.
pub fn default_atlas(n_voxels: usize) -> RoiAtlas {
    let k = NETWORKS.len();
    let labels = (0..n_voxels).map(|v| (v * k / n_voxels) as i64 + 1).collect();
    let names = NETWORKS
        .iter()
        .enumerate()
        .map(|(i, n)| (i as i64 + 1, n.to_string()))
        .collect();
    RoiAtlas::new(labels, names).expect("every code is named")
}

/// Back-to-back events: durations U(2, 4) s, gaps U(0.5, 1.5) s, vectors N(0, 1).
/// Every event ends inside the scan window.
pub fn random_track(dim: usize, scan_s: f64, seed: u64) -> StimulusTrack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut t = rng.random_range(0.5..1.5);
    loop {
        let dur: f64 = rng.random_range(2.0..4.0);
        if t + dur > scan_s {
            break;
        }
        // f32-representable so the saved track reproduces the design exactly
        let vector = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z as f32 as f64
            })
            .collect();
        events.push(StimulusEvent {
            onset_s: t,
            duration_s: dur,
            vector,
        });
        t += dur + rng.random_range(0.5..1.5);
    }
    StimulusTrack::new("run-01", dim, events).expect("onsets increase and vectors match dim")
}

fn planted_weights(dim: usize, n_voxels: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DenseMatrix::from_fn(dim, n_voxels, |_, _| StandardNormal.sample(&mut rng));
    for v in 0..n_voxels {
        let norm = (0..dim).map(|r| w.get(r, v).powi(2)).sum::<f64>().sqrt();
        for r in 0..dim {
            w.set(r, v, w.get(r, v) / norm);
        }
    }
    w
}

fn population_var(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

/// Unit-variance noise column (empirical, population) from `rng`.
fn noise_column(n: usize, model: NoiseModel, rng: &mut impl Rng) -> Vec<f64> {
    let mut e: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    if let NoiseModel::Ar1 { rho } = model {
        let s = (1.0 - rho * rho).sqrt();
        for t in 1..n {
            e[t] = rho * e[t - 1] + s * e[t];
        }
    }
    let m = e.iter().sum::<f64>() / n as f64;
    let sd = population_var(&e).sqrt();
    for x in &mut e {
        *x = (*x - m) / sd;
    }
    e
}

/// Noise scaled so that `var(noise) = var(signal) / snr`; pure unit noise at snr 0.
fn scaled_noise(signal_col: &[f64], snr: f64, model: NoiseModel, rng: &mut impl Rng) -> Vec<f64> {
    let unit = noise_column(signal_col.len(), model, rng);
    if snr.is_infinite() {
        return vec![0.0; signal_col.len()];
    }
    let scale = if snr == 0.0 {
        1.0
    } else {
        (population_var(signal_col) / snr).sqrt()
    };
    unit.into_iter().map(|x| x * scale).collect()
}

fn build_subject(
    spec: &SynthSpec,
    idx: usize,
    signal: &DenseMatrix,
    voxel_snr: &[f64],
    salt: &str,
) -> Result<SynthSubject> {
    let id = subject_id(idx);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("{salt}{id}")));
    let (n, nv) = signal.shape();
    let mut noise = DenseMatrix::zeros(n, nv);
    let mut bold = DenseMatrix::zeros(n, nv);
    for v in 0..nv {
        let sig = signal.column(v);
        let snr = voxel_snr[v];
        let e = scaled_noise(&sig, snr, spec.noise, &mut rng);
        for t in 0..n {
            noise.set(t, v, e[t]);
            // snr 0 drops the signal entirely
            let s = if snr == 0.0 { 0.0 } else { sig[t] };
            bold.set(t, v, s + e[t]);
        }
    }
    Ok(SynthSubject {
        bold: BoldRun::new(bold, spec.tr_s, id, "run-01")?,
        signal: signal.clone(),
        noise,
    })
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let track = random_track(spec.dim, spec.n_trs as f64 * spec.tr_s, derive_seed(spec.seed, "stimulus"));
    generate_with_track(spec, track)
}

/// Like [`generate`] but with a caller-supplied stimulus; `spec.dim` must match it.
pub fn generate_with_track(spec: &SynthSpec, track: StimulusTrack) -> Result<SynthDataset> {
    spec.validate()?;
    if track.dim != spec.dim {
        return Err(Error::Shape(format!(
            "track dim {} does not match spec dim {}",
            track.dim, spec.dim
        )));
    }
    let mut design = convolve_track(&track, &spec.hrf, spec.tr_s, spec.n_trs)?.design;
    design.zscore_columns();
    let weights = planted_weights(spec.dim, spec.n_voxels, derive_seed(spec.seed, "weights"));
    let signal = design.matmul(&weights)?;
    let atlas = default_atlas(spec.n_voxels);
    let voxel_snr = spec.voxel_snr(&atlas);
    let subjects = (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| build_subject(spec, i, &signal, &voxel_snr, ""))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        spec: spec.clone(),
        track,
        design,
        weights,
        atlas,
        subjects,
    })
}

/// Expected held-out correlation of a perfect model at variance-ratio SNR `s`.
pub fn expected_r(snr: f64) -> f64 {
    if snr.is_infinite() {
        1.0
    } else {
        (snr / (1.0 + snr)).sqrt()
    }
}

fn snr_for_r(r: f64) -> f64 {
    r * r / (1.0 - r * r)
}

/// Model-B counterpart of `a`: same signal, fresh noise everywhere, and at
/// `voxels` the noise is shrunk so the expected r rises by `delta` (capped at
/// 0.999). Other voxels keep their SNR, so they are distributed as in `a`.
pub fn plant_effect(a: &SynthDataset, delta: f64, voxels: &[usize]) -> Result<SynthDataset> {
    let nv = a.spec.n_voxels;
    if let Some(&v) = voxels.iter().find(|&&v| v >= nv) {
        return Err(Error::Index(format!("planted voxel {v} >= n_voxels {nv}")));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::Argument(format!("delta must be >= 0, got {delta}")));
    }
    let mut voxel_snr = a.spec.voxel_snr(&a.atlas);
    for &v in voxels {
        let r_a = expected_r(voxel_snr[v]);
        let r_b = r_a.max((r_a + delta).min(0.999));
        if r_b > r_a {
            voxel_snr[v] = snr_for_r(r_b);
        }
    }
    let signal = a.design.matmul(&a.weights)?;
    let subjects = (0..a.spec.n_subjects)
        .into_par_iter()
        .map(|i| build_subject(&a.spec, i, &signal, &voxel_snr, "planted/"))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        subjects,
        ..a.clone()
    })
}

/// Standard on-disk layout of a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub root: PathBuf,
}

impl DatasetPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetPaths { root: root.into() }
    }
    pub fn track(&self) -> PathBuf {
        self.root.join("stimulus").join("track.json")
    }
    pub fn atlas(&self) -> PathBuf {
        self.root.join("atlas.vem")
    }
    pub fn weights(&self) -> PathBuf {
        self.root.join("weights.vem")
    }
    pub fn design(&self) -> PathBuf {
        self.root.join("design.vem")
    }
    pub fn spec(&self) -> PathBuf {
        self.root.join("spec.json")
    }
    pub fn bold(&self, subject: &str) -> PathBuf {
        self.root.join("subjects").join(subject).join("bold.vem")
    }
}

impl SynthDataset {
    /// Writes the dataset under `dir`; returns every file written, sorted.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let paths = DatasetPaths::new(dir.as_ref());
        let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| Error::io(p, e));
        mkdir(&paths.root.join("stimulus"))?;
        save_stimulus_track(&self.track, paths.track())?;
        self.atlas.save(paths.atlas())?;
        write_matrix(&self.weights, paths.weights())?;
        write_matrix(&self.design, paths.design())?;
        let spec_text = serde_json::to_string_pretty(&self.spec).map_err(|e| Error::json(paths.spec(), e))?;
        fs::write(paths.spec(), spec_text + "\n").map_err(|e| Error::io(paths.spec(), e))?;
        for s in &self.subjects {
            let p = paths.bold(&s.bold.subject_id);
            mkdir(p.parent().expect("bold path has a parent"))?;
            s.bold.save(&p)?;
        }
        let mut out = vec![
            paths.track(),
            paths.track().with_extension("vem"),
            paths.atlas(),
            paths.atlas().with_extension("json"),
            paths.weights(),
            paths.design(),
            paths.spec(),
        ];
        for s in &self.subjects {
            let p = paths.bold(&s.bold.subject_id);
            out.push(p.with_extension("json"));
            out.push(p);
        }
        out.sort();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(snr: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            n_subjects: 3,
            ..SynthSpec::new(12, 120, 2.0, 4, snr, seed)
        }
    }

    #[test]
    fn seeded_and_bit_identical() {
        let a = generate(&small(1.0, 5)).unwrap();
        let b = generate(&small(1.0, 5)).unwrap();
        assert_eq!(a, b);
        let c = generate(&small(1.0, 6)).unwrap();
        assert_ne!(a.subjects[0].bold.signal, c.subjects[0].bold.signal);
        assert_ne!(a.subjects[0].noise, a.subjects[1].noise);
    }

    #[test]
    fn weights_unit_norm_and_atlas_balanced() {
        let d = generate(&small(2.0, 1)).unwrap();
        for v in 0..12 {
            let n: f64 = d.weights.column(v).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_eq!(d.atlas.labels, vec![1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]);
        assert_eq!(d.atlas.names[&1], "language");
    }

    #[test]
    fn infinite_and_zero_snr() {
        let d = generate(&small(f64::INFINITY, 2)).unwrap();
        for s in &d.subjects {
            assert_eq!(s.bold.signal, s.signal);
        }
        let z = generate(&small(0.0, 2)).unwrap();
        for s in &z.subjects {
            assert_eq!(s.bold.signal, s.noise);
            for v in 0..12 {
                assert!((population_var(&s.noise.column(v)) - 1.0).abs() < 1e-12);
            }
        }
        // pure noise draws do not depend on the planted weights
        let z2 = generate(&SynthSpec { dim: 7, ..small(0.0, 2) }).unwrap();
        assert_eq!(z.subjects[0].bold.signal, z2.subjects[0].bold.signal);
    }

    #[test]
    fn network_override() {
        let mut spec = small(f64::INFINITY, 3);
        spec.network_snr.insert("visual".into(), Snr(0.0));
        let d = generate(&spec).unwrap();
        let s = &d.subjects[0];
        assert_eq!(s.bold.signal.get(10, 0), s.signal.get(10, 0));
        assert_eq!(s.bold.signal.get(10, 7), s.noise.get(10, 7));
        spec.network_snr.insert("cerebellum".into(), Snr(1.0));
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn spec_json_accepts_inf() {
        let s: SynthSpec = serde_json::from_str(
            r#"{"n_voxels":4,"n_trs":10,"tr_s":2,"dim":3,"snr":"inf","noise":{"kind":"ar1","rho":0.5}}"#,
        )
        .unwrap();
        assert!(s.snr.0.is_infinite());
        assert_eq!(s.n_subjects, 12);
        assert_eq!(s.noise, NoiseModel::Ar1 { rho: 0.5 });
        let back: SynthSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SynthSpec>(r#"{"n_voxels":4,"n_trs":10,"dim":3,"snr":1}"#).is_err());
    }

    #[test]
    fn plant_effect_checks_and_zero_delta() {
        let a = generate(&small(1.0, 4)).unwrap();
        assert!(matches!(plant_effect(&a, 0.1, &[12]), Err(Error::Index(_))));
        let b = plant_effect(&a, 0.0, &[0, 1]).unwrap();
        assert_eq!(b.design, a.design);
        assert_eq!(b.weights, a.weights);
        for (sa, sb) in a.subjects.iter().zip(&b.subjects) {
            assert_ne!(sa.noise, sb.noise);
            for v in 0..12 {
                let ra = population_var(&sa.noise.column(v));
                let rb = population_var(&sb.noise.column(v));
                assert!((ra - rb).abs() < 1e-12);
            }
        }
        let c = plant_effect(&a, 0.2, &[3]).unwrap();
        let s = &c.subjects[0];
        let snr3 = population_var(&s.signal.column(3)) / population_var(&s.noise.column(3));
        assert!((expected_r(snr3) - (expected_r(1.0) + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn track_events_inside_scan() {
        let t = random_track(3, 300.0, 1);
        assert!(t.events.len() > 50);
        for w in t.events.windows(2) {
            let gap = w[1].onset_s - (w[0].onset_s + w[0].duration_s);
            assert!((0.5..1.5).contains(&gap));
        }
        assert!(t.events.iter().all(|e| e.onset_s + e.duration_s <= 300.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn empirical_snr_within_ten_percent(seed in 0u64..1000, snr in 0.05f64..20.0) {
            let spec = SynthSpec { n_subjects: 1, ..SynthSpec::new(6, 500, 1.5, 3, snr, seed) };
            let d = generate(&spec).unwrap();
            let s = &d.subjects[0];
            for v in 0..6 {
                let got = population_var(&s.signal.column(v)) / population_var(&s.noise.column(v));
                prop_assert!((got / snr - 1.0).abs() < 0.1);
            }
        }

        #[test]
        fn ar1_lag_one_pooled_over_voxels(seed in 0u64..1000, rho in -0.8f64..0.8) {
            let spec = SynthSpec {
                n_subjects: 1,
                noise: NoiseModel::Ar1 { rho },
                ..SynthSpec::new(16, 1000, 2.0, 2, 0.0, seed)
            };
            let x = &generate(&spec).unwrap().subjects[0].bold.signal;
            let (mut num, mut den) = (0.0, 0.0);
            for v in 0..16 {
                let e = x.column(v);
                num += e.windows(2).map(|w| w[0] * w[1]).sum::<f64>();
                den += e.iter().map(|x| x * x).sum::<f64>();
            }
            prop_assert!((num / den - rho).abs() < 0.05);
        }
    }
}
