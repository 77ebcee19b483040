//! Canonical double-gamma HRF and design-matrix construction.
//!
//! An embedding track is turned into an oversampled boxcar stream per
//! feature, convolved with the HRF, and read out on the TR grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_io::{DenseMatrix, StimulusTrack};
use crate::stats::special::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HrfParams {
    pub peak_shape: f64,
    pub undershoot_shape: f64,
    pub peak_scale: f64,
    pub undershoot_scale: f64,
    pub undershoot_ratio: f64,
    pub length_s: f64,
    pub oversample_hz: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        HrfParams {
            peak_shape: 6.0,
            undershoot_shape: 16.0,
            peak_scale: 1.0,
            undershoot_scale: 1.0,
            undershoot_ratio: 1.0 / 6.0,
            length_s: 32.0,
            oversample_hz: 50.0,
        }
    }
}

impl HrfParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.peak_shape > 1.0) {
            errs.push("peak_shape must be > 1");
        }
        if !(self.undershoot_shape > 1.0) {
            errs.push("undershoot_shape must be > 1");
        }
        if !(self.peak_scale > 0.0) || !(self.undershoot_scale > 0.0) {
            errs.push("scales must be > 0");
        }
        if !(self.undershoot_ratio >= 0.0) {
            errs.push("undershoot_ratio must be >= 0");
        }
        if !(self.length_s > 0.0) {
            errs.push("length_s must be > 0");
        }
        if !(self.oversample_hz >= 10.0) {
            errs.push("oversample_hz must be >= 10");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!("HRF parameters: {}", errs.join("; "))))
        }
    }

    /// Parses the CLI form `a1,a2,b1,b2,c,len,os`.
    pub fn parse_list(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Argument(format!("--hrf: {e}")))?;
        let [a1, a2, b1, b2, c, len, os] = vals[..] else {
            return Err(Error::Argument(format!(
                "--hrf expects 7 comma-separated values, got {}",
                vals.len()
            )));
        };
        let p = HrfParams {
            peak_shape: a1,
            undershoot_shape: a2,
            peak_scale: b1,
            undershoot_scale: b2,
            undershoot_ratio: c,
            length_s: len,
            oversample_hz: os,
        };
        p.validate()?;
        Ok(p)
    }
}

/// HRF evaluator with the gamma normalizers precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Hrf {
    params: HrfParams,
    ln_norm_peak: f64,
    ln_norm_under: f64,
}

impl Hrf {
    pub fn new(params: HrfParams) -> Result<Self> {
        params.validate()?;
        Ok(Hrf {
            params,
            ln_norm_peak: params.peak_shape * params.peak_scale.ln() + ln_gamma(params.peak_shape),
            ln_norm_under: params.undershoot_shape * params.undershoot_scale.ln()
                + ln_gamma(params.undershoot_shape),
        })
    }

    pub fn params(&self) -> &HrfParams {
        &self.params
    }

    #[inline]
    fn value(&self, t: f64) -> f64 {
        let p = &self.params;
        let lt = t.ln();
        let peak = ((p.peak_shape - 1.0) * lt - t / p.peak_scale - self.ln_norm_peak).exp();
        let under =
            ((p.undershoot_shape - 1.0) * lt - t / p.undershoot_scale - self.ln_norm_under).exp();
        peak - p.undershoot_ratio * under
    }

    /// Kernel value at lag `t`: zero for `t <= 0` and beyond `length_s`.
    #[inline]
    fn eval_causal(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.params.length_s {
            0.0
        } else {
            self.value(t)
        }
    }

    pub fn sample(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("HRF evaluated at t = {t} < 0")));
        }
        Ok(if t == 0.0 { 0.0 } else { self.value(t) })
    }
}

/// `g(t; a1, b1) - c * g(t; a2, b2)` with `g` the gamma density.
pub fn sample_hrf(p: &HrfParams, t: f64) -> Result<f64> {
    Hrf::new(*p)?.sample(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventShape {
    /// Each event is on for its whole duration.
    #[default]
    Boxcar,
    /// Each event is a unit-area impulse at its onset.
    Impulse,
}

#[derive(Debug, Clone)]
pub struct Convolved {
    pub design: DenseMatrix,
    /// Events that run past the end of the scan window.
    pub truncated: usize,
}

pub fn convolve_track(
    track: &StimulusTrack,
    p: &HrfParams,
    tr_s: f64,
    n_trs: usize,
) -> Result<Convolved> {
    convolve_track_with(track, p, tr_s, n_trs, EventShape::Boxcar)
}

pub fn convolve_track_with(
    track: &StimulusTrack,
    p: &HrfParams,
    tr_s: f64,
    n_trs: usize,
    shape: EventShape,
) -> Result<Convolved> {
    let hrf = Hrf::new(*p)?;
    if n_trs == 0 {
        return Err(Error::Argument("n_trs must be >= 1".into()));
    }
    if track.dim == 0 {
        return Err(Error::Argument("track dim must be >= 1".into()));
    }
    if !(tr_s.is_finite() && tr_s > 0.0) {
        return Err(Error::Argument(format!("tr_s must be > 0, got {tr_s}")));
    }
    track.validate()?;

    let hz = p.oversample_hz;
    let dt = 1.0 / hz;
    let scan_end = n_trs as f64 * tr_s;
    let mut design = DenseMatrix::zeros(n_trs, track.dim);
    let mut truncated = 0;

    for ev in &track.events {
        let end = ev.onset_s + ev.duration_s;
        if end > scan_end {
            truncated += 1;
        }
        // Oversampled support of the event: samples j0..j1 at times j / hz.
        let (j0, j1) = match shape {
            EventShape::Boxcar => {
                let j0 = (ev.onset_s * hz).round() as i64;
                let j1 = ((end * hz).round() as i64).max(j0 + 1);
                (j0, j1)
            }
            EventShape::Impulse => (0, 0),
        };
        let first = (ev.onset_s / tr_s).floor().max(0.0) as usize;
        let last = (((end + p.length_s) / tr_s).ceil() as usize).min(n_trs - 1);
        if first >= n_trs {
            continue;
        }
        for k in first..=last {
            let t = k as f64 * tr_s;
            let response = match shape {
                EventShape::Boxcar => {
                    let mut acc = 0.0;
                    for j in j0..j1 {
                        acc += hrf.eval_causal(t - j as f64 / hz);
                    }
                    acc * dt
                }
                EventShape::Impulse => hrf.eval_causal(t - ev.onset_s),
            };
            if response == 0.0 {
                continue;
            }
            let row = &mut design.data_mut()[k * track.dim..(k + 1) * track.dim];
            for (out, &v) in row.iter_mut().zip(&ev.vector) {
                *out += response * v;
            }
        }
    }
    if truncated > 0 {
        log::warn!(
            "{truncated} event(s) in run {} extend beyond the scan window ({scan_end} s)",
            track.run_id
        );
    }
    Ok(Convolved { design, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_io::StimulusEvent;

    fn ev(onset: f64, dur: f64, v: Vec<f64>) -> StimulusEvent {
        StimulusEvent {
            onset_s: onset,
            duration_s: dur,
            vector: v,
        }
    }

    #[test]
    fn zero_at_origin_and_negative_is_domain_error() {
        let p = HrfParams::default();
        assert_eq!(sample_hrf(&p, 0.0).unwrap(), 0.0);
        assert!(matches!(sample_hrf(&p, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn dense_grid_peak_and_undershoot() {
        let hrf = Hrf::new(HrfParams::default()).unwrap();
        let (mut tmax, mut vmax, mut tmin, mut vmin) = (0.0, f64::MIN, 0.0, f64::MAX);
        for i in 0..=30_000 {
            let t = i as f64 * 1e-3;
            let v = hrf.sample(t).unwrap();
            if v > vmax {
                (tmax, vmax) = (t, v);
            }
            if v < vmin {
                (tmin, vmin) = (t, v);
            }
        }
        assert!((4.5..=5.5).contains(&tmax), "peak at {tmax}");
        assert!(vmin < 0.0 && (10.0..=20.0).contains(&tmin), "min {vmin} at {tmin}");
    }

    #[test]
    fn impulse_response_on_tr_grid() {
        let p = HrfParams::default();
        let dt = 1.0 / p.oversample_hz;
        let track = StimulusTrack::new("r", 1, vec![ev(0.0, dt, vec![1.0])]).unwrap();
        let out = convolve_track(&track, &p, 2.0, 16).unwrap();
        for k in 0..16 {
            let expect = sample_hrf(&p, 2.0 * k as f64).unwrap() * dt;
            assert!((out.design.get(k, 0) - expect).abs() < 1e-15, "k = {k}");
        }
    }

    #[test]
    fn zero_events_gives_zeros() {
        let track = StimulusTrack::new("r", 3, vec![]).unwrap();
        let out = convolve_track(&track, &HrfParams::default(), 1.5, 7).unwrap();
        assert_eq!(out.design, DenseMatrix::zeros(7, 3));
        assert_eq!(out.truncated, 0);
    }

    #[test]
    fn late_events_counted() {
        let track = StimulusTrack::new(
            "r",
            1,
            vec![ev(1.0, 2.0, vec![1.0]), ev(18.0, 4.0, vec![1.0]), ev(40.0, 1.0, vec![1.0])],
        )
        .unwrap();
        let out = convolve_track(&track, &HrfParams::default(), 2.0, 10).unwrap();
        assert_eq!(out.truncated, 2);
        assert!(out.design.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn scaled_vectors_scale_output() {
        let p = HrfParams::default();
        let a = StimulusTrack::new("r", 2, vec![ev(0.7, 2.3, vec![0.4, -1.1]), ev(5.2, 1.0, vec![2.0, 0.5])]).unwrap();
        let b = a.map_vectors(|v| v.iter().map(|x| 2.0 * x).collect()).unwrap();
        let za = convolve_track(&a, &p, 1.0, 30).unwrap().design;
        let zb = convolve_track(&b, &p, 1.0, 30).unwrap().design;
        for (x, y) in za.data().iter().zip(zb.data()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn parse_hrf_list() {
        let p = HrfParams::parse_list("6,16,1,1,0.1666,32,50").unwrap();
        assert_eq!(p.undershoot_shape, 16.0);
        assert!(HrfParams::parse_list("6,16,1").is_err());
        assert!(HrfParams::parse_list("6,16,1,1,0.1,32,5").is_err());
    }
}
