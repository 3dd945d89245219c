//! MFCC front end: 13 cepstra with log energy in place of c0, plus deltas and
//! double deltas by regression over a clamped window.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{FeatureSequence, Waveform};
use crate::error::{Error, Result};

const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub window_ms: f64,
    pub shift_ms: f64,
    pub num_ceps: usize,
    pub num_filters: usize,
    pub pre_emphasis: f64,
    pub delta_window: usize,
    /// Apply per-utterance CMVN after extraction.
    pub cmvn: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_ms: 25.0,
            shift_ms: 10.0,
            num_ceps: 13,
            num_filters: 26,
            pre_emphasis: 0.97,
            delta_window: 2,
            cmvn: true,
        }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        3 * self.num_ceps
    }

    fn validate(&self) -> Result<()> {
        if !(self.window_ms > 0.0 && self.shift_ms > 0.0) {
            return Err(Error::Config("window and shift must be positive".into()));
        }
        if self.num_ceps == 0 || self.num_ceps > self.num_filters {
            return Err(Error::Config("need 1 <= num_ceps <= num_filters".into()));
        }
        if self.delta_window == 0 {
            return Err(Error::Config("delta window must be at least 1".into()));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters spaced evenly on the mel scale from 0 Hz to Nyquist,
/// evaluated at the centre frequency of each FFT bin.
fn mel_filterbank(num_filters: usize, fft_size: usize, sample_rate: f64) -> Array2<f64> {
    let bins = fft_size / 2 + 1;
    let top = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (num_filters + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((num_filters, bins));
    for m in 0..num_filters {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate / fft_size as f64;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

/// Regression deltas over `±window` frames with edge replication.
fn deltas(x: &Array2<f64>, window: usize) -> Array2<f64> {
    let (t, d) = x.dim();
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Array2::zeros((t, d));
    for row in 0..t {
        for n in 1..=window {
            let ahead = (row + n).min(t - 1);
            let behind = row.saturating_sub(n);
            for c in 0..d {
                out[[row, c]] += n as f64 * (x[[ahead, c]] - x[[behind, c]]);
            }
        }
    }
    out / denom
}

pub fn extract_features(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureSequence> {
    cfg.validate()?;
    if w.samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let sr = f64::from(w.sample_rate);
    let window = (sr * cfg.window_ms / 1000.0).round() as usize;
    let shift = ((sr * cfg.shift_ms / 1000.0).round() as usize).max(1);
    if window == 0 || w.samples.len() < window {
        return Err(Error::AudioTooShort { samples: w.samples.len(), window });
    }
    let num_frames = (w.samples.len() - window) / shift + 1;
    let fft_size = window.next_power_of_two();
    let fb = mel_filterbank(cfg.num_filters, fft_size, sr);
    let hamming: Vec<f64> = (0..window)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (window as f64 - 1.0).max(1.0)).cos())
        .collect();
    let nf = cfg.num_filters as f64;
    let dct = Array2::from_shape_fn((cfg.num_ceps, cfg.num_filters), |(k, m)| {
        (2.0 / nf).sqrt() * (PI * k as f64 * (m as f64 + 0.5) / nf).cos()
    });
    let fft = FftPlanner::new().plan_fft_forward(fft_size);

    let mut ceps = Array2::zeros((num_frames, cfg.num_ceps));
    let mut frame = vec![0.0; window];
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut power = ndarray::Array1::zeros(fft_size / 2 + 1);
    for t in 0..num_frames {
        let src = &w.samples[t * shift..t * shift + window];
        // per-frame pre-emphasis, first sample scaled by (1 - k)
        frame[0] = src[0] * (1.0 - cfg.pre_emphasis);
        for n in 1..window {
            frame[n] = src[n] - cfg.pre_emphasis * src[n - 1];
        }
        let energy = frame.iter().map(|v| v * v).sum::<f64>().max(LOG_FLOOR).ln();
        for (b, (x, h)) in buf.iter_mut().zip(frame.iter().zip(&hamming)) {
            *b = Complex::new(x * h, 0.0);
        }
        for b in buf.iter_mut().skip(window) {
            *b = Complex::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p = b.norm_sqr();
        }
        let log_mel = fb.dot(&power).mapv(|e: f64| e.max(LOG_FLOOR).ln());
        let mut c = dct.dot(&log_mel);
        c[0] = energy;
        ceps.row_mut(t).assign(&c);
    }

    let d1 = deltas(&ceps, cfg.delta_window);
    let d2 = deltas(&d1, cfg.delta_window);
    let n = cfg.num_ceps;
    let mut frames = Array2::zeros((num_frames, 3 * n));
    frames.slice_mut(s![.., ..n]).assign(&ceps);
    frames.slice_mut(s![.., n..2 * n]).assign(&d1);
    frames.slice_mut(s![.., 2 * n..]).assign(&d2);
    FeatureSequence::with_timing(
        frames,
        shift as f64 / sr,
        window as f64 / sr,
        w.utterance_id.clone(),
    )
}
