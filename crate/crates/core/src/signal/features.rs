//! Framed log mel-band features.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Waveform;
use crate::error::{Error, Result};

/// Floor added to band magnitudes before the log.
pub const LOG_FLOOR: f64 = 1e-10;

/// T x F grid of log band energies.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: Array2<f64>,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl FeatureMatrix {
    pub fn new(frames: Array2<f64>, frame_ms: f64, hop_ms: f64) -> Result<Self> {
        if frames.nrows() == 0 || frames.ncols() == 0 {
            return Err(Error::Shape(format!("empty feature matrix {:?}", frames.dim())));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature entry".into()));
        }
        Ok(Self { frames, frame_ms, hop_ms })
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub(crate) fn map_frames(&self, frames: Array2<f64>) -> Self {
        Self { frames, frame_ms: self.frame_ms, hop_ms: self.hop_ms }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub n_bins: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { frame_ms: 25.0, hop_ms: 10.0, n_bins: 24 }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

struct Band {
    first_bin: usize,
    weights: Vec<f64>,
}

/// Reusable extractor: Hann window, FFT plan and triangular mel bands for
/// one (sample rate, frame, hop, bins) setting.
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    sample_rate: u32,
    frame_len: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    bands: Vec<Band>,
    centers_hz: Vec<f64>,
}

impl FeatureExtractor {
    pub fn new(cfg: &FeatureConfig, sample_rate: u32) -> Result<Self> {
        let sr = sample_rate as f64;
        let frame_len = (cfg.frame_ms * sr / 1000.0).round() as usize;
        let hop = (cfg.hop_ms * sr / 1000.0).round() as usize;
        if frame_len < 2 || hop == 0 || cfg.n_bins == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame {frame_len} / hop {hop} samples / {} bins",
                cfg.n_bins
            )));
        }
        let n_fft = frame_len.next_power_of_two();
        let window = (0..frame_len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (frame_len - 1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);

        let mel_max = hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..cfg.n_bins + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (cfg.n_bins + 1) as f64))
            .collect();
        let n_spec = n_fft / 2 + 1;
        let bin_hz = sr / n_fft as f64;
        let bands = edges
            .windows(3)
            .map(|e| {
                let (lo, c, hi) = (e[0], e[1], e[2]);
                let first_bin = (lo / bin_hz).floor() as usize + 1;
                let last_bin = ((hi / bin_hz).ceil() as usize).min(n_spec);
                let weights = (first_bin..last_bin)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= c {
                            (f - lo) / (c - lo)
                        } else {
                            (hi - f) / (hi - c)
                        }
                    })
                    .collect();
                Band { first_bin, weights }
            })
            .collect();
        let centers_hz = edges[1..=cfg.n_bins].to_vec();

        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            frame_len,
            hop,
            window,
            fft,
            bands,
            centers_hz,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Center frequency of each band, in Hz.
    pub fn band_centers(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn frame_count(&self, n_samples: usize) -> usize {
        if n_samples < self.frame_len {
            0
        } else {
            (n_samples - self.frame_len) / self.hop + 1
        }
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Length of each half-spectrum row returned by [`Self::stft`].
    pub fn n_spec(&self) -> usize {
        self.fft.len() / 2 + 1
    }

    pub fn extract(&self, w: &Waveform) -> Result<FeatureMatrix> {
        let spec = self.stft(w)?;
        self.bands_from_magnitudes(spec.mapv(|c| c.norm_sqr().sqrt()).view())
    }

    /// Windowed half-spectrum of every frame, `T x n_spec`.
    pub fn stft(&self, w: &Waveform) -> Result<Array2<Complex<f64>>> {
        if w.sample_rate() != self.sample_rate {
            return Err(Error::Shape(format!(
                "waveform at {} Hz, extractor at {} Hz",
                w.sample_rate(),
                self.sample_rate
            )));
        }
        let t = self.frame_count(w.len());
        if t == 0 {
            return Err(Error::TooShort { samples: w.len(), needed: self.frame_len });
        }
        let n_fft = self.fft.len();
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut out = Array2::zeros((t, self.n_spec()));
        let x = w.samples();
        for (ti, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let frame = &x[ti * self.hop..ti * self.hop + self.frame_len];
            for (b, (&s, &h)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *b = Complex::new(s * h, 0.0);
            }
            buf[self.frame_len..].fill(Complex::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            row.iter_mut().zip(&buf).for_each(|(r, c)| *r = *c);
        }
        Ok(out)
    }

    /// Log mel-band energies from magnitude spectra, one row per frame.
    pub fn bands_from_magnitudes(&self, mags: ArrayView2<f64>) -> Result<FeatureMatrix> {
        if mags.ncols() != self.n_spec() {
            return Err(Error::Shape(format!("spectrum rows of {}, expected {}", mags.ncols(), self.n_spec())));
        }
        let mut out = Array2::zeros((mags.nrows(), self.cfg.n_bins));
        let mut row_buf = vec![0.0; self.n_spec()];
        for (mut row, mag) in out.axis_iter_mut(Axis(0)).zip(mags.axis_iter(Axis(0))) {
            let mag = match mag.as_slice() {
                Some(m) => m,
                None => {
                    row_buf.iter_mut().zip(mag.iter()).for_each(|(b, m)| *b = *m);
                    &row_buf[..]
                }
            };
            for (v, band) in row.iter_mut().zip(&self.bands) {
                let e: f64 = band
                    .weights
                    .iter()
                    .zip(&mag[band.first_bin..])
                    .map(|(w, m)| w * m)
                    .sum();
                *v = (e + LOG_FLOOR).ln();
            }
        }
        FeatureMatrix::new(out, self.cfg.frame_ms, self.cfg.hop_ms)
    }
}

/// One-shot extraction; builds a fresh extractor.
pub fn extract_features(w: &Waveform, frame_ms: f64, hop_ms: f64, n_bins: usize) -> Result<FeatureMatrix> {
    let cfg = FeatureConfig { frame_ms, hop_ms, n_bins };
    FeatureExtractor::new(&cfg, w.sample_rate())?.extract(w)
}

/// Removes the per-bin temporal mean.
pub fn mean_normalize(f: &FeatureMatrix) -> FeatureMatrix {
    let mut frames = f.frames().clone();
    if let Some(mean) = frames.mean_axis(Axis(0)) {
        frames -= &mean;
    }
    f.map_frames(frames)
}
