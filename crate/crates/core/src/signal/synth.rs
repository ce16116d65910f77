//! Synthetic speakers.
//!
//! A speaker is a fixed set of sinusoidal components. An utterance is a
//! sequence of short "syllable" segments; in each segment every component is
//! switched on with some probability and a random level, with short linear
//! ramps between segments. All component frequencies of one utterance share a
//! common multiplicative jitter, mimicking a per-utterance pitch shift.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::Waveform;
use crate::error::{Error, Result};
use crate::seed;

/// Lower bound on utterance RMS after synthesis.
pub const MIN_RMS: f64 = 0.05;
/// Upper bound on utterance RMS after synthesis.
pub const MAX_RMS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub freq_hz: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub speaker_id: usize,
    pub components: Vec<Component>,
    /// Relative standard deviation of the per-utterance frequency shift.
    pub jitter: f64,
}

impl SpeakerProfile {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        for c in &self.components {
            if !(c.freq_hz > 0.0 && c.freq_hz < nyquist) {
                return Err(Error::InvalidProfile(format!(
                    "speaker {}: component {} Hz outside (0, {nyquist})",
                    self.speaker_id, c.freq_hz
                )));
            }
            if !(c.amplitude > 0.0 && c.amplitude.is_finite()) {
                return Err(Error::InvalidProfile(format!(
                    "speaker {}: non-positive amplitude {}",
                    self.speaker_id, c.amplitude
                )));
            }
        }
        if !(self.jitter >= 0.0 && self.jitter < 0.5) {
            return Err(Error::InvalidProfile(format!(
                "speaker {}: jitter {} outside [0, 0.5)",
                self.speaker_id, self.jitter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sample_rate: u32,
    /// Standard deviation of the additive white noise.
    pub noise_floor: f64,
    pub segment_ms: (f64, f64),
    /// Probability that a component is active within a segment.
    pub activation: f64,
    pub ramp_ms: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            noise_floor: 0.05,
            segment_ms: (60.0, 200.0),
            activation: 0.6,
            ramp_ms: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolConfig {
    pub components: usize,
    pub freq_range: (f64, f64),
    pub amplitude_range: (f64, f64),
    /// Minimum ratio between any two component frequencies of one speaker.
    pub min_ratio: f64,
    pub jitter: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            components: 4,
            freq_range: (150.0, 3400.0),
            amplitude_range: (0.3, 1.0),
            min_ratio: 1.08,
            jitter: 0.005,
        }
    }
}

/// Draws `n` speakers with ids `first_id..first_id + n`.
pub fn generate_pool(
    n: usize,
    first_id: usize,
    cfg: &PoolConfig,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<SpeakerProfile>> {
    let (lo, hi) = cfg.freq_range;
    if !(lo > 0.0 && hi > lo && hi < sample_rate as f64 / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "frequency range ({lo}, {hi}) invalid for sample rate {sample_rate}"
        )));
    }
    let mut rng = seed::rng_for(seed, &[seed::tag::POOL]);
    let mut pool = Vec::with_capacity(n);
    for i in 0..n {
        let mut freqs: Vec<f64> = Vec::with_capacity(cfg.components);
        let mut tries = 0;
        while freqs.len() < cfg.components {
            let f = (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp();
            tries += 1;
            let clear = freqs
                .iter()
                .all(|&g| (f / g).max(g / f) >= cfg.min_ratio);
            if clear || tries > 10_000 {
                freqs.push(f);
            }
        }
        freqs.sort_by(|a, b| a.total_cmp(b));
        let (alo, ahi) = cfg.amplitude_range;
        let components = freqs
            .into_iter()
            .map(|freq_hz| Component {
                freq_hz,
                amplitude: alo + rng.gen::<f64>() * (ahi - alo),
            })
            .collect();
        let profile = SpeakerProfile {
            speaker_id: first_id + i,
            components,
            jitter: cfg.jitter,
        };
        profile.validate(sample_rate)?;
        pool.push(profile);
    }
    Ok(pool)
}

/// Synthesizes one utterance of `profile`. Bit-identical for equal inputs.
pub fn synth_utterance(
    profile: &SpeakerProfile,
    duration_s: f64,
    seed: u64,
    cfg: &SynthConfig,
) -> Result<Waveform> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidArgument(format!("duration {duration_s} must be positive")));
    }
    profile.validate(cfg.sample_rate)?;
    let sr = cfg.sample_rate as f64;
    let n = ((duration_s * sr).round() as usize).max(1);
    let mut rng = seed::rng(seed);

    let shift: f64 = {
        let z: f64 = StandardNormal.sample(&mut rng);
        (1.0 + profile.jitter * z).max(0.5)
    };
    let nyquist = sr / 2.0;
    let comps: Vec<(f64, f64, f64)> = profile
        .components
        .iter()
        .map(|c| {
            let f = (c.freq_hz * shift).min(nyquist * 0.999);
            let phase = rng.gen::<f64>() * 2.0 * PI;
            (2.0 * PI * f / sr, c.amplitude, phase)
        })
        .collect();

    // Per-component gain envelopes, piecewise constant with linear ramps.
    let k = comps.len();
    let mut env = vec![0.0; n * k];
    let ramp = ((cfg.ramp_ms * sr / 1000.0).round() as usize).max(1);
    let mut prev = vec![0.0; k];
    let mut start = 0;
    while start < n {
        let seg_ms = cfg.segment_ms.0 + rng.gen::<f64>() * (cfg.segment_ms.1 - cfg.segment_ms.0);
        let len = ((seg_ms * sr / 1000.0).round() as usize).max(1);
        let end = (start + len).min(n);
        let levels: Vec<f64> = (0..k)
            .map(|_| {
                if rng.gen::<f64>() < cfg.activation {
                    0.4 + 0.6 * rng.gen::<f64>()
                } else {
                    0.0
                }
            })
            .collect();
        for i in start..end {
            let t = ((i - start) as f64 / ramp as f64).min(1.0);
            for j in 0..k {
                env[i * k + j] = prev[j] + t * (levels[j] - prev[j]);
            }
        }
        prev = levels;
        start = end;
    }

    // Oscillators as rotating phasors (cos, sin), re-anchored periodically
    // to keep rounding drift negligible.
    let step: Vec<(f64, f64)> = comps.iter().map(|&(w, _, _)| (w.cos(), w.sin())).collect();
    let mut osc: Vec<(f64, f64)> = vec![(1.0, 0.0); k];
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        if i % 1024 == 0 {
            for (o, &(w, _, phase)) in osc.iter_mut().zip(&comps) {
                let a = w * i as f64 + phase;
                *o = (a.cos(), a.sin());
            }
        }
        let mut x = 0.0;
        for j in 0..k {
            let (c, s) = osc[j];
            x += comps[j].1 * env[i * k + j] * s;
            let (dc, ds) = step[j];
            osc[j] = (c * dc - s * ds, s * dc + c * ds);
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        samples.push(x + cfg.noise_floor * z);
    }

    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    let target = rms.clamp(MIN_RMS, MAX_RMS);
    if rms > 0.0 && target != rms {
        let g = target / rms;
        samples.iter_mut().for_each(|s| *s *= g);
    }
    Waveform::new(samples, cfg.sample_rate)
}

/// Writes a pool as `speaker_id freq1:amp1 freq2:amp2 ...` lines.
pub fn write_manifest(pool: &[SpeakerProfile]) -> String {
    let mut out = String::new();
    for p in pool {
        let _ = write!(out, "{}", p.speaker_id);
        for c in &p.components {
            let _ = write!(out, " {}:{}", c.freq_hz, c.amplitude);
        }
        out.push('\n');
    }
    out
}

/// Parses a pool manifest. The manifest does not carry jitter; every
/// profile gets `jitter`. Blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str, jitter: f64) -> Result<Vec<SpeakerProfile>> {
    let mut pool = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::parse(lineno + 1, "missing or invalid speaker id"))?;
        let mut components = Vec::new();
        for field in fields {
            let (f, a) = field
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno + 1, format!("expected freq:amp, got {field:?}")))?;
            let freq_hz = f
                .parse::<f64>()
                .map_err(|e| Error::parse(lineno + 1, format!("frequency {f:?}: {e}")))?;
            let amplitude = a
                .parse::<f64>()
                .map_err(|e| Error::parse(lineno + 1, format!("amplitude {a:?}: {e}")))?;
            components.push(Component { freq_hz, amplitude });
        }
        pool.push(SpeakerProfile { speaker_id: id, components, jitter });
    }
    Ok(pool)
}
