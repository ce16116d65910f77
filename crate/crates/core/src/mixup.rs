//! Waveform and label interpolation, beta-distributed mixing weights, and
//! SNR-controlled interferer mixing.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::seed;
use crate::signal::Waveform;

/// Shape parameters of the distribution λ is drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta parameters ({alpha}, {beta}) must be positive")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn symmetric(alpha: f64) -> Result<Self> {
        Self::new(alpha, alpha)
    }
}

impl Default for BetaParams {
    fn default() -> Self {
        Self { alpha: 0.2, beta: 0.2 }
    }
}

/// Mixing weight and partner for one batch element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupDraw {
    pub lambda: f64,
    pub partner_index: usize,
}

/// Interpolated target: at most two speakers, weights summing to one.
/// The first entry is the speaker weighted by λ.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    entries: Vec<(usize, f64)>,
}

impl SoftLabel {
    pub fn one_hot(id: usize) -> Self {
        Self { entries: vec![(id, 1.0)] }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn weight(&self, id: usize) -> f64 {
        self.entries.iter().find(|e| e.0 == id).map_or(0.0, |e| e.1)
    }

    /// `(a, b, λ)` view used by the loss. A single-entry label becomes
    /// `(a, a, 1)`.
    pub fn as_pair(&self) -> (usize, usize, f64) {
        match self.entries[..] {
            [(a, la), (b, _)] => (a, b, la),
            [(a, _)] => (a, a, 1.0),
            _ => unreachable!("soft label holds one or two entries"),
        }
    }
}

/// Scales `w` to unit L2 norm.
pub fn energy_normalize(w: &Waveform) -> Result<Waveform> {
    let norm = w.l2_norm();
    if norm == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    Ok(w.with_samples(w.samples().iter().map(|s| s / norm).collect()))
}

/// `λ·xa/‖xa‖ + (1−λ)·xb/‖xb‖`.
pub fn mix_waveforms(xa: &Waveform, xb: &Waveform, lambda: f64) -> Result<Waveform> {
    if xa.sample_rate() != xb.sample_rate() || xa.len() != xb.len() {
        return Err(Error::Shape(format!(
            "cannot mix {} samples @ {} Hz with {} samples @ {} Hz",
            xa.len(),
            xa.sample_rate(),
            xb.len(),
            xb.sample_rate()
        )));
    }
    let (na, nb) = (xa.l2_norm(), xb.l2_norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let mixed = xa
        .samples()
        .iter()
        .zip(xb.samples())
        .map(|(a, b)| lambda * (a / na) + (1.0 - lambda) * (b / nb))
        .collect();
    Ok(xa.with_samples(mixed))
}

pub fn mix_labels(a: usize, b: usize, lambda: f64) -> SoftLabel {
    if a == b {
        return SoftLabel::one_hot(a);
    }
    let entries = [(a, lambda), (b, 1.0 - lambda)]
        .into_iter()
        .filter(|e| e.1 != 0.0)
        .collect();
    SoftLabel { entries }
}

/// One λ draw from a generator the caller owns.
pub fn draw_lambda<R: rand::Rng + ?Sized>(params: BetaParams, rng: &mut R) -> f64 {
    // Parameters are validated on construction, so the distribution exists.
    let dist = Beta::new(params.alpha, params.beta).expect("valid beta parameters");
    dist.sample(rng).clamp(0.0, 1.0)
}

pub fn sample_lambda(params: BetaParams, seed: u64) -> f64 {
    draw_lambda(params, &mut seed::rng(seed))
}

/// Shuffled in-batch pairing with self-pairs re-drawn, plus one λ per element.
pub fn batch_mixup_plan(batch_size: usize, params: BetaParams, seed: u64) -> Result<Vec<MixupDraw>> {
    if batch_size < 2 {
        return Err(Error::InvalidArgument(format!("mixup needs a batch of at least 2, got {batch_size}")));
    }
    let mut rng = seed::rng(seed);
    let mut partners: Vec<usize> = (0..batch_size).collect();
    partners.shuffle(&mut rng);
    for (i, p) in partners.iter_mut().enumerate() {
        if *p == i {
            let r = rng.gen_range(0..batch_size - 1);
            *p = if r >= i { r + 1 } else { r };
        }
    }
    Ok(partners
        .into_iter()
        .map(|partner_index| MixupDraw { lambda: draw_lambda(params, &mut rng), partner_index })
        .collect())
}

/// Result of adding an interferer at a requested SNR.
#[derive(Debug, Clone)]
pub struct SnrMix {
    pub mixture: Waveform,
    /// Interferer after tiling and scaling, aligned with the target.
    pub scaled_interferer: Vec<f64>,
    pub gain: f64,
}

/// Interferer gain for a requested SNR given the two segment powers.
pub fn snr_gain(target_power: f64, interferer_power: f64, snr_db: f64) -> f64 {
    (target_power / (interferer_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Adds `interferer` (tiled or truncated to the target length) to the
/// unmodified target at `snr_db`.
pub fn snr_mix_parts(target: &Waveform, interferer: &Waveform, snr_db: f64) -> Result<SnrMix> {
    if target.sample_rate() != interferer.sample_rate() {
        return Err(Error::Shape(format!(
            "sample rates differ: {} vs {}",
            target.sample_rate(),
            interferer.sample_rate()
        )));
    }
    let aligned: Vec<f64> = interferer.samples().iter().copied().cycle().take(target.len()).collect();
    let p_target = target.power();
    let p_interf = aligned.iter().map(|s| s * s).sum::<f64>() / aligned.len() as f64;
    if p_target == 0.0 || p_interf == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let gain = snr_gain(p_target, p_interf, snr_db);
    let scaled: Vec<f64> = aligned.iter().map(|s| s * gain).collect();
    let mixed = target.samples().iter().zip(&scaled).map(|(t, i)| t + i).collect();
    Ok(SnrMix { mixture: target.with_samples(mixed), scaled_interferer: scaled, gain })
}

pub fn snr_mix(target: &Waveform, interferer: &Waveform, snr_db: f64) -> Result<Waveform> {
    snr_mix_parts(target, interferer, snr_db).map(|m| m.mixture)
}
