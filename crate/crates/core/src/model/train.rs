//! Two-phase training loop.
//!
//! Every random decision of step `k` in phase `p` is drawn from a stream
//! derived from `(seed, purpose, p, k[, element])`. Two runs that differ only
//! in mixup settings therefore see the same utterances, crops and masks.

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView2, Zip};
use rustfft::num_complex::Complex;
use rand::Rng as _;

use super::network::{EmbeddingModel, ExtractorGrads, ModelDims};
use super::optim::{adam_step, clr_lr, ClrSchedule, OptimizerState};
use crate::error::{Error, Result};
use crate::loss::{batch_loss_with, MarginConfig, Mixing};
use crate::mixup::{batch_mixup_plan, mix_labels, mix_waveforms, BetaParams, SoftLabel};
use crate::seed::{self, tag};
use crate::signal::{
    mean_normalize, random_crop, spec_augment, synth_utterance, FeatureConfig, FeatureExtractor, FeatureMatrix,
    SpeakerProfile, SynthConfig, Waveform,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPhaseConfig {
    pub margin: f64,
    pub scale: f64,
    pub crop_s: f64,
    /// SpecAugment on or off.
    pub augment: bool,
    pub lr_min: f64,
    pub lr_max: f64,
    pub cycle_len: usize,
    pub steps: usize,
    pub mixup: bool,
    pub beta: BetaParams,
    pub mixing: Mixing,
}

impl TrainPhaseConfig {
    /// Initial phase at desk scale.
    pub fn initial() -> Self {
        Self {
            margin: 0.2,
            scale: 30.0,
            crop_s: 0.5,
            augment: true,
            lr_min: 1e-8,
            lr_max: 3e-3,
            cycle_len: 1500,
            steps: 3000,
            mixup: false,
            beta: BetaParams::default(),
            mixing: Mixing::FULL,
        }
    }

    /// Large-margin fine-tuning: larger margin, longer crops, no augmentation.
    pub fn fine_tune() -> Self {
        Self {
            margin: 0.5,
            crop_s: 1.25,
            augment: false,
            lr_max: 3e-4,
            cycle_len: 1000,
            steps: 1000,
            ..Self::initial()
        }
    }

    pub fn schedule(&self) -> Result<ClrSchedule> {
        ClrSchedule::new(self.lr_min, self.lr_max, self.cycle_len)
    }

    pub fn margin_config(&self) -> Result<MarginConfig> {
        MarginConfig::new(self.margin, self.scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub features: FeatureConfig,
    pub freq_mask: usize,
    pub time_mask: usize,
    pub weight_decay: f64,
    pub phases: Vec<TrainPhaseConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            hidden: 64,
            embed_dim: 32,
            features: FeatureConfig::default(),
            freq_mask: 3,
            time_mask: 5,
            weight_decay: 2e-4,
            phases: vec![TrainPhaseConfig::initial(), TrainPhaseConfig::fine_tune()],
        }
    }
}

impl TrainConfig {
    /// Same schedule with mixup switched on in every phase.
    pub fn with_mixup(mut self, beta: BetaParams, mixing: Mixing) -> Self {
        for p in &mut self.phases {
            p.mixup = true;
            p.beta = beta;
            p.mixing = mixing;
        }
        self
    }
}

/// Fixed set of training utterances, `per_speaker` per class.
#[derive(Debug, Clone)]
pub struct TrainingBank {
    speaker_ids: Vec<usize>,
    utterances: Vec<Vec<Waveform>>,
}

impl TrainingBank {
    pub fn generate(
        pool: &[SpeakerProfile],
        synth: &SynthConfig,
        per_speaker: usize,
        duration_s: f64,
        seed: u64,
    ) -> Result<Self> {
        if per_speaker == 0 {
            return Err(Error::InvalidArgument("need at least one utterance per speaker".into()));
        }
        let mut utterances = Vec::with_capacity(pool.len());
        for (class, p) in pool.iter().enumerate() {
            let utts = (0..per_speaker)
                .map(|u| synth_utterance(p, duration_s, seed::derive(seed, &[tag::BANK, class as u64, u as u64]), synth))
                .collect::<Result<Vec<_>>>()?;
            utterances.push(utts);
        }
        Ok(Self { speaker_ids: pool.iter().map(|p| p.speaker_id).collect(), utterances })
    }

    pub fn n_classes(&self) -> usize {
        self.utterances.len()
    }

    pub fn per_speaker(&self) -> usize {
        self.utterances.first().map_or(0, Vec::len)
    }

    pub fn speaker_id(&self, class: usize) -> usize {
        self.speaker_ids[class]
    }

    pub fn utterance(&self, class: usize, index: usize) -> &Waveform {
        &self.utterances[class][index]
    }

    pub fn sample_rate(&self) -> u32 {
        self.utterances[0][0].sample_rate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub phase: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub log: Vec<LogEntry>,
}

impl TrainOutcome {
    /// `step,lr,loss` rows, one per optimizer step.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("step,lr,loss\n");
        for e in &self.log {
            let _ = writeln!(out, "{},{},{}", e.step, e.lr, e.loss);
        }
        out
    }
}

/// Log mel features of `w`, optionally SpecAugmented, mean-normalized.
pub fn prepare_features(
    extractor: &FeatureExtractor,
    w: &Waveform,
    augment: Option<(usize, usize, u64)>,
) -> Result<FeatureMatrix> {
    let mut f = extractor.extract(w)?;
    if let Some((fm, tm, s)) = augment {
        f = spec_augment(&f, fm, tm, s);
    }
    Ok(mean_normalize(&f))
}

fn param_groups(m: &mut EmbeddingModel) -> [&mut [f64]; 5] {
    [
        m.frame_w.as_slice_mut().expect("standard layout"),
        m.frame_b.as_slice_mut().expect("standard layout"),
        m.proj_w.as_slice_mut().expect("standard layout"),
        m.proj_b.as_slice_mut().expect("standard layout"),
        m.centers.matrix_mut().as_slice_mut().expect("standard layout"),
    ]
}

fn group_sizes(m: &EmbeddingModel) -> [usize; 5] {
    [m.frame_w.len(), m.frame_b.len(), m.proj_w.len(), m.proj_b.len(), m.centers.matrix().len()]
}

/// Trains from a fresh initialization. Deterministic in `seed`.
pub fn train(bank: &TrainingBank, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    if bank.n_classes() < 2 {
        return Err(Error::InsufficientSpeakers { needed: 2, have: bank.n_classes() });
    }
    if cfg.phases.is_empty() {
        return Err(Error::InvalidArgument("no training phases".into()));
    }
    let dims = ModelDims {
        n_bins: cfg.features.n_bins,
        hidden: cfg.hidden,
        embed_dim: cfg.embed_dim,
        n_classes: bank.n_classes(),
    };
    let mut model = EmbeddingModel::init(dims, seed)?;
    let extractor = FeatureExtractor::new(&cfg.features, bank.sample_rate())?;
    let spectral = SpectralBank::new(bank, &extractor)?;
    let mut opt = OptimizerState::new(&group_sizes(&model), cfg.weight_decay);
    let mut log = Vec::new();
    let mut global = 0;

    for (p, phase) in cfg.phases.iter().enumerate() {
        if phase.mixup && cfg.batch_size < 2 {
            return Err(Error::InvalidArgument("mixup needs batch_size >= 2".into()));
        }
        let schedule = phase.schedule()?;
        let margin = phase.margin_config()?;
        for k in 0..phase.steps {
            let lr = clr_lr(&schedule, k);
            let loss = train_step(&mut model, &mut opt, &extractor, bank, &spectral, cfg, phase, margin, lr, seed, p, k)
                .map_err(|e| match e {
                    Error::Divergence { detail, .. } => Error::Divergence {
                        step: global,
                        detail: format!("phase {p} step {k}: {detail}"),
                    },
                    other => other,
                })?;
            log.push(LogEntry { step: global, phase: p, lr, loss });
            global += 1;
        }
    }
    Ok(TrainOutcome { model, log })
}

/// Bank spectra computed once, so that crops on the hop grid, and mixtures
/// of them, need no per-step FFT. Mixing is linear, so the spectrum of a
/// mixture is the same combination of the two spectra.
struct SpectralBank {
    spectra: Vec<Vec<Array2<Complex<f64>>>>,
    /// Prefix sums of squared samples, for crop energies.
    energy: Vec<Vec<Vec<f64>>>,
}

impl SpectralBank {
    fn new(bank: &TrainingBank, extractor: &FeatureExtractor) -> Result<Self> {
        let mut spectra = Vec::with_capacity(bank.n_classes());
        let mut energy = Vec::with_capacity(bank.n_classes());
        for utts in &bank.utterances {
            spectra.push(
                utts.iter()
                    .map(|w| match extractor.frame_count(w.len()) {
                        0 => Ok(Array2::zeros((0, extractor.n_spec()))),
                        _ => extractor.stft(w),
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
            energy.push(
                utts.iter()
                    .map(|w| {
                        let mut acc = 0.0;
                        std::iter::once(0.0)
                            .chain(w.samples().iter().map(|x| {
                                acc += x * x;
                                acc
                            }))
                            .collect()
                    })
                    .collect(),
            );
        }
        Ok(Self { spectra, energy })
    }
}

/// One crop: either on the hop grid of a bank utterance, or a tiled copy
/// when the utterance is shorter than the crop.
enum Crop {
    Grid { class: usize, utt: usize, start: usize, len: usize },
    Tiled(Waveform),
}

impl Crop {
    fn draw(bank: &TrainingBank, class: usize, utt: usize, crop_s: f64, hop: usize, seed: u64) -> Self {
        let w = bank.utterance(class, utt);
        let len = ((crop_s * w.sample_rate() as f64).round() as usize).max(1);
        if w.len() < len {
            return Crop::Tiled(random_crop(w, crop_s, seed));
        }
        let start = hop * seed::rng(seed).gen_range(0..=(w.len() - len) / hop);
        Crop::Grid { class, utt, start, len }
    }

    fn waveform(&self, bank: &TrainingBank) -> Waveform {
        match self {
            Crop::Grid { class, utt, start, len } => {
                bank.utterance(*class, *utt).with_samples(bank.utterance(*class, *utt).samples()[*start..start + len].to_vec())
            }
            Crop::Tiled(w) => w.clone(),
        }
    }

    /// Rows of the precomputed spectrum covering this crop, and its L2 norm.
    fn spectrum<'a>(&self, sb: &'a SpectralBank, ex: &FeatureExtractor) -> Option<(ArrayView2<'a, Complex<f64>>, f64)> {
        match *self {
            Crop::Grid { class, utt, start, len } => {
                let first = start / ex.hop();
                let t = ex.frame_count(len);
                let e = &sb.energy[class][utt];
                let norm = (e[start + len] - e[start]).max(0.0).sqrt();
                Some((sb.spectra[class][utt].slice(s![first..first + t, ..]), norm))
            }
            Crop::Tiled(_) => None,
        }
    }
}

/// Log band features of `a`, or of `lambda * a/|a| + (1 - lambda) * b/|b|`.
fn crop_features(
    bank: &TrainingBank,
    sb: &SpectralBank,
    ex: &FeatureExtractor,
    a: &Crop,
    mix: Option<(&Crop, f64)>,
) -> Result<FeatureMatrix> {
    match mix {
        None => match a.spectrum(sb, ex) {
            Some((xa, _)) => ex.bands_from_magnitudes(xa.mapv(|c| c.norm_sqr().sqrt()).view()),
            None => ex.extract(&a.waveform(bank)),
        },
        Some((b, lambda)) => match (a.spectrum(sb, ex), b.spectrum(sb, ex)) {
            (Some((xa, na)), Some((xb, nb))) => {
                if na == 0.0 || nb == 0.0 {
                    return Err(Error::ZeroEnergy);
                }
                let (ga, gb) = (lambda / na, (1.0 - lambda) / nb);
                let mut mags = Array2::zeros(xa.dim());
                Zip::from(&mut mags).and(&xa).and(&xb).for_each(|m, &p, &q| *m = (p * ga + q * gb).norm_sqr().sqrt());
                ex.bands_from_magnitudes(mags.view())
            }
            _ => ex.extract(&mix_waveforms(&a.waveform(bank), &b.waveform(bank), lambda)?),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    model: &mut EmbeddingModel,
    opt: &mut OptimizerState,
    extractor: &FeatureExtractor,
    bank: &TrainingBank,
    spectral: &SpectralBank,
    cfg: &TrainConfig,
    phase: &TrainPhaseConfig,
    margin: MarginConfig,
    lr: f64,
    seed: u64,
    p: usize,
    k: usize,
) -> Result<f64> {
    let (p, k) = (p as u64, k as u64);
    let b = cfg.batch_size;
    let mut rng = seed::rng_for(seed, &[tag::BATCH, p, k]);
    let picks: Vec<(usize, usize)> = (0..b)
        .map(|_| (rng.gen_range(0..bank.n_classes()), rng.gen_range(0..bank.per_speaker())))
        .collect();
    let crops: Vec<Crop> = picks
        .iter()
        .enumerate()
        .map(|(i, &(c, u))| {
            Crop::draw(bank, c, u, phase.crop_s, extractor.hop(), seed::derive(seed, &[tag::CROP, p, k, i as u64]))
        })
        .collect();

    let mut raw = Vec::with_capacity(b);
    let mut labels = Vec::with_capacity(b);
    if phase.mixup {
        let plan = batch_mixup_plan(b, phase.beta, seed::derive(seed, &[tag::MIXUP, p, k]))?;
        for (i, d) in plan.iter().enumerate() {
            raw.push(crop_features(bank, spectral, extractor, &crops[i], Some((&crops[d.partner_index], d.lambda)))?);
            labels.push(mix_labels(picks[i].0, picks[d.partner_index].0, d.lambda));
        }
    } else {
        for (crop, &(c, _)) in crops.iter().zip(&picks) {
            raw.push(crop_features(bank, spectral, extractor, crop, None)?);
            labels.push(SoftLabel::one_hot(c));
        }
    }

    let mut embeddings = Vec::with_capacity(b);
    let mut caches = Vec::with_capacity(b);
    for (i, f) in raw.into_iter().enumerate() {
        let f = if phase.augment {
            spec_augment(&f, cfg.freq_mask, cfg.time_mask, seed::derive(seed, &[tag::AUGMENT, p, k, i as u64]))
        } else {
            f
        };
        let f = mean_normalize(&f);
        let (e, cache) = model.forward_cached(&f)?;
        embeddings.push(e);
        caches.push(cache);
    }

    let out = batch_loss_with(&embeddings, &model.centers, &labels, margin, phase.mixing)?;
    if !out.value.is_finite() {
        return Err(Error::Divergence { step: 0, detail: format!("loss is {}", out.value) });
    }

    let mut grads = ExtractorGrads::zeros(model.dims());
    for (cache, ge) in caches.iter().zip(&out.grad_embeddings) {
        grads.add_assign(&model.backward(cache, ge.view()));
    }
    let grad_slices: [&[f64]; 5] = [
        grads.frame_w.as_slice().expect("standard layout"),
        grads.frame_b.as_slice().expect("standard layout"),
        grads.proj_w.as_slice().expect("standard layout"),
        grads.proj_b.as_slice().expect("standard layout"),
        out.grad_w.as_slice().expect("standard layout"),
    ];
    adam_step(opt, &mut param_groups(model), &grad_slices, lr)?;
    Ok(out.value)
}

/// Fraction of bank utterances whose nearest class center (by cosine) is
/// their own class.
pub fn training_accuracy(model: &EmbeddingModel, bank: &TrainingBank, features: &FeatureConfig) -> Result<f64> {
    let extractor = FeatureExtractor::new(features, bank.sample_rate())?;
    let w = model.centers.matrix();
    let norms: Array1<f64> = w.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    let mut hits = 0;
    let mut total = 0;
    for class in 0..bank.n_classes() {
        for u in 0..bank.per_speaker() {
            let f = prepare_features(&extractor, bank.utterance(class, u), None)?;
            let e = model.forward(&f)?;
            let scores = e.dot(w) / &norms;
            let best = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j)
                .unwrap_or(0);
            hits += usize::from(best == class);
            total += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}
