//! Experiment configuration and its flat `key = value` text form.
//!
//! One setting per line, `#` starts a comment, lists are comma separated.
//! Every key written by [`ExperimentConfig::to_text`] is accepted by
//! [`ExperimentConfig::parse`]; anything else is an error. Keys that are
//! absent keep their default.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::SnrRange;
use crate::mixup::BetaParams;
use crate::model::{TrainConfig, TrainPhaseConfig};
use crate::signal::{PoolConfig, SynthConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Master seed of single-seed runs.
    pub seed: u64,
    /// Seeds of multi-seed comparisons.
    pub seeds: Vec<u64>,
    /// Training speakers N.
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub utt_duration_s: f64,
    pub eval_speakers: usize,
    /// Trial utterances per evaluation speaker; as many again are reserved
    /// for interferers.
    pub eval_utts_per_speaker: u32,
    pub eval_duration_s: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
    /// Interferer SNR range of the overlapped set.
    pub overlap_snr: SnrRange,
    pub snr_grid: Vec<f64>,
    pub beta_alphas: Vec<f64>,
    pub mixup: BetaParams,
    pub top_k: usize,
    /// Bank utterances averaged per cohort speaker.
    pub cohort_utts: usize,
    /// Report s-normalized EERs instead of raw cosine EERs.
    pub score_norm: bool,
    pub synth: SynthConfig,
    pub pool: PoolConfig,
    /// Extractor, features and the two phase schedules. Mixup fields of the
    /// phases are ignored; each system sets its own.
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            seeds: vec![1, 2, 3],
            n_speakers: 50,
            utts_per_speaker: 8,
            utt_duration_s: 2.0,
            eval_speakers: 40,
            eval_utts_per_speaker: 4,
            eval_duration_s: 2.0,
            n_target: 500,
            n_nontarget: 500,
            overlap_snr: SnrRange { lo: 0.0, hi: 5.0 },
            snr_grid: vec![0.0, 2.0, 5.0, 10.0, 20.0],
            beta_alphas: vec![0.1, 0.2, 0.4, 0.8, 1.0],
            mixup: BetaParams::default(),
            top_k: 50,
            cohort_utts: 4,
            score_norm: true,
            synth: SynthConfig::default(),
            pool: PoolConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn one<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

fn many<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| one(x.trim())).collect()
}

const PHASE_NAMES: [&str; 2] = ["initial", "finetune"];

impl ExperimentConfig {
    /// All settings as `(key, value)` pairs in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let s = &self.synth;
        let p = &self.pool;
        let t = &self.train;
        let mut out: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("seeds".into(), list(&self.seeds)),
            ("n_speakers".into(), self.n_speakers.to_string()),
            ("utts_per_speaker".into(), self.utts_per_speaker.to_string()),
            ("utt_duration_s".into(), self.utt_duration_s.to_string()),
            ("eval_speakers".into(), self.eval_speakers.to_string()),
            ("eval_utts_per_speaker".into(), self.eval_utts_per_speaker.to_string()),
            ("eval_duration_s".into(), self.eval_duration_s.to_string()),
            ("n_target".into(), self.n_target.to_string()),
            ("n_nontarget".into(), self.n_nontarget.to_string()),
            ("overlap_snr_min_db".into(), self.overlap_snr.lo.to_string()),
            ("overlap_snr_max_db".into(), self.overlap_snr.hi.to_string()),
            ("snr_grid".into(), list(&self.snr_grid)),
            ("beta_alphas".into(), list(&self.beta_alphas)),
            ("mixup_alpha".into(), self.mixup.alpha.to_string()),
            ("mixup_beta".into(), self.mixup.beta.to_string()),
            ("top_k".into(), self.top_k.to_string()),
            ("cohort_utts".into(), self.cohort_utts.to_string()),
            ("score_norm".into(), self.score_norm.to_string()),
            ("sample_rate".into(), s.sample_rate.to_string()),
            ("noise_floor".into(), s.noise_floor.to_string()),
            ("segment_ms_min".into(), s.segment_ms.0.to_string()),
            ("segment_ms_max".into(), s.segment_ms.1.to_string()),
            ("activation".into(), s.activation.to_string()),
            ("ramp_ms".into(), s.ramp_ms.to_string()),
            ("components".into(), p.components.to_string()),
            ("freq_min_hz".into(), p.freq_range.0.to_string()),
            ("freq_max_hz".into(), p.freq_range.1.to_string()),
            ("amp_min".into(), p.amplitude_range.0.to_string()),
            ("amp_max".into(), p.amplitude_range.1.to_string()),
            ("min_freq_ratio".into(), p.min_ratio.to_string()),
            ("jitter".into(), p.jitter.to_string()),
            ("frame_ms".into(), t.features.frame_ms.to_string()),
            ("hop_ms".into(), t.features.hop_ms.to_string()),
            ("n_bins".into(), t.features.n_bins.to_string()),
            ("hidden".into(), t.hidden.to_string()),
            ("embed_dim".into(), t.embed_dim.to_string()),
            ("batch_size".into(), t.batch_size.to_string()),
            ("freq_mask".into(), t.freq_mask.to_string()),
            ("time_mask".into(), t.time_mask.to_string()),
            ("weight_decay".into(), t.weight_decay.to_string()),
        ];
        for (name, ph) in PHASE_NAMES.iter().zip(&t.phases) {
            for (k, v) in [
                ("steps", ph.steps.to_string()),
                ("margin", ph.margin.to_string()),
                ("scale", ph.scale.to_string()),
                ("crop_s", ph.crop_s.to_string()),
                ("augment", ph.augment.to_string()),
                ("lr_min", ph.lr_min.to_string()),
                ("lr_max", ph.lr_max.to_string()),
                ("cycle_len", ph.cycle_len.to_string()),
            ] {
                out.push((format!("{name}.{k}"), v));
            }
        }
        out
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        if let Some((phase, field)) = key.split_once('.') {
            let idx = PHASE_NAMES
                .iter()
                .position(|n| *n == phase)
                .ok_or_else(|| format!("unknown key {key:?}"))?;
            let ph: &mut TrainPhaseConfig = self
                .train
                .phases
                .get_mut(idx)
                .ok_or_else(|| format!("no phase {phase:?}"))?;
            match field {
                "steps" => ph.steps = one(v)?,
                "margin" => ph.margin = one(v)?,
                "scale" => ph.scale = one(v)?,
                "crop_s" => ph.crop_s = one(v)?,
                "augment" => ph.augment = one(v)?,
                "lr_min" => ph.lr_min = one(v)?,
                "lr_max" => ph.lr_max = one(v)?,
                "cycle_len" => ph.cycle_len = one(v)?,
                _ => return Err(format!("unknown key {key:?}")),
            }
            return Ok(());
        }
        match key {
            "seed" => self.seed = one(v)?,
            "seeds" => self.seeds = many(v)?,
            "n_speakers" => self.n_speakers = one(v)?,
            "utts_per_speaker" => self.utts_per_speaker = one(v)?,
            "utt_duration_s" => self.utt_duration_s = one(v)?,
            "eval_speakers" => self.eval_speakers = one(v)?,
            "eval_utts_per_speaker" => self.eval_utts_per_speaker = one(v)?,
            "eval_duration_s" => self.eval_duration_s = one(v)?,
            "n_target" => self.n_target = one(v)?,
            "n_nontarget" => self.n_nontarget = one(v)?,
            "overlap_snr_min_db" => self.overlap_snr.lo = one(v)?,
            "overlap_snr_max_db" => self.overlap_snr.hi = one(v)?,
            "snr_grid" => self.snr_grid = many(v)?,
            "beta_alphas" => self.beta_alphas = many(v)?,
            "mixup_alpha" => self.mixup.alpha = one(v)?,
            "mixup_beta" => self.mixup.beta = one(v)?,
            "top_k" => self.top_k = one(v)?,
            "cohort_utts" => self.cohort_utts = one(v)?,
            "score_norm" => self.score_norm = one(v)?,
            "sample_rate" => self.synth.sample_rate = one(v)?,
            "noise_floor" => self.synth.noise_floor = one(v)?,
            "segment_ms_min" => self.synth.segment_ms.0 = one(v)?,
            "segment_ms_max" => self.synth.segment_ms.1 = one(v)?,
            "activation" => self.synth.activation = one(v)?,
            "ramp_ms" => self.synth.ramp_ms = one(v)?,
            "components" => self.pool.components = one(v)?,
            "freq_min_hz" => self.pool.freq_range.0 = one(v)?,
            "freq_max_hz" => self.pool.freq_range.1 = one(v)?,
            "amp_min" => self.pool.amplitude_range.0 = one(v)?,
            "amp_max" => self.pool.amplitude_range.1 = one(v)?,
            "min_freq_ratio" => self.pool.min_ratio = one(v)?,
            "jitter" => self.pool.jitter = one(v)?,
            "frame_ms" => self.train.features.frame_ms = one(v)?,
            "hop_ms" => self.train.features.hop_ms = one(v)?,
            "n_bins" => self.train.features.n_bins = one(v)?,
            "hidden" => self.train.hidden = one(v)?,
            "embed_dim" => self.train.embed_dim = one(v)?,
            "batch_size" => self.train.batch_size = one(v)?,
            "freq_mask" => self.train.freq_mask = one(v)?,
            "time_mask" => self.train.time_mask = one(v)?,
            "weight_decay" => self.train.weight_decay = one(v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Defaults overridden by the settings in `text`, then validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::parse(i + 1, format!("duplicate key {k:?}")));
            }
            cfg.set(k, v).map_err(|m| Error::parse(i + 1, m))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-module consistency checks that are cheap to do up front.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_speakers < 2 {
            return Err(Error::InsufficientSpeakers { needed: 2, have: self.n_speakers });
        }
        if self.eval_speakers < 3 {
            return Err(Error::InsufficientSpeakers { needed: 3, have: self.eval_speakers });
        }
        if self.eval_utts_per_speaker < 2 {
            return bad("eval_utts_per_speaker must be at least 2".into());
        }
        if self.utts_per_speaker == 0 || self.cohort_utts == 0 || self.cohort_utts > self.utts_per_speaker {
            return bad(format!(
                "cohort_utts {} must be in 1..=utts_per_speaker {}",
                self.cohort_utts, self.utts_per_speaker
            ));
        }
        if self.top_k == 0 || self.top_k > self.n_speakers {
            return bad(format!("top_k {} must be in 1..=n_speakers {}", self.top_k, self.n_speakers));
        }
        if self.n_target == 0 || self.n_nontarget == 0 {
            return bad("both trial counts must be positive".into());
        }
        SnrRange::new(self.overlap_snr.lo, self.overlap_snr.hi)?;
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !s.is_finite()) {
            return bad("snr_grid must be a non-empty list of finite values".into());
        }
        if self.beta_alphas.is_empty() {
            return bad("beta_alphas must not be empty".into());
        }
        for &a in &self.beta_alphas {
            BetaParams::symmetric(a)?;
        }
        BetaParams::new(self.mixup.alpha, self.mixup.beta)?;
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if !(self.utt_duration_s > 0.0 && self.eval_duration_s > 0.0) {
            return bad("durations must be positive".into());
        }
        let t = &self.train;
        if t.embed_dim < 2 || t.hidden < t.embed_dim || t.features.n_bins == 0 || t.batch_size < 2 {
            return bad(format!(
                "extractor dims: hidden {} embed_dim {} n_bins {} batch {}",
                t.hidden, t.embed_dim, t.features.n_bins, t.batch_size
            ));
        }
        if t.phases.len() != PHASE_NAMES.len() {
            return bad(format!("expected {} phases", PHASE_NAMES.len()));
        }
        for ph in &t.phases {
            ph.schedule()?;
            ph.margin_config()?;
            if !(ph.crop_s > 0.0) {
                return bad(format!("crop_s {} must be positive", ph.crop_s));
            }
        }
        Ok(())
    }
}
