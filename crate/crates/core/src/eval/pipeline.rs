//! End-to-end scoring of a trial list with a trained extractor.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use ndarray::Array1;

use super::eer::compute_eer;
use super::scoring::{cosine_score, snorm_from_stats, Cohort, CohortStats};
use super::trials::{Trial, UttRef};
use crate::error::{Error, Result};
use crate::mixup::snr_mix;
use crate::model::{prepare_features, EmbeddingModel, TrainingBank};
use crate::seed::{self, tag};
use crate::signal::{synth_utterance, FeatureConfig, FeatureExtractor, SpeakerProfile, SynthConfig, Waveform};

/// Deterministic utterances for evaluation speakers, addressed by [`UttRef`].
#[derive(Debug, Clone)]
pub struct UtteranceSource {
    profiles: BTreeMap<usize, SpeakerProfile>,
    synth: SynthConfig,
    duration_s: f64,
    seed: u64,
}

impl UtteranceSource {
    pub fn new(profiles: &[SpeakerProfile], synth: SynthConfig, duration_s: f64, seed: u64) -> Self {
        Self {
            profiles: profiles.iter().map(|p| (p.speaker_id, p.clone())).collect(),
            synth,
            duration_s,
            seed,
        }
    }

    pub fn speakers(&self) -> Vec<usize> {
        self.profiles.keys().copied().collect()
    }

    pub fn sample_rate(&self) -> u32 {
        self.synth.sample_rate
    }

    pub fn waveform(&self, utt: UttRef) -> Result<Waveform> {
        let profile = self
            .profiles
            .get(&utt.speaker)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown speaker {}", utt.speaker)))?;
        let s = seed::derive(self.seed, &[tag::EVAL_UTT, utt.speaker as u64, utt.index as u64]);
        synth_utterance(profile, self.duration_s, s, &self.synth)
    }
}

/// Embedding of a waveform through the evaluation feature path (no augmentation).
pub fn embed(model: &EmbeddingModel, extractor: &FeatureExtractor, w: &Waveform) -> Result<Array1<f64>> {
    model.forward(&prepare_features(extractor, w, None)?)
}

/// Per-speaker average of length-normalized embeddings over the first
/// `per_speaker` bank utterances of every training speaker.
pub fn build_cohort(
    model: &EmbeddingModel,
    bank: &TrainingBank,
    per_speaker: usize,
    top_k: usize,
    features: &FeatureConfig,
) -> Result<Cohort> {
    let extractor = FeatureExtractor::new(features, bank.sample_rate())?;
    let n = per_speaker.clamp(1, bank.per_speaker());
    let mut means = Vec::with_capacity(bank.n_classes());
    for class in 0..bank.n_classes() {
        let mut acc = Array1::zeros(model.dims().embed_dim);
        for u in 0..n {
            let e = embed(model, &extractor, bank.utterance(class, u))?;
            let norm = e.dot(&e).sqrt();
            if norm == 0.0 {
                return Err(Error::Degenerate(format!("zero embedding for cohort speaker {class}")));
            }
            acc.scaled_add(1.0 / norm, &e);
        }
        means.push(acc / n as f64);
    }
    Cohort::new(means, top_k)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    /// Also add the trial's interferer to the enrollment utterance.
    pub overlap_enroll: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub trial: Trial,
    pub raw: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub entries: Vec<ScoredTrial>,
}

impl ScoreSet {
    /// `enroll,test,label,raw,norm` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("enroll,test,label,raw,norm\n");
        for s in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.trial.enroll,
                s.trial.test,
                u8::from(s.trial.is_target),
                s.raw,
                s.norm
            );
        }
        out
    }

    fn split(&self, pick: impl Fn(&ScoredTrial) -> f64) -> (Vec<f64>, Vec<f64>) {
        let mut tar = Vec::new();
        let mut non = Vec::new();
        for s in &self.entries {
            if s.trial.is_target {
                tar.push(pick(s));
            } else {
                non.push(pick(s));
            }
        }
        (tar, non)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub eer_raw: f64,
    pub eer_norm: f64,
    pub scores: ScoreSet,
    /// Trials whose normalization fell back to the raw score.
    pub fallbacks: usize,
}

pub fn evaluate(
    model: &EmbeddingModel,
    trials: &[Trial],
    source: &UtteranceSource,
    cohort: Option<&Cohort>,
    features: &FeatureConfig,
) -> Result<Evaluation> {
    evaluate_with(model, trials, source, cohort, features, EvalOptions::default())
}

type Key = (UttRef, Option<(UttRef, u64)>);

pub fn evaluate_with(
    model: &EmbeddingModel,
    trials: &[Trial],
    source: &UtteranceSource,
    cohort: Option<&Cohort>,
    features: &FeatureConfig,
    opts: EvalOptions,
) -> Result<Evaluation> {
    if trials.is_empty() {
        return Err(Error::InvalidArgument("no trials".into()));
    }
    let extractor = FeatureExtractor::new(features, source.sample_rate())?;
    let mut cache: HashMap<Key, (Array1<f64>, Option<CohortStats>)> = HashMap::new();
    let mut waves: HashMap<UttRef, Waveform> = HashMap::new();
    let mut wave = |utt: UttRef| -> Result<Waveform> {
        if let Some(w) = waves.get(&utt) {
            return Ok(w.clone());
        }
        let w = source.waveform(utt)?;
        waves.insert(utt, w.clone());
        Ok(w)
    };
    let mut lookup = |utt: UttRef, interferer: Option<(UttRef, f64)>| -> Result<(Array1<f64>, Option<CohortStats>)> {
        let key = (utt, interferer.map(|(u, snr)| (u, snr.to_bits())));
        if let Some(hit) = cache.get(&key) {
            return Ok(hit.clone());
        }
        let clean = wave(utt)?;
        let w = match interferer {
            Some((u, snr)) => snr_mix(&clean, &wave(u)?, snr)?,
            None => clean,
        };
        let e = embed(model, &extractor, &w)?;
        let stats = cohort.map(|c| c.stats(e.view())).transpose()?;
        cache.insert(key, (e.clone(), stats));
        Ok((e, stats))
    };

    let mut entries = Vec::with_capacity(trials.len());
    let mut fallbacks = 0;
    for t in trials {
        let interf = t.interferer.map(|i| (i.utt, i.snr_db));
        let (ee, se) = lookup(t.enroll, if opts.overlap_enroll { interf } else { None })?;
        let (et, st) = lookup(t.test, interf)?;
        let raw = cosine_score(ee.view(), et.view())?;
        let norm = match (se, st) {
            (Some(a), Some(b)) => {
                let n = snorm_from_stats(raw, a, b);
                fallbacks += usize::from(n.fallback);
                n.value
            }
            _ => raw,
        };
        entries.push(ScoredTrial { trial: *t, raw, norm });
    }
    let scores = ScoreSet { entries };
    let (tr, nr) = scores.split(|s| s.raw);
    let (tn, nn) = scores.split(|s| s.norm);
    if tr.is_empty() || nr.is_empty() {
        return Err(Error::InvalidArgument("trial list needs both target and nontarget trials".into()));
    }
    Ok(Evaluation {
        eer_raw: compute_eer(&tr, &nr)?.eer,
        eer_norm: compute_eer(&tn, &nn)?.eer,
        scores,
        fallbacks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    /// `a`, `b` for the pure utterances, `mix` for mixtures.
    pub source: String,
    /// `+inf` for pure `a`, `-inf` for pure `b`.
    pub snr_db: f64,
    pub embedding: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingTable {
    pub fn to_csv(&self) -> String {
        let dim = self.rows.first().map_or(0, |r| r.embedding.len());
        let mut out = String::from("source,snr_db");
        for i in 0..dim {
            let _ = write!(out, ",e{i}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.source, r.snr_db);
            for v in &r.embedding {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Embeddings of two pure utterances and of `a` overlapped by `b` at each SNR.
pub fn dump_mixture_embeddings(
    model: &EmbeddingModel,
    source: &UtteranceSource,
    a: UttRef,
    b: UttRef,
    snr_list: &[f64],
    features: &FeatureConfig,
) -> Result<EmbeddingTable> {
    let extractor = FeatureExtractor::new(features, source.sample_rate())?;
    let wa = source.waveform(a)?;
    let wb = source.waveform(b)?;
    let mut rows = vec![
        EmbeddingRow { source: "a".into(), snr_db: f64::INFINITY, embedding: embed(model, &extractor, &wa)? },
        EmbeddingRow { source: "b".into(), snr_db: f64::NEG_INFINITY, embedding: embed(model, &extractor, &wb)? },
    ];
    for &snr in snr_list {
        let mix = snr_mix(&wa, &wb, snr)?;
        rows.push(EmbeddingRow { source: "mix".into(), snr_db: snr, embedding: embed(model, &extractor, &mix)? });
    }
    Ok(EmbeddingTable { rows })
}
