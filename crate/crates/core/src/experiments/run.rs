//! Experiment drivers.
//!
//! A [`Lab`] owns the synthetic world of one seed (training pool and bank,
//! evaluation speakers, trial lists) and caches every trained system, so
//! drivers that share a system (the baseline appears in several tables)
//! train it once. All systems of a lab see identical data streams.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::eval::{build_cohort, build_trials, evaluate, Cohort, Evaluation, SnrRange, Trial, UtteranceSource};
use crate::loss::Mixing;
use crate::mixup::BetaParams;
use crate::model::{train, EmbeddingModel, TrainConfig, TrainOutcome, TrainingBank};
use crate::seed::{self, tag};
use crate::signal::generate_pool;

use super::config::ExperimentConfig;
use super::table::ResultTable;

/// First speaker id of the evaluation pool; training ids start at 0.
pub const EVAL_ID_OFFSET: usize = 100_000;

/// A training recipe: plain AAM-softmax, or waveform mixup with the given
/// beta parameters and loss switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum System {
    Baseline,
    Mixup { beta: BetaParams, mixing: Mixing },
}

impl System {
    pub fn margin_mixup(beta: BetaParams) -> Self {
        System::Mixup { beta, mixing: Mixing::FULL }
    }

    /// Unique cache key.
    pub fn key(&self) -> String {
        match self {
            System::Baseline => "baseline".into(),
            System::Mixup { beta, mixing } => format!(
                "mixup a={} b={} margin={} loss={}",
                beta.alpha, beta.beta, mixing.margin, mixing.loss
            ),
        }
    }

    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        for p in &mut cfg.phases {
            p.mixup = false;
            p.mixing = Mixing::FULL;
        }
        match *self {
            System::Baseline => cfg,
            System::Mixup { beta, mixing } => cfg.with_mixup(beta, mixing),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestSet {
    Clean,
    Overlapped(SnrRange),
}

impl TestSet {
    fn key(&self) -> String {
        match self {
            TestSet::Clean => "clean".into(),
            TestSet::Overlapped(r) => format!("{}..{}", r.lo, r.hi),
        }
    }
}

pub struct TrainedSystem {
    pub outcome: TrainOutcome,
    pub cohort: Cohort,
}

pub struct Lab {
    cfg: ExperimentConfig,
    seed: u64,
    bank: TrainingBank,
    source: UtteranceSource,
    speakers: Vec<usize>,
    systems: BTreeMap<String, TrainedSystem>,
    results: BTreeMap<(String, String), Evaluation>,
}

impl Lab {
    /// Builds the world of `seed`; nothing is trained yet.
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let sr = cfg.synth.sample_rate;
        let train_pool = generate_pool(cfg.n_speakers, 0, &cfg.pool, sr, seed)?;
        let eval_pool = generate_pool(
            cfg.eval_speakers,
            EVAL_ID_OFFSET,
            &cfg.pool,
            sr,
            seed::derive(seed, &[tag::EVAL_POOL]),
        )?;
        let bank = TrainingBank::generate(&train_pool, &cfg.synth, cfg.utts_per_speaker, cfg.utt_duration_s, seed)?;
        let source = UtteranceSource::new(&eval_pool, cfg.synth.clone(), cfg.eval_duration_s, seed);
        let speakers = source.speakers();
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            bank,
            source,
            speakers,
            systems: BTreeMap::new(),
            results: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bank(&self) -> &TrainingBank {
        &self.bank
    }

    pub fn source(&self) -> &UtteranceSource {
        &self.source
    }

    pub fn table(&self) -> ResultTable {
        ResultTable::new(self.seed, self.cfg.hash())
    }

    /// Trial list of `set`. Clean and overlapped lists share their
    /// enrollment/test pairs.
    pub fn trials(&self, set: TestSet) -> Result<Vec<Trial>> {
        let overlap = match set {
            TestSet::Clean => None,
            TestSet::Overlapped(r) => Some(r),
        };
        build_trials(
            &self.speakers,
            self.cfg.eval_utts_per_speaker,
            self.cfg.n_target,
            self.cfg.n_nontarget,
            overlap,
            self.seed,
        )
    }

    /// Trains `system` unless it is cached.
    pub fn system(&mut self, system: System) -> Result<&TrainedSystem> {
        let key = system.key();
        if !self.systems.contains_key(&key) {
            let tc = system.train_config(&self.cfg.train);
            let outcome = train(&self.bank, &tc, self.seed)?;
            let cohort = build_cohort(
                &outcome.model,
                &self.bank,
                self.cfg.cohort_utts,
                self.cfg.top_k,
                &tc.features,
            )?;
            self.systems.insert(key.clone(), TrainedSystem { outcome, cohort });
        }
        Ok(&self.systems[&key])
    }

    pub fn model(&mut self, system: System) -> Result<&EmbeddingModel> {
        Ok(&self.system(system)?.outcome.model)
    }

    /// Full evaluation of `system` on `set`, cached.
    pub fn evaluation(&mut self, system: System, set: TestSet) -> Result<&Evaluation> {
        let key = (system.key(), set.key());
        if !self.results.contains_key(&key) {
            let trials = self.trials(set)?;
            let features = self.cfg.train.features.clone();
            self.system(system)?;
            let trained = &self.systems[&key.0];
            let (model, cohort) = (&trained.outcome.model, &trained.cohort);
            let ev = evaluate(model, &trials, &self.source, Some(cohort), &features)?;
            self.results.insert(key.clone(), ev);
        }
        Ok(&self.results[&key])
    }

    /// Evaluates a model trained elsewhere (e.g. loaded from a checkpoint)
    /// against this lab's cohort and trials.
    pub fn evaluate_model(&self, model: &EmbeddingModel, set: TestSet) -> Result<Evaluation> {
        let features = &self.cfg.train.features;
        let cohort = build_cohort(model, &self.bank, self.cfg.cohort_utts, self.cfg.top_k, features)?;
        evaluate(model, &self.trials(set)?, &self.source, Some(&cohort), features)
    }

    /// The EER reported in tables: s-normalized or raw per the config.
    pub fn eer(&mut self, system: System, set: TestSet) -> Result<f64> {
        let norm = self.cfg.score_norm;
        let ev = self.evaluation(system, set)?;
        Ok(if norm { ev.eer_norm } else { ev.eer_raw })
    }

    fn mm(&self) -> System {
        System::margin_mixup(self.cfg.mixup)
    }

    /// Baseline and margin-mixup on the clean and overlapped sets.
    pub fn headline(&mut self) -> Result<ResultTable> {
        let mut t = self.table();
        let overlapped = TestSet::Overlapped(self.cfg.overlap_snr);
        for (label, sys) in [("baseline", System::Baseline), ("margin-mixup", self.mm())] {
            t.push(label, "clean", self.eer(sys, TestSet::Clean)?)?;
            t.push(label, "overlapped", self.eer(sys, overlapped)?)?;
        }
        Ok(t)
    }

    /// Full margin-mixup, A (no mixed margin), B (no mixup loss), C (input
    /// mixup only), and the no-mixup baseline for reference.
    pub fn ablation(&mut self) -> Result<ResultTable> {
        let beta = self.cfg.mixup;
        let systems = [
            ("full", Mixing::FULL),
            ("A", Mixing { margin: false, loss: true }),
            ("B", Mixing { margin: true, loss: false }),
            ("C", Mixing::NONE),
        ];
        let mut t = self.table();
        let overlapped = TestSet::Overlapped(self.cfg.overlap_snr);
        let rows = systems
            .iter()
            .map(|&(l, mixing)| (l, System::Mixup { beta, mixing }))
            .chain([("baseline", System::Baseline)]);
        for (label, sys) in rows {
            t.push(label, "clean", self.eer(sys, TestSet::Clean)?)?;
            t.push(label, "overlapped", self.eer(sys, overlapped)?)?;
        }
        Ok(t)
    }

    /// One margin-mixup system per `alpha` (with beta = alpha), on the clean
    /// set, fixed 0 dB and 2 dB sets, and the overlapped range.
    pub fn beta_sweep(&mut self, alphas: &[f64]) -> Result<ResultTable> {
        let r = self.cfg.overlap_snr;
        let sets = [
            ("clean".to_string(), TestSet::Clean),
            ("0dB".to_string(), TestSet::Overlapped(SnrRange::fixed(0.0))),
            ("2dB".to_string(), TestSet::Overlapped(SnrRange::fixed(2.0))),
            (format!("{}-{}dB", r.lo, r.hi), TestSet::Overlapped(r)),
        ];
        let mut t = self.table();
        for &a in alphas {
            let sys = System::margin_mixup(BetaParams::symmetric(a)?);
            for (label, set) in &sets {
                t.push(format!("alpha={a}"), label.clone(), self.eer(sys, *set)?)?;
            }
        }
        Ok(t)
    }

    /// Baseline and margin-mixup at each fixed SNR of `grid`.
    pub fn snr_sweep(&mut self, grid: &[f64]) -> Result<ResultTable> {
        if grid.is_empty() {
            return Err(crate::Error::InvalidArgument("empty SNR grid".into()));
        }
        let mut t = self.table();
        for (label, sys) in [("baseline", System::Baseline), ("margin-mixup", self.mm())] {
            for &snr in grid {
                let set = TestSet::Overlapped(SnrRange::new(snr, snr)?);
                t.push(label, format!("snr={snr}"), self.eer(sys, set)?)?;
            }
        }
        Ok(t)
    }
}

pub fn run_headline(cfg: &ExperimentConfig) -> Result<ResultTable> {
    Lab::new(cfg, cfg.seed)?.headline()
}

pub fn run_ablation(cfg: &ExperimentConfig) -> Result<ResultTable> {
    Lab::new(cfg, cfg.seed)?.ablation()
}

pub fn run_beta_sweep(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<ResultTable> {
    Lab::new(cfg, cfg.seed)?.beta_sweep(alphas)
}

pub fn run_snr_sweep(cfg: &ExperimentConfig, snr_grid: &[f64]) -> Result<ResultTable> {
    Lab::new(cfg, cfg.seed)?.snr_sweep(snr_grid)
}
