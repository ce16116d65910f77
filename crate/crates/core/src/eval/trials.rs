//! Verification trials and their text manifest.
//!
//! One trial per line: `label enroll test [interferer snr_db]`, with label
//! `1` for target and `0` for nontarget, and utterances written as
//! `<speaker>/<index>`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UttRef {
    pub speaker: usize,
    pub index: u32,
}

impl fmt::Display for UttRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.speaker, self.index)
    }
}

impl FromStr for UttRef {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (spk, idx) = s.split_once('/').ok_or_else(|| format!("expected speaker/index, got {s:?}"))?;
        Ok(UttRef {
            speaker: spk.parse().map_err(|e| format!("speaker in {s:?}: {e}"))?,
            index: idx.parse().map_err(|e| format!("index in {s:?}: {e}"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferer {
    pub utt: UttRef,
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub enroll: UttRef,
    pub test: UttRef,
    pub is_target: bool,
    pub interferer: Option<Interferer>,
}

/// Inclusive SNR range for interferers, in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrRange {
    pub lo: f64,
    pub hi: f64,
}

impl SnrRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("SNR range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn fixed(db: f64) -> Self {
        Self { lo: db, hi: db }
    }
}

/// Balanced target/nontarget trials over `speakers`.
///
/// Trial utterances use indices `0..utts_per_speaker`. Interferers, when
/// `overlap` is set, use the disjoint indices
/// `utts_per_speaker..2*utts_per_speaker` of a speaker that is neither the
/// enrollment nor the test speaker. The base trials depend only on `seed`,
/// so the clean and overlapped sets built from one seed share them.
pub fn build_trials(
    speakers: &[usize],
    utts_per_speaker: u32,
    n_target: usize,
    n_nontarget: usize,
    overlap: Option<SnrRange>,
    seed: u64,
) -> Result<Vec<Trial>> {
    let needed = if overlap.is_some() { 3 } else { 2 };
    if speakers.len() < needed {
        return Err(Error::InsufficientSpeakers { needed, have: speakers.len() });
    }
    if utts_per_speaker < 2 {
        return Err(Error::InvalidArgument("target trials need two utterances per speaker".into()));
    }
    let mut rng = seed::rng_for(seed, &[tag::TRIALS]);
    let n = speakers.len();
    let mut trials = Vec::with_capacity(n_target + n_nontarget);
    for _ in 0..n_target {
        let spk = speakers[rng.gen_range(0..n)];
        let a = rng.gen_range(0..utts_per_speaker);
        let b = (a + rng.gen_range(1..utts_per_speaker)) % utts_per_speaker;
        trials.push(Trial {
            enroll: UttRef { speaker: spk, index: a },
            test: UttRef { speaker: spk, index: b },
            is_target: true,
            interferer: None,
        });
    }
    for _ in 0..n_nontarget {
        let i = rng.gen_range(0..n);
        let j = (i + rng.gen_range(1..n)) % n;
        trials.push(Trial {
            enroll: UttRef { speaker: speakers[i], index: rng.gen_range(0..utts_per_speaker) },
            test: UttRef { speaker: speakers[j], index: rng.gen_range(0..utts_per_speaker) },
            is_target: false,
            interferer: None,
        });
    }
    trials.shuffle(&mut rng);

    if let Some(range) = overlap {
        let mut rng = seed::rng_for(seed, &[tag::INTERFERER]);
        for t in &mut trials {
            let others: Vec<usize> = speakers
                .iter()
                .copied()
                .filter(|&s| s != t.enroll.speaker && s != t.test.speaker)
                .collect();
            let speaker = *others.choose(&mut rng).expect("at least one other speaker");
            let index = utts_per_speaker + rng.gen_range(0..utts_per_speaker);
            let snr_db = if range.hi > range.lo { rng.gen_range(range.lo..=range.hi) } else { range.lo };
            t.interferer = Some(Interferer { utt: UttRef { speaker, index }, snr_db });
        }
    }
    Ok(trials)
}

pub fn write_trials(trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        let _ = write!(out, "{} {} {}", u8::from(t.is_target), t.enroll, t.test);
        if let Some(i) = t.interferer {
            let _ = write!(out, " {} {}", i.utt, i.snr_db);
        }
        out.push('\n');
    }
    out
}

pub fn parse_trials(text: &str) -> Result<Vec<Trial>> {
    let mut trials = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let ln = n + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        if fields.len() != 3 && fields.len() != 5 {
            return Err(Error::parse(ln, format!("expected 3 or 5 fields, got {}", fields.len())));
        }
        let is_target = match fields[0] {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(ln, format!("label must be 0 or 1, got {other:?}"))),
        };
        let utt = |s: &str| s.parse::<UttRef>().map_err(|e| Error::parse(ln, e));
        let interferer = if fields.len() == 5 {
            let snr_db = fields[4]
                .parse::<f64>()
                .map_err(|e| Error::parse(ln, format!("snr {:?}: {e}", fields[4])))?;
            Some(Interferer { utt: utt(fields[3])?, snr_db })
        } else {
            None
        };
        trials.push(Trial { enroll: utt(fields[1])?, test: utt(fields[2])?, is_target, interferer });
    }
    Ok(trials)
}
