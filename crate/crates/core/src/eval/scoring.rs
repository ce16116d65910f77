//! Cosine scoring and top-K adaptive symmetric score normalization.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Below this standard deviation a cohort side counts as degenerate.
pub const SNORM_STD_EPS: f64 = 1e-12;

pub fn cosine_score(e1: ArrayView1<f64>, e2: ArrayView1<f64>) -> Result<f64> {
    if e1.len() != e2.len() {
        return Err(Error::Shape(format!("embeddings of size {} and {}", e1.len(), e2.len())));
    }
    let n1 = e1.dot(&e1).sqrt();
    let n2 = e2.dot(&e2).sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::Degenerate("zero embedding".into()));
    }
    Ok((e1.dot(&e2) / (n1 * n2)).clamp(-1.0, 1.0))
}

/// Imposter cohort: one averaged embedding per training speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    embeddings: Vec<Array1<f64>>,
    top_k: usize,
}

impl Cohort {
    pub fn new(embeddings: Vec<Array1<f64>>, top_k: usize) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::InvalidArgument("empty cohort".into()));
        }
        if top_k == 0 || top_k > embeddings.len() {
            return Err(Error::InvalidArgument(format!(
                "top_k {top_k} outside 1..={}",
                embeddings.len()
            )));
        }
        Ok(Self { embeddings, top_k })
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn embeddings(&self) -> &[Array1<f64>] {
        &self.embeddings
    }

    /// Mean and population standard deviation of the `top_k` highest cohort
    /// scores against `e`.
    pub fn stats(&self, e: ArrayView1<f64>) -> Result<CohortStats> {
        let mut scores = self
            .embeddings
            .iter()
            .map(|c| cosine_score(e, c.view()))
            .collect::<Result<Vec<_>>>()?;
        scores.sort_by(|a, b| b.total_cmp(a));
        let top = &scores[..self.top_k];
        let k = top.len() as f64;
        let mean = top.iter().sum::<f64>() / k;
        let var = top.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / k;
        Ok(CohortStats { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedScore {
    pub value: f64,
    /// Set when a cohort side had no spread and the raw score was returned.
    pub fallback: bool,
}

/// Symmetric normalization from precomputed per-side statistics.
pub fn snorm_from_stats(raw: f64, enroll: CohortStats, test: CohortStats) -> NormalizedScore {
    if enroll.std <= SNORM_STD_EPS || test.std <= SNORM_STD_EPS {
        return NormalizedScore { value: raw, fallback: true };
    }
    let value = 0.5 * ((raw - enroll.mean) / enroll.std + (raw - test.mean) / test.std);
    NormalizedScore { value, fallback: false }
}

pub fn adaptive_snorm(
    raw: f64,
    e_enroll: ArrayView1<f64>,
    e_test: ArrayView1<f64>,
    cohort: &Cohort,
) -> Result<NormalizedScore> {
    Ok(snorm_from_stats(raw, cohort.stats(e_enroll)?, cohort.stats(e_test)?))
}
