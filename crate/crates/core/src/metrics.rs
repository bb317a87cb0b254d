//! Threshold-free ranking metrics: AUROC, average precision and Min(Se,P+).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("both classes are required")]
    SingleClass,
    #[error("no positive labels")]
    NoPositives,
}

/// Scores paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self, MetricError> {
        if scores.len() != labels.len() {
            return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(MetricError::BadLabel(l));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(MetricError::NonFiniteScore(i));
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Indices sorted by descending score; ties keep index order.
    fn descending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        idx
    }
}

/// Mann–Whitney AUROC with average ranks, so ties count one half.
pub fn auroc(s: &ScoredSet) -> Result<f64, MetricError> {
    let n_pos = s.n_positive();
    let n_neg = s.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]));
    // twice the rank sum keeps tie midpoints integral
    let mut rank2_sum_pos: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && s.scores[idx[j + 1]] == s.scores[idx[i]] {
            j += 1;
        }
        let rank2 = (i + 1 + j + 1) as u64;
        for &k in &idx[i..=j] {
            if s.labels[k] == 1 {
                rank2_sum_pos += rank2;
            }
        }
        i = j + 1;
    }
    let u2 = rank2_sum_pos - (n_pos * (n_pos + 1)) as u64;
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Average precision as step integration of the precision-recall curve:
/// `Σ_τ precision(τ) · Δrecall(τ)` over distinct thresholds in descending
/// order. Tied scores form one step, so the value does not depend on the
/// order of tied samples; without ties it equals the mean over positives of
/// precision at their rank.
pub fn auprc(s: &ScoredSet) -> Result<f64, MetricError> {
    let n_pos = s.n_positive();
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let order = s.descending();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut acc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let tau = s.scores[order[i]];
        let tp_before = tp;
        while i < order.len() && s.scores[order[i]] == tau {
            tp += s.labels[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        acc += (tp - tp_before) as f64 * tp as f64 / seen as f64;
    }
    Ok(acc / n_pos as f64)
}

/// Best `min(sensitivity, precision)` over all thresholds `score ≥ τ`.
pub fn min_se_pplus(s: &ScoredSet) -> Result<f64, MetricError> {
    let n_pos = s.n_positive();
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let order = s.descending();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let tau = s.scores[order[i]];
        while i < order.len() && s.scores[order[i]] == tau {
            if s.labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let se = tp as f64 / n_pos as f64;
        let pp = tp as f64 / (tp + fp) as f64;
        best = best.max(se.min(pp));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc: f64,
    pub auprc: f64,
    pub min_se_pplus: f64,
    pub n: usize,
    pub n_pos: usize,
}

pub fn evaluate_scores(s: &ScoredSet) -> Result<MetricReport, MetricError> {
    Ok(MetricReport {
        auroc: auroc(s)?,
        auprc: auprc(s)?,
        min_se_pplus: min_se_pplus(s)?,
        n: s.len(),
        n_pos: s.n_positive(),
    })
}
