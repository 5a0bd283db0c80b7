//! Top-k ranking metrics for multi-label prediction.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Top-k label ids per sample, ordered by score descending with ties going
/// to the lower label id.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub k: usize,
    pub labels: Vec<Vec<u32>>,
}

fn rank_cmp<T: PartialOrd>(scores: &[T], a: u32, b: u32) -> Ordering {
    scores[b as usize].partial_cmp(&scores[a as usize]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
}

/// Indices of the `k` highest scores.
pub fn top_k<T: PartialOrd + Copy>(scores: &[T], k: usize) -> Result<Vec<u32>> {
    if k == 0 || k > scores.len() {
        return Err(Error::shape(format!("k = {k} must be in 1..={}", scores.len())));
    }
    let mut ids: Vec<u32> = (0..scores.len() as u32).collect();
    if k < ids.len() {
        ids.select_nth_unstable_by(k - 1, |&a, &b| rank_cmp(scores, a, b));
        ids.truncate(k);
    }
    ids.sort_unstable_by(|&a, &b| rank_cmp(scores, a, b));
    Ok(ids)
}

impl Ranking {
    /// Ranks every row of a row-major `n x num_labels` score buffer.
    pub fn from_scores<T: PartialOrd + Copy>(scores: &[T], num_labels: usize, k: usize) -> Result<Self> {
        if num_labels == 0 || !scores.len().is_multiple_of(num_labels) {
            return Err(Error::shape("score buffer is not a whole number of rows"));
        }
        let labels = scores.chunks(num_labels).map(|row| top_k(row, k)).collect::<Result<_>>()?;
        Ok(Ranking { k, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn check(truth: &[Vec<u32>], ranking: &Ranking, k: usize) -> Result<()> {
    if truth.len() != ranking.len() {
        return Err(Error::shape(format!("{} label sets but {} rankings", truth.len(), ranking.len())));
    }
    if k == 0 || k > ranking.k {
        return Err(Error::shape(format!("k = {k} exceeds ranking depth {}", ranking.k)));
    }
    Ok(())
}

fn hits(truth: &[u32], predicted: &[u32]) -> usize {
    predicted.iter().filter(|l| truth.binary_search(l).is_ok()).count()
}

/// Mean over samples of `|top_k ∩ P| / k`. Label sets must be sorted.
pub fn precision_at_k(truth: &[Vec<u32>], ranking: &Ranking, k: usize) -> Result<f64> {
    check(truth, ranking, k)?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let total: usize = truth.iter().zip(&ranking.labels).map(|(t, r)| hits(t, &r[..k])).sum();
    Ok(total as f64 / (k as f64 * truth.len() as f64))
}

/// Mean over samples of `(1/k) sum_{l in top_k} y_l / p_l`.
pub fn psp_at_k(truth: &[Vec<u32>], ranking: &Ranking, propensities: &[f64], k: usize) -> Result<f64> {
    check(truth, ranking, k)?;
    if let Some((l, p)) = propensities.iter().enumerate().find(|(_, &p)| !(p > 0.0)) {
        return Err(Error::Value { line: 0, msg: format!("propensity of label {l} is {p}, must be positive") });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (t, r) in truth.iter().zip(&ranking.labels) {
        for &l in &r[..k] {
            if t.binary_search(&l).is_ok() {
                let p = *propensities
                    .get(l as usize)
                    .ok_or_else(|| Error::shape(format!("no propensity for label {l}")))?;
                total += 1.0 / p;
            }
        }
    }
    Ok(total / (k as f64 * truth.len() as f64))
}

/// Normalizer of the macro precision sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MacroNormalizer {
    /// Divide by the number of labels `L`, as the formula is printed.
    #[default]
    Labels,
    /// Divide by the number of evaluated instances.
    Instances,
}

/// `(1/L) sum_i hits_i / min(k, |top_k_i|)` with the sum running over the
/// evaluated rankings.
pub fn macro_p_at_k(
    truth: &[Vec<u32>],
    ranking: &Ranking,
    k: usize,
    num_labels: usize,
    normalizer: MacroNormalizer,
) -> Result<f64> {
    check(truth, ranking, k)?;
    let sum: f64 = truth
        .iter()
        .zip(&ranking.labels)
        .map(|(t, r)| {
            let top = &r[..k.min(r.len())];
            hits(t, top) as f64 / k.min(top.len()) as f64
        })
        .sum();
    let denom = match normalizer {
        MacroNormalizer::Labels => num_labels,
        MacroNormalizer::Instances => truth.len(),
    };
    Ok(if denom == 0 { 0.0 } else { sum / denom as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

pub const METRICS_CSV_HEADER: &str = "metric,k,value";

impl MetricsReport {
    pub fn push(&mut self, metric: &str, k: usize, value: f64) {
        self.rows.push(MetricRow { metric: metric.to_string(), k, value });
    }

    pub fn get(&self, metric: &str, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.metric == metric && r.k == k).map(|r| r.value)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{METRICS_CSV_HEADER}\n");
        for r in &self.rows {
            s += &format!("{},{},{}\n", r.metric, r.k, r.value);
        }
        s
    }
}
