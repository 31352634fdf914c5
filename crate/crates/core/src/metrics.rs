//! Ranking-quality metrics: MRR, NDCG@k and HR@k with binary relevance.
//!
//! With several relevant candidates, MRR averages the reciprocal rank over
//! the relevant items and HR@k divides the hits by `min(k, |relevant|)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranks of all candidates together with the indices of the relevant ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledRanking {
    ranks: Vec<usize>,
    relevant: Vec<usize>,
}

impl LabeledRanking {
    /// `ranks` must be a permutation of `1..=M`; `relevant` holds candidate
    /// indices in `0..M`.
    pub fn new(ranks: Vec<usize>, relevant: Vec<usize>) -> Result<Self> {
        let m = ranks.len();
        let mut seen = vec![false; m];
        for &r in &ranks {
            if r == 0 || r > m || std::mem::replace(&mut seen[r - 1], true) {
                return Err(Error::contract(format!("ranks are not a permutation of 1..={m}")));
            }
        }
        if relevant.is_empty() {
            return Err(Error::contract("ranking has no relevant candidates"));
        }
        let mut relevant = relevant;
        relevant.sort_unstable();
        relevant.dedup();
        if let Some(&bad) = relevant.iter().find(|&&i| i >= m) {
            return Err(Error::contract(format!("relevant index {bad} out of range for {m} candidates")));
        }
        Ok(Self { ranks, relevant })
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn relevant(&self) -> &[usize] {
        &self.relevant
    }

    fn relevant_ranks(&self) -> impl Iterator<Item = usize> + '_ {
        self.relevant.iter().map(|&i| self.ranks[i])
    }
}

pub fn mrr(r: &LabeledRanking) -> f64 {
    r.relevant_ranks().map(|rank| 1.0 / rank as f64).sum::<f64>() / r.relevant.len() as f64
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

pub fn ndcg_at_k(r: &LabeledRanking, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    // fold from +0.0: an empty float sum is -0.0.
    let dcg = r.relevant_ranks().filter(|&rank| rank <= k).map(discount).fold(0.0, |a, d| a + d);
    let ideal: f64 = (1..=k.min(r.relevant.len())).map(discount).sum();
    Ok(dcg / ideal)
}

pub fn hr_at_k(r: &LabeledRanking, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    let hits = r.relevant_ranks().filter(|&rank| rank <= k).count();
    Ok(hits as f64 / k.min(r.relevant.len()) as f64)
}

/// The five reported metrics for one ranked instance (fractions in [0, 1]).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub hr5: f64,
    pub hr10: f64,
}

impl MetricRecord {
    pub fn compute(r: &LabeledRanking) -> Self {
        Self {
            mrr: mrr(r),
            ndcg5: ndcg_at_k(r, 5).expect("k > 0"),
            ndcg10: ndcg_at_k(r, 10).expect("k > 0"),
            hr5: hr_at_k(r, 5).expect("k > 0"),
            hr10: hr_at_k(r, 10).expect("k > 0"),
        }
    }

    fn fields(&self) -> [f64; 5] {
        [self.mrr, self.ndcg5, self.ndcg10, self.hr5, self.hr10]
    }
}

pub const METRIC_NAMES: [&str; 5] = ["MRR", "NDCG@5", "NDCG@10", "HR@5", "HR@10"];

/// Dataset-level means.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub mean: MetricRecord,
}

impl MetricSummary {
    pub fn percent(&self) -> MetricRecord {
        let m = self.mean;
        MetricRecord {
            mrr: 100.0 * m.mrr,
            ndcg5: 100.0 * m.ndcg5,
            ndcg10: 100.0 * m.ndcg10,
            hr5: 100.0 * m.hr5,
            hr10: 100.0 * m.hr10,
        }
    }

    /// Plain-text table in percent.
    pub fn to_table(&self, label: &str) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<12}", "model");
        for name in METRIC_NAMES {
            let _ = write!(s, " {name:>8}");
        }
        s.push('\n');
        let _ = write!(s, "{label:<12}");
        for v in self.percent().fields() {
            let _ = write!(s, " {v:>8.2}");
        }
        s.push('\n');
        s
    }

    /// Machine-readable report with both fractions and percentages.
    pub fn to_json(&self, label: &str) -> serde_json::Value {
        serde_json::json!({
            "model": label,
            "count": self.count,
            "fraction": self.mean,
            "percent": self.percent(),
        })
    }
}

/// Unweighted mean of every metric.
pub fn aggregate_metrics(per_instance: &[MetricRecord]) -> Result<MetricSummary> {
    if per_instance.is_empty() {
        return Err(Error::contract("no instances to aggregate"));
    }
    let n = per_instance.len() as f64;
    let mut sums = [0.0; 5];
    for rec in per_instance {
        for (s, v) in sums.iter_mut().zip(rec.fields()) {
            *s += v;
        }
    }
    Ok(MetricSummary {
        count: per_instance.len(),
        mean: MetricRecord {
            mrr: sums[0] / n,
            ndcg5: sums[1] / n,
            ndcg10: sums[2] / n,
            hr5: sums[3] / n,
            hr10: sums[4] / n,
        },
    })
}

/// Expected MRR of a single relevant item under a uniformly random
/// permutation of `m` candidates: `(1/m) sum_{r=1}^{m} 1/r`.
pub fn random_mrr(m: usize) -> f64 {
    (1..=m).map(|r| 1.0 / r as f64).sum::<f64>() / m as f64
}

/// Expected NDCG@k of a single relevant item under a random permutation.
pub fn random_ndcg_at_k(m: usize, k: usize) -> f64 {
    (1..=k.min(m)).map(discount).sum::<f64>() / m as f64
}

/// Expected HR@k of a single relevant item under a random permutation.
pub fn random_hr_at_k(m: usize, k: usize) -> f64 {
    k.min(m) as f64 / m as f64
}
