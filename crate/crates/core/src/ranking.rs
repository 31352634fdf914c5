//! Inference-time fusion of discriminative and perplexity scores.
//!
//! Both score lists are softmax-normalized over the candidates, combined as
//! `log(s_d_norm) + log(s_p_norm)` (the log of their geometric mean, up to a
//! factor of two), and ranked in descending order.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Ascending,
    Descending,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub s_d_norm: Vec<f64>,
    pub s_p_norm: Vec<f64>,
    /// `log s_d_norm + log s_p_norm`; `-inf` where either probability is 0.
    pub fused: Vec<f64>,
    /// 1-based rank of each candidate, 1 = best.
    pub ranks: Vec<usize>,
}

/// Softmax over the candidates.
pub fn normalize_scores(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::contract("cannot normalize an empty score list"));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::contract(format!("score {i} is not finite")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Rank of each element (1-based). Ties go to the lower index.
pub fn rank_order(scores: &[f64], direction: Direction) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let by_score = match direction {
            Direction::Ascending => scores[a].total_cmp(&scores[b]),
            Direction::Descending => scores[b].total_cmp(&scores[a]),
        };
        // -0.0 and 0.0 compare unequal under total_cmp; treat them as a tie.
        let by_score = if scores[a] == scores[b] { Ordering::Equal } else { by_score };
        by_score.then(a.cmp(&b))
    });
    let mut ranks = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// Fuses the two score lists into one ranking.
///
/// With `pre_normalized`, the inputs are taken as probability vectors as-is
/// (entries must lie in `[0, 1]`); a zero probability yields a fused score
/// of `-inf`, ranked last.
pub fn aggregate_rank(s_d: &[f64], s_p: &[f64], pre_normalized: bool) -> Result<RankingResult> {
    if s_d.len() != s_p.len() {
        return Err(Error::contract(format!(
            "score lists differ in length: {} vs {}",
            s_d.len(),
            s_p.len()
        )));
    }
    if s_d.is_empty() {
        return Err(Error::contract("no candidates to rank"));
    }
    let (s_d_norm, s_p_norm) = if pre_normalized {
        for (i, &v) in s_d.iter().chain(s_p).enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!(
                    "pre-normalized score {} of candidate {} is not a probability: {v}",
                    if i < s_d.len() { "s_d" } else { "s_p" },
                    i % s_d.len()
                )));
            }
        }
        (s_d.to_vec(), s_p.to_vec())
    } else {
        (normalize_scores(s_d)?, normalize_scores(s_p)?)
    };
    let fused: Vec<f64> = s_d_norm
        .iter()
        .zip(&s_p_norm)
        .map(|(d, p)| d.ln() + p.ln())
        .collect();
    let ranks = rank_order(&fused, Direction::Descending);
    Ok(RankingResult {
        s_d_norm,
        s_p_norm,
        fused,
        ranks,
    })
}

/// One `id s_d s_p` line of a score file.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCandidate {
    pub id: String,
    pub s_d: f64,
    pub s_p: f64,
}

/// Parses whitespace-separated `id s_d s_p` lines. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_score_file(text: &str, path: &str) -> Result<Vec<ScoredCandidate>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_string(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(format!("expected `id s_d s_p`, found {} fields", fields.len())));
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("{what} `{s}` is not a finite number")))
        };
        out.push(ScoredCandidate {
            id: fields[0].to_string(),
            s_d: num(fields[1], "s_d")?,
            s_p: num(fields[2], "s_p")?,
        });
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 0,
            msg: "no candidates".into(),
        });
    }
    Ok(out)
}

/// Plain-text table of a ranking, one row per candidate in input order.
pub fn format_ranking(ids: &[String], r: &RankingResult) -> String {
    let width = ids.iter().map(String::len).max().unwrap_or(2).max(2);
    let mut s = format!(
        "{:<width$} {:>10} {:>10} {:>11} {:>5}\n",
        "id", "s_d_norm", "s_p_norm", "fused", "rank"
    );
    for (i, id) in ids.iter().enumerate() {
        s.push_str(&format!(
            "{id:<width$} {:>10.6} {:>10.6} {:>11.6} {:>5}\n",
            r.s_d_norm[i], r.s_p_norm[i], r.fused[i], r.ranks[i]
        ));
    }
    s
}
