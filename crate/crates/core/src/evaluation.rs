//! Scoring every candidate of an example and turning scores into metrics.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::EncodedExample;
use crate::error::{Error, Result};
use crate::metrics::{aggregate_metrics, LabeledRanking, MetricRecord, MetricSummary};
use crate::model::{MaskMode, Model};
use crate::objectives::{score_candidate, ObjectiveMode, ScorePair};
use crate::ranking::{aggregate_rank, rank_order, Direction};

/// Which score drives the ranking.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Fused,
    Disc,
    Ppl,
}

impl ScoreMode {
    /// The score a model trained with `objective` can meaningfully rank by.
    pub fn for_objective(objective: ObjectiveMode) -> Self {
        match objective {
            ObjectiveMode::Joint => Self::Fused,
            ObjectiveMode::DiscOnly => Self::Disc,
            ObjectiveMode::PplOnly => Self::Ppl,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fused => "fused",
            Self::Disc => "disc",
            Self::Ppl => "ppl",
        }
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(Self::Fused),
            "disc" => Ok(Self::Disc),
            "ppl" => Ok(Self::Ppl),
            other => Err(Error::Config(format!("unknown score mode `{other}`"))),
        }
    }
}

/// Raw scores of every candidate. The history is encoded once.
pub fn score_candidates(model: &Model, example: &EncodedExample, masks: MaskMode) -> Result<Vec<ScorePair>> {
    let mut t = Tape::new();
    let enc = model.encode_with(&mut t, &example.history, masks)?;
    example
        .candidates
        .iter()
        .map(|y| {
            let c = score_candidate(&mut t, model, &enc, y)?;
            Ok(ScorePair {
                s_d: t.value(c.s_d).item(),
                s_p: t.value(c.s_p).item(),
            })
        })
        .collect()
}

/// 1-based ranks under the chosen score, higher scores first.
pub fn rank_scores(scores: &[ScorePair], mode: ScoreMode) -> Result<Vec<usize>> {
    let s_d: Vec<f64> = scores.iter().map(|s| s.s_d).collect();
    let s_p: Vec<f64> = scores.iter().map(|s| s.s_p).collect();
    Ok(match mode {
        ScoreMode::Fused => aggregate_rank(&s_d, &s_p, false)?.ranks,
        ScoreMode::Disc => rank_order(&s_d, Direction::Descending),
        ScoreMode::Ppl => rank_order(&s_p, Direction::Descending),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub summary: MetricSummary,
    pub per_instance: Vec<MetricRecord>,
}

pub fn evaluate(model: &Model, examples: &[EncodedExample], mode: ScoreMode, masks: MaskMode) -> Result<EvalReport> {
    let per_instance = examples
        .iter()
        .map(|ex| {
            let scores = score_candidates(model, ex, masks)?;
            let ranks = rank_scores(&scores, mode)?;
            Ok(MetricRecord::compute(&LabeledRanking::new(ranks, ex.positives.clone())?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        summary: aggregate_metrics(&per_instance)?,
        per_instance,
    })
}
