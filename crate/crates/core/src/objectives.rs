//! Contrastive training objectives.
//!
//! Each candidate gets two scores: a discriminative score from the score head
//! and a perplexity score, the length-normalized log-likelihood of the
//! candidate text under the history-conditioned decoder. Both are trained
//! with an NCE loss over the positive and `K` sampled negatives; the
//! perplexity scores are multiplied by a learnable temperature first.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{MaskMode, Model, TokenId, TurnedHistory};

/// A positive candidate plus `K` negatives, each in decoder form
/// (`BOS ... EOS`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateInstance {
    pub positive: Vec<TokenId>,
    pub negatives: Vec<Vec<TokenId>>,
}

impl CandidateInstance {
    pub fn k(&self) -> usize {
        self.negatives.len()
    }

    /// Positive first, then negatives.
    pub fn all(&self) -> impl Iterator<Item = &Vec<TokenId>> {
        std::iter::once(&self.positive).chain(&self.negatives)
    }
}

/// Raw discriminative and perplexity scores of one candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub s_d: f64,
    pub s_p: f64,
}

/// Which terms of the joint loss are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    #[default]
    Joint,
    DiscOnly,
    PplOnly,
}

impl ObjectiveMode {
    pub fn uses_disc(self) -> bool {
        !matches!(self, Self::PplOnly)
    }

    pub fn uses_ppl(self) -> bool {
        !matches!(self, Self::DiscOnly)
    }
}

impl std::str::FromStr for ObjectiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "disc_only" => Ok(Self::DiscOnly),
            "ppl_only" => Ok(Self::PplOnly),
            other => Err(Error::Config(format!("unknown objective `{other}`"))),
        }
    }
}

/// Mean target log-probability over the rows of `logits`:
/// `(1/T) sum_t log p(targets[t] | ...)`.
pub fn perplexity_score(t: &mut Tape, logits: Var, targets: &[TokenId]) -> Result<Var> {
    if targets.is_empty() {
        return Err(Error::contract("perplexity score needs at least one target"));
    }
    let targets: Vec<usize> = targets.iter().map(|&x| x as usize).collect();
    let lp = t.log_softmax_gather(logits, &targets)?;
    Ok(t.mean(lp))
}

/// `-log softmax(positive | positive, negatives...)`.
pub fn nce_loss(t: &mut Tape, positive: Var, negatives: &[Var]) -> Result<Var> {
    if negatives.is_empty() {
        return Err(Error::contract("NCE loss needs at least one negative"));
    }
    let mut all = Vec::with_capacity(negatives.len() + 1);
    all.push(positive);
    all.extend_from_slice(negatives);
    let scores = t.stack(&all)?;
    let lp = t.log_softmax_gather(scores, &[0])?;
    let s = t.sum(lp);
    Ok(t.scale(s, -1.0))
}

/// [`nce_loss`] over temperature-scaled scores `tau * s`.
pub fn perplexity_nce_loss(t: &mut Tape, tau: Var, positive: Var, negatives: &[Var]) -> Result<Var> {
    if negatives.is_empty() {
        return Err(Error::contract("NCE loss needs at least one negative"));
    }
    let pos = t.scale_by(positive, tau)?;
    let negs = negatives
        .iter()
        .map(|&n| t.scale_by(n, tau))
        .collect::<Result<Vec<_>>>()?;
    nce_loss(t, pos, &negs)
}

/// Scores of one candidate recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct CandidateScores {
    pub s_d: Var,
    pub s_p: Var,
}

/// Decodes one candidate and computes both of its scores. The perplexity
/// score counts every token after BOS, EOS included.
pub fn score_candidate(
    t: &mut Tape,
    model: &Model,
    enc: &crate::model::EncodedHistory,
    y: &[TokenId],
) -> Result<CandidateScores> {
    if y.len() < 2 {
        return Err(Error::contract("candidate must contain BOS and at least one more token"));
    }
    let dec = model.decode_candidate(t, enc, y)?;
    let s_d = model.discriminative_score(t, &dec)?;
    let rows = t.slice_rows(dec.logits, 0, y.len() - 1)?;
    let s_p = perplexity_score(t, rows, &y[1..])?;
    Ok(CandidateScores { s_d, s_p })
}

#[derive(Clone, Debug)]
pub struct JointLoss {
    /// Sum of the active terms.
    pub loss: Var,
    pub loss_d: Option<Var>,
    pub loss_p: Option<Var>,
    /// Positive first, then negatives, in instance order.
    pub scores: Vec<ScorePair>,
}

/// Joint NCE loss of one instance. The history is encoded once and every
/// candidate is decoded against the same encoding.
pub fn joint_loss(
    t: &mut Tape,
    model: &Model,
    history: &TurnedHistory,
    inst: &CandidateInstance,
    objective: ObjectiveMode,
    masks: MaskMode,
) -> Result<JointLoss> {
    if inst.negatives.is_empty() {
        return Err(Error::contract("instance has no negatives"));
    }
    let enc = model.encode_with(t, history, masks)?;
    let mut s_d = Vec::with_capacity(inst.k() + 1);
    let mut s_p = Vec::with_capacity(inst.k() + 1);
    for y in inst.all() {
        let c = score_candidate(t, model, &enc, y)?;
        s_d.push(c.s_d);
        s_p.push(c.s_p);
    }
    let scores = s_d
        .iter()
        .zip(&s_p)
        .map(|(&d, &p)| ScorePair {
            s_d: t.value(d).item(),
            s_p: t.value(p).item(),
        })
        .collect();
    let loss_d = if objective.uses_disc() {
        Some(nce_loss(t, s_d[0], &s_d[1..])?)
    } else {
        None
    };
    let loss_p = if objective.uses_ppl() {
        let tau = model.tau_var(t);
        Some(perplexity_nce_loss(t, tau, s_p[0], &s_p[1..])?)
    } else {
        None
    };
    let loss = match (loss_d, loss_p) {
        (Some(d), Some(p)) => t.add(d, p)?,
        (Some(d), None) => d,
        (None, Some(p)) => p,
        (None, None) => unreachable!("every objective mode has a term"),
    };
    Ok(JointLoss {
        loss,
        loss_d,
        loss_p,
        scores,
    })
}
