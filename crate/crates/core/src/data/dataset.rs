use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, BOS, EOS, SEP};
use crate::error::{Error, Result};
use crate::model::{TokenId, TurnedHistory};
use crate::objectives::CandidateInstance;

const DATASET_FORMAT: &str = "textrec-dataset";
const DATASET_VERSION: u32 = 1;

/// One user: ordered history turns (oldest first), candidate texts and the
/// indices of the relevant candidates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExample {
    pub history: Vec<String>,
    pub candidates: Vec<String>,
    pub positive_indices: Vec<usize>,
}

impl RawExample {
    pub fn validate(&self) -> Result<()> {
        if self.history.is_empty() {
            return Err(Error::contract("example has no history turns"));
        }
        if self.candidates.is_empty() {
            return Err(Error::contract("example has no candidates"));
        }
        if self.positive_indices.is_empty() {
            return Err(Error::contract("example has no positive candidates"));
        }
        if let Some(&i) = self.positive_indices.iter().find(|&&i| i >= self.candidates.len()) {
            return Err(Error::contract(format!(
                "positive index {i} out of range for {} candidates",
                self.candidates.len()
            )));
        }
        Ok(())
    }

    pub fn negative_indices(&self) -> Vec<usize> {
        (0..self.candidates.len())
            .filter(|i| !self.positive_indices.contains(i))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    format: String,
    version: u32,
}

/// Writes a header line followed by one JSON record per line.
pub fn write_dataset(path: impl AsRef<Path>, examples: &[RawExample]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    f.write_all(dataset_to_string(examples).as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn dataset_to_string(examples: &[RawExample]) -> String {
    let mut out = serde_json::to_string(&DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
    })
    .expect("header serializes");
    out.push('\n');
    for ex in examples {
        out.push_str(&serde_json::to_string(ex).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<RawExample>> {
    let p = path.as_ref();
    parse_dataset(&fs::read_to_string(p)?, &p.display().to_string())
}

pub fn parse_dataset(text: &str, path: &str) -> Result<Vec<RawExample>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| err(1, "empty dataset file".into()))?;
    let header: DatasetHeader =
        serde_json::from_str(head).map_err(|e| err(1, format!("bad dataset header: {e}")))?;
    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
        return Err(err(
            1,
            format!(
                "unsupported dataset format {} v{} (expected {DATASET_FORMAT} v{DATASET_VERSION})",
                header.format, header.version
            ),
        ));
    }
    lines
        .map(|(i, line)| {
            let ex: RawExample = serde_json::from_str(line).map_err(|e| err(i + 1, e.to_string()))?;
            ex.validate().map_err(|e| err(i + 1, e.to_string()))?;
            Ok(ex)
        })
        .collect()
}

/// Concatenates SEP-prefixed turns into one sequence with turn labels.
///
/// When the result would exceed `max_len`, whole oldest turns are dropped
/// first; the oldest turn that still partly fits keeps its SEP and its most
/// recent tokens. A newest turn longer than the budget is head-truncated the
/// same way.
pub fn build_history(turns: &[Vec<TokenId>], max_len: usize) -> Result<TurnedHistory> {
    if let Some(i) = turns.iter().position(Vec::is_empty) {
        return Err(Error::contract(format!("history turn {i} is empty")));
    }
    // Walk from the newest turn backwards, keeping what fits.
    let mut kept: Vec<&[TokenId]> = Vec::new();
    let mut budget = max_len;
    for turn in turns.iter().rev() {
        if budget < 2 {
            break;
        }
        let take = turn.len().min(budget - 1);
        kept.push(&turn[turn.len() - take..]);
        budget -= take + 1;
        if take < turn.len() {
            break;
        }
    }
    if kept.is_empty() {
        return Err(Error::contract(format!(
            "every history turn was truncated away (max_len {max_len})"
        )));
    }
    kept.reverse();
    let total: usize = kept.iter().map(|t| t.len() + 1).sum();
    let mut tokens = Vec::with_capacity(total);
    let mut turn_ids = Vec::with_capacity(total);
    for (i, turn) in kept.iter().enumerate() {
        tokens.push(SEP);
        tokens.extend_from_slice(turn);
        turn_ids.extend(std::iter::repeat_n(i, turn.len() + 1));
    }
    TurnedHistory::new(tokens, turn_ids)
}

/// `BOS tokens... EOS`, keeping the first `max_len - 2` tokens.
pub fn candidate_sequence(tokens: &[TokenId], max_len: usize) -> Vec<TokenId> {
    let keep = tokens.len().min(max_len.saturating_sub(2));
    let mut out = Vec::with_capacity(keep + 2);
    out.push(BOS);
    out.extend_from_slice(&tokens[..keep]);
    out.push(EOS);
    out
}

/// A tokenized example ready for the model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub history: TurnedHistory,
    /// Decoder-form candidate sequences.
    pub candidates: Vec<Vec<TokenId>>,
    pub positives: Vec<usize>,
}

impl EncodedExample {
    pub fn from_raw(raw: &RawExample, vocab: &Vocabulary, max_len: usize) -> Result<Self> {
        raw.validate()?;
        let turns: Vec<Vec<TokenId>> = raw.history.iter().map(|t| vocab.tokenize(t)).collect();
        let turns: Vec<Vec<TokenId>> = turns.into_iter().filter(|t| !t.is_empty()).collect();
        let history = build_history(&turns, max_len)?;
        let candidates = raw
            .candidates
            .iter()
            .map(|c| candidate_sequence(&vocab.tokenize(c), max_len))
            .collect();
        let mut positives = raw.positive_indices.clone();
        positives.sort_unstable();
        positives.dedup();
        Ok(Self {
            history,
            candidates,
            positives,
        })
    }

    pub fn negative_indices(&self) -> Vec<usize> {
        (0..self.candidates.len())
            .filter(|i| self.positives.binary_search(i).is_err())
            .collect()
    }
}

pub fn encode_examples(raw: &[RawExample], vocab: &Vocabulary, max_len: usize) -> Result<Vec<EncodedExample>> {
    raw.iter()
        .map(|r| EncodedExample::from_raw(r, vocab, max_len))
        .collect()
}

/// Draws `k` negatives uniformly without replacement from the non-positive
/// candidates, once per positive. `example_index` only labels errors.
pub fn sample_negatives<R: Rng + ?Sized>(
    example: &EncodedExample,
    example_index: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<CandidateInstance>> {
    if k == 0 {
        return Err(Error::contract("K must be at least 1"));
    }
    let pool = example.negative_indices();
    if pool.len() < k {
        return Err(Error::Sampling {
            example: example_index,
            needed: k,
            available: pool.len(),
        });
    }
    Ok(example
        .positives
        .iter()
        .map(|&p| {
            let picks = sample(rng, pool.len(), k);
            CandidateInstance {
                positive: example.candidates[p].clone(),
                negatives: picks.iter().map(|i| example.candidates[pool[i]].clone()).collect(),
            }
        })
        .collect())
}
