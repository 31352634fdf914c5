//! A closed-vocabulary topic task for desk-scale training.
//!
//! Every topic owns a disjoint block of words. A user draws one topic; the
//! history turns and the positive candidate mix that topic's words with a
//! shared background pool, while every negative comes from a different topic.
//! Words inside a block follow a Zipf law, so each topic has a small set of
//! frequent words and a long tail.

use std::ops::RangeInclusive;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::RawExample;
use super::vocab::{Vocabulary, RESERVED};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_topics: usize,
    /// Total vocabulary size, reserved tokens included.
    pub vocab_size: usize,
    pub background_words: usize,
    pub min_turns: usize,
    pub max_turns: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Candidates per example (one positive).
    pub candidates: usize,
    /// Probability that a token comes from the topic block rather than the
    /// background pool.
    pub purity: f64,
    /// Within a topic block, word `i` is drawn with weight `(i + 1)^-zipf`;
    /// 0 gives a uniform block.
    pub zipf: f64,
    pub train_examples: usize,
    pub test_examples: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_topics: 8,
            vocab_size: 512,
            background_words: 32,
            min_turns: 3,
            max_turns: 8,
            min_tokens: 5,
            max_tokens: 12,
            candidates: 20,
            purity: 0.8,
            zipf: 1.0,
            train_examples: 2000,
            test_examples: 500,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if self.n_topics < 2 {
            return fail(format!("n_topics must be at least 2, got {}", self.n_topics));
        }
        if self.candidates < 2 {
            return fail(format!("candidates must be at least 2, got {}", self.candidates));
        }
        if self.min_turns == 0 || self.min_turns > self.max_turns {
            return fail(format!("bad turn range {}..={}", self.min_turns, self.max_turns));
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return fail(format!("bad token range {}..={}", self.min_tokens, self.max_tokens));
        }
        if !(0.0..=1.0).contains(&self.purity) {
            return fail(format!("purity must lie in [0, 1], got {}", self.purity));
        }
        if !(self.zipf >= 0.0 && self.zipf.is_finite()) {
            return fail(format!("zipf exponent must be finite and non-negative, got {}", self.zipf));
        }
        if self.purity < 1.0 && self.background_words == 0 {
            return fail("purity below 1 needs background words".into());
        }
        if self.words_per_topic() < 2 {
            return fail(format!(
                "vocab_size {} is too small for {} topics ({} reserved, {} background words)",
                self.vocab_size,
                self.n_topics,
                RESERVED.len(),
                self.background_words
            ));
        }
        Ok(())
    }

    pub fn words_per_topic(&self) -> usize {
        self.vocab_size
            .saturating_sub(RESERVED.len() + self.background_words)
            / self.n_topics.max(1)
    }

    pub fn topic_word(topic: usize, i: usize) -> String {
        format!("t{topic}w{i}")
    }

    pub fn background_word(i: usize) -> String {
        format!("bg{i}")
    }

    /// Reserved tokens, then background words, then topic blocks in order.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        self.validate()?;
        let mut words: Vec<String> = (0..self.background_words).map(Self::background_word).collect();
        for topic in 0..self.n_topics {
            words.extend((0..self.words_per_topic()).map(|i| Self::topic_word(topic, i)));
        }
        Vocabulary::from_words(words)
    }
}

/// Topic of a generated word, or `None` for background/unknown words.
pub fn word_topic(word: &str) -> Option<usize> {
    let rest = word.strip_prefix('t')?;
    let (topic, idx) = rest.split_once('w')?;
    idx.parse::<usize>().ok()?;
    topic.parse().ok()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub vocab: Vocabulary,
    pub train: Vec<RawExample>,
    pub test: Vec<RawExample>,
    /// Topic of each user, train then test.
    pub train_topics: Vec<usize>,
    pub test_topics: Vec<usize>,
}

struct Sampler<'a> {
    spec: &'a SyntheticSpec,
    topic_words: Vec<Vec<String>>,
    topic_weights: WeightedIndex<f64>,
    background: Vec<String>,
}

impl Sampler<'_> {
    fn text<R: Rng>(&self, topic: usize, len: RangeInclusive<usize>, rng: &mut R) -> String {
        let n = rng.random_range(len);
        let words: Vec<&str> = (0..n)
            .map(|_| {
                if rng.random_bool(self.spec.purity) {
                    self.topic_words[topic][self.topic_weights.sample(rng)].as_str()
                } else {
                    self.background.choose(rng).expect("background is non-empty").as_str()
                }
            })
            .collect();
        words.join(" ")
    }

    fn example<R: Rng>(&self, rng: &mut R) -> (usize, RawExample) {
        let s = self.spec;
        let topic = rng.random_range(0..s.n_topics);
        let tokens = s.min_tokens..=s.max_tokens;
        let n_turns = rng.random_range(s.min_turns..=s.max_turns);
        let history = (0..n_turns).map(|_| self.text(topic, tokens.clone(), rng)).collect();
        let positive = rng.random_range(0..s.candidates);
        let candidates = (0..s.candidates)
            .map(|i| {
                let t = if i == positive {
                    topic
                } else {
                    // Uniform over the other topics.
                    let other = rng.random_range(0..s.n_topics - 1);
                    if other >= topic {
                        other + 1
                    } else {
                        other
                    }
                };
                self.text(t, tokens.clone(), rng)
            })
            .collect();
        (
            topic,
            RawExample {
                history,
                candidates,
                positive_indices: vec![positive],
            },
        )
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    let vocab = spec.vocabulary()?;
    let sampler = Sampler {
        spec,
        topic_words: (0..spec.n_topics)
            .map(|t| (0..spec.words_per_topic()).map(|i| SyntheticSpec::topic_word(t, i)).collect())
            .collect(),
        topic_weights: WeightedIndex::new((0..spec.words_per_topic()).map(|i| ((i + 1) as f64).powf(-spec.zipf)))
            .map_err(|e| Error::Spec(e.to_string()))?,
        background: (0..spec.background_words).map(SyntheticSpec::background_word).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = |n: usize| -> (Vec<usize>, Vec<RawExample>) {
        (0..n).map(|_| sampler.example(&mut rng)).unzip()
    };
    let (train_topics, train) = split(spec.train_examples);
    let (test_topics, test) = split(spec.test_examples);
    Ok(SyntheticDataset {
        vocab,
        train,
        test,
        train_topics,
        test_topics,
    })
}

/// Dataset-level shape statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub examples: usize,
    pub avg_turns: f64,
    pub avg_history_tokens: f64,
    pub avg_candidates: f64,
    pub avg_candidate_tokens: f64,
}

pub fn dataset_stats(examples: &[RawExample]) -> DatasetStats {
    let n = examples.len().max(1) as f64;
    let words = |s: &String| s.split_whitespace().count();
    let turns: usize = examples.iter().map(|e| e.history.len()).sum();
    let hist: usize = examples.iter().flat_map(|e| &e.history).map(words).sum();
    let cands: usize = examples.iter().map(|e| e.candidates.len()).sum();
    let cand_tokens: usize = examples.iter().flat_map(|e| &e.candidates).map(words).sum();
    DatasetStats {
        examples: examples.len(),
        avg_turns: turns as f64 / n,
        avg_history_tokens: hist as f64 / n,
        avg_candidates: cands as f64 / n,
        avg_candidate_tokens: cand_tokens as f64 / cands.max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            train_examples: 20,
            test_examples: 5,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn vocabulary_size_matches_spec_budget() {
        let spec = SyntheticSpec::default();
        let v = spec.vocabulary().unwrap();
        assert!(v.len() <= spec.vocab_size);
        assert_eq!(v.len(), RESERVED.len() + 32 + 8 * spec.words_per_topic());
    }

    #[test]
    fn vocab_too_small_is_a_spec_error() {
        let spec = SyntheticSpec {
            vocab_size: 40,
            ..SyntheticSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Spec(_))));
    }

    #[test]
    fn degenerate_specs_rejected() {
        for spec in [
            SyntheticSpec { n_topics: 1, ..small() },
            SyntheticSpec { candidates: 1, ..small() },
            SyntheticSpec { min_turns: 4, max_turns: 3, ..small() },
        ] {
            assert!(generate_synthetic(&spec).is_err());
        }
    }

    #[test]
    fn one_positive_per_example_and_m_candidates() {
        let d = generate_synthetic(&small()).unwrap();
        assert_eq!(d.train.len(), 20);
        assert_eq!(d.test.len(), 5);
        for ex in d.train.iter().chain(&d.test) {
            assert_eq!(ex.candidates.len(), 20);
            assert_eq!(ex.positive_indices.len(), 1);
            assert!((3..=8).contains(&ex.history.len()));
            ex.validate().unwrap();
        }
    }

    #[test]
    fn word_topic_parses_generated_words() {
        assert_eq!(word_topic("t3w17"), Some(3));
        assert_eq!(word_topic("bg4"), None);
        assert_eq!(word_topic("tw"), None);
    }

    #[test]
    fn stats_count_words() {
        let ex = RawExample {
            history: vec!["a b".into(), "c".into()],
            candidates: vec!["x".into(), "y z w".into()],
            positive_indices: vec![0],
        };
        let s = dataset_stats(&[ex]);
        assert_eq!(s.avg_turns, 2.0);
        assert_eq!(s.avg_history_tokens, 3.0);
        assert_eq!(s.avg_candidates, 2.0);
        assert_eq!(s.avg_candidate_tokens, 2.0);
    }
}
