//! Datasets, tokenization, negative sampling and the synthetic topic task.

mod dataset;
mod synthetic;
mod vocab;

pub use dataset::{
    build_history, candidate_sequence, dataset_to_string, encode_examples, parse_dataset, read_dataset,
    sample_negatives, write_dataset, EncodedExample, RawExample,
};
pub use synthetic::{dataset_stats, generate_synthetic, word_topic, DatasetStats, SyntheticDataset, SyntheticSpec};
pub use vocab::{Vocabulary, BOS, EOS, PAD, RESERVED, SEP, UNK};
