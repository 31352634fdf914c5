#![allow(dead_code)]

use textrec::data::{encode_examples, generate_synthetic, EncodedExample, SyntheticSpec};
use textrec::model::ModelConfig;

/// A synthetic task small enough for sub-second training runs.
pub fn tiny_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_topics: 4,
        vocab_size: 64,
        background_words: 8,
        min_turns: 2,
        max_turns: 4,
        min_tokens: 3,
        max_tokens: 6,
        candidates: 6,
        train_examples: 30,
        test_examples: 10,
        seed,
        ..SyntheticSpec::default()
    }
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 64,
        d_model: 16,
        n_heads: 2,
        local_layers: 1,
        global_layers: 1,
        decoder_layers: 1,
        d_ff: 32,
        max_len: 40,
    }
}

pub fn tiny_data(seed: u64) -> (Vec<EncodedExample>, Vec<EncodedExample>) {
    let data = generate_synthetic(&tiny_spec(seed)).unwrap();
    let max_len = tiny_model_config().max_len;
    (
        encode_examples(&data.train, &data.vocab, max_len).unwrap(),
        encode_examples(&data.test, &data.vocab, max_len).unwrap(),
    )
}
