//! Generates the synthetic topic-matching task, prints its statistics and one
//! example, and writes it in the on-disk format the CLI reads.
//!
//!     cargo run --example synthetic_data -- [out_dir]

use textrec::data::{dataset_stats, generate_synthetic, word_topic, write_dataset, SyntheticSpec};

fn main() -> textrec::Result<()> {
    let spec = SyntheticSpec::default();
    let data = generate_synthetic(&spec)?;
    println!("vocabulary: {} entries", data.vocab.len());
    for (split, examples) in [("train", &data.train), ("test", &data.test)] {
        let s = dataset_stats(examples);
        println!(
            "{split:<5} {:>5} examples, {:.2} turns, {:.2} history tokens, {:.2} candidates of {:.2} tokens",
            s.examples, s.avg_turns, s.avg_history_tokens, s.avg_candidates, s.avg_candidate_tokens
        );
    }

    let ex = &data.train[0];
    println!("\nuser topic {}", data.train_topics[0]);
    for (i, turn) in ex.history.iter().enumerate() {
        println!("  turn {i}: {turn}");
    }
    let topics = |text: &str| -> String {
        text.split(' ').map(|w| word_topic(w).map_or("-".to_string(), |t| t.to_string())).collect::<Vec<_>>().join(" ")
    };
    for (i, c) in ex.candidates.iter().enumerate().take(4) {
        let mark = if ex.positive_indices.contains(&i) { "+" } else { " " };
        println!("{mark} candidate {i}: {c}\n               topics {}", topics(c));
    }

    if let Some(dir) = std::env::args().nth(1) {
        std::fs::create_dir_all(&dir)?;
        let dir = std::path::Path::new(&dir);
        write_dataset(dir.join("train.jsonl"), &data.train)?;
        write_dataset(dir.join("test.jsonl"), &data.test)?;
        data.vocab.save(dir.join("vocab.txt"))?;
        println!("\nwrote {}", dir.display());
    }
    Ok(())
}
