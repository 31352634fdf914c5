//! Trains the joint model next to single-objective and no-global-attention
//! variants under the same seed and budget, and compares test MRR.
//!
//!     cargo run --release --example ablation -- [steps] [seed]

use textrec::data::{encode_examples, generate_synthetic, SyntheticSpec};
use textrec::evaluation::{evaluate, ScoreMode};
use textrec::model::{MaskMode, Model, ModelConfig};
use textrec::objectives::ObjectiveMode;
use textrec::training::{holdout_split, train, TrainConfig, TrainOptions};

fn main() -> textrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(1000, |s| s.parse().expect("steps"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let data = generate_synthetic(&SyntheticSpec { seed, ..SyntheticSpec::default() })?;
    let model_cfg = ModelConfig { vocab_size: data.vocab.len(), ..ModelConfig::default() };
    let train_set = encode_examples(&data.train, &data.vocab, model_cfg.max_len)?;
    let test_set = encode_examples(&data.test, &data.vocab, model_cfg.max_len)?;

    let variants = [
        ("joint", ObjectiveMode::Joint, MaskMode::Standard),
        ("disc_only", ObjectiveMode::DiscOnly, MaskMode::Standard),
        ("ppl_only", ObjectiveMode::PplOnly, MaskMode::Standard),
        ("no_local", ObjectiveMode::Joint, MaskMode::NoLocal),
        ("no_global", ObjectiveMode::Joint, MaskMode::NoGlobal),
    ];
    println!("{:<10} {:>8} {:>8} {:>8}", "variant", "MRR", "NDCG@5", "HR@5");
    for (name, objective, mask) in variants {
        let cfg = TrainConfig {
            lr_peak: 1e-3,
            total_steps: Some(steps),
            eval_every: steps,
            seed,
            objective,
            mask,
            ..TrainConfig::default()
        };
        let (tr, va) = holdout_split(&train_set, cfg.val_examples)?;
        let out = train(Model::new(model_cfg.clone(), seed)?, tr, va, &cfg, TrainOptions::default())?;
        let m = evaluate(&out.best, &test_set, ScoreMode::for_objective(objective), mask)?.summary.mean;
        println!("{name:<10} {:>8.4} {:>8.4} {:>8.4}", m.mrr, m.ndcg5, m.hr5);
    }
    Ok(())
}
