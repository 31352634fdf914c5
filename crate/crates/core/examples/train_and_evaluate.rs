//! Trains the default model on the synthetic task with the joint objective and
//! reports test metrics for each scoring rule. Takes a few minutes in release
//! mode on one core.
//!
//!     cargo run --release --example train_and_evaluate -- [steps] [seed]

use std::time::Instant;

use textrec::data::{encode_examples, generate_synthetic, SyntheticSpec};
use textrec::evaluation::{evaluate, score_candidates, rank_scores, ScoreMode};
use textrec::metrics::random_mrr;
use textrec::model::{MaskMode, Model, ModelConfig};
use textrec::training::{holdout_split, train, TrainConfig, TrainOptions};

fn main() -> textrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(3000, |s| s.parse().expect("steps"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let data = generate_synthetic(&SyntheticSpec { seed, ..SyntheticSpec::default() })?;
    let model_cfg = ModelConfig { vocab_size: data.vocab.len(), ..ModelConfig::default() };
    let train_set = encode_examples(&data.train, &data.vocab, model_cfg.max_len)?;
    let test_set = encode_examples(&data.test, &data.vocab, model_cfg.max_len)?;

    let cfg = TrainConfig { lr_peak: 1e-3, total_steps: Some(steps), eval_every: 500, seed, ..TrainConfig::default() };
    let (tr, va) = holdout_split(&train_set, cfg.val_examples)?;
    let t0 = Instant::now();
    let out = train(Model::new(model_cfg, seed)?, tr, va, &cfg, TrainOptions { verbose: true, ..Default::default() })?;
    println!("trained {steps} steps in {:.0?}; best validation at step {}", t0.elapsed(), out.best_step);

    println!("random MRR for 20 candidates: {:.4}", random_mrr(20));
    for mode in [ScoreMode::Fused, ScoreMode::Disc, ScoreMode::Ppl] {
        let report = evaluate(&out.best, &test_set, mode, MaskMode::Standard)?;
        print!("{}", report.summary.to_table(mode.as_str()));
    }

    // Scores and fused ranking for one test user.
    let ex = &test_set[0];
    let scores = score_candidates(&out.best, ex, MaskMode::Standard)?;
    let ranks = rank_scores(&scores, ScoreMode::Fused)?;
    println!("\nfirst test user, positive candidate(s) {:?}:", ex.positives);
    for (i, (s, r)) in scores.iter().zip(&ranks).enumerate().take(8) {
        println!("  candidate {i:>2}  S^d {:>8.3}  S^p {:>8.3}  rank {r}", s.s_d, s.s_p);
    }
    Ok(())
}
