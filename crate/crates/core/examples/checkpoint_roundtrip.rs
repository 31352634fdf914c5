//! Saves a briefly trained model with its optimizer state, reloads it, and
//! checks that evaluation is bit-for-bit unchanged.
//!
//!     cargo run --release --example checkpoint_roundtrip

use textrec::data::{encode_examples, generate_synthetic, SyntheticSpec};
use textrec::evaluation::{evaluate, ScoreMode};
use textrec::model::{Checkpoint, MaskMode, Model, ModelConfig};
use textrec::training::{train, TrainConfig, TrainOptions};

fn main() -> textrec::Result<()> {
    let spec = SyntheticSpec { train_examples: 60, test_examples: 20, ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec)?;
    let model_cfg = ModelConfig { vocab_size: data.vocab.len(), ..ModelConfig::default() };
    let train_set = encode_examples(&data.train, &data.vocab, model_cfg.max_len)?;
    let test_set = encode_examples(&data.test, &data.vocab, model_cfg.max_len)?;

    let cfg = TrainConfig { lr_peak: 1e-3, total_steps: Some(20), val_examples: 0, ..TrainConfig::default() };
    let out = train(Model::new(model_cfg, 4)?, &train_set, &[], &cfg, TrainOptions::default())?;

    let dir = std::env::temp_dir().join("textrec-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    Checkpoint::from_model(&out.last, cfg.seed, Some(out.optimizer.clone())).save(&path)?;
    let size = std::fs::metadata(&path)?.len();

    let ckpt = Checkpoint::load(&path)?;
    println!("{} ({size} bytes), format version {}", path.display(), ckpt.format_version());
    if let Some(state) = &ckpt.training {
        println!("optimizer state at step {}", state.step);
    }
    let reloaded = ckpt.into_model()?;
    println!("tau after training: {:.6}", reloaded.tau());

    for mode in [ScoreMode::Fused, ScoreMode::Disc, ScoreMode::Ppl] {
        let a = evaluate(&out.last, &test_set, mode, MaskMode::Standard)?;
        let b = evaluate(&reloaded, &test_set, mode, MaskMode::Standard)?;
        let same = a == b;
        println!("{:<5} MRR {:.6}  identical after reload: {same}", mode.as_str(), b.summary.mean.mrr);
        assert!(same);
    }
    Ok(())
}
