//! Builds the turn-local, global and causal masks and shows that turn-local
//! attention never leaks across turns.
//!
//!     cargo run --release --example attention_masks

use textrec::autodiff::Tape;
use textrec::model::{build_causal_mask, build_global_mask, build_local_mask, MaskMatrix, MaskMode, Model, ModelConfig, TurnedHistory};

fn show(name: &str, m: &MaskMatrix) {
    println!("{name}:");
    for i in 0..m.len() {
        let row: String = (0..m.len()).map(|j| if m.is_blocked(i, j) { '.' } else { '#' }).collect();
        println!("  {row}");
    }
}

fn main() -> textrec::Result<()> {
    // Three turns of 2, 3 and 2 tokens.
    let turn_ids = [0, 0, 1, 1, 1, 2, 2];
    show("local (tokens attend within their own turn)", &build_local_mask(&turn_ids)?);
    show("global", &build_global_mask(turn_ids.len())?);
    show("causal (decoder self-attention)", &build_causal_mask(4)?);

    let cfg = ModelConfig::default();
    let model = Model::new(cfg.clone(), 0)?;
    let history = TurnedHistory::new(vec![10, 11, 20, 21, 22, 30, 31], turn_ids.to_vec())?;
    let mut t = Tape::new();
    let (_, traces) = model.encode_traced(&mut t, &history, MaskMode::Standard, None)?;
    println!("\nlargest cross-turn attention weight per encoder layer:");
    for (l, trace) in traces.iter().enumerate() {
        let mut worst = 0.0f64;
        for &head in &trace.heads {
            let w = t.value(head);
            for i in 0..history.len() {
                for j in 0..history.len() {
                    if turn_ids[i] != turn_ids[j] {
                        worst = worst.max(w.row(i)[j]);
                    }
                }
            }
        }
        let kind = if l < cfg.local_layers { "local" } else { "global" };
        println!("  layer {l} ({kind}): {worst:.3e}");
    }
    Ok(())
}
