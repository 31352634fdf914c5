//! Compares tape gradients of the joint training loss with central finite
//! differences on a handful of parameters.
//!
//!     cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textrec::autodiff::{relative_error, Tape};
use textrec::data::{encode_examples, generate_synthetic, sample_negatives, SyntheticSpec};
use textrec::model::{MaskMode, Model, ModelConfig};
use textrec::objectives::{joint_loss, ObjectiveMode};

fn main() -> textrec::Result<()> {
    let spec = SyntheticSpec { train_examples: 2, test_examples: 0, ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec)?;
    let cfg = ModelConfig { vocab_size: data.vocab.len(), ..ModelConfig::default() };
    let examples = encode_examples(&data.train, &data.vocab, cfg.max_len)?;
    let mut model = Model::new(cfg, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let example = &examples[0];
    let instance = sample_negatives(example, 0, 4, &mut rng)?.remove(0);

    let loss = |m: &Model| -> textrec::Result<f64> {
        let mut t = Tape::new();
        let jl = joint_loss(&mut t, m, &example.history, &instance, ObjectiveMode::Joint, MaskMode::Standard)?;
        Ok(t.value(jl.loss).item())
    };

    let mut t = Tape::new();
    let jl = joint_loss(&mut t, &model, &example.history, &instance, ObjectiveMode::Joint, MaskMode::Standard)?;
    println!("joint loss {:.6}", t.value(jl.loss).item());
    model.store_mut().zero_grad();
    t.backward_into(jl.loss, model.store_mut())?;

    let h = 1e-5;
    println!("{:<44} {:>14} {:>14} {:>10}", "parameter", "analytic", "finite diff", "rel err");
    for name in ["tau", "embed.tokens", "encoder.layers.0.self_attn.q.weight", "encoder.layers.3.ffn.fc2.bias", "decoder.layers.1.cross_attn.v.weight", "lm_head.weight", "score_head.dense.weight"] {
        let id = model.store().id(name).expect("known parameter");
        let j = if name == "embed.tokens" {
            // A row that the history actually uses; the others get no gradient.
            let d = model.config().d_model;
            example.history.tokens()[0] as usize * d + rng.random_range(0..d)
        } else {
            rng.random_range(0..model.store().get(id).value.len())
        };
        let analytic = model.store().get(id).grad.data()[j];
        let orig = model.store().get(id).value.data()[j];
        model.store_mut().get_mut(id).value.data_mut()[j] = orig + h;
        let up = loss(&model)?;
        model.store_mut().get_mut(id).value.data_mut()[j] = orig - h;
        let down = loss(&model)?;
        model.store_mut().get_mut(id).value.data_mut()[j] = orig;
        let fd = (up - down) / (2.0 * h);
        let label = format!("{name}[{j}]");
        println!("{label:<44} {analytic:>14.6e} {fd:>14.6e} {:>10.2e}", relative_error(analytic, fd, 1e-6));
    }
    Ok(())
}
