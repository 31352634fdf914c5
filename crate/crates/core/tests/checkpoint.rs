mod common;

use textrec::autodiff::ParamStore;
use textrec::evaluation::{evaluate, score_candidates, ScoreMode};
use textrec::model::{Checkpoint, MaskMode, Model, ModelConfig, FORMAT_VERSION};
use textrec::training::{train, TrainConfig, TrainOptions};

use common::{tiny_data, tiny_model_config};

fn trained() -> (Model, textrec::model::TrainingState) {
    let (examples, _) = tiny_data(5);
    let cfg = TrainConfig {
        total_steps: Some(5),
        lr_peak: 1e-3,
        val_examples: 0,
        ..TrainConfig::default()
    };
    let out = train(Model::new(tiny_model_config(), 5).unwrap(), &examples, &[], &cfg, TrainOptions::default()).unwrap();
    (out.last, out.optimizer)
}

#[test]
fn save_load_evaluate_is_bit_exact() {
    let (model, state) = trained();
    let (_, test) = tiny_data(5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    Checkpoint::from_model(&model, 5, Some(state.clone())).save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.format_version(), FORMAT_VERSION);
    assert_eq!(loaded.rng_seed, 5);
    assert_eq!(loaded.training.as_ref(), Some(&state));
    let back = loaded.into_model().unwrap();
    for mode in [ScoreMode::Fused, ScoreMode::Disc, ScoreMode::Ppl] {
        let a = evaluate(&model, &test, mode, MaskMode::Standard).unwrap();
        let b = evaluate(&back, &test, mode, MaskMode::Standard).unwrap();
        assert_eq!(a.per_instance, b.per_instance);
    }
    for ex in &test {
        let a = score_candidates(&model, ex, MaskMode::Standard).unwrap();
        let b = score_candidates(&back, ex, MaskMode::Standard).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.s_d.to_bits(), y.s_d.to_bits());
            assert_eq!(x.s_p.to_bits(), y.s_p.to_bits());
        }
    }
}

#[test]
fn bytes_round_trip_without_optimizer_state() {
    let model = Model::new(tiny_model_config(), 9).unwrap();
    let ckpt = Checkpoint::from_model(&model, 9, None);
    let bytes = ckpt.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert!(back.training.is_none());
    assert_eq!(back.to_bytes(), bytes);
}

#[test]
fn unsupported_version_is_rejected() {
    let model = Model::new(tiny_model_config(), 0).unwrap();
    let mut bytes = Checkpoint::from_model(&model, 0, None).to_bytes();
    bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let err = Checkpoint::from_bytes(&bytes).unwrap_err();
    assert!(err.to_string().contains("format_version"), "{err}");
}

#[test]
fn corrupt_files_are_rejected() {
    let model = Model::new(tiny_model_config(), 0).unwrap();
    let bytes = Checkpoint::from_model(&model, 0, None).to_bytes();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Checkpoint::from_bytes(&extra).is_err());
    assert!(Checkpoint::from_bytes(b"not a checkpoint at all").is_err());
}

#[test]
fn incompatible_shapes_name_the_parameter() {
    let model = Model::new(tiny_model_config(), 0).unwrap();
    let wider = ModelConfig {
        vocab_size: 80,
        ..tiny_model_config()
    };
    match Model::from_store(wider, model.store().clone()) {
        Err(textrec::Error::ParamShape { name, expected, found }) => {
            assert_eq!(name, "embed.tokens");
            assert_eq!(expected, vec![80, 16]);
            assert_eq!(found, vec![64, 16]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(Model::from_store(tiny_model_config(), ParamStore::new()).is_err());
}
