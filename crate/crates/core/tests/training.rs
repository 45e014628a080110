mod common;

use std::collections::BTreeMap;

use fakenews_core::attention::AttentionMode;
use fakenews_core::checkpoint;
use fakenews_core::corpus::Label;
use fakenews_core::metrics::ablation::{run_ablation, AblationVariant, VariantName};
use fakenews_core::model::{backward, batch_loss, forward_batch, ModelContract, ModelParams};
use fakenews_core::rng::SeededRng;
use fakenews_core::training::{adam_step, train, AdamState, TrainConfig};
use fakenews_core::Error;

#[test]
fn adam_descends_a_parabola() {
    // f(w) = w², gradient 2w, from w = 1 with lr 0.1.
    let cfg = TrainConfig {
        learning_rate: 0.1,
        ..TrainConfig::default()
    };
    let mut w = vec![1.0];
    let mut state = AdamState::default();
    let (mut m, mut v) = (0.0f64, 0.0f64);
    let mut oracle = 1.0f64;
    for t in 1..=5 {
        let g = 2.0 * w[0];
        adam_step(&mut w, &vec![g], &mut state, &cfg);

        let go = 2.0 * oracle;
        m = 0.9 * m + 0.1 * go;
        v = 0.999 * v + 0.001 * go * go;
        let m_hat = m / (1.0 - 0.9f64.powi(t));
        let v_hat = v / (1.0 - 0.999f64.powi(t));
        let next = oracle - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!(next < oracle);
        oracle = next;
        assert!((w[0] - oracle).abs() < 1e-15, "step {t}: {} vs {oracle}", w[0]);
    }
}

#[test]
fn gradient_check_over_many_seeds() {
    for seed in 0..6u64 {
        for (mode, tie) in [
            (AttentionMode::Sequence, false),
            (AttentionMode::Sequence, true),
            (AttentionMode::Scalar, true),
        ] {
            let contract = common::tiny_contract(mode, tie);
            let model = ModelParams::init(contract.clone(), seed);
            let mut rng = SeededRng::new(seed + 100);
            let data: Vec<_> = (0..3)
                .map(|j| common::random_features(&contract, &mut rng, &format!("x{j}"), Label::from_index(j % 2).unwrap()))
                .collect();
            let batch: Vec<_> = data.iter().collect();
            let grads = backward(&model, &batch, &forward_batch(&model, &batch).unwrap()).unwrap();
            let fd = common::finite_difference_gradient(&model, &batch, 1e-5);
            for (g, n) in grads.tensors().iter().zip(&fd) {
                let err = common::max_relative_error(g.data, n, 1e-6);
                assert!(err <= 1e-4, "seed {seed} {mode} tie={tie} {}: {err:e}", g.name);
            }
        }
    }
}

#[test]
fn duplicated_sample_has_the_single_sample_gradient() {
    let contract = common::tiny_contract(AttentionMode::Sequence, false);
    let model = ModelParams::init(contract.clone(), 3);
    let x = common::random_features(&contract, &mut SeededRng::new(4), "dup", Label::True);
    let one = backward(&model, &[&x], &forward_batch(&model, &[&x]).unwrap()).unwrap();
    let two = backward(&model, &[&x, &x], &forward_batch(&model, &[&x, &x]).unwrap()).unwrap();
    for (a, b) in one.tensors().iter().zip(two.tensors()) {
        for (p, q) in a.data.iter().zip(b.data) {
            assert!((p - q).abs() <= 1e-15 * (1.0 + p.abs()));
        }
    }
}

#[test]
fn saturated_prediction_has_vanishing_gradient() {
    let contract = common::tiny_contract(AttentionMode::Sequence, false);
    let mut model = ModelParams::init(contract.clone(), 3);
    // Push the true logit far above the fake one through the bias alone.
    model.head.bias[1] = 60.0;
    model.head.bias[0] = -60.0;
    let x = common::random_features(&contract, &mut SeededRng::new(8), "sat", Label::True);
    let g = backward(&model, &[&x], &forward_batch(&model, &[&x]).unwrap()).unwrap();
    assert!(g.l2_norm() < 1e-8, "{}", g.l2_norm());
    assert!(batch_loss(&model, &[&x]).unwrap() < 1e-40);
}

#[test]
fn stale_cache_is_rejected() {
    let contract = common::tiny_contract(AttentionMode::Sequence, false);
    let mut model = ModelParams::init(contract.clone(), 3);
    let x = common::random_features(&contract, &mut SeededRng::new(8), "s", Label::Fake);
    let cache = forward_batch(&model, &[&x]).unwrap();
    let grads = backward(&model, &[&x], &cache).unwrap();
    adam_step(&mut model, &grads, &mut AdamState::default(), &TrainConfig::default());
    assert!(matches!(backward(&model, &[&x], &cache), Err(Error::StaleCache(_))));
    let y = common::random_features(&contract, &mut SeededRng::new(9), "other", Label::Fake);
    let fresh = forward_batch(&model, &[&x]).unwrap();
    assert!(matches!(backward(&model, &[&y], &fresh), Err(Error::StaleCache(_))));
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let corpus = common::planted_signal_corpus(20);
    let (train_set, _) = corpus.features(&common::lexicon());
    let model = ModelParams::init(ModelContract::new(64, 20), 5);
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let (trained, history) = train(model.clone(), &train_set, &cfg).unwrap();
    assert_eq!(trained, model);
    assert!(history.epochs.is_empty());
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let corpus = common::planted_signal_corpus(40);
    let (train_set, _) = corpus.features(&common::lexicon());
    let cfg = TrainConfig {
        epochs: 4,
        learning_rate: 1e-2,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || train(ModelParams::init(ModelContract::new(64, 20), 5), &train_set, &cfg).unwrap();
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(ha.epochs, hb.epochs);
    let meta = BTreeMap::new();
    assert_eq!(checkpoint::to_bytes(&a, &meta).unwrap(), checkpoint::to_bytes(&b, &meta).unwrap());
    assert!(ha.epochs.last().unwrap().mean_loss < ha.epochs[0].mean_loss);

    let other = TrainConfig { seed: 10, ..cfg.clone() };
    let (c, _) = train(ModelParams::init(ModelContract::new(64, 20), 5), &train_set, &other).unwrap();
    assert_ne!(c, a, "shuffle seed should change the trajectory");
}

#[test]
fn training_rejects_empty_sets_and_bad_configs() {
    let model = ModelParams::init(ModelContract::new(64, 20), 5);
    assert!(train(model.clone(), &[], &TrainConfig::default()).is_err());
    let corpus = common::planted_signal_corpus(4);
    let (train_set, _) = corpus.features(&common::lexicon());
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(train(model, &train_set, &bad).is_err());
}

#[test]
fn ablation_runs_are_reproducible_and_sized() {
    let corpus = common::planted_signal_corpus(30);
    let (train_set, test_set) = corpus.features(&common::lexicon());
    let base = ModelContract::new(64, 20);
    let variants: Vec<_> = VariantName::ALL.iter().map(|v| AblationVariant::new(*v, base.widths())).collect();
    let cfg = TrainConfig {
        epochs: 2,
        learning_rate: 1e-2,
        seed: 1,
        ..TrainConfig::default()
    };
    let a = run_ablation(&train_set, &test_set, &base, 2, &cfg, &variants, Label::Fake).unwrap();
    let b = run_ablation(&train_set, &test_set, &base, 2, &cfg, &variants, Label::Fake).unwrap();
    assert_eq!(a, b);
    let dims: Vec<usize> = a.rows.iter().map(|r| r.fused_dim).collect();
    assert_eq!(dims, vec![164, 132, 134, 126, 100]);
    let text = a.render_text();
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().next().unwrap().ends_with("Acc    Pre    Rec    F1"));
}
