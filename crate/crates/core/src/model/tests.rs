use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn evidential() -> Head {
    Head::Evidential { activation: EvidenceActivation::Softplus }
}

/// Two Gaussian blobs at ±(3, 3) with σ = 0.5, alternating labels.
fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let c = if class == 0 { 3.0 } else { -3.0 };
        // Box-Muller
        let (u1, u2): (f64, f64) = (rng.random_range(1e-12..1.0), rng.random());
        let r = (-2.0 * u1.ln()).sqrt() * 0.5;
        let t = 2.0 * std::f64::consts::PI * u2;
        rows.push(vec![c + r * t.cos(), c + r * t.sin()]);
        labels.push(class);
    }
    (rows, labels)
}

fn zero_model(head: Head) -> ClassifierModel {
    let mut m = init_model(&ModelConfig::mlp(vec![3, 4, 3], head, 1)).unwrap();
    let n = m.parameter_count();
    m.set_parameters(vec![0.0; n]).unwrap();
    m
}

#[test]
fn init_is_deterministic_per_seed() {
    let cfg = ModelConfig::mlp(vec![5, 8, 3], evidential(), 42);
    let a = init_model(&cfg).unwrap();
    let b = init_model(&cfg).unwrap();
    assert_eq!(a.parameters(), b.parameters());
    let c = init_model(&ModelConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.parameters(), c.parameters());
}

#[test]
fn mlp_parameter_count() {
    let m = init_model(&ModelConfig::mlp(vec![784, 64, 10], evidential(), 0)).unwrap();
    assert_eq!(m.parameter_count(), 784 * 64 + 64 + 64 * 10 + 10);
    assert_eq!(m.parameter_count(), 50_890);
    assert_eq!(m.optimizer().first_moment.len(), 50_890);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = ModelConfig::mlp(vec![4, 0, 3], evidential(), 0);
    assert!(init_model(&cfg).is_err());
    cfg = ModelConfig::mlp(vec![4, 1], evidential(), 0);
    assert!(init_model(&cfg).is_err());
    cfg = ModelConfig::mlp(vec![4, 8, 3], evidential(), 0);
    cfg.input_dim = 5;
    assert!(init_model(&cfg).is_err());
    let conv = ModelConfig {
        architecture: Architecture::SmallConv { channels: 2, kernel: 3, pooling: 2 },
        image_shape: None,
        ..ModelConfig::mlp(vec![16, 3], evidential(), 0)
    };
    assert!(init_model(&conv).is_err());
}

#[test]
fn zero_weights_give_constant_outputs() {
    let x = [0.3, -1.0, 2.0];
    match zero_model(evidential()).forward(&x).unwrap() {
        HeadOutput::Evidence(e) => {
            for v in e.as_slice() {
                assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
            }
        }
        other => panic!("unexpected {other:?}"),
    }
    match zero_model(Head::Softmax).forward(&x).unwrap() {
        HeadOutput::Probabilities(p) => {
            for v in &p {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn zero_weight_uncertainty_is_closed_form() {
    // Constant evidence ln 2 per class: u = K / (K + K ln 2) = 1 / (1 + ln 2).
    let m = zero_model(evidential());
    let rows = vec![vec![0.0, 0.0, 0.0], vec![5.0, -3.0, 1.0], vec![-1.0, 1.0, 9.0]];
    for p in m.predict_batch(&rows).unwrap() {
        let Prediction::Evidential(o) = p else { panic!() };
        assert!((o.uncertainty - 1.0 / (1.0 + std::f64::consts::LN_2)).abs() < 1e-15);
    }
}

#[test]
fn evidence_is_never_negative() {
    for activation in [EvidenceActivation::Softplus, EvidenceActivation::Relu, EvidenceActivation::ClampedSoftsign] {
        let m = init_model(&ModelConfig::mlp(vec![3, 8, 4], Head::Evidential { activation }, 9)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-20.0..20.0)).collect();
            let HeadOutput::Evidence(e) = m.forward(&x).unwrap() else { panic!() };
            assert!(e.as_slice().iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn forward_rejects_wrong_width() {
    let m = zero_model(evidential());
    assert!(matches!(m.forward(&[1.0, 2.0]), Err(Error::DimensionMismatch { expected: 3, found: 2 })));
    assert!(m.predict_batch(&[vec![1.0]]).is_err());
}

#[test]
fn predict_batch_matches_single_forward_and_permutes() {
    let m = init_model(&ModelConfig::mlp(vec![2, 6, 3], evidential(), 3)).unwrap();
    let rows = vec![vec![0.1, 0.2], vec![-1.0, 3.0], vec![2.0, 2.0]];
    let batch = m.predict_batch(&rows).unwrap();
    let HeadOutput::Evidence(e) = m.forward(&rows[1]).unwrap() else { panic!() };
    assert_eq!(batch[1], Prediction::Evidential(opinion_from_evidence(&e)));
    let permuted = vec![rows[2].clone(), rows[0].clone(), rows[1].clone()];
    let pb = m.predict_batch(&permuted).unwrap();
    assert_eq!(pb, vec![batch[2].clone(), batch[0].clone(), batch[1].clone()]);
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn check_parameter_gradients(model: &ClassifierModel, rows: &[Vec<f64>], labels: &[usize], lambda: f64) -> f64 {
    let analytic = model.loss_and_gradient(rows, labels, lambda).unwrap().gradient;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..model.parameter_count() {
        let mut plus = model.clone();
        let mut minus = model.clone();
        let mut p = model.parameters().to_vec();
        p[i] += h;
        plus.set_parameters(p.clone()).unwrap();
        p[i] -= 2.0 * h;
        minus.set_parameters(p).unwrap();
        let fd = (plus.loss(rows, labels, lambda).unwrap() - minus.loss(rows, labels, lambda).unwrap()) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], fd));
    }
    worst
}

#[test]
fn backprop_matches_finite_differences_on_micro_net() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (case, head) in [evidential(), Head::Softmax].into_iter().enumerate() {
        let mut cfg = ModelConfig::mlp(vec![1, 2, 2], head, case as u64);
        cfg.hidden_activation = HiddenActivation::Tanh;
        let model = init_model(&cfg).unwrap();
        assert_eq!(model.parameter_count(), 10);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let labels: Vec<usize> = (0..5).map(|i| i % 2).collect();
        let worst = check_parameter_gradients(&model, &rows, &labels, 0.6);
        assert!(worst <= 1e-4, "{head:?}: {worst}");
    }
}

#[test]
fn conv_backprop_matches_finite_differences() {
    let shape = ImageShape { height: 6, width: 5, channels: 2 };
    let cfg = ModelConfig {
        architecture: Architecture::SmallConv { channels: 3, kernel: 3, pooling: 2 },
        head: evidential(),
        hidden_activation: HiddenActivation::Tanh,
        input_dim: shape.len(),
        num_classes: 3,
        image_shape: Some(shape),
        seed: 5,
    };
    let model = init_model(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..shape.len()).map(|_| rng.random()).collect()).collect();
    let labels = vec![0, 1, 2, 1];
    let worst = check_parameter_gradients(&model, &rows, &labels, 1.0);
    assert!(worst <= 1e-4, "{worst}");
}

#[test]
fn trains_on_separable_blobs() {
    let (rows, labels) = blobs(200, 7);
    let cfg = ModelConfig::mlp(vec![2, 16, 2], evidential(), 1);
    let tcfg = TrainConfig { epochs: 50, batch_size: 8, shuffle_seed: 3, ..TrainConfig::default() };
    let model = train_from_scratch(&cfg, &rows, &labels, &tcfg).unwrap();
    assert!(model.accuracy(&rows, &labels).unwrap() >= 0.99);

    let again = train_from_scratch(&cfg, &rows, &labels, &tcfg).unwrap();
    assert_eq!(model.parameters(), again.parameters());
}

#[test]
fn evidential_loss_falls_across_epoch_windows() {
    let (rows, labels) = blobs(200, 8);
    let cfg = ModelConfig::mlp(vec![2, 16, 2], evidential(), 2);
    let tcfg = TrainConfig { epochs: 50, batch_size: 8, shuffle_seed: 4, ..TrainConfig::default() };
    let mut losses = Vec::new();
    train_with_monitor(&cfg, &rows, &labels, &tcfg, |r, _| losses.push(r.mean_loss)).unwrap();
    let windows: Vec<f64> = losses[5..].chunks(5).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for pair in windows.windows(2) {
        assert!(pair[1] < pair[0], "{windows:?}");
    }
}

#[test]
fn softmax_training_reduces_loss() {
    let (rows, labels) = blobs(200, 9);
    let cfg = ModelConfig::mlp(vec![2, 16, 2], Head::Softmax, 2);
    let tcfg = TrainConfig { epochs: 20, batch_size: 8, ..TrainConfig::default() };
    let initial = init_model(&cfg).unwrap().loss(&rows, &labels, 0.0).unwrap();
    let model = train_from_scratch(&cfg, &rows, &labels, &tcfg).unwrap();
    assert!(model.loss(&rows, &labels, 0.0).unwrap() < initial);
    for p in model.predict_batch(&rows).unwrap() {
        assert!((p.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn far_points_are_more_uncertain_than_training_points() {
    let (rows, labels) = blobs(200, 10);
    let cfg = ModelConfig::mlp(vec![2, 16, 2], evidential(), 4);
    let tcfg = TrainConfig { epochs: 50, batch_size: 8, shuffle_seed: 5, ..TrainConfig::default() };
    let model = train_from_scratch(&cfg, &rows, &labels, &tcfg).unwrap();
    let mean_u = |xs: &[Vec<f64>]| {
        let preds = model.predict_batch(xs).unwrap();
        preds
            .iter()
            .map(|p| match p {
                Prediction::Evidential(o) => o.uncertainty,
                _ => unreachable!(),
            })
            .sum::<f64>()
            / xs.len() as f64
    };
    // Off-diagonal points, equidistant from both blob centers.
    let far: Vec<Vec<f64>> = [4.0, 6.0, 8.0].iter().flat_map(|d| [vec![*d, -*d], vec![-*d, *d]]).collect();
    assert!(mean_u(&far) > mean_u(&rows));
}

#[test]
fn training_input_errors() {
    let cfg = ModelConfig::mlp(vec![2, 4, 2], evidential(), 0);
    let tcfg = TrainConfig::default();
    let empty: Vec<Vec<f64>> = Vec::new();
    assert!(train_from_scratch(&cfg, &empty, &[], &tcfg).is_err());
    assert!(train_from_scratch(&cfg, &[vec![0.0, 1.0]], &[2], &tcfg).is_err());
    assert!(train_from_scratch(&cfg, &[vec![0.0]], &[0], &tcfg).is_err());
    let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
    assert!(train_from_scratch(&cfg, &[vec![0.0, 1.0]], &[0], &bad).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let m = init_model(&ModelConfig::mlp(vec![4, 7, 3], evidential(), 77)).unwrap();
    let json = m.to_checkpoint_json().unwrap();
    let back = ClassifierModel::from_checkpoint_json(&json).unwrap();
    assert_eq!(back.config(), m.config());
    let same = back.parameters().iter().zip(m.parameters()).all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    m.save(&path).unwrap();
    assert_eq!(ClassifierModel::load(&path).unwrap().parameters(), m.parameters());
}

#[test]
fn checkpoint_rejects_other_schema_versions() {
    let m = init_model(&ModelConfig::mlp(vec![2, 2], evidential(), 0)).unwrap();
    let json = m.to_checkpoint_json().unwrap().replace("\"schema_version\":1", "\"schema_version\":9");
    assert!(matches!(
        ClassifierModel::from_checkpoint_json(&json),
        Err(Error::SchemaVersion { found: 9, expected: 1 })
    ));
}
