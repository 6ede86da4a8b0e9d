mod common;

use common::rng;
use qoe_transfer::learners::{fit, mlp_train_epoch, Algorithm, Batch, MlpModel, MlpOptimizer, RegressorSpec};
use rand::Rng;

const STEP: f64 = 1e-3;

/// Compares backprop with central differences on every parameter whose
/// perturbation keeps the ReLU pattern fixed. Returns (checked, skipped,
/// worst relative error).
fn gradient_check(model: &MlpModel, inputs: &[Vec<f64>], targets: &[f64], dropout: Option<f64>, seed: u64) -> (usize, usize, f64) {
    let masks = dropout.map(|p| model.draw_masks(inputs.len(), p, &mut rng(seed)));
    let (_, grad) = model.loss_and_gradient(inputs, targets, masks.as_ref());
    let pattern = model.activation_pattern(inputs, masks.as_ref());
    let params = model.parameters();
    let mut probe = model.clone();
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    for k in 0..params.len() {
        let mut p = params.clone();
        p[k] = params[k] + STEP;
        probe.set_parameters(&p);
        let plus = probe.batch_loss(inputs, targets, masks.as_ref());
        let same_plus = probe.activation_pattern(inputs, masks.as_ref()) == pattern;
        p[k] = params[k] - STEP;
        probe.set_parameters(&p);
        let minus = probe.batch_loss(inputs, targets, masks.as_ref());
        let same_minus = probe.activation_pattern(inputs, masks.as_ref()) == pattern;
        if !(same_plus && same_minus) {
            skipped += 1;
            continue;
        }
        let fd = (plus - minus) / (2.0 * STEP);
        let scale = grad[k].abs().max(fd.abs());
        let rel = if scale == 0.0 { 0.0 } else { (grad[k] - fd).abs() / scale };
        worst = worst.max(rel);
        checked += 1;
    }
    (checked, skipped, worst)
}

fn random_problem(seed: u64) -> (MlpModel, Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let d = r.random_range(1..5);
    let hidden = [r.random_range(2..7), r.random_range(2..7)];
    let model = MlpModel::new(d, &hidden, seed);
    let inputs: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let targets: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
    (model, inputs, targets)
}

#[test]
fn backprop_matches_central_differences() {
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..40 {
        let (model, inputs, targets) = random_problem(seed);
        for dropout in [None, Some(0.3)] {
            let (c, s, worst) = gradient_check(&model, &inputs, &targets, dropout, seed);
            assert!(worst < 1e-4, "seed {seed} dropout {dropout:?}: relative error {worst}");
            checked += c;
            skipped += s;
        }
    }
    assert!(skipped * 20 < checked, "too many kinks: {skipped} skipped of {}", checked + skipped);
}

#[test]
fn zero_learning_rate_keeps_weights_and_loss() {
    let (mut model, inputs, targets) = random_problem(3);
    let before = model.parameters();
    let batches = vec![Batch { inputs, targets }];
    let mut opt = MlpOptimizer::new(&model);
    let l1 = mlp_train_epoch(&mut model, &mut opt, &batches, 0.0, 0.3, 1).unwrap();
    let l2 = mlp_train_epoch(&mut model, &mut opt, &batches, 0.0, 0.3, 2).unwrap();
    assert_eq!(model.parameters(), before);
    assert_eq!(l1, l2);
}

#[test]
fn learns_a_linear_target() {
    let data = common::random_table(200, 1, 4, |v| 3.0 * v[0]);
    let spec = RegressorSpec::new(Algorithm::Mlp, [("epochs", 300.0), ("dropout", 0.0)], 8).unwrap();
    let model = fit(&spec, &data).unwrap();
    let final_mse = *model.training_curve.last().unwrap();
    assert!(final_mse < 0.1, "normalised training MSE {final_mse}");
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = common::random_table(60, 3, 2, |v| v[0] + 2.0 * v[1]);
    let spec = RegressorSpec::new(Algorithm::Mlp, [("epochs", 20.0)], 5).unwrap();
    let a = fit(&spec, &data).unwrap();
    let b = fit(&spec, &data).unwrap();
    assert_eq!(a, b);
    let c = fit(&spec.with_seed(6), &data).unwrap();
    assert_ne!(a.as_mlp().unwrap().parameters(), c.as_mlp().unwrap().parameters());
}
