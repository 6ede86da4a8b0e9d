mod common;

use common::brute_force_best_split;
use qoe_transfer::dataset::{Dataset, FeatureKind, FeatureSchema, FeatureVector};
use qoe_transfer::learners::{fit, predict, Algorithm, Node, RegressorSpec};
use rand::Rng;

fn step_fixture() -> Dataset {
    let mut r = common::rng(17);
    let schema = FeatureSchema::from_pairs([("noise", FeatureKind::Generic), ("x", FeatureKind::Generic)]).unwrap();
    let rows = (0..120)
        .map(|_| {
            let x: f64 = r.random_range(0.0..1.0);
            let noise: f64 = r.random_range(0.0..1.0);
            FeatureVector {
                values: vec![noise, x],
                label: if x < 0.4 { 20.0 } else { 70.0 },
            }
        })
        .collect();
    Dataset::new(schema, rows, "step").unwrap()
}

#[test]
fn first_split_matches_brute_force_oracle() {
    let data = step_fixture();
    let spec = RegressorSpec::new(Algorithm::Gbt, [("n_rounds", 1.0), ("subsample", 1.0)], 0).unwrap();
    let model = fit(&spec, &data).unwrap();
    let gbt = model.as_gbt().unwrap();
    let y = data.labels();
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let grad: Vec<f64> = y.iter().map(|v| base - v).collect();
    let x: Vec<Vec<f64>> = data.rows().iter().map(|r| r.values.clone()).collect();
    let (feature, (lo, hi), gain) = brute_force_best_split(&x, &grad, 1.0, 1.0).unwrap();
    assert_eq!(feature, 1);
    match gbt.trees[0].root() {
        Node::Split {
            feature: f,
            threshold,
            gain: g,
            ..
        } => {
            assert_eq!(*f, feature);
            assert!(lo < *threshold && *threshold <= hi);
            assert!((g - gain).abs() <= 1e-9 * gain.abs());
        }
        Node::Leaf { .. } => panic!("root did not split"),
    }
}

#[test]
fn random_first_splits_match_oracle() {
    for seed in 0..20 {
        let data = common::random_table(40, 3, seed, |v| 5.0 * v[0] + (v[1] * v[2]).sin() * 10.0 + 30.0);
        let spec = RegressorSpec::new(Algorithm::Gbt, [("n_rounds", 1.0), ("subsample", 1.0), ("max_depth", 1.0)], seed).unwrap();
        let gbt = fit(&spec, &data).unwrap().as_gbt().unwrap().clone();
        let y = data.labels();
        let base = y.iter().sum::<f64>() / y.len() as f64;
        let grad: Vec<f64> = y.iter().map(|v| base - v).collect();
        let x: Vec<Vec<f64>> = data.rows().iter().map(|r| r.values.clone()).collect();
        let (feature, (lo, hi), _) = brute_force_best_split(&x, &grad, 1.0, 1.0).unwrap();
        let Node::Split { feature: f, threshold, .. } = gbt.trees[0].root() else {
            panic!("no split");
        };
        assert_eq!((*f, lo < *threshold && *threshold <= hi), (feature, true), "seed {seed}");
    }
}

#[test]
fn train_rmse_is_non_increasing_without_subsampling() {
    let data = common::synthetic_table(300, 6);
    for (eta, depth) in [(0.004, 4.0), (0.1, 4.0), (0.3, 2.0), (1.0, 6.0)] {
        let spec = RegressorSpec::new(
            Algorithm::Gbt,
            [("n_rounds", 300.0), ("subsample", 1.0), ("eta", eta), ("max_depth", depth)],
            1,
        )
        .unwrap();
        let model = fit(&spec, &data).unwrap();
        let curve = &model.training_curve;
        assert_eq!(curve.len(), 301);
        // once the fit reaches the rounding floor, only ulp-level jitter remains
        let noise = 1e-12 * curve[0];
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + noise, "eta {eta}: rmse rose from {} to {}", w[0], w[1]);
        }
    }
}

#[test]
fn prediction_is_base_plus_scaled_leaves() {
    let data = common::synthetic_table(200, 7);
    let model = fit(&common::quick_spec(Algorithm::Gbt, 3), &data).unwrap();
    let gbt = model.as_gbt().unwrap();
    let pred = predict(&model, &data).unwrap();
    for (row, p) in data.rows().iter().zip(pred) {
        let mut acc = gbt.base_prediction;
        for t in &gbt.trees {
            acc += gbt.learning_rate * t.leaf_value(&row.values);
        }
        assert_eq!(acc, p);
    }
    let mean = data.labels().iter().sum::<f64>() / data.len() as f64;
    assert_eq!(gbt.base_prediction, mean);
    assert!(gbt.trees.iter().all(|t| t.depth() <= 4));
}

#[test]
fn constant_labels_predict_the_constant() {
    let data = common::random_table(30, 3, 1, |_| 42.0);
    for alg in Algorithm::ALL {
        // 30 rows make one batch per epoch; dropout training needs more steps to settle
        let spec = match alg {
            Algorithm::Mlp => RegressorSpec::new(alg, [("epochs", 5000.0)], 1).unwrap(),
            _ => RegressorSpec::with_defaults(alg, 1),
        };
        let model = fit(&spec, &data).unwrap();
        let tol = if alg == Algorithm::Mlp { 0.5 } else { 1e-6 };
        for p in predict(&model, &data).unwrap() {
            assert!((p - 42.0).abs() < tol, "{alg}: {p}");
        }
    }
}

#[test]
fn fits_are_deterministic_and_seed_dependent() {
    let data = common::synthetic_table(200, 8);
    let spec = common::quick_spec(Algorithm::Gbt, 4);
    assert_eq!(fit(&spec, &data).unwrap(), fit(&spec, &data).unwrap());
    assert_ne!(fit(&spec, &data).unwrap().params, fit(&spec.with_seed(5), &data).unwrap().params);
}

#[test]
fn unknown_or_out_of_range_hyperparameters_are_rejected() {
    assert!(RegressorSpec::new(Algorithm::Gbt, [("depth", 3.0)], 0).is_err());
    assert!(RegressorSpec::new(Algorithm::Gbt, [("subsample", 1.5)], 0).is_err());
    assert!(RegressorSpec::new(Algorithm::Mlp, [("dropout", 1.0)], 0).is_err());
    assert!(RegressorSpec::new(Algorithm::ModelTree, [("min_leaf", 0.0)], 0).is_err());
}
