mod common;

use common::{exhaustive_shapley, empty_coalition_value, random_ensemble, rng};
use qoe_transfer::analysis::{explain_gbt_row, gbt_base_value, shap_summary, tree_shap};
use qoe_transfer::dataset::{Dataset, FeatureKind, FeatureSchema, FeatureVector};
use qoe_transfer::learners::{fit, Algorithm, RegressorSpec};
use rand::Rng;

#[test]
fn matches_exhaustive_shapley_on_toy_ensembles() {
    for seed in 0..60 {
        let d = 1 + (seed as usize % 3);
        let model = random_ensemble(seed, d, 1 + (seed as usize % 4));
        let mut r = rng(seed + 1000);
        assert!((gbt_base_value(&model) - empty_coalition_value(&model, d)).abs() < 1e-9);
        for _ in 0..10 {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(0.0..10.0)).collect();
            let phi = explain_gbt_row(&model, &x);
            let oracle = exhaustive_shapley(&model, &x, d);
            for (a, b) in phi.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "seed {seed}: {phi:?} vs {oracle:?}");
            }
        }
    }
}

#[test]
fn trained_ensemble_matches_exhaustive_shapley() {
    let data = common::random_table(80, 3, 5, |v| 10.0 * v[0] - 3.0 * v[1] * (v[2] > 5.0) as u8 as f64 + 20.0);
    let spec = RegressorSpec::new(Algorithm::Gbt, [("n_rounds", 20.0), ("eta", 0.3), ("max_depth", 3.0)], 1).unwrap();
    let model = fit(&spec, &data).unwrap();
    let gbt = model.as_gbt().unwrap();
    for row in data.rows().iter().take(20) {
        let phi = explain_gbt_row(gbt, &row.values);
        let oracle = exhaustive_shapley(gbt, &row.values, 3);
        for (a, b) in phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn local_accuracy_and_dummy_feature() {
    let base = common::synthetic_table(300, 3);
    // append a constant column that no split can use
    let mut entries = base.schema().entries().to_vec();
    entries.push(qoe_transfer::dataset::FeatureEntry {
        name: "dummy".into(),
        kind: FeatureKind::Generic,
    });
    let schema = FeatureSchema::new(entries).unwrap();
    let rows = base
        .rows()
        .iter()
        .map(|r| {
            let mut values = r.values.clone();
            values.push(1.0);
            FeatureVector { values, label: r.label }
        })
        .collect();
    let data = Dataset::new(schema, rows, "with dummy").unwrap();
    let spec = RegressorSpec::new(Algorithm::Gbt, [("n_rounds", 300.0), ("eta", 0.05)], 2).unwrap();
    let model = fit(&spec, &data).unwrap();
    let report = tree_shap(&model, &data).unwrap();
    let d = data.schema().len();
    for (phi, pred) in report.phi.iter().zip(&report.predictions) {
        let total = report.base_value + phi.iter().sum::<f64>();
        assert!((total - pred).abs() < 1e-6);
        assert_eq!(phi[d - 1], 0.0);
    }
    let summary = shap_summary(&report).unwrap();
    assert_eq!(summary.last().unwrap().feature, "dummy");
    assert_eq!(summary.last().unwrap().mean_abs_phi, 0.0);
}

#[test]
fn non_gbt_models_are_rejected() {
    let data = common::random_table(30, 2, 1, |v| v[0]);
    let model = fit(&RegressorSpec::with_defaults(Algorithm::ModelTree, 0), &data).unwrap();
    assert!(matches!(tree_shap(&model, &data), Err(qoe_transfer::Error::UnsupportedModel(_))));
}
