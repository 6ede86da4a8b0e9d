mod common;

use common::{brute_force_ks, rng};
use proptest::prelude::*;
use qoe_transfer::analysis::{ks_feature_screen, ks_statistic, ks_two_sample};
use qoe_transfer::dataset::content_split;
use rand::Rng;

fn sample(r: &mut rand_chacha::ChaCha8Rng, n: usize, discrete: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if discrete {
                r.random_range(0..8) as f64
            } else {
                r.random_range(-3.0..3.0)
            }
        })
        .collect()
}

#[test]
fn statistic_matches_brute_force_ecdf_distance() {
    let mut r = rng(9);
    for k in 0..200 {
        let (n1, n2) = (r.random_range(1..=200), r.random_range(1..=200));
        let a = sample(&mut r, n1, k % 2 == 0);
        let b = sample(&mut r, n2, k % 3 == 0);
        let d = ks_statistic(&a, &b).unwrap();
        assert!((d - brute_force_ks(&a, &b)).abs() < 1e-12, "pair {k}");
    }
}

#[test]
fn identical_and_disjoint_extremes() {
    let a = [0.5, 0.1, 0.9, 0.1];
    assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
    assert_eq!(ks_statistic(&a, &[5.0, 6.0]).unwrap(), 1.0);
    assert_eq!(ks_statistic(&[5.0, 6.0], &a).unwrap(), 1.0);
}

#[test]
fn screen_flags_shifted_content_features() {
    let data = common::synthetic_table(450, 4);
    let (g0, g1) = content_split(&data, 85.0, 85.0).unwrap();
    let screen = ks_feature_screen(&g0, &g1, 0.01).unwrap();
    let names: Vec<&str> = data.schema().names().collect();
    assert_eq!(screen.iter().map(|s| s.feature.as_str()).collect::<Vec<_>>(), names);
    for s in &screen {
        assert_eq!(s.specific_candidate, s.result.p_value < 0.01);
        assert_eq!((s.result.n1, s.result.n2), (g0.len(), g1.len()));
    }
    assert!(screen.iter().find(|s| s.feature == "TI").unwrap().specific_candidate);
    assert!(screen.iter().find(|s| s.feature == "SI").unwrap().specific_candidate);
}

proptest! {
    #[test]
    fn statistic_is_symmetric_and_bounded(
        a in prop::collection::vec(-5.0f64..5.0, 1..60),
        b in prop::collection::vec(-5.0f64..5.0, 1..60),
    ) {
        let r = ks_two_sample(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.statistic));
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert_eq!(r.statistic, ks_statistic(&b, &a).unwrap());
    }
}
