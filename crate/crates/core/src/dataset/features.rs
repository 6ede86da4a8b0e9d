use super::schema::{FeatureKind, FeatureSchema};
use super::sessions::SessionRecord;
use super::table::{Dataset, FeatureVector};
use crate::error::Result;

pub const TI: &str = "TI";
pub const SI: &str = "SI";
pub const FPS: &str = "fps";
pub const NSTALLS: &str = "nstalls";
pub const STALL_TIME_INTERMEDIATE: &str = "stallTimeIntermediateTotal";
pub const STALL_TIME_INITIAL: &str = "stallTimeInitialTotal";
pub const MEAN_BITRATE: &str = "meanBitrate";
pub const BITRATE_TREND: &str = "bitrateTrend";
pub const LAST_BITRATE: &str = "lastbitrate";

/// The nine extracted features in their fixed order, with GF/SF tags.
pub const QOE_FEATURES: [(&str, FeatureKind); 9] = [
    (TI, FeatureKind::Specific),
    (SI, FeatureKind::Specific),
    (FPS, FeatureKind::Generic),
    (NSTALLS, FeatureKind::Generic),
    (STALL_TIME_INTERMEDIATE, FeatureKind::Generic),
    (STALL_TIME_INITIAL, FeatureKind::Generic),
    (MEAN_BITRATE, FeatureKind::Generic),
    (BITRATE_TREND, FeatureKind::Generic),
    (LAST_BITRATE, FeatureKind::Generic),
];

pub fn qoe_schema() -> FeatureSchema {
    FeatureSchema::from_pairs(QOE_FEATURES).expect("static schema is valid")
}

/// Least-squares slope of `values` against their index 0..n-1; 0 for n < 2.
///
/// Mirrored index offsets cancel, so the numerator is accumulated over
/// pairwise differences and a constant sequence yields exactly 0.
pub fn ols_slope(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let x_mean = (n - 1) as f64 / 2.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in 0..n / 2 {
        let dx = i as f64 - x_mean;
        sxy += dx * (values[i] - values[n - 1 - i]);
        sxx += 2.0 * dx * dx;
    }
    sxy / sxx
}

pub fn extract_features(session: &SessionRecord) -> FeatureVector {
    let bitrates = &session.segment_bitrates;
    let mean_bitrate = bitrates.iter().sum::<f64>() / bitrates.len() as f64;
    FeatureVector {
        values: vec![
            session.ti,
            session.si,
            session.fps,
            session.intermediate_stalls.len() as f64,
            // fold from +0.0: an empty f64 sum is -0.0
            session.intermediate_stalls.iter().fold(0.0, |acc, s| acc + s),
            session.initial_stall_s,
            mean_bitrate,
            ols_slope(bitrates),
            *bitrates.last().expect("validated sessions have at least one segment"),
        ],
        label: session.mos,
    }
}

pub fn sessions_to_dataset(sessions: &[SessionRecord], provenance: impl Into<String>) -> Result<Dataset> {
    Dataset::new(qoe_schema(), sessions.iter().map(extract_features).collect(), provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn session(bitrates: Vec<f64>, stalls: Vec<f64>) -> SessionRecord {
        SessionRecord {
            session_id: "s".into(),
            content_id: "c".into(),
            ti: 40.0,
            si: 60.0,
            fps: 24.0,
            segment_bitrates: bitrates,
            initial_stall_s: 1.5,
            intermediate_stalls: stalls,
            mos: 75.0,
        }
    }

    #[test]
    fn no_stalls() {
        let f = extract_features(&session(vec![1.0], vec![]));
        assert_eq!(f.values[3], 0.0);
        assert_eq!(f.values[4], 0.0);
        assert_eq!(f.values[5], 1.5);
        assert_eq!(f.values[7], 0.0);
    }

    #[test]
    fn exact_line() {
        let f = extract_features(&session(vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 0.5]));
        assert_eq!(f.values[6], 2.5);
        assert_eq!(f.values[7], 1.0);
        assert_eq!(f.values[8], 4.0);
        assert_eq!(f.values[3], 2.0);
        assert_eq!(f.values[4], 2.5);
        assert_eq!(f.label, 75.0);
    }

    // Closed form: slope = (n*Σxy - Σx*Σy) / (n*Σx² - (Σx)²) with x = 0,1,2.
    #[test]
    fn slope_matches_closed_form() {
        let y = [2.0, 1.0, 3.0];
        let (n, sx, sxx) = (3.0, 3.0, 5.0);
        let sy: f64 = y.iter().sum();
        let sxy: f64 = y.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
        let oracle = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert_eq!(oracle, 0.5);
        assert!((ols_slope(&y) - oracle).abs() < 1e-15);
    }

    #[test]
    fn schema_tags() {
        let s = qoe_schema();
        assert_eq!(s.len(), 9);
        assert_eq!(s.specific_names(), vec![TI, SI]);
        assert_eq!(s.generic().len(), 7);
    }

    proptest! {
        #[test]
        fn constant_sequence_has_zero_trend(c in 0.1f64..10.0, n in 1usize..40) {
            prop_assert_eq!(ols_slope(&vec![c; n]), 0.0);
        }

        #[test]
        fn affine_sequence_recovers_slope(a in 0.1f64..10.0, b in -2.0f64..2.0, n in 2usize..60) {
            let y: Vec<f64> = (0..n).map(|i| a + b * i as f64).collect();
            let s = ols_slope(&y);
            prop_assert!((s - b).abs() <= 1e-9 * b.abs().max(1.0), "{} vs {}", s, b);
        }
    }
}
