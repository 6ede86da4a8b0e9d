//! Metrics with the repetition protocol, two-sample KS testing and
//! TreeSHAP attributions.

mod ks;
mod metrics;
mod shap;

pub use ks::{kolmogorov_sf, ks_feature_screen, ks_feature_screen_with, ks_statistic, ks_two_sample, FeatureKsResult, KsResult};
pub use metrics::{
    coefficient_of_determination, mae, mean_and_half_width, r_squared, repeated_protocol, repeated_protocol_with,
    run_repetitions, Metric, MetricReport, R2Kind, Z_95,
};
pub use shap::{
    explain_gbt_row, gbt_base_value, shap_summary, tree_expectation, tree_shap, tree_shap_row, tree_shap_with,
    ShapReport, ShapSummaryRow,
};
