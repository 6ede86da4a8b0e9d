//! Session ingestion, feature extraction and dataset splitting.

mod features;
mod schema;
mod sessions;
mod split;
mod table;

pub use features::{
    extract_features, ols_slope, qoe_schema, sessions_to_dataset, BITRATE_TREND, FPS, LAST_BITRATE, MEAN_BITRATE,
    NSTALLS, QOE_FEATURES, SI, STALL_TIME_INITIAL, STALL_TIME_INTERMEDIATE, TI,
};
pub use schema::{FeatureEntry, FeatureKind, FeatureSchema};
pub use sessions::{load_sessions, read_sessions, write_sessions, SessionRecord, SESSION_COLUMNS};
pub use split::{content_split, random_split, train_size, train_test_split, DEFAULT_CONTENT_THRESHOLD};
pub use table::{
    default_kind, load_feature_table, project_features, read_feature_table, write_feature_table, Dataset,
    FeatureVector, Projection, LABEL_COLUMN,
};
