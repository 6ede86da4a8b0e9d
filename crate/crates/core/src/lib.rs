//! Algorithm-agnostic transfer learning for video QoE (MOS) estimation.
//!
//! A generic base model trained on generic features at a source node is
//! exported as a portable [`stacking::ModelDocument`], imported at a target
//! node and stacked with a local model that also sees content-specific
//! features. The crate provides the feature pipeline, three regressors
//! ([`learners`]), the stacking and transfer layer ([`stacking`]), the
//! evaluation suite ([`analysis`]) and the experiment runner ([`cli`]).

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod learners;
pub mod par;
pub mod stacking;
pub mod synth;

pub use error::{Error, Result};
