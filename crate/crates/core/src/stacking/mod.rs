//! Model transfer documents and weighted stacking of a base and a local
//! model.

mod document;
mod stack;

pub use document::{
    document_to_model, export_model, import_model, DocumentParams, ImportedModel, ModelDocument, TargetScale,
    FORMAT_VERSION,
};
pub use stack::{
    argmax_r2, combine, cross_evaluate, cross_evaluate_with, stack_predict, weight_grid, weight_scan,
    weight_scan_with, CrossCell, ScanPoint, StackedModel, WeightScan, DEFAULT_GRID_STEP,
};
