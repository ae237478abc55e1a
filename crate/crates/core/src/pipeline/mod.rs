//! End-to-end curation: configuration, orchestration and reporting.

mod config;
mod curate;
mod report;

pub use config::{CurationConfig, Paths, SelectionLevel, Switches, SCHEMA_VERSION};
pub use curate::{
    action_path_length, curate, reference_from_rasters, reference_set, render_canonical,
    segment_dataset, train_encoder, CurationOutput,
};
pub use report::{
    pca_2d, pca_csv_path, report_export, ClassMetrics, ClassificationMetrics, Counts,
    CurationReport, PathLengthStats, SegmentRecord,
};
