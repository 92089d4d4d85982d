//! File formats: PGM images and masks, forest models, reports.

mod model;
mod pgm;
mod report;

pub use model::{deserialize_model, serialize_model, ForestModel, MODEL_VERSION};
pub use pgm::{
    decode_pgm, encode_pgm, list_pgm, load_mask, load_slice, load_stack, save_mask, save_slice, Pgm,
};
pub use report::{
    csv_path_for, read_report, report_csv, write_experiments, write_report, ExperimentsReport, CSV_HEADER,
};
