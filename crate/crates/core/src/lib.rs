//! Slice-to-slice segmentation propagation through an image stack.
//!
//! A Mondrian forest and a random forest are trained on the labeled first
//! slice. Each following slice is classified by both, the two masks are
//! merged, optionally cleaned up, and in `full` mode the random forest is
//! retrained on the new labels before moving on.

pub mod cli;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod mforest;
pub mod par;
pub mod phantom;
pub mod pipeline;
pub mod postprocess;
pub mod rforest;

pub use error::{Error, Result};
pub use eval::{dice, SegmentationReport};
pub use image::{BinaryMask, CineStack, FeatureMatrix, ImageSlice};
pub use mforest::{mf_extend, mf_fit, mf_predict_proba, MfParams, MondrianForest};
pub use phantom::{generate_phantom, Phantom, PhantomParams};
pub use pipeline::{segment_stack, PipelineConfig, PipelineMode, SegmentationResult};
pub use rforest::{rf_fit, rf_predict_proba, RandomForest, RfParams};
