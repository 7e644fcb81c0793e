//! Blind quality assessment for ultra-high-resolution content.
//!
//! The pipeline selects texture-rich patches from a large image with a
//! grey-level co-occurrence matrix contrast measure, extracts multi-stage
//! convolutional features per patch, and maps the fused feature through two
//! small heads to a true/pseudo-4K class probability and a perceptual
//! quality score; patch results are average-pooled to the image level.
//! Training jointly optimizes both tasks with an uncertainty-weighted
//! multi-task loss, and evaluation follows the standard rank-correlation
//! protocol over scene-disjoint splits.
//!
//! Start with the runnable examples (`cargo run --example ...`) or the
//! `uhdqa` binary; the modules mirror the pipeline stages:
//!
//! - [`imaging`]: image containers, gray conversion, crop/resample
//! - [`texture`]: GLCM contrast and the other texture measures, tiling,
//!   top-N patch selection
//! - [`backbone`]: the pluggable 5-stage feature extractor and fusion
//! - [`heads`]: classification/regression heads and image-level pooling
//! - [`training`]: losses, uncertainty weighting, the training loop,
//!   checkpoints
//! - [`metrics`]: SRCC/KRCC/PLCC/RMSE, logistic mapping, classification
//!   reports, residual variance test
//! - [`datasets`]: manifests, scene-disjoint splits, frame sampling, the
//!   synthetic pseudo-4K generator
//! - [`cli`]: the experiment commands behind the `uhdqa` binary

pub mod backbone;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod heads;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
mod seeding;
pub mod store;
pub mod texture;
pub mod training;

pub use error::{Error, Result};
