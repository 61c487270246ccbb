//! Block-level prostate tissue classification on sparse tile-embedding
//! grids: a sparse convolutional transformer with hand-written
//! backpropagation, an attention-pooling baseline, a dual-model screening
//! engine for immunohistochemistry triage, and the accompanying evaluation
//! statistics.

pub mod blockdata;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod real;
pub mod report;
pub mod screening;
pub mod training;
pub mod weights;

pub use error::{Result, SctError};
