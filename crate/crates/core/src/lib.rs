//! Fundus image classification toolkit.
//!
//! Pipeline: a folder-per-class corpus of color fundus photographs is
//! scanned, resized, and split deterministically; either a small
//! from-scratch CNN or a transfer-learning model (pretrained
//! compound-scaled backbone, new classification head, configurable freeze
//! policy) is trained with mini-batch cross-entropy; the test partition is
//! scored with per-class precision/recall/F1, overall accuracy, and a
//! confusion matrix.
//!
//! The `fundus` binary exposes the pipeline as `prepare`, `train`,
//! `evaluate`, `compare`, and `synth` subcommands.

pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod figures;
pub mod models;
pub mod nn;
pub mod parallel;
pub mod synth;
pub mod training;
