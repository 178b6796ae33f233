//! Experiment orchestration for micro-supervised disturbance learning:
//! dataset ingestion, the train/encode/cluster/score pipeline, method
//! comparison matrices, alpha sweeps, and result/plot export.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod plot;
