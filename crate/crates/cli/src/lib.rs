//! Experiment orchestration for the `banditlab` CLI: config ingestion,
//! pipelines, and reproducible run manifests.

pub mod config;
pub mod manifest;
pub mod pipeline;
