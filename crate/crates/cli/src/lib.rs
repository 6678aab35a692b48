//! Batch driver: configuration, pipeline and report files.

pub mod config;
pub mod pipeline;
pub mod report;
