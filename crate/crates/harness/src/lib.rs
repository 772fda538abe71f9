//! Multi-camera tracking harness: scenario configuration, end-to-end runs
//! with RMS reports, and the per-pixel throughput benchmark.

pub mod bench;
pub mod config;
pub mod report;
pub mod rms;
pub mod scenario;
