//! Configuration, persistence, and report emission for the solver toolkit.
//!
//! The binary exposes the verbs simulate, verify, select, reconstruct-defect,
//! probe-convexity, weak-strong, and report; this library holds everything
//! behind them so the behavior stays testable in-process. Artifacts are JSON
//! with bit-exact hex-encoded float payloads, plus plot-ready CSV series.

pub mod artifact;
pub mod config;
pub mod hexfloat;
pub mod report;
pub mod runner;
