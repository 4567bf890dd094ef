//! Synthetic country simulation and scheme evaluation.

pub mod config;
pub mod metrics;
pub mod round;
pub mod study;
pub mod world;
