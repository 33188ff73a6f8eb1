//! Experiment harness for the linmix reconstruction library: seeded data
//! generation, preset experiments mirroring the published comparisons, CSV
//! reporting, and minimal SVG plots.

pub mod config;
pub mod run;
pub mod sampling;
pub mod svg;
