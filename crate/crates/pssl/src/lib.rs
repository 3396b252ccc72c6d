//! File formats, dataset generation, training and experiment drivers on
//! top of `pssl-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod experiments;
pub mod heatmap;
pub mod ls;
pub mod manifest;
pub mod wav;
