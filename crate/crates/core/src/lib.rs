//! Appliance on/off detection from household power data.
//!
//! The pipeline turns an aggregate power series into fixed-size heatmap
//! images — one column per hour, one row per intra-hour step, z-score
//! normalized and colormapped — and classifies each image with a small
//! convolutional network: Class I means the appliance left no signature in
//! the window, Class II means it was active.
//!
//! Modules follow the data: [`series`] parses and regularizes recordings,
//! [`synth`] generates labeled households for testing, [`heatmap`] encodes
//! windows as images, [`dataset`] assembles balanced labeled corpora,
//! [`nn`] is the from-scratch network engine, and [`trainer`] ties it
//! together with checkpointing in [`checkpoint`].

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod heatmap;
pub mod nn;
pub mod series;
pub mod synth;
pub mod trainer;
