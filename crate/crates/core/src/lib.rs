//! Online visual multi-object tracking with labeled random finite set filters.
//!
//! The crate implements a GLMB filter (joint prediction–update with
//! occlusion-aware detection probabilities) and its LMB approximation, an
//! adaptive birth process with appearance-based re-identification of
//! temporarily terminated tracks, and OSPA / OSPA(2) evaluation.
//!
//! The main entry point for running a filter over a sequence is
//! [`tracker::Tracker`]; the `lrfs-mot` binary wraps it with file I/O.

pub mod assignment;
pub mod birth;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod glmb;
pub mod io;
pub mod lmb;
pub mod measurement;
pub mod metrics;
pub mod occlusion;
pub mod synth;
pub mod tracker;
mod update;

pub use error::{Error, Result};
