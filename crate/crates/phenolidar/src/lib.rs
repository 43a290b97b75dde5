//! UAV-LiDAR crop phenotyping toolkit.
//!
//! The pipeline turns posed LiDAR scans into per-plot plant heights:
//!
//! 1. [`cloud`] — scan transformation, open-loop map merging, voxel
//!    down-sampling, crop box and z filters.
//! 2. [`plotdetect`] — k-means clustering of the vegetation points,
//!    minimum-area oriented boxes, the dimension/orientation vote, and the
//!    plot grid.
//! 3. [`groundheight`] — per-plot RANSAC ground planes, least-squares
//!    refits, and max/percentile height statistics.
//!
//! A matching test bench generates the data end to end: [`farmgen`] builds
//! a random triangulated farm with exact ground truth and [`scansim`] flies
//! a simulated spinning LiDAR over it. [`config`], [`io`] and [`evaluate`]
//! provide the configuration document, the file formats, and the
//! estimate-vs-truth metrics used by the command-line pipeline.

// Negated float comparisons like `!(v > 0.0)` are used on purpose: they
// reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod farmgen;
pub mod groundheight;
pub mod io;
pub mod plotdetect;
pub mod scansim;

pub use error::{Error, Result};
