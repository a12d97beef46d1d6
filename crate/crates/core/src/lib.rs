//! Metric-specific saliency maps from fixation densities.
//!
//! A probabilistic saliency model predicts a fixation density. Each saliency
//! metric rewards a different transform of that density; [`derive`] computes
//! the map with the highest expected score for every metric, [`metrics`]
//! scores maps against fixations, and [`probabilistic`] turns classical
//! saliency maps into densities. [`harness`] reproduces the cross-metric and
//! approximation experiments on synthetic data, and [`io`] holds the file
//! formats shared with the command line tool.

pub mod derive;
pub mod error;
pub mod fixations;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod probabilistic;
pub mod sampling;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
pub use fixations::{Fixation, FixationDataset, FixationSet, Stimulus};
pub use grid::{
    density_from_grid, Boundary, equalize, gaussian_blur, normalize_to_distribution, zscore_normalize,
    DensityGrid, Grid, GridShape, SaliencyGrid,
};
pub use metrics::{MetricId, MetricScore};
