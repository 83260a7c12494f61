//! Reconstruction of the Fisher information metric on a two-dimensional parameter space.
//!
//! The pipeline: draw microstates on a parameter grid ([`samplers`]), turn feature statistics
//! into a grid posterior ([`posterior`]), learn a log-partition potential whose normalized
//! Bregman kernel matches that posterior ([`potential`]), and read off the metric as its Hessian
//! ([`geometry`]). [`groundtruth`] holds exact references and evaluation, [`dynamics`] the
//! reverse-ODE instability analysis of a bimodal diffusion target.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod groundtruth;
pub mod io;
pub mod posterior;
pub mod potential;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
pub use geometry::{GeodesicPath, MetricField};
pub use groundtruth::ScalarField;
pub use posterior::{FeatureTable, ParamGrid, PosteriorField, Weighting};
pub use potential::{PotentialModel, TrainConfig};
pub use samplers::{SamplerParams, SamplerSpec};
