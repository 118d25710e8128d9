//! Task-affinity estimation and task grouping for multitask learning.
//!
//! Training one model per task combination to measure how tasks transfer is
//! quadratically expensive in the number of tasks. This crate estimates those
//! scores instead: train one base model on all tasks, linearize its output
//! around the trained weights, project per-sample gradients to a low
//! dimension with a seeded Gaussian sketch, and refit each task subset as a
//! small offset logistic regression. Estimated affinities feed a
//! semidefinite-programming relaxation of average-density clustering, whose
//! rounded solution groups the tasks; one model is then trained per group.
//!
//! Modules follow the pipeline order:
//!
//! - [`models`] - desk-scale differentiable models, SGD training, and the
//!   full-training oracle that ground-truth scores come from;
//! - [`linearize`] - gradient-feature extraction and Taylor-error reports;
//! - [`sketch`] - seeded Gaussian random projection and its lift back;
//! - [`regression`] - offset logistic regression (Newton), multiclass and
//!   regression variants, and the projection error-bound certificate;
//! - [`affinity`] - subset sampling, score estimation, affinity matrices and
//!   comparison metrics;
//! - [`cluster`] - average-density objective, SDP relaxation, rounding,
//!   spectral/Lloyd baselines, and an exhaustive oracle;
//! - [`synth`] - planted-cluster synthetic benchmark;
//! - [`pipeline`] - end-to-end runs, forward/backward selection, FLOP
//!   accounting, file formats and run configs.
//!
//! The numeric core is generic over the scalar type via [`scalar::Real`];
//! the aliases below fix `f64`, which is what the pipeline and all file
//! formats use.

pub mod affinity;
pub mod cluster;
pub mod error;
pub mod flops;
pub mod linalg;
pub mod linearize;
pub mod models;
pub mod pipeline;
pub mod regression;
pub mod rng;
pub mod scalar;
pub mod sketch;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default concrete scalar used by the pipeline and file formats.
pub type Scalar = f64;

pub type Model = models::ModelParams<Scalar>;
pub type Tasks = models::TaskCollection<Scalar>;
pub type Scores = models::ScoreTable<Scalar>;
pub type Affinity = affinity::AffinityMatrix<Scalar>;
pub type Projection = sketch::ProjectionHandle<Scalar>;
pub type Features = linearize::RawFeatureRecord<Scalar>;
pub type Sdp = cluster::SdpSolution<Scalar>;
