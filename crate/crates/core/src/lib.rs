//! Bayesian additive regression trees for sharp regression discontinuity
//! designs.
//!
//! The crate fits a causal forest whose trees keep treated and untreated
//! observations together inside a strip around the cutoff, alongside
//! unconstrained S- and T-learner baselines, and ships the simulation and
//! prior-elicitation tooling used to compare them.

pub mod constraint;
pub mod data;
pub mod elicitation;
pub mod error;
pub mod forest;
pub mod inference;
pub mod models;
pub mod parallel;
pub mod rng;
pub mod simulation;

pub use data::{
    build_strip_index, load_csv, load_design_csv, standardize, write_csv, ColumnSchema,
    ConstraintConfig, Dataset, Design, RunConfig, SamplerConfig, ScalingRecord, StripIndex,
    StripSide,
};
pub use error::{Error, Result};
pub use models::{fit_bart_rdd, BartRddFit, BartRddOptions, Estimator, PosteriorDraws};
