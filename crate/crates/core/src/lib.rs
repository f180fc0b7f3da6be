//! Empirical stable tail dependence function, exact copula oracles and
//! finite-sample deviation experiments on low-probability regions.
//!
//! Samples are drawn from a [`model::DependenceModel`] chosen by name in a
//! [`model::ModelRegistry`], pushed through optional [`margins::Margin`]s,
//! and studied through ranks ([`empirical`]), maximal deviations over the
//! rectangle-complement class ([`concentration`]), the uniform error of the
//! estimator ([`deviation`]) and risk on extreme regions ([`classification`]).

pub mod classification;
pub mod concentration;
pub mod deviation;
pub mod empirical;
pub mod error;
pub mod margins;
pub mod model;
pub mod oracles;
pub mod report;
pub mod rng;
pub mod sample;
pub mod stats;

pub(crate) mod lattice;

pub use concentration::{GridPolicy, RectClassSpec};
pub use empirical::{build_ranks, empirical_stdf, PseudoUniformSample, RankState, TailPoint};
pub use error::{Error, Result};
pub use margins::{Margin, MarginRegistry, MarginSpec};
pub use model::{DependenceModel, Model, ModelRegistry, ModelSpec};
pub use sample::{GeneratorSpec, Sample};
