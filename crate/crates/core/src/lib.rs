//! Analysis toolkit for stochastic source-sink metapopulations on finite
//! patch graphs.
//!
//! A metapopulation lives on `K` patches. Each patch has a habitat type with
//! a mean per-capita offspring number, and every newborn disperses along a
//! row-stochastic matrix. The crate answers three questions about such a
//! model and checks every answer by at least two independent routes:
//!
//! * does the population persist? ([`persistence`], via weighted first-return
//!   functionals of the single random disperser in [`disperser`]);
//! * how fast does it grow and where do the ancestors of survivors live?
//!   ([`growth`], Perron spectral analysis against the large-deviations
//!   variational problem);
//! * what changes under periodic or Markov-random environments?
//!   ([`environment`]).
//!
//! [`simulate`] is a Monte Carlo multitype branching engine used to confront
//! all of the above with sampled trajectories, and [`report`] assembles the
//! whole picture into a serializable [`report::AnalysisReport`].
//!
//! Patch indices are 0-based in this API and 1-based in every user-facing
//! document (JSON models, CSV files).

pub mod corpus;
pub mod disperser;
pub mod environment;
mod error;
pub mod growth;
pub mod linalg;
pub mod model;
pub mod patchgraph;
pub mod persistence;
pub mod report;
pub mod rng;
mod serde_ext;
pub mod simulate;

pub use environment::{EnvKind, EnvironmentModel};
pub use error::{Error, Result};
pub use growth::SpectralData;
pub use patchgraph::{MeanOffspringMatrix, PatchGraph, ValidationReport};
pub use persistence::{Persistence, PersistenceVerdict, Route};
pub use report::{AnalysisOptions, AnalysisReport};
pub use simulate::{OffspringFamily, OffspringLaw, SimConfig, SimOutcome};

/// Relative band around 1 inside which a criterion or a spectral radius is
/// reported as critical-indeterminate.
pub const CRITICAL_BAND: f64 = 1e-9;
