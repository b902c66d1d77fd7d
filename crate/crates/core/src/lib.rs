//! Discrete modeling of hierarchical system development under scenario
//! control.
//!
//! - [`statespace`]: predicate scales, hierarchical classificators, rule matrices.
//! - [`dynamics`]: per-tick dynamics estimation and whole-series trend classes.
//! - [`canonical`]: ordered development diagrams, object distributions, arc counters.
//! - [`composition`]: sequential/parallel composition, generalization, consistency search.
//! - [`scenario`]: hypothesis diagrams, after-effect propagation, scenario runs and analysis.
//! - [`model`] and [`report`]: the JSON model file and report emission.

pub mod canonical;
pub mod composition;
pub mod dynamics;
pub mod model;
pub mod report;
pub mod scenario;
pub mod statespace;
pub mod validation;
