//! Operator calculus on finite Poisson spaces.
//!
//! Add/drop difference operators, the pathwise Skorokhod divergence, the
//! Ornstein–Uhlenbeck generator, energy brackets and the carré du champ, with
//! two expectation backends (exact enumeration and Monte Carlo) and a suite
//! that checks the identities relating them.

pub mod backend;
pub mod cli;
pub mod error;
pub mod exact;
pub mod functionals;
pub mod ground;
pub mod monte_carlo;
pub mod operators;
pub mod registry;
pub mod verifier;

#[cfg(test)]
mod proptests;

pub use backend::{Backend, BackendKind, BackendValue, Uncertainty};
pub use error::{Error, Result};
pub use exact::{ExactEngine, ExactValue, StateTable, TruncationPlan};
pub use functionals::{
    add_diff, derivative_field, drop_diff, second_add_diff, Functional, RandomField, ValueRange,
};
pub use ground::{Configuration, GroundSpace, SiteSet};
pub use monte_carlo::{Estimate, McEngine, SamplerConfig};
pub use operators::BracketKind;
pub use registry::{FieldSpec, FunctionalSpec};
