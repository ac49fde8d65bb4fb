//! Expectation backends: exact enumeration and Monte Carlo.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ground::{Configuration, GroundSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Exact,
    Mc,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Exact => "exact",
            BackendKind::Mc => "mc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Uncertainty {
    /// Enumeration over a truncated box; `error_bound` covers the omitted mass.
    Truncation {
        error_bound: f64,
        tail_bound: f64,
        state_count: u64,
    },
    /// Sample mean with its standard error.
    Statistical { std_error: f64, n: u64 },
}

/// An expectation together with how far it may be from the true value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackendValue {
    pub value: f64,
    pub uncertainty: Uncertainty,
}

impl BackendValue {
    pub fn std_error(&self) -> Option<f64> {
        match self.uncertainty {
            Uncertainty::Statistical { std_error, .. } => Some(std_error),
            Uncertainty::Truncation { .. } => None,
        }
    }

    pub fn error_bound(&self) -> Option<f64> {
        match self.uncertainty {
            Uncertainty::Truncation { error_bound, .. } => Some(error_bound),
            Uncertainty::Statistical { .. } => None,
        }
    }
}

pub type Integrand<'a> = dyn Fn(&Configuration) -> f64 + Sync + 'a;

/// Vector-valued integrand writing its components into the output slice.
pub type MultiIntegrand<'a> = dyn Fn(&Configuration, &mut [f64]) + Sync + 'a;

/// Computes `E_Π h(η)` for the Poisson law on [`Backend::space`].
pub trait Backend: Sync {
    fn kind(&self) -> BackendKind;
    fn space(&self) -> &GroundSpace;

    /// Expectations of `dims` components evaluated on the same draws/states.
    fn expect_many(&self, dims: usize, h: &MultiIntegrand<'_>) -> Result<Vec<BackendValue>>;

    fn expect(&self, h: &Integrand<'_>) -> Result<BackendValue> {
        let mut v = self.expect_many(1, &|eta, out| out[0] = h(eta))?;
        Ok(v.remove(0))
    }
}
