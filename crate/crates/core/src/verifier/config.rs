//! Suite configuration: the space, backend settings, gates and the binding
//! grid of identity cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checks::{Expect, Gates, Phi};
use crate::error::{Error, Result};
use crate::ground::GroundSpace;
use crate::monte_carlo::SamplerConfig;
use crate::registry::{FieldSpec, FunctionalSpec};

/// The configuration shipped with the crate.
pub const DEFAULT_CONFIG: &str = include_str!("../../configs/default.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationConfig {
    pub tol: f64,
    pub budget: u64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            budget: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub seed: u64,
    pub samples: u64,
    pub workers: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 100_000,
            workers: 1,
        }
    }
}

impl McConfig {
    pub fn sampler(&self, seed: u64) -> SamplerConfig {
        SamplerConfig::new(seed, self.samples, self.workers)
    }
}

/// Configurations drawn for the pointwise identities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointwiseConfig {
    pub seed: u64,
    pub points: u64,
}

impl Default for PointwiseConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            points: 100,
        }
    }
}

/// A second space with the same number of sites and weights drawn uniformly
/// from `[low, high)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizedSpace {
    pub seed: u64,
    pub low: f64,
    pub high: f64,
}

impl RandomizedSpace {
    pub fn draw(&self, sites: usize) -> Result<GroundSpace> {
        if !(self.low > 0.0 && self.high > self.low && self.high.is_finite()) {
            return Err(Error::Config {
                key: "randomized_space".into(),
                message: format!("need 0 < low < high, got [{}, {})", self.low, self.high),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        GroundSpace::new(
            (0..sites)
                .map(|_| rng.random_range(self.low..self.high))
                .collect(),
        )
    }
}

/// One entry of the binding grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "identity", rename_all = "snake_case")]
pub enum CaseSpec {
    Mecke {
        u: FieldSpec,
    },
    Duality {
        #[serde(rename = "F")]
        f: FunctionalSpec,
        u: FieldSpec,
    },
    Skorokhod {
        u: FieldSpec,
    },
    Commutation {
        u: FieldSpec,
    },
    ProductFormula {
        #[serde(rename = "F")]
        f: FunctionalSpec,
        u: FieldSpec,
    },
    EnergyDerivation {
        #[serde(rename = "F")]
        f: FunctionalSpec,
        #[serde(rename = "G")]
        g: FunctionalSpec,
        u: FieldSpec,
    },
    GammaRepresentation {
        #[serde(rename = "F")]
        f: FunctionalSpec,
        #[serde(rename = "Phi")]
        phi: FunctionalSpec,
    },
    GammaFormBound {
        #[serde(rename = "F")]
        f: FunctionalSpec,
        #[serde(rename = "Phi")]
        phi: FunctionalSpec,
    },
    BracketExpectation {
        u: FieldSpec,
        v: FieldSpec,
    },
    ChainRule {
        phi: Phi,
        #[serde(rename = "F")]
        f: FunctionalSpec,
        #[serde(rename = "G")]
        g: FunctionalSpec,
        #[serde(default)]
        expect: Expect,
    },
    NonDiffusion {
        budget: usize,
    },
}

impl CaseSpec {
    pub fn identity(&self) -> &'static str {
        match self {
            CaseSpec::Mecke { .. } => "mecke",
            CaseSpec::Duality { .. } => "duality",
            CaseSpec::Skorokhod { .. } => "skorokhod",
            CaseSpec::Commutation { .. } => "commutation",
            CaseSpec::ProductFormula { .. } => "product_formula",
            CaseSpec::EnergyDerivation { .. } => "energy_derivation",
            CaseSpec::GammaRepresentation { .. } => "gamma_representation",
            CaseSpec::GammaFormBound { .. } => "gamma_form_bound",
            CaseSpec::BracketExpectation { .. } => "bracket_expectation",
            CaseSpec::ChainRule { .. } => "chain_rule",
            CaseSpec::NonDiffusion { .. } => "non_diffusion",
        }
    }

    /// Pointwise identities do not go through a backend.
    pub fn is_pointwise(&self) -> bool {
        matches!(
            self,
            CaseSpec::Commutation { .. } | CaseSpec::ProductFormula { .. }
        )
    }

    /// The binding record as it appears in reports (the case minus its tag).
    pub fn bindings(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("case specs serialize");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("identity");
        }
        v
    }

    fn functionals(&self) -> Vec<(&'static str, &FunctionalSpec)> {
        match self {
            CaseSpec::Duality { f, .. } | CaseSpec::ProductFormula { f, .. } => vec![("F", f)],
            CaseSpec::EnergyDerivation { f, g, .. } | CaseSpec::ChainRule { f, g, .. } => {
                vec![("F", f), ("G", g)]
            }
            CaseSpec::GammaRepresentation { f, phi } | CaseSpec::GammaFormBound { f, phi } => {
                vec![("F", f), ("Phi", phi)]
            }
            _ => vec![],
        }
    }

    fn fields(&self) -> Vec<(&'static str, &FieldSpec)> {
        match self {
            CaseSpec::Mecke { u }
            | CaseSpec::Skorokhod { u }
            | CaseSpec::Commutation { u }
            | CaseSpec::Duality { u, .. }
            | CaseSpec::ProductFormula { u, .. }
            | CaseSpec::EnergyDerivation { u, .. } => vec![("u", u)],
            CaseSpec::BracketExpectation { u, v } => vec![("u", u), ("v", v)],
            _ => vec![],
        }
    }

    /// Builds every binding against `space`, naming the first one that fails.
    pub fn validate(&self, space: &GroundSpace) -> std::result::Result<(), (String, Error)> {
        for (key, f) in self.functionals() {
            f.build(space).map_err(|e| (key.to_string(), e))?;
        }
        for (key, u) in self.fields() {
            u.build(space).map_err(|e| (key.to_string(), e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub space: GroundSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub randomized_space: Option<RandomizedSpace>,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub gates: Gates,
    #[serde(default)]
    pub pointwise: PointwiseConfig,
    pub cases: Vec<CaseSpec>,
}

fn config_error(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

impl SuiteConfig {
    /// Parses and validates a JSON config. Syntax and type errors carry the
    /// line and column; semantic errors carry the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = serde_json::from_str(text).map_err(|e| {
            config_error(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn default_suite() -> Self {
        Self::from_json(DEFAULT_CONFIG).expect("bundled config is valid")
    }

    /// The configured space followed by the randomized one, if any.
    pub fn spaces(&self) -> Result<Vec<(&'static str, GroundSpace)>> {
        let mut out = vec![("configured", self.space.clone())];
        if let Some(r) = &self.randomized_space {
            out.push(("randomized", r.draw(self.space.site_count())?));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.truncation;
        if !(t.tol > 0.0) {
            return Err(config_error(
                "truncation.tol",
                format!("must be positive, got {}", t.tol),
            ));
        }
        if t.budget == 0 {
            return Err(config_error("truncation.budget", "must be at least 1"));
        }
        if self.mc.samples < 2 {
            return Err(config_error("mc.samples", "need at least 2 samples"));
        }
        if self.mc.workers == 0 {
            return Err(config_error("mc.workers", "must be at least 1"));
        }
        if self.pointwise.points == 0 {
            return Err(config_error("pointwise.points", "must be at least 1"));
        }
        let g = &self.gates;
        for (key, v) in [
            ("gates.exact_abs", g.exact_abs),
            ("gates.pointwise_abs", g.pointwise_abs),
            ("gates.mc_z", g.mc_z),
            ("gates.counterexample_factor", g.counterexample_factor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_error(
                    key,
                    format!("must be finite and nonnegative, got {v}"),
                ));
            }
        }
        for (label, space) in self.spaces()? {
            for (i, case) in self.cases.iter().enumerate() {
                case.validate(&space).map_err(|(key, e)| {
                    config_error(
                        format!("cases[{i}].{key}"),
                        format!("{e} (on the {label} space)"),
                    )
                })?;
            }
        }
        Ok(())
    }
}
