//! Named, parametric test functionals and fields.
//!
//! Config files address these by name, e.g.
//! `{"name": "poly_count", "B": [1, 2, 3], "degree": 2}`. Site sets in specs
//! are 1-based; a missing `B` means every site.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::functionals::{derivative_field, Functional, RandomField, ValueRange};
use crate::ground::{GroundSpace, SiteSet};

fn checked(space: &GroundSpace, set: &SiteSet) -> Result<()> {
    set.check_within(space.site_count())
}

/// `η(B)`.
pub fn linear_count(space: &GroundSpace, set: SiteSet) -> Result<Functional> {
    checked(space, &set)?;
    let params = json!({ "B": set.to_one_based() });
    Ok(Functional::new("linear_count", params, move |eta| {
        eta.count_in(&set) as f64
    }))
}

/// `η(B)^d`.
pub fn poly_count(space: &GroundSpace, set: SiteSet, degree: u32) -> Result<Functional> {
    checked(space, &set)?;
    let params = json!({ "B": set.to_one_based(), "degree": degree });
    let exp = i32::try_from(degree).map_err(|_| Error::Binding("degree too large".into()))?;
    let f = Functional::new("poly_count", params, move |eta| {
        (eta.count_in(&set) as f64).powi(exp)
    });
    Ok(if degree == 0 {
        f.with_range(ValueRange::point(1.0))
    } else {
        f
    })
}

/// `tanh(s · η(B))`, bounded by 1.
pub fn bounded_sigmoid(space: &GroundSpace, set: SiteSet, scale: f64) -> Result<Functional> {
    checked(space, &set)?;
    if !scale.is_finite() {
        return Err(Error::Binding(format!(
            "sigmoid scale {scale} is not finite"
        )));
    }
    let params = json!({ "B": set.to_one_based(), "scale": scale });
    let range = if scale >= 0.0 {
        ValueRange::new(0.0, 1.0)
    } else {
        ValueRange::new(-1.0, 0.0)
    };
    Ok(Functional::new("bounded_sigmoid", params, move |eta| {
        (scale * eta.count_in(&set) as f64).tanh()
    })
    .with_range(range))
}

/// `1{η(B) ≤ m}`.
pub fn indicator_leq(space: &GroundSpace, set: SiteSet, m: u64) -> Result<Functional> {
    checked(space, &set)?;
    let params = json!({ "B": set.to_one_based(), "m": m });
    Ok(Functional::new("indicator_leq", params, move |eta| {
        if eta.count_in(&set) <= m {
            1.0
        } else {
            0.0
        }
    })
    .with_range(ValueRange::new(0.0, 1.0)))
}

/// Pointwise product of one or more functionals.
pub fn product(factors: &[Functional]) -> Result<Functional> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::Binding("product needs at least one factor".into()))?;
    Ok(rest.iter().fold(first.clone(), |acc, f| acc.times(f)))
}

/// `offset + Σ coef_i · F_i`.
pub fn affine(terms: &[(f64, Functional)], offset: f64) -> Functional {
    terms
        .iter()
        .fold(Functional::constant(offset), |acc, (c, f)| {
            acc.linear_combination(1.0, f, *c)
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineTerm {
    pub coef: f64,
    pub functional: FunctionalSpec,
}

/// Serializable description of a registry functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FunctionalSpec {
    Constant {
        value: f64,
    },
    LinearCount {
        #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
        set: Option<Vec<usize>>,
    },
    PolyCount {
        #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
        set: Option<Vec<usize>>,
        degree: u32,
    },
    BoundedSigmoid {
        #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
        set: Option<Vec<usize>>,
        scale: f64,
    },
    IndicatorLeq {
        #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
        set: Option<Vec<usize>>,
        m: u64,
    },
    Product {
        factors: Vec<FunctionalSpec>,
    },
    Affine {
        terms: Vec<AffineTerm>,
        #[serde(default)]
        offset: f64,
    },
}

fn site_set(space: &GroundSpace, set: &Option<Vec<usize>>) -> Result<SiteSet> {
    match set {
        None => Ok(SiteSet::all(space.site_count())),
        Some(idx) => SiteSet::from_one_based(idx, space.site_count()),
    }
}

impl FunctionalSpec {
    pub fn build(&self, space: &GroundSpace) -> Result<Functional> {
        match self {
            FunctionalSpec::Constant { value } => Ok(Functional::constant(*value)),
            FunctionalSpec::LinearCount { set } => linear_count(space, site_set(space, set)?),
            FunctionalSpec::PolyCount { set, degree } => {
                poly_count(space, site_set(space, set)?, *degree)
            }
            FunctionalSpec::BoundedSigmoid { set, scale } => {
                bounded_sigmoid(space, site_set(space, set)?, *scale)
            }
            FunctionalSpec::IndicatorLeq { set, m } => {
                indicator_leq(space, site_set(space, set)?, *m)
            }
            FunctionalSpec::Product { factors } => {
                let built = factors
                    .iter()
                    .map(|f| f.build(space))
                    .collect::<Result<Vec<_>>>()?;
                product(&built)
            }
            FunctionalSpec::Affine { terms, offset } => {
                let built = terms
                    .iter()
                    .map(|t| Ok((t.coef, t.functional.build(space)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(affine(&built, *offset))
            }
        }
    }

    /// Parses the CLI form: a registry name plus a JSON object of parameters.
    pub fn from_name_and_params(name: &str, params: &str) -> Result<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(params).map_err(|e| Error::Config {
                key: "params".into(),
                message: e.to_string(),
            })?;
        let obj = value.as_object_mut().ok_or_else(|| Error::Config {
            key: "params".into(),
            message: "expected a JSON object".into(),
        })?;
        obj.insert("name".into(), json!(name));
        serde_json::from_value(value).map_err(|e| Error::Config {
            key: "functional".into(),
            message: e.to_string(),
        })
    }
}

/// Serializable description of a random field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FieldSpec {
    Zero,
    /// `u(η, z) = c`.
    Constant {
        value: f64,
    },
    /// `u(η, z) = g(z)`.
    Deterministic {
        values: Vec<f64>,
    },
    /// `u(η, z) = F(η) g(z)`.
    Weighted {
        functional: FunctionalSpec,
        values: Vec<f64>,
    },
    /// `u(η, z) = k_z g(z)`.
    SiteCount {
        values: Vec<f64>,
    },
    /// `u(η, z) = tanh(s (k_z + 1))`.
    SiteSigmoid {
        scale: f64,
    },
    /// `u = DF`.
    Derivative {
        functional: FunctionalSpec,
    },
}

fn check_values(space: &GroundSpace, values: &[f64]) -> Result<()> {
    if values.len() != space.site_count() {
        return Err(Error::Binding(format!(
            "field has {} values, space has {} sites",
            values.len(),
            space.site_count()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Binding("field values must be finite".into()));
    }
    Ok(())
}

impl FieldSpec {
    pub fn build(&self, space: &GroundSpace) -> Result<RandomField> {
        match self {
            FieldSpec::Zero => Ok(RandomField::zero()),
            FieldSpec::Constant { value } => {
                Ok(RandomField::deterministic(vec![*value; space.site_count()]))
            }
            FieldSpec::Deterministic { values } => {
                check_values(space, values)?;
                Ok(RandomField::deterministic(values.clone()))
            }
            FieldSpec::Weighted { functional, values } => {
                check_values(space, values)?;
                let f = functional.build(space)?;
                Ok(RandomField::deterministic(values.clone()).scaled_by(&f))
            }
            FieldSpec::SiteCount { values } => {
                check_values(space, values)?;
                let g = values.clone();
                Ok(RandomField::new(
                    "site_count",
                    json!({ "values": values }),
                    move |eta, z| f64::from(eta.count(z)) * g[z],
                ))
            }
            FieldSpec::SiteSigmoid { scale } => {
                let s = *scale;
                if !s.is_finite() {
                    return Err(Error::Binding("sigmoid scale must be finite".into()));
                }
                Ok(
                    RandomField::new("site_sigmoid", json!({ "scale": s }), move |eta, z| {
                        (s * (f64::from(eta.count(z)) + 1.0)).tanh()
                    })
                    .with_range(ValueRange::new(-1.0, 1.0)),
                )
            }
            FieldSpec::Derivative { functional } => Ok(derivative_field(&functional.build(space)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::add_diff;
    use crate::ground::Configuration;

    #[test]
    fn parses_documented_spec() {
        let spec: FunctionalSpec =
            serde_json::from_str(r#"{"name":"poly_count","B":[1,2,3],"degree":2}"#).unwrap();
        assert_eq!(
            spec,
            FunctionalSpec::PolyCount {
                set: Some(vec![1, 2, 3]),
                degree: 2
            }
        );
        let f = spec.build(&GroundSpace::canonical()).unwrap();
        assert_eq!(f.eval(&Configuration::from_counts(vec![1, 0, 2])), 9.0);
    }

    #[test]
    fn cli_form() {
        let spec =
            FunctionalSpec::from_name_and_params("bounded_sigmoid", r#"{"B":[2],"scale":0.5}"#)
                .unwrap();
        let f = spec.build(&GroundSpace::canonical()).unwrap();
        assert_eq!(f.bound(), Some(1.0));
        assert!(FunctionalSpec::from_name_and_params("nope", "{}").is_err());
        assert!(FunctionalSpec::from_name_and_params("linear_count", "[1]").is_err());
    }

    #[test]
    fn bad_sets_rejected() {
        let space = GroundSpace::canonical();
        let spec = FunctionalSpec::LinearCount { set: Some(vec![4]) };
        assert!(spec.build(&space).is_err());
        let field = FieldSpec::Deterministic { values: vec![1.0] };
        assert!(field.build(&space).is_err());
    }

    #[test]
    fn composite_ranges() {
        let space = GroundSpace::canonical();
        let spec: FunctionalSpec = serde_json::from_str(
            r#"{"name":"affine","offset":0.5,"terms":[
                {"coef":2.0,"functional":{"name":"indicator_leq","B":[1],"m":1}},
                {"coef":-1.0,"functional":{"name":"bounded_sigmoid","scale":1.0}}]}"#,
        )
        .unwrap();
        let f = spec.build(&space).unwrap();
        let r = f.range().unwrap();
        assert_eq!((r.lo, r.hi), (-0.5, 2.5));
        let eta = Configuration::from_counts(vec![0, 1, 0]);
        assert!((f.eval(&eta) - (0.5 + 2.0 - 1f64.tanh())).abs() < 1e-15);

        let prod = FunctionalSpec::Product {
            factors: vec![
                FunctionalSpec::LinearCount { set: None },
                FunctionalSpec::Constant { value: 2.0 },
            ],
        }
        .build(&space)
        .unwrap();
        assert!(!prod.is_bounded());
        assert_eq!(prod.eval(&eta), 2.0);
    }

    #[test]
    fn field_specs() {
        let space = GroundSpace::canonical();
        let eta = Configuration::from_counts(vec![2, 0, 1]);
        let u = FieldSpec::SiteCount {
            values: vec![1.0, 2.0, 3.0],
        }
        .build(&space)
        .unwrap();
        assert_eq!(u.eval(&eta, 0), 2.0);
        assert_eq!(u.eval(&eta, 2), 3.0);
        let w = FieldSpec::Weighted {
            functional: FunctionalSpec::LinearCount { set: None },
            values: vec![1.0, 0.0, -1.0],
        }
        .build(&space)
        .unwrap();
        assert_eq!(w.eval(&eta, 2), -3.0);
        let d = FieldSpec::Derivative {
            functional: FunctionalSpec::PolyCount {
                set: None,
                degree: 2,
            },
        }
        .build(&space)
        .unwrap();
        let f = poly_count(&space, SiteSet::all(3), 2).unwrap();
        assert_eq!(d.eval(&eta, 1), add_diff(&f, &eta, 1));
    }
}
