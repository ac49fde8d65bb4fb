//! Evaluable functionals `F(η)`, random fields `u(η, z)` and the add/drop
//! difference operators acting on them.

use std::fmt;
use std::sync::Arc;

use serde_json::Value;

use crate::ground::Configuration;

/// Closed interval certified to contain every value of a functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl ValueRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi }
    }

    pub fn point(c: f64) -> Self {
        Self { lo: c, hi: c }
    }

    /// `sup |x|` over the interval.
    pub fn sup_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.lo >= 0.0
    }

    pub fn mul(self, other: ValueRange) -> ValueRange {
        let c = [
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        ];
        ValueRange {
            lo: c.iter().copied().fold(f64::INFINITY, f64::min),
            hi: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn add(self, other: ValueRange) -> ValueRange {
        ValueRange {
            lo: self.lo + other.lo,
            hi: self.hi + other.hi,
        }
    }

    pub fn scale(self, a: f64) -> ValueRange {
        if a >= 0.0 {
            ValueRange::new(a * self.lo, a * self.hi)
        } else {
            ValueRange::new(a * self.hi, a * self.lo)
        }
    }
}

type FunctionalFn = dyn Fn(&Configuration) -> f64 + Send + Sync;
type FieldFn = dyn Fn(&Configuration, usize) -> f64 + Send + Sync;

/// A random variable `F: ℳ → ℝ`, represented as a pure closure.
#[derive(Clone)]
pub struct Functional {
    eval: Arc<FunctionalFn>,
    name: String,
    params: Value,
    range: Option<ValueRange>,
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("range", &self.range)
            .finish()
    }
}

impl Functional {
    pub fn new(
        name: impl Into<String>,
        params: Value,
        eval: impl Fn(&Configuration) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            name: name.into(),
            params,
            range: None,
        }
    }

    /// Attaches a certified range. The caller vouches for it.
    pub fn with_range(mut self, range: ValueRange) -> Self {
        self.range = Some(range);
        self
    }

    pub fn constant(c: f64) -> Self {
        Functional::new("constant", serde_json::json!({ "value": c }), move |_| c)
            .with_range(ValueRange::point(c))
    }

    #[inline]
    pub fn eval(&self, eta: &Configuration) -> f64 {
        (self.eval)(eta)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &Value {
        &self.params
    }

    pub fn range(&self) -> Option<ValueRange> {
        self.range
    }

    /// Certified `sup |F|`, if any.
    pub fn bound(&self) -> Option<f64> {
        self.range.map(|r| r.sup_abs())
    }

    pub fn is_bounded(&self) -> bool {
        self.range.is_some()
    }

    /// Pointwise product `F · G`.
    pub fn times(&self, other: &Functional) -> Functional {
        let (f, g) = (self.clone(), other.clone());
        let range = match (self.range, other.range) {
            (Some(a), Some(b)) => Some(a.mul(b)),
            _ => None,
        };
        Functional {
            eval: Arc::new(move |eta| f.eval(eta) * g.eval(eta)),
            name: "product".into(),
            params: serde_json::json!({ "factors": [self.describe(), other.describe()] }),
            range,
        }
    }

    /// `a·F + b·G`.
    pub fn linear_combination(&self, a: f64, other: &Functional, b: f64) -> Functional {
        let (f, g) = (self.clone(), other.clone());
        let range = match (self.range, other.range) {
            (Some(x), Some(y)) => Some(x.scale(a).add(y.scale(b))),
            _ => None,
        };
        Functional {
            eval: Arc::new(move |eta| a * f.eval(eta) + b * g.eval(eta)),
            name: "affine".into(),
            params: serde_json::json!({
                "terms": [
                    { "coef": a, "functional": self.describe() },
                    { "coef": b, "functional": other.describe() },
                ],
                "offset": 0.0,
            }),
            range,
        }
    }

    pub fn square(&self) -> Functional {
        self.times(self)
    }

    /// `φ ∘ F`. The range is only carried over when the caller supplies one.
    pub fn compose(
        &self,
        phi_name: &str,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        range: Option<ValueRange>,
    ) -> Functional {
        let f = self.clone();
        Functional {
            eval: Arc::new(move |eta| phi(f.eval(eta))),
            name: phi_name.to_string(),
            params: serde_json::json!({ "of": self.describe() }),
            range,
        }
    }

    /// JSON description `{"name": ..., ...params}` used in reports.
    pub fn describe(&self) -> Value {
        let mut obj = serde_json::Map::new();
        obj.insert("name".into(), Value::String(self.name.clone()));
        if let Value::Object(p) = &self.params {
            for (k, v) in p {
                obj.insert(k.clone(), v.clone());
            }
        }
        Value::Object(obj)
    }
}

/// A random field `u(η, z)`.
#[derive(Clone)]
pub struct RandomField {
    eval: Arc<FieldFn>,
    name: String,
    params: Value,
    range: Option<ValueRange>,
}

impl fmt::Debug for RandomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomField")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish()
    }
}

impl RandomField {
    pub fn new(
        name: impl Into<String>,
        params: Value,
        eval: impl Fn(&Configuration, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            name: name.into(),
            params,
            range: None,
        }
    }

    pub fn with_range(mut self, range: ValueRange) -> Self {
        self.range = Some(range);
        self
    }

    pub fn zero() -> Self {
        RandomField::new("zero", serde_json::json!({}), |_, _| 0.0)
            .with_range(ValueRange::point(0.0))
    }

    /// `u(η, z) = g(z)`.
    pub fn deterministic(values: Vec<f64>) -> Self {
        let range = values.iter().fold(ValueRange::point(0.0), |r, &v| {
            ValueRange::new(r.lo.min(v), r.hi.max(v))
        });
        let params = serde_json::json!({ "values": values });
        RandomField::new("deterministic", params, move |_, z| values[z]).with_range(range)
    }

    #[inline]
    pub fn eval(&self, eta: &Configuration, site: usize) -> f64 {
        (self.eval)(eta, site)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn range(&self) -> Option<ValueRange> {
        self.range
    }

    /// `(η, z) ↦ F(η) · u(η, z)`.
    pub fn scaled_by(&self, f: &Functional) -> RandomField {
        let (u, f2) = (self.clone(), f.clone());
        let range = match (self.range, f.range()) {
            (Some(a), Some(b)) => Some(a.mul(b)),
            _ => None,
        };
        RandomField {
            eval: Arc::new(move |eta, z| f2.eval(eta) * u.eval(eta, z)),
            name: "scaled".into(),
            params: serde_json::json!({ "functional": f.describe(), "field": self.describe() }),
            range,
        }
    }

    /// The field `(η, z') ↦ D⁺_z u(η, z')` for a fixed `z`.
    pub fn add_diff_at(&self, z: usize) -> RandomField {
        let u = self.clone();
        RandomField {
            eval: Arc::new(move |eta, zp| second_add_diff(&u, eta, z, zp)),
            name: "add_diff".into(),
            params: serde_json::json!({ "site": z, "field": self.describe() }),
            range: self
                .range
                .map(|r| ValueRange::new(r.lo - r.hi, r.hi - r.lo)),
        }
    }

    pub fn describe(&self) -> Value {
        let mut obj = serde_json::Map::new();
        obj.insert("name".into(), Value::String(self.name.clone()));
        if let Value::Object(p) = &self.params {
            for (k, v) in p {
                obj.insert(k.clone(), v.clone());
            }
        }
        Value::Object(obj)
    }
}

/// `D⁺_z F(η) = F(η + δ_z) − F(η)`.
///
/// Panics if `z` is not a site of `eta`.
#[inline]
pub fn add_diff(f: &Functional, eta: &Configuration, z: usize) -> f64 {
    f.eval(&eta.plus(z)) - f.eval(eta)
}

/// `D⁻_z F(η) = (F(η) − F(η − δ_z)) 1_{z ∈ η}`.
#[inline]
pub fn drop_diff(f: &Functional, eta: &Configuration, z: usize) -> f64 {
    if eta.count(z) == 0 {
        0.0
    } else {
        f.eval(eta) - f.eval(&eta.minus(z))
    }
}

/// `D⁺_z u(η, z') = u(η + δ_z, z') − u(η, z')`.
#[inline]
pub fn second_add_diff(u: &RandomField, eta: &Configuration, z: usize, zp: usize) -> f64 {
    u.eval(&eta.plus(z), zp) - u.eval(eta, zp)
}

/// `DF: (η, z) ↦ D⁺_z F(η)`.
pub fn derivative_field(f: &Functional) -> RandomField {
    let g = f.clone();
    RandomField {
        eval: Arc::new(move |eta, z| add_diff(&g, eta, z)),
        name: "derivative".into(),
        params: serde_json::json!({ "functional": f.describe() }),
        range: f.range().map(|r| ValueRange::new(r.lo - r.hi, r.hi - r.lo)),
    }
}
