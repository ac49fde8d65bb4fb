//! One function per identity. Each reduces its identity to a scalar defect
//! (left side minus right side) and a gate.
//!
//! Expectation identities evaluate both sides and their difference on the same
//! states (exact) or draws (Monte Carlo), so the defect is a paired estimate.
//! Pointwise identities take the worst defect over a list of configurations.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendKind, BackendValue, Uncertainty};
use crate::error::{Error, Result};
use crate::exact::ExactEngine;
use crate::functionals::{add_diff, derivative_field, Functional, RandomField};
use crate::ground::{Configuration, GroundSpace, SiteSet};
use crate::monte_carlo::mecke_integrand;
use crate::operators::{bracket, commutation_defect, divergence, gamma, BracketKind};
use crate::registry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Gates {
    /// Absolute tolerance on exact-backend defects, added to the truncation bound.
    pub exact_abs: f64,
    /// Absolute tolerance on pointwise defects.
    pub pointwise_abs: f64,
    /// Monte Carlo gate in standard errors.
    pub mc_z: f64,
    /// A counterexample must exceed this multiple of the exact gate.
    pub counterexample_factor: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Self {
            exact_abs: 1e-10,
            pointwise_abs: 1e-12,
            mc_z: 4.0,
            counterexample_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    /// pass iff |defect| ≤ value
    AtMost,
    /// pass iff |defect| > value (a counterexample is expected)
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub value: f64,
    pub rule: String,
}

impl Gate {
    pub fn admits(&self, defect: f64) -> bool {
        match self.kind {
            GateKind::AtMost => defect.abs() <= self.value,
            GateKind::AtLeast => defect.abs() > self.value,
        }
    }
}

/// Which evaluation route produced a check result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Exact,
    Mc,
    Pointwise,
}

impl From<BackendKind> for Route {
    fn from(k: BackendKind) -> Self {
        match k {
            BackendKind::Exact => Route::Exact,
            BackendKind::Mc => Route::Mc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub route: Route,
    pub lhs: f64,
    pub rhs: f64,
    pub defect: f64,
    pub gate: Gate,
    pub pass: bool,
    /// Sample count (mc) or number of pointwise evaluations.
    pub n: Option<u64>,
    pub state_count: Option<u64>,
    pub tail_bound: Option<f64>,
    /// Standard error of the defect (mc).
    pub std_error: Option<f64>,
    /// Truncation bound on the defect (exact).
    pub error_bound: Option<f64>,
    pub note: Option<String>,
}

fn upper_gate(defect: &BackendValue, gates: &Gates) -> Gate {
    match defect.uncertainty {
        Uncertainty::Truncation { error_bound, .. } => Gate {
            kind: GateKind::AtMost,
            value: gates.exact_abs + error_bound,
            rule: format!("exact: {:e} + truncation bound", gates.exact_abs),
        },
        // The floor absorbs round-off in the paired difference, which is not
        // sampling noise and can exceed a tiny standard error.
        Uncertainty::Statistical { std_error, .. } => Gate {
            kind: GateKind::AtMost,
            value: gates.mc_z * std_error + gates.pointwise_abs,
            rule: format!(
                "mc: {} x std_error + {:e} round-off floor",
                gates.mc_z, gates.pointwise_abs
            ),
        },
    }
}

fn outcome(route: Route, lhs: f64, rhs: f64, defect: &BackendValue, gate: Gate) -> CheckOutcome {
    let (n, state_count, tail_bound) = match defect.uncertainty {
        Uncertainty::Truncation {
            tail_bound,
            state_count,
            ..
        } => (None, Some(state_count), Some(tail_bound)),
        Uncertainty::Statistical { n, .. } => (Some(n), None, None),
    };
    let pass = gate.admits(defect.value);
    CheckOutcome {
        route,
        lhs,
        rhs,
        defect: defect.value,
        gate,
        pass,
        n,
        state_count,
        tail_bound,
        std_error: defect.std_error(),
        error_bound: defect.error_bound(),
        note: None,
    }
}

/// `E lhs(η)` vs `E rhs(η)` with the paired defect `E[lhs − rhs]`.
fn paired(
    backend: &dyn Backend,
    gates: &Gates,
    sides: impl Fn(&Configuration) -> (f64, f64) + Sync,
) -> Result<CheckOutcome> {
    let v = backend.expect_many(3, &|eta, out| {
        let (l, r) = sides(eta);
        out[0] = l;
        out[1] = r;
        out[2] = l - r;
    })?;
    let gate = upper_gate(&v[2], gates);
    Ok(outcome(
        backend.kind().into(),
        v[0].value,
        v[1].value,
        &v[2],
        gate,
    ))
}

fn require_bounded(role: &str, f: &Functional) -> Result<()> {
    if f.is_bounded() {
        Ok(())
    } else {
        Err(Error::Binding(format!(
            "{role} = {} must carry a certified bound",
            f.describe()
        )))
    }
}

/// `E ∫ u(η, z) η(dz) = E ∫ u(η + δ_z, z) ν(dz)`.
pub fn mecke_check(u: &RandomField, backend: &dyn Backend, gates: &Gates) -> Result<CheckOutcome> {
    let space = backend.space().clone();
    paired(backend, gates, |eta| {
        let lhs: f64 = (0..space.site_count())
            .map(|z| f64::from(eta.count(z)) * u.eval(eta, z))
            .sum();
        (lhs, lhs - mecke_integrand(&space, u, eta))
    })
}

/// `E[F δu] = E ∫ u D⁺F dν`.
pub fn duality_check(
    f: &Functional,
    u: &RandomField,
    backend: &dyn Backend,
    gates: &Gates,
) -> Result<CheckOutcome> {
    let space = backend.space().clone();
    paired(backend, gates, |eta| {
        let lhs = f.eval(eta) * divergence(&space, u, eta);
        let rhs = space
            .weights()
            .iter()
            .enumerate()
            .map(|(z, &l)| l * u.eval(eta, z) * add_diff(f, eta, z))
            .sum();
        (lhs, rhs)
    })
}

fn skorokhod_rhs(space: &GroundSpace, u: &RandomField, eta: &Configuration) -> f64 {
    let n = space.site_count();
    let w = space.weights();
    let base: Vec<f64> = (0..n).map(|z| u.eval(eta, z)).collect();
    let mut diff = vec![0.0; n * n];
    for z in 0..n {
        let up = eta.plus(z);
        for zp in 0..n {
            diff[z * n + zp] = u.eval(&up, zp) - base[zp];
        }
    }
    let mut out: f64 = (0..n).map(|z| w[z] * base[z] * base[z]).sum();
    for z in 0..n {
        for zp in 0..n {
            out += w[z] * w[zp] * diff[z * n + zp] * diff[zp * n + z];
        }
    }
    out
}

/// `E (δu)² = E ∫ u² dν + E ∫∫ D⁺_z u(·, z') D⁺_{z'} u(·, z) ν(dz) ν(dz')`.
pub fn skorokhod_check(
    u: &RandomField,
    backend: &dyn Backend,
    gates: &Gates,
) -> Result<CheckOutcome> {
    let space = backend.space().clone();
    paired(backend, gates, |eta| {
        let d = divergence(&space, u, eta);
        (d * d, skorokhod_rhs(&space, u, eta))
    })
}

fn pointwise(
    gates: &Gates,
    configs: &[Configuration],
    sites: usize,
    sides: impl Fn(&Configuration, usize) -> (f64, f64),
) -> CheckOutcome {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut n = 0u64;
    for eta in configs {
        for z in 0..sites {
            let (l, r) = sides(eta, z);
            n += 1;
            let d = l - r;
            if !(d.abs() <= worst.2.abs()) {
                worst = (l, r, d);
            }
        }
    }
    let gate = Gate {
        kind: GateKind::AtMost,
        value: gates.pointwise_abs,
        rule: "pointwise: max |defect| over sampled (eta, z)".into(),
    };
    CheckOutcome {
        route: Route::Pointwise,
        lhs: worst.0,
        rhs: worst.1,
        defect: worst.2,
        pass: gate.admits(worst.2),
        gate,
        n: Some(n),
        state_count: None,
        tail_bound: None,
        std_error: None,
        error_bound: None,
        note: None,
    }
}

/// `D⁺_z(δu)(η) = u(η, z) + δ(D⁺_z u)(η)` at every `(η, z)` with `η` from `configs`.
pub fn commutation_check(
    space: &GroundSpace,
    u: &RandomField,
    configs: &[Configuration],
    gates: &Gates,
) -> CheckOutcome {
    pointwise(gates, configs, space.site_count(), |eta, z| {
        let lhs = divergence(space, u, &eta.plus(z)) - divergence(space, u, eta);
        (lhs, lhs - commutation_defect(space, u, eta, z))
    })
}

/// `δ(Fu) = F δu − [DF, u]_−` at every configuration in `configs`.
pub fn product_formula_check(
    space: &GroundSpace,
    f: &Functional,
    u: &RandomField,
    configs: &[Configuration],
    gates: &Gates,
) -> CheckOutcome {
    let fu = u.scaled_by(f);
    let df = derivative_field(f);
    pointwise(gates, configs, 1, |eta, _| {
        let lhs = divergence(space, &fu, eta);
        let rhs = f.eval(eta) * divergence(space, u, eta)
            - bracket(space, &df, u, BracketKind::Minus, eta);
        (lhs, rhs)
    })
}

/// `E [D(FG), u]_Γ = E F [DG, u]_Γ + E G [DF, u]_Γ` for bounded `F`, `G`.
pub fn energy_derivation_check(
    f: &Functional,
    g: &Functional,
    u: &RandomField,
    backend: &dyn Backend,
    gates: &Gates,
) -> Result<CheckOutcome> {
    require_bounded("F", f)?;
    require_bounded("G", g)?;
    let space = backend.space().clone();
    let dfg = derivative_field(&f.times(g));
    let df = derivative_field(f);
    let dg = derivative_field(g);
    paired(backend, gates, |eta| {
        let lhs = bracket(&space, &dfg, u, BracketKind::Gamma, eta);
        let rhs = f.eval(eta) * bracket(&space, &dg, u, BracketKind::Gamma, eta)
            + g.eval(eta) * bracket(&space, &df, u, BracketKind::Gamma, eta);
        (lhs, rhs)
    })
}

/// Integrand of `𝓔(F, FΦ) − ½ 𝓔(F², Φ)`.
fn functional_carre_du_champ(
    space: &GroundSpace,
    f: &Functional,
    phi: &Functional,
    eta: &Configuration,
) -> f64 {
    let base_f = f.eval(eta);
    let base_phi = phi.eval(eta);
    space
        .weights()
        .iter()
        .enumerate()
        .map(|(z, &l)| {
            let up = eta.plus(z);
            let (f1, phi1) = (f.eval(&up), phi.eval(&up));
            let df = f1 - base_f;
            let dfphi = f1 * phi1 - base_f * base_phi;
            let dff = f1 * f1 - base_f * base_f;
            let dphi = phi1 - base_phi;
            l * (df * dfphi - 0.5 * dff * dphi)
        })
        .sum()
}

/// `𝓔(F, FΦ) − ½ 𝓔(F², Φ) = E[Γ(F) Φ]` for bounded `F`, `Φ`.
pub fn gamma_representation_check(
    f: &Functional,
    phi: &Functional,
    backend: &dyn Backend,
    gates: &Gates,
) -> Result<CheckOutcome> {
    require_bounded("F", f)?;
    require_bounded("Phi", phi)?;
    let space = backend.space().clone();
    paired(backend, gates, |eta| {
        (
            functional_carre_du_champ(&space, f, phi, eta),
            gamma(&space, f, f, eta) * phi.eval(eta),
        )
    })
}

/// `0 ≤ 𝓔(F, FΦ) − ½ 𝓔(F², Φ) ≤ sup|Φ| 𝓔(F, F)` for bounded `F` and bounded
/// nonnegative `Φ`.
///
/// `lhs` is the middle term, `rhs` the upper bound; `defect` is the larger of
/// the two violations, clipped at 0.
pub fn gamma_form_bound_check(
    f: &Functional,
    phi: &Functional,
    backend: &dyn Backend,
    gates: &Gates,
) -> Result<CheckOutcome> {
    require_bounded("F", f)?;
    require_bounded("Phi", phi)?;
    let range = phi.range().expect("checked above");
    if !range.is_nonnegative() {
        return Err(Error::Binding(format!(
            "Phi = {} must be certified nonnegative",
            phi.describe()
        )));
    }
    let sup = range.sup_abs();
    let space = backend.space().clone();
    let v = backend.expect_many(2, &|eta, out| {
        let middle = functional_carre_du_champ(&space, f, phi, eta);
        let energy: f64 = space
            .weights()
            .iter()
            .enumerate()
            .map(|(z, &l)| l * add_diff(f, eta, z).powi(2))
            .sum();
        out[0] = middle;
        out[1] = sup * energy - middle;
    })?;
    let (middle, slack) = (&v[0], &v[1]);
    let defect_value = (-middle.value).max(-slack.value).max(0.0);
    let governing = if -middle.value >= -slack.value {
        middle
    } else {
        slack
    };
    let defect = BackendValue {
        value: defect_value,
        uncertainty: governing.uncertainty,
    };
    let mut gate = upper_gate(&defect, gates);
    gate.rule = format!("{} (one-sided, largest violation)", gate.rule);
    Ok(outcome(
        backend.kind().into(),
        middle.value,
        middle.value + slack.value,
        &defect,
        gate,
    ))
}

/// `E [u, v]_+ = E [u, v]_−`, hence also `= E [u, v]_Γ`.
pub fn bracket_expectation_check(
    u: &RandomField,
    v: &RandomField,
    backend: &dyn Backend,
    gates: &Gates,
) -> Result<CheckOutcome> {
    let space = backend.space().clone();
    paired(backend, gates, |eta| {
        (
            bracket(&space, u, v, BracketKind::Plus, eta),
            bracket(&space, u, v, BracketKind::Minus, eta),
        )
    })
}

/// Smooth maps used by the chain-rule checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    Identity,
    Square,
    Cube,
    Tanh,
}

impl Phi {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Phi::Identity => x,
            Phi::Square => x * x,
            Phi::Cube => x * x * x,
            Phi::Tanh => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Phi::Identity => 1.0,
            Phi::Square => 2.0 * x,
            Phi::Cube => 3.0 * x * x,
            Phi::Tanh => 1.0 - x.tanh().powi(2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phi::Identity => "identity",
            Phi::Square => "square",
            Phi::Cube => "cube",
            Phi::Tanh => "tanh",
        }
    }
}

/// Whether a chain-rule case is expected to hold or to fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    #[default]
    Holds,
    Fails,
}

/// Defect of the diffusion chain rule `𝓔(φ(F), G) = E φ'(F) [DF, DG]_Γ`.
pub fn chain_rule_check(
    phi: Phi,
    f: &Functional,
    g: &Functional,
    expect: Expect,
    backend: &dyn Backend,
    gates: &Gates,
) -> Result<CheckOutcome> {
    let space = backend.space().clone();
    let phi_f = f.compose(phi.name(), move |x| phi.apply(x), None);
    let mut out = paired(backend, gates, |eta| {
        let lhs: f64 = space
            .weights()
            .iter()
            .enumerate()
            .map(|(z, &l)| l * add_diff(&phi_f, eta, z) * add_diff(g, eta, z))
            .sum();
        (lhs, phi.derivative(f.eval(eta)) * gamma(&space, f, g, eta))
    })?;
    if expect == Expect::Fails {
        // exact: a margin of `counterexample_factor` gates; mc: outside the z band
        let factor = match out.route {
            Route::Mc => 1.0,
            _ => gates.counterexample_factor,
        };
        out.gate = Gate {
            kind: GateKind::AtLeast,
            value: factor * out.gate.value,
            rule: format!("counterexample: |defect| > {factor} x ({})", out.gate.rule),
        };
        out.pass = out.gate.admits(out.defect);
    }
    Ok(out)
}

/// Searches `φ ∈ {square, tanh}` and `F, G` linear counts over nonempty site
/// sets for the largest chain-rule defect on the exact backend.
///
/// Passes iff that defect exceeds `counterexample_factor` times its exact gate.
pub fn non_diffusion_counterexample(
    engine: &ExactEngine,
    budget: usize,
    gates: &Gates,
) -> Result<CheckOutcome> {
    let space = engine.space().clone();
    let n = space.site_count();
    if n >= usize::BITS as usize {
        return Err(Error::Binding("too many sites for subset search".into()));
    }
    let subsets: Vec<SiteSet> = (1u64..(1u64 << n))
        .map(|mask| SiteSet::new((0..n).filter(|i| mask >> i & 1 == 1)))
        .collect();
    let mut best: Option<(CheckOutcome, String)> = None;
    let mut tried = 0usize;
    'search: for fs in &subsets {
        for gs in &subsets {
            for phi in [Phi::Square, Phi::Tanh] {
                if tried >= budget {
                    break 'search;
                }
                tried += 1;
                let f = registry::linear_count(&space, fs.clone())?;
                let g = registry::linear_count(&space, gs.clone())?;
                let out = chain_rule_check(phi, &f, &g, Expect::Fails, engine, gates)?;
                let ratio = out.defect.abs() / out.gate.value;
                let better = best
                    .as_ref()
                    .is_none_or(|(b, _)| ratio > b.defect.abs() / b.gate.value);
                if better {
                    let witness = format!(
                        "phi={} F=linear_count{:?} G=linear_count{:?}",
                        phi.name(),
                        fs.to_one_based(),
                        gs.to_one_based()
                    );
                    best = Some((out, witness));
                }
            }
        }
    }
    let (mut out, witness) =
        best.ok_or_else(|| Error::Binding("counterexample search budget is zero".into()))?;
    out.n = Some(tried as u64);
    out.note = Some(format!("{witness}; {tried} candidates searched"));
    Ok(out)
}
