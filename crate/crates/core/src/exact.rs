//! Exact expectation oracle over a truncated product-Poisson state space.
//!
//! On a finite ground space, `Π` is the product of independent Poisson laws
//! with means `λ_i`. Caps `K_i` are chosen so that the omitted mass is below a
//! tolerance; every enumerated expectation reports a bound for that mass.

use rayon::prelude::*;

use crate::backend::{Backend, BackendKind, BackendValue, Integrand, MultiIntegrand, Uncertainty};
use crate::error::{Error, Result};
use crate::functionals::{add_diff, Functional, RandomField};
use crate::ground::{Configuration, GroundSpace};

const CHUNK: usize = 1024;

/// Largest boundary leak for which [`ou_pseudo_inverse`] still answers.
pub const MAX_BOUNDARY_LEAK: f64 = 1e-6;

fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|j| f64::from(j).ln()).sum()
}

/// `P(X = k)` for `X ~ Poisson(λ)`.
pub fn poisson_pmf(lambda: f64, k: u32) -> f64 {
    (-lambda + f64::from(k) * lambda.ln() - ln_factorial(k)).exp()
}

/// `P(X > cap)` for `X ~ Poisson(λ)`, summed directly over the upper tail.
pub fn poisson_upper_tail(lambda: f64, cap: u32) -> f64 {
    let m = cap + 1;
    if f64::from(m) <= lambda {
        let head: f64 = (0..=cap).map(|k| poisson_pmf(lambda, k)).sum();
        return (1.0 - head).clamp(0.0, 1.0);
    }
    // terms decrease from m on; ratio of consecutive terms is λ/(k+1) < 1
    let mut term = poisson_pmf(lambda, m);
    let mut sum = 0.0;
    let mut k = m;
    loop {
        sum += term;
        let ratio = lambda / f64::from(k + 1);
        term *= ratio;
        k += 1;
        if term <= sum * 1e-18 || term == 0.0 {
            // geometric remainder
            sum += term / (1.0 - ratio);
            break;
        }
    }
    sum.min(1.0)
}

/// Per-site caps and the resulting bound on omitted probability.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPlan {
    pub caps: Vec<u32>,
    /// Union bound `Σ_i P(Poisson(λ_i) > K_i)`, clipped at 1.
    pub tail_bound: f64,
}

impl TruncationPlan {
    pub fn state_count(&self) -> u128 {
        self.caps.iter().map(|&k| u128::from(k) + 1).product()
    }
}

/// Smallest caps (each at least 1) with `Σ_i P(Poisson(λ_i) > K_i) ≤ tol`.
pub fn plan_truncation(space: &GroundSpace, tol: f64, budget: u64) -> Result<TruncationPlan> {
    if !(tol > 0.0) || tol.is_nan() {
        return Err(Error::InvalidTruncation(format!(
            "tolerance {tol} must be positive"
        )));
    }
    if budget == 0 {
        return Err(Error::InvalidTruncation("budget must be at least 1".into()));
    }
    let n = space.site_count();
    let per_site = tol / n as f64;
    let mut caps = Vec::with_capacity(n);
    let mut tail = 0.0;
    for &lambda in space.weights() {
        let mut cap = 1u32;
        if tol < 1.0 {
            while poisson_upper_tail(lambda, cap) > per_site {
                cap += 1;
            }
        }
        tail += poisson_upper_tail(lambda, cap);
        caps.push(cap);
    }
    let plan = TruncationPlan {
        caps,
        tail_bound: tail.min(1.0),
    };
    let required = plan.state_count();
    if required > u128::from(budget) {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(plan)
}

/// All configurations under the caps, in lexicographic order, with their
/// product-Poisson probabilities.
#[derive(Debug, Clone)]
pub struct StateTable {
    space: GroundSpace,
    plan: TruncationPlan,
    strides: Vec<usize>,
    states: Vec<Configuration>,
    probs: Vec<f64>,
}

impl StateTable {
    pub fn new(space: &GroundSpace, plan: TruncationPlan) -> Self {
        let n = space.site_count();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * (plan.caps[i + 1] as usize + 1);
        }
        let total = strides[0] * (plan.caps[0] as usize + 1);

        let marginals: Vec<Vec<f64>> = space
            .weights()
            .iter()
            .zip(&plan.caps)
            .map(|(&lambda, &cap)| (0..=cap).map(|k| poisson_pmf(lambda, k)).collect())
            .collect();

        let mut states = Vec::with_capacity(total);
        let mut probs = Vec::with_capacity(total);
        let mut counts = vec![0u32; n];
        for _ in 0..total {
            let p = counts
                .iter()
                .enumerate()
                .map(|(i, &k)| marginals[i][k as usize])
                .product();
            states.push(Configuration::from_counts(counts.clone()));
            probs.push(p);
            // odometer increment, last site fastest
            for i in (0..n).rev() {
                if counts[i] < plan.caps[i] {
                    counts[i] += 1;
                    break;
                }
                counts[i] = 0;
            }
        }
        Self {
            space: space.clone(),
            plan,
            strides,
            states,
            probs,
        }
    }

    pub fn space(&self) -> &GroundSpace {
        &self.space
    }

    pub fn plan(&self) -> &TruncationPlan {
        &self.plan
    }

    pub fn tail_bound(&self) -> f64 {
        self.plan.tail_bound
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Configuration] {
        &self.states
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total_probability(&self) -> f64 {
        self.ordered_sum(|i| self.probs[i])
    }

    pub fn index_of(&self, eta: &Configuration) -> Option<usize> {
        let mut idx = 0;
        for (i, &k) in eta.counts().iter().enumerate() {
            if k > self.plan.caps[i] {
                return None;
            }
            idx += k as usize * self.strides[i];
        }
        Some(idx)
    }

    /// No site is at its cap, so every add-one move stays in the box.
    pub fn is_interior(&self, state: usize) -> bool {
        self.states[state]
            .counts()
            .iter()
            .zip(&self.plan.caps)
            .all(|(k, cap)| k < cap)
    }

    /// `Σ_s p(s) Σ_{z at cap} λ_z`: probability flux of add-one moves that
    /// would leave the box. Equals [`GeneratorMatrix::boundary_leak`].
    pub fn boundary_leak(&self) -> f64 {
        let weights = self.space.weights();
        let caps = &self.plan.caps;
        self.ordered_sum(|s| {
            let lost: f64 = self.states[s]
                .counts()
                .iter()
                .zip(caps)
                .zip(weights)
                .filter(|((k, cap), _)| k >= cap)
                .map(|(_, &l)| l)
                .sum();
            self.probs[s] * lost
        })
    }

    /// Sum over states in fixed chunks, reduced in chunk order, so the result
    /// does not depend on the thread count.
    fn ordered_sum(&self, term: impl Fn(usize) -> f64 + Sync) -> f64 {
        let n = self.len();
        let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                (c * CHUNK..((c + 1) * CHUNK).min(n))
                    .map(&term)
                    .sum::<f64>()
            })
            .collect();
        partials.iter().sum()
    }

    fn ordered_max(&self, term: impl Fn(usize) -> f64 + Sync) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(&term)
            .reduce(|| 0.0, f64::max)
    }

    /// Component-wise `(Σ p h, max |h|)` with the same chunked reduction.
    fn ordered_moments(&self, dims: usize, h: &MultiIntegrand<'_>) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut sum = vec![0.0; dims];
                let mut sup = vec![0.0f64; dims];
                let mut buf = vec![0.0; dims];
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    h(&self.states[i], &mut buf);
                    for d in 0..dims {
                        sum[d] += self.probs[i] * buf[d];
                        sup[d] = sup[d].max(buf[d].abs());
                    }
                }
                (sum, sup)
            })
            .collect();
        let mut sum = vec![0.0; dims];
        let mut sup = vec![0.0f64; dims];
        for (s, m) in partials {
            for d in 0..dims {
                sum[d] += s[d];
                sup[d] = sup[d].max(m[d]);
            }
        }
        (sum, sup)
    }
}

/// An enumerated expectation with its truncation error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactValue {
    pub value: f64,
    pub error_bound: f64,
    /// True when the bound uses a certified global bound of the integrand
    /// rather than the supremum over enumerated states.
    pub certified: bool,
}

fn expect_with(table: &StateTable, h: &Integrand<'_>, sup: Option<f64>) -> ExactValue {
    let value = table.ordered_sum(|i| table.probs[i] * h(&table.states[i]));
    let (sup, certified) = match sup {
        Some(s) => (s, true),
        None => (table.ordered_max(|i| h(&table.states[i]).abs()), false),
    };
    ExactValue {
        value,
        error_bound: table.tail_bound() * sup,
        certified,
    }
}

/// `E_Π F` on the truncated box.
pub fn exact_expectation(f: &Functional, table: &StateTable) -> ExactValue {
    expect_with(table, &|eta| f.eval(eta), f.bound())
}

/// `E_Π ∫ u(η, z) D⁺_z F(η) ν(dz)`.
pub fn exact_pairing(f: &Functional, u: &RandomField, table: &StateTable) -> ExactValue {
    let space = table.space().clone();
    expect_with(
        table,
        &|eta| {
            space
                .weights()
                .iter()
                .enumerate()
                .map(|(z, &lambda)| lambda * u.eval(eta, z) * add_diff(f, eta, z))
                .sum()
        },
        None,
    )
}

/// Exact backend: a planned and enumerated state table.
#[derive(Debug, Clone)]
pub struct ExactEngine {
    table: StateTable,
}

impl ExactEngine {
    pub fn new(space: &GroundSpace, tol: f64, budget: u64) -> Result<Self> {
        let plan = plan_truncation(space, tol, budget)?;
        Ok(Self {
            table: StateTable::new(space, plan),
        })
    }

    pub fn table(&self) -> &StateTable {
        &self.table
    }

    pub fn expectation(&self, h: &Integrand<'_>) -> ExactValue {
        expect_with(&self.table, h, None)
    }
}

impl Backend for ExactEngine {
    fn kind(&self) -> BackendKind {
        BackendKind::Exact
    }

    fn space(&self) -> &GroundSpace {
        self.table.space()
    }

    fn expect_many(&self, dims: usize, h: &MultiIntegrand<'_>) -> Result<Vec<BackendValue>> {
        let (sum, sup) = self.table.ordered_moments(dims, h);
        let tail = self.table.tail_bound();
        Ok(sum
            .into_iter()
            .zip(sup)
            .map(|(value, sup)| BackendValue {
                value,
                uncertainty: Uncertainty::Truncation {
                    error_bound: tail * sup,
                    tail_bound: tail,
                    state_count: self.table.len() as u64,
                },
            })
            .collect())
    }
}

/// Sparse generator of the birth–death chain on the truncated box.
///
/// Add-one moves that would leave the box are removed together with their
/// diagonal contribution, so rows sum to zero everywhere and the matrix is
/// self-adjoint for the (truncated) Poisson weights. At interior states it
/// coincides with `L`.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    /// `Σ_s p(s) Σ_{z : k_z = K_z} λ_z`: rate mass of the removed moves.
    pub boundary_leak: f64,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.row_start.len() - 1
    }

    pub fn row(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[s]..self.row_start[s + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn row_sum(&self, s: usize) -> f64 {
        self.row(s).map(|(_, v)| v).sum()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.dim());
        (0..self.dim())
            .map(|s| self.row(s).map(|(c, v)| v * f[c]).sum())
            .collect()
    }
}

pub fn build_generator_matrix(table: &StateTable) -> GeneratorMatrix {
    let weights = table.space().weights();
    let caps = &table.plan().caps;
    let mut row_start = Vec::with_capacity(table.len() + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut leak = 0.0;
    row_start.push(0);
    for (s, eta) in table.states().iter().enumerate() {
        let mut diag = 0.0;
        let diag_pos = cols.len();
        cols.push(s);
        vals.push(0.0);
        let mut lost = 0.0;
        for (z, &lambda) in weights.iter().enumerate() {
            let k = eta.count(z);
            if k < caps[z] {
                cols.push(s + table.strides[z]);
                vals.push(lambda);
                diag -= lambda;
            } else {
                lost += lambda;
            }
            if k > 0 {
                cols.push(s - table.strides[z]);
                vals.push(f64::from(k));
                diag -= f64::from(k);
            }
        }
        vals[diag_pos] = diag;
        leak += table.probs()[s] * lost;
        row_start.push(cols.len());
    }
    GeneratorMatrix {
        row_start,
        cols,
        vals,
        boundary_leak: leak,
    }
}

/// `Σ_s p(s) f(s) (Mg)(s) − Σ_s p(s) g(s) (Mf)(s)`.
pub fn symmetry_defect(table: &StateTable, m: &GeneratorMatrix, f: &[f64], g: &[f64]) -> f64 {
    let mf = m.apply(f);
    let mg = m.apply(g);
    table
        .probs()
        .iter()
        .enumerate()
        .map(|(s, p)| p * (f[s] * mg[s] - g[s] * mf[s]))
        .sum()
}

/// Output of [`ou_pseudo_inverse`].
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    /// `L⁻¹(F − E F)` at every enumerated state, centered under the table.
    pub values: Vec<f64>,
    /// `max_{interior s} |(M g)(s) − (F(s) − E F)|`.
    pub residual: f64,
    pub iterations: usize,
    pub boundary_leak: f64,
}

/// Per-site spectral data of the truncated birth–death generator.
///
/// The generator on the box is the Kronecker sum of one chain per site
/// (up-rate `λ` below the cap, down-rate `k`). Symmetrizing with
/// `w(k) = sqrt(λ^k / k!)` gives a symmetric tridiagonal matrix with
/// off-diagonal `sqrt(λ (k + 1))`.
struct SiteSpectrum {
    /// Orthonormal eigenvectors as columns, `(K + 1) × (K + 1)`.
    vectors: nalgebra::DMatrix<f64>,
    values: Vec<f64>,
    /// Index of the (unique) zero eigenvalue.
    kernel: usize,
    scale: Vec<f64>,
}

impl SiteSpectrum {
    fn new(lambda: f64, cap: u32) -> Self {
        let m = cap as usize + 1;
        let mut s = nalgebra::DMatrix::<f64>::zeros(m, m);
        for k in 0..m {
            let up = if k + 1 < m { lambda } else { 0.0 };
            s[(k, k)] = -(up + k as f64);
            if k + 1 < m {
                let off = (lambda * (k as f64 + 1.0)).sqrt();
                s[(k, k + 1)] = off;
                s[(k + 1, k)] = off;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(s);
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let kernel = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut scale = Vec::with_capacity(m);
        let mut w = 1.0f64;
        for k in 0..m {
            scale.push(w);
            w *= (lambda / (k as f64 + 1.0)).sqrt();
        }
        Self {
            vectors: eig.eigenvectors,
            values,
            kernel,
            scale,
        }
    }
}

/// Applies a square matrix along one axis of the state tensor.
fn mode_product(
    x: &[f64],
    dims: &[usize],
    axis: usize,
    a: &nalgebra::DMatrix<f64>,
    transpose: bool,
) -> Vec<f64> {
    let m = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut out = vec![0.0; x.len()];
    let mut col = vec![0.0; m];
    for o in 0..outer {
        for r in 0..inner {
            let base = o * m * inner + r;
            for (j, c) in col.iter_mut().enumerate() {
                *c = x[base + j * inner];
            }
            for i in 0..m {
                let mut acc = 0.0;
                for (j, c) in col.iter().enumerate() {
                    let aij = if transpose { a[(j, i)] } else { a[(i, j)] };
                    acc += aij * c;
                }
                out[base + i * inner] = acc;
            }
        }
    }
    out
}

/// Direct solver for `M g = c` (c orthogonal to constants) on the box.
struct KroneckerSolver {
    dims: Vec<usize>,
    sites: Vec<SiteSpectrum>,
    weight: Vec<f64>,
    eigensum: Vec<f64>,
}

impl KroneckerSolver {
    fn new(table: &StateTable) -> Self {
        let caps = &table.plan().caps;
        let sites: Vec<SiteSpectrum> = table
            .space()
            .weights()
            .iter()
            .zip(caps)
            .map(|(&l, &k)| SiteSpectrum::new(l, k))
            .collect();
        let dims: Vec<usize> = caps.iter().map(|&k| k as usize + 1).collect();
        let weight = table
            .states()
            .iter()
            .map(|s| {
                s.counts()
                    .iter()
                    .zip(&sites)
                    .map(|(&k, site)| site.scale[k as usize])
                    .product()
            })
            .collect();
        // the multi-index of spectral coordinates uses the same layout as states
        let eigensum = table
            .states()
            .iter()
            .map(|s| {
                let idx = s.counts();
                if idx
                    .iter()
                    .zip(&sites)
                    .all(|(&j, site)| j as usize == site.kernel)
                {
                    0.0
                } else {
                    idx.iter()
                        .zip(&sites)
                        .map(|(&j, site)| site.values[j as usize])
                        .sum()
                }
            })
            .collect();
        Self {
            dims,
            sites,
            weight,
            eigensum,
        }
    }

    fn solve(&self, c: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = c.iter().zip(&self.weight).map(|(c, w)| c * w).collect();
        for (axis, site) in self.sites.iter().enumerate() {
            x = mode_product(&x, &self.dims, axis, &site.vectors, true);
        }
        for (v, &mu) in x.iter_mut().zip(&self.eigensum) {
            *v = if mu == 0.0 { 0.0 } else { *v / mu };
        }
        for (axis, site) in self.sites.iter().enumerate() {
            x = mode_product(&x, &self.dims, axis, &site.vectors, false);
        }
        x.iter().zip(&self.weight).map(|(v, w)| v / w).collect()
    }
}

fn center(p: &[f64], v: &mut [f64]) {
    let mass: f64 = p.iter().sum();
    let mean = p.iter().zip(v.iter()).map(|(p, v)| p * v).sum::<f64>() / mass;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Solves `M g = F − E F` with `Σ p g = 0` on the truncated box.
///
/// The first pass is a direct spectral solve; the remaining passes solve for
/// the residual, which matters at states with very small probability where
/// the symmetrizing weights lose relative precision.
pub fn ou_pseudo_inverse(f: &Functional, table: &StateTable, tol: f64) -> Result<PseudoInverse> {
    let m = build_generator_matrix(table);
    if m.boundary_leak > MAX_BOUNDARY_LEAK {
        return Err(Error::BoundaryLeak {
            leak: m.boundary_leak,
            limit: MAX_BOUNDARY_LEAK,
        });
    }
    let p = table.probs();
    let mut rhs: Vec<f64> = table.states().iter().map(|s| f.eval(s)).collect();
    center(p, &mut rhs);

    let interior: Vec<usize> = (0..table.len()).filter(|&s| table.is_interior(s)).collect();
    let residual_of = |g: &[f64]| -> (Vec<f64>, f64) {
        let mg = m.apply(g);
        let r: Vec<f64> = rhs.iter().zip(&mg).map(|(c, v)| c - v).collect();
        let worst = interior.iter().map(|&s| r[s].abs()).fold(0.0, f64::max);
        (r, worst)
    };

    let solver = KroneckerSolver::new(table);
    let mut g = vec![0.0; table.len()];
    let (mut r, mut residual) = residual_of(&g);
    let mut iterations = 0;
    while residual > tol && iterations < 40 {
        center(p, &mut r);
        let dx = solver.solve(&r);
        let candidate: Vec<f64> = g.iter().zip(&dx).map(|(g, d)| g + d).collect();
        let (r_next, res_next) = residual_of(&candidate);
        iterations += 1;
        if res_next >= residual {
            break;
        }
        g = candidate;
        r = r_next;
        residual = res_next;
    }
    if residual > tol {
        return Err(Error::NoConvergence {
            iterations,
            residual,
        });
    }
    center(p, &mut g);
    Ok(PseudoInverse {
        values: g,
        residual,
        iterations,
        boundary_leak: m.boundary_leak,
    })
}
