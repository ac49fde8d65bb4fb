//! Pathwise divergence, Ornstein–Uhlenbeck generator, energy brackets and
//! carré du champ, evaluated configuration by configuration.
//!
//! Expectations (the Dirichlet energy) go through a [`Backend`].

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendValue};
use crate::error::Result;
use crate::functionals::{add_diff, derivative_field, drop_diff, Functional, RandomField};
use crate::ground::{Configuration, GroundSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketKind {
    /// `½([u,v]_+ + [u,v]_−)`
    Gamma,
    /// `∫ u v dν`
    Plus,
    /// `∫ u(η−δ_z, z) v(η−δ_z, z) η(dz)`
    Minus,
}

/// Skorokhod divergence, pathwise:
/// `δu(η) = Σ_z k_z u(η − δ_z, z) − Σ_z λ_z u(η, z)`.
///
/// The point being integrated is removed before `u` is evaluated; this is the
/// form under which duality with `D⁺` holds for η-dependent fields.
pub fn divergence(space: &GroundSpace, u: &RandomField, eta: &Configuration) -> f64 {
    let mut jump = 0.0;
    let mut drift = 0.0;
    for (z, &lambda) in space.weights().iter().enumerate() {
        let k = eta.count(z);
        if k > 0 {
            jump += f64::from(k) * u.eval(&eta.minus(z), z);
        }
        drift += lambda * u.eval(eta, z);
    }
    jump - drift
}

/// `LF = −δ(DF) = Σ_z λ_z D⁺_z F(η) − Σ_z k_z D⁻_z F(η)`.
pub fn ou_generator(space: &GroundSpace, f: &Functional, eta: &Configuration) -> f64 {
    let base = f.eval(eta);
    let mut out = 0.0;
    for (z, &lambda) in space.weights().iter().enumerate() {
        out += lambda * (f.eval(&eta.plus(z)) - base);
        let k = eta.count(z);
        if k > 0 {
            out -= f64::from(k) * (base - f.eval(&eta.minus(z)));
        }
    }
    out
}

fn plus_bracket(space: &GroundSpace, u: &RandomField, v: &RandomField, eta: &Configuration) -> f64 {
    space
        .weights()
        .iter()
        .enumerate()
        .map(|(z, &lambda)| lambda * u.eval(eta, z) * v.eval(eta, z))
        .sum()
}

fn minus_bracket(
    space: &GroundSpace,
    u: &RandomField,
    v: &RandomField,
    eta: &Configuration,
) -> f64 {
    (0..space.site_count())
        .filter(|&z| eta.count(z) > 0)
        .map(|z| {
            let lower = eta.minus(z);
            f64::from(eta.count(z)) * u.eval(&lower, z) * v.eval(&lower, z)
        })
        .sum()
}

pub fn bracket(
    space: &GroundSpace,
    u: &RandomField,
    v: &RandomField,
    kind: BracketKind,
    eta: &Configuration,
) -> f64 {
    match kind {
        BracketKind::Plus => plus_bracket(space, u, v, eta),
        BracketKind::Minus => minus_bracket(space, u, v, eta),
        BracketKind::Gamma => {
            0.5 * (plus_bracket(space, u, v, eta) + minus_bracket(space, u, v, eta))
        }
    }
}

/// Carré du champ `Γ(F, G)(η) = [DF, DG]_Γ(η)`.
pub fn gamma(space: &GroundSpace, f: &Functional, g: &Functional, eta: &Configuration) -> f64 {
    let mut plus = 0.0;
    let mut minus = 0.0;
    for (z, &lambda) in space.weights().iter().enumerate() {
        plus += lambda * add_diff(f, eta, z) * add_diff(g, eta, z);
        let k = eta.count(z);
        if k > 0 {
            let lower = eta.minus(z);
            minus += f64::from(k) * add_diff(f, &lower, z) * add_diff(g, &lower, z);
        }
    }
    0.5 * (plus + minus)
}

/// `½ Σ λ_z (D⁺_z F)² + ½ Σ k_z (D⁻_z F)²`, the carré du champ written with
/// the drop operator. Agrees with [`gamma`] at `G = F`.
pub fn gamma_add_drop(space: &GroundSpace, f: &Functional, eta: &Configuration) -> f64 {
    let mut out = 0.0;
    for (z, &lambda) in space.weights().iter().enumerate() {
        let up = add_diff(f, eta, z);
        let down = drop_diff(f, eta, z);
        out += 0.5 * lambda * up * up + 0.5 * f64::from(eta.count(z)) * down * down;
    }
    out
}

/// Integrand of the Dirichlet energy: `Σ_z λ_z D⁺_z F D⁺_z G`.
pub fn energy_density(
    space: &GroundSpace,
    f: &Functional,
    g: &Functional,
    eta: &Configuration,
) -> f64 {
    space
        .weights()
        .iter()
        .enumerate()
        .map(|(z, &lambda)| lambda * add_diff(f, eta, z) * add_diff(g, eta, z))
        .sum()
}

/// `𝓔(F, G) = E_Π Σ_z λ_z D⁺_z F D⁺_z G`.
pub fn dirichlet_energy(
    f: &Functional,
    g: &Functional,
    backend: &dyn Backend,
) -> Result<BackendValue> {
    let space = backend.space().clone();
    backend.expect(&|eta| energy_density(&space, f, g, eta))
}

/// `δ(Fu)(η) − F(η) δu(η) + [DF, u]_−(η)`; identically zero.
pub fn divergence_product_defect(
    space: &GroundSpace,
    f: &Functional,
    u: &RandomField,
    eta: &Configuration,
) -> f64 {
    let fu = u.scaled_by(f);
    let df = derivative_field(f);
    divergence(space, &fu, eta) - f.eval(eta) * divergence(space, u, eta)
        + bracket(space, &df, u, BracketKind::Minus, eta)
}

/// `D⁺_z(δu)(η) − u(η, z) − δ(D⁺_z u)(η)`; identically zero.
pub fn commutation_defect(
    space: &GroundSpace,
    u: &RandomField,
    eta: &Configuration,
    z: usize,
) -> f64 {
    let lhs = divergence(space, u, &eta.plus(z)) - divergence(space, u, eta);
    let rhs = u.eval(eta, z) + divergence(space, &u.add_diff_at(z), eta);
    lhs - rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::SiteSet;
    use crate::registry;

    fn space() -> GroundSpace {
        GroundSpace::canonical()
    }

    fn eta() -> Configuration {
        Configuration::from_counts(vec![1, 0, 2])
    }

    #[test]
    fn divergence_examples() {
        let ones = RandomField::deterministic(vec![1.0; 3]);
        assert_eq!(divergence(&space(), &ones, &eta()), 0.0);
        assert_eq!(divergence(&space(), &RandomField::zero(), &eta()), 0.0);
        let g = RandomField::deterministic(vec![1.0, 0.0, 0.0]);
        let eta2 = Configuration::from_counts(vec![2, 1, 0]);
        assert_eq!(divergence(&space(), &g, &eta2), 1.5);
    }

    #[test]
    fn divergence_removes_the_integrated_point() {
        // u(η, z) = η(Z): δu = Σ k_z (N − 1) − ν(Z) N = N(N−1) − 3N.
        let u = RandomField::new("total", serde_json::Value::Null, |eta, _| {
            eta.total_points() as f64
        });
        assert_eq!(divergence(&space(), &u, &eta()), 3.0 * 2.0 - 9.0);
    }

    #[test]
    fn ou_generator_examples() {
        let f = registry::linear_count(&space(), SiteSet::new([0, 1])).unwrap();
        assert!((ou_generator(&space(), &f, &eta()) - 0.5).abs() < 1e-15);
        assert_eq!(
            ou_generator(&space(), &Functional::constant(3.0), &eta()),
            0.0
        );
        // L = −δ D
        let p = registry::poly_count(&space(), SiteSet::all(3), 3).unwrap();
        let via_div = -divergence(&space(), &derivative_field(&p), &eta());
        assert!((ou_generator(&space(), &p, &eta()) - via_div).abs() < 1e-12);
    }

    #[test]
    fn first_chaos_eigenvalue() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let b = SiteSet::new([0, 1]);
        let nu_b = space().measure_of(&b).unwrap();
        let f = registry::linear_count(&space(), b).unwrap();
        let centered = registry::affine(&[(1.0, f)], -nu_b);
        for _ in 0..10 {
            let eta = Configuration::from_counts((0..3).map(|_| rng.random_range(0..8)).collect());
            let l = ou_generator(&space(), &centered, &eta);
            assert!((l + centered.eval(&eta)).abs() < 1e-12);
        }
    }

    #[test]
    fn bracket_examples() {
        let ones = RandomField::deterministic(vec![1.0; 3]);
        for (kind, want) in [
            (BracketKind::Plus, 3.0),
            (BracketKind::Minus, 3.0),
            (BracketKind::Gamma, 3.0),
        ] {
            assert_eq!(bracket(&space(), &ones, &ones, kind, &eta()), want);
            assert_eq!(
                bracket(&space(), &ones, &RandomField::zero(), kind, &eta()),
                0.0
            );
        }
    }

    #[test]
    fn gamma_examples() {
        let f = registry::linear_count(&space(), SiteSet::new([0, 1])).unwrap();
        assert!((gamma(&space(), &f, &f, &eta()) - 1.25).abs() < 1e-15);
        let c = Functional::constant(2.0);
        assert_eq!(gamma(&space(), &c, &c, &eta()), 0.0);
        let p = registry::poly_count(&space(), SiteSet::all(3), 2).unwrap();
        assert!(
            (gamma(&space(), &p, &p, &eta()) - gamma_add_drop(&space(), &p, &eta())).abs() < 1e-12
        );
    }

    #[test]
    fn product_defect_examples() {
        let g = RandomField::deterministic(vec![0.3, -1.0, 2.0]);
        let c = Functional::constant(1.7);
        assert_eq!(divergence_product_defect(&space(), &c, &g, &eta()), 0.0);
        let f = registry::linear_count(&space(), SiteSet::new([0])).unwrap();
        assert_eq!(
            divergence_product_defect(&space(), &f, &RandomField::zero(), &eta()),
            0.0
        );
        for counts in [[0, 0, 0], [1, 0, 2], [3, 2, 5], [4, 0, 1]] {
            let eta = Configuration::from_counts(counts.to_vec());
            assert!(divergence_product_defect(&space(), &f, &g, &eta).abs() < 1e-12);
        }
    }

    #[test]
    fn commutation_deterministic_field() {
        let g = RandomField::deterministic(vec![0.3, -1.0, 2.0]);
        for z in 0..3 {
            let shift = divergence(&space(), &g, &eta().plus(z)) - divergence(&space(), &g, &eta());
            assert!((shift - g.eval(&eta(), z)).abs() < 1e-15);
            assert!(commutation_defect(&space(), &g, &eta(), z).abs() < 1e-15);
            assert_eq!(
                commutation_defect(&space(), &RandomField::zero(), &eta(), z),
                0.0
            );
        }
    }
}
