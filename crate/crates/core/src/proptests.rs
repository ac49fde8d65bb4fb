//! Property tests of the pointwise algebra over random registry functionals.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::functionals::{add_diff, derivative_field, drop_diff, Functional};
use crate::ground::{Configuration, GroundSpace, SiteSet};
use crate::operators::{bracket, divergence, gamma, gamma_add_drop, ou_generator, BracketKind};
use crate::registry::{bounded_sigmoid, indicator_leq, AffineTerm, FunctionalSpec};

const EPS: f64 = 1e-12;

fn random_set<R: Rng>(rng: &mut R, sites: usize) -> Option<Vec<usize>> {
    let mask: u32 = rng.random_range(1..(1u32 << sites));
    Some(
        (0..sites)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| i + 1)
            .collect(),
    )
}

pub fn random_leaf<R: Rng>(rng: &mut R, sites: usize) -> FunctionalSpec {
    let set = random_set(rng, sites);
    match rng.random_range(0..5) {
        0 => FunctionalSpec::Constant {
            value: rng.random_range(-3.0..3.0),
        },
        1 => FunctionalSpec::LinearCount { set },
        2 => FunctionalSpec::PolyCount {
            set,
            degree: rng.random_range(1..=3),
        },
        3 => FunctionalSpec::BoundedSigmoid {
            set,
            scale: rng.random_range(-2.0..2.0),
        },
        _ => FunctionalSpec::IndicatorLeq {
            set,
            m: rng.random_range(0..5),
        },
    }
}

/// A registry functional: a leaf, a product of two leaves, or an affine
/// combination of two leaves.
pub fn random_functional<R: Rng>(rng: &mut R, sites: usize) -> FunctionalSpec {
    match rng.random_range(0..4) {
        0 => FunctionalSpec::Product {
            factors: vec![random_leaf(rng, sites), random_leaf(rng, sites)],
        },
        1 => FunctionalSpec::Affine {
            terms: (0..2)
                .map(|_| AffineTerm {
                    coef: rng.random_range(-2.0..2.0),
                    functional: random_leaf(rng, sites),
                })
                .collect(),
            offset: rng.random_range(-1.0..1.0),
        },
        _ => random_leaf(rng, sites),
    }
}

pub fn random_configuration<R: Rng>(rng: &mut R, sites: usize, max: u32) -> Configuration {
    Configuration::from_counts((0..sites).map(|_| rng.random_range(0..=max)).collect())
}

/// `|a − b|` measured against the magnitude of the terms involved.
pub fn scaled_gap(a: f64, b: f64, terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    (a - b).abs() / scale
}

fn space_strategy() -> impl Strategy<Value = GroundSpace> {
    prop::collection::vec(0.05f64..3.0, 1..5).prop_map(|w| GroundSpace::new(w).unwrap())
}

/// A space, two registry functionals, a configuration and a site, all drawn
/// from one seed so shrinking stays meaningful.
fn case() -> impl Strategy<Value = (GroundSpace, Functional, Functional, Configuration, usize)> {
    (space_strategy(), any::<u64>(), 0usize..16).prop_map(|(space, seed, z)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = space.site_count();
        let f = random_functional(&mut rng, n).build(&space).unwrap();
        let g = random_functional(&mut rng, n).build(&space).unwrap();
        let eta = random_configuration(&mut rng, n, 6);
        (space, f, g, eta, z % n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn square_chain_rules((_s, f, _g, eta, z) in case()) {
        let sq = f.square();
        let fe = f.eval(&eta);
        let d = add_diff(&f, &eta, z);
        let lhs = add_diff(&sq, &eta, z);
        prop_assert!(scaled_gap(lhs, 2.0 * fe * d + d * d, &[lhs, fe * d, d * d]) <= EPS);
        let dm = drop_diff(&f, &eta, z);
        let lhs = drop_diff(&sq, &eta, z);
        prop_assert!(scaled_gap(lhs, 2.0 * fe * dm - dm * dm, &[lhs, fe * dm, dm * dm]) <= EPS);
    }

    #[test]
    fn drop_add_conjugation((_s, f, _g, eta, z) in case()) {
        if eta.count(z) > 0 {
            let lower = eta.drop_point(z).unwrap();
            prop_assert_eq!(drop_diff(&f, &eta, z), add_diff(&f, &lower, z));
        } else {
            prop_assert_eq!(drop_diff(&f, &eta, z), 0.0);
        }
    }

    #[test]
    fn product_rule((_s, f, g, eta, z) in case()) {
        let (df, dg) = (add_diff(&f, &eta, z), add_diff(&g, &eta, z));
        let (fe, ge) = (f.eval(&eta), g.eval(&eta));
        let lhs = add_diff(&f.times(&g), &eta, z);
        let rhs = fe * dg + ge * df + df * dg;
        prop_assert!(scaled_gap(lhs, rhs, &[lhs, fe * dg, ge * df, df * dg]) <= EPS);
    }

    #[test]
    fn linearity((_s, f, g, eta, z) in case(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let h = f.linear_combination(a, &g, b);
        let (df, dg) = (add_diff(&f, &eta, z), add_diff(&g, &eta, z));
        let lhs = add_diff(&h, &eta, z);
        prop_assert!(scaled_gap(lhs, a * df + b * dg, &[lhs, a * df, b * dg]) <= EPS);
        let (mf, mg) = (drop_diff(&f, &eta, z), drop_diff(&g, &eta, z));
        let lhs = drop_diff(&h, &eta, z);
        prop_assert!(scaled_gap(lhs, a * mf + b * mg, &[lhs, a * mf, b * mg]) <= EPS);
    }

    #[test]
    fn gamma_positive_and_cauchy_schwarz((s, f, g, eta, _z) in case()) {
        let gff = gamma(&s, &f, &f, &eta);
        let ggg = gamma(&s, &g, &g, &eta);
        let gfg = gamma(&s, &f, &g, &eta);
        prop_assert!(gff >= 0.0 && ggg >= 0.0);
        prop_assert!(gfg * gfg <= gff * ggg * (1.0 + EPS) + EPS);
        // the drop-operator form of the same quantity
        prop_assert!(scaled_gap(gff, gamma_add_drop(&s, &f, &eta), &[gff]) <= EPS);
    }

    #[test]
    fn generator_is_minus_divergence_of_derivative((s, f, _g, eta, _z) in case()) {
        let l = ou_generator(&s, &f, &eta);
        let d = -divergence(&s, &derivative_field(&f), &eta);
        prop_assert!(scaled_gap(l, d, &[l, d]) <= EPS);
    }

    #[test]
    fn gamma_bracket_is_mean_of_plus_and_minus((s, f, g, eta, _z) in case()) {
        let (df, dg) = (derivative_field(&f), derivative_field(&g));
        let p = bracket(&s, &df, &dg, BracketKind::Plus, &eta);
        let m = bracket(&s, &df, &dg, BracketKind::Minus, &eta);
        let gm = bracket(&s, &df, &dg, BracketKind::Gamma, &eta);
        prop_assert!(scaled_gap(gm, 0.5 * (p + m), &[p, m]) <= EPS);
        prop_assert!(scaled_gap(gm, gamma(&s, &f, &g, &eta), &[gm]) <= EPS);
    }

    #[test]
    fn add_then_drop_is_identity(counts in prop::collection::vec(0u32..20, 1..5), z in 0usize..16) {
        let eta = Configuration::from_counts(counts);
        let z = z % eta.site_count();
        let up = eta.add_point(z).unwrap();
        prop_assert_eq!(up.drop_point(z).unwrap(), eta.clone());
        prop_assert_eq!(up.total_points(), eta.total_points() + 1);
    }

    #[test]
    fn measure_is_additive(w in prop::collection::vec(0.05f64..3.0, 2..6), mask in 0u32..64) {
        let s = GroundSpace::new(w).unwrap();
        let n = s.site_count();
        let a = SiteSet::new((0..n).filter(|i| mask >> i & 1 == 1));
        let b = SiteSet::new((0..n).filter(|i| mask >> i & 1 == 0));
        let total = s.measure_of(&a).unwrap() + s.measure_of(&b).unwrap();
        prop_assert!((total - s.total_mass()).abs() <= EPS * s.total_mass());
    }

    #[test]
    fn bounded_functionals_have_bounded_differences(
        (s, _f, _g, eta, z) in case(),
        scale in -4.0f64..4.0,
        m in 0u64..6,
    ) {
        let b = SiteSet::all(s.site_count());
        for f in [bounded_sigmoid(&s, b.clone(), scale).unwrap(), indicator_leq(&s, b.clone(), m).unwrap()] {
            let bound = f.bound().unwrap();
            prop_assert!(add_diff(&f, &eta, z).abs() <= 2.0 * bound);
            prop_assert!(f.eval(&eta).abs() <= bound);
        }
    }
}
