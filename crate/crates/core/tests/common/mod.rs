use poisson_calculus::registry::AffineTerm;
use poisson_calculus::{Configuration, FunctionalSpec};
use rand::Rng;

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
