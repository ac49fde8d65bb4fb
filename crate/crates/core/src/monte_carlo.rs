//! Seeded Poisson sampler and Monte Carlo expectations.
//!
//! Sample `i` draws from its own ChaCha8 stream (`seed`, stream `i`), so the
//! sequence of configurations does not depend on how samples are split over
//! workers. Workers own contiguous index ranges and their accumulators are
//! merged in worker order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendKind, BackendValue, Integrand, MultiIntegrand, Uncertainty};
use crate::error::{Error, Result};
use crate::functionals::{Functional, RandomField};
use crate::ground::{Configuration, GroundSpace};

/// Below this mean, Poisson variates come from sequential inversion; above it
/// from the rejection sampler in `rand_distr`.
pub const INVERSION_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub samples: u64,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl SamplerConfig {
    pub fn new(seed: u64, samples: u64, workers: usize) -> Self {
        Self {
            seed,
            samples,
            workers: workers.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
}

fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u32 {
    if lambda < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut k = 0u32;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= lambda / f64::from(k);
            if p == 0.0 {
                break;
            }
            cdf += p;
        }
        k
    } else {
        let d = Poisson::new(lambda).expect("positive finite mean");
        let x: f64 = d.sample(rng);
        x as u32
    }
}

/// One configuration: independent `Poisson(λ_i)` counts per site.
pub fn sample_configuration<R: Rng + ?Sized>(space: &GroundSpace, rng: &mut R) -> Configuration {
    Configuration::from_counts(
        space
            .weights()
            .iter()
            .map(|&lambda| poisson_draw(lambda, rng))
            .collect(),
    )
}

fn stream(base: &ChaCha8Rng, index: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(index);
    rng
}

/// The configurations with sample indices `0..count` for `seed`.
pub fn sample_configurations(space: &GroundSpace, seed: u64, count: u64) -> Vec<Configuration> {
    let base = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| sample_configuration(space, &mut stream(&base, i)))
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Welford) -> Welford {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let (a, b) = (self.n as f64, other.n as f64);
        Welford {
            n,
            mean: self.mean + d * b / n as f64,
            m2: self.m2 + other.m2 + d * d * a * b / n as f64,
        }
    }
}

/// Sample mean and standard error of `h(η)` over `cfg.samples` draws.
pub fn mc_estimate(
    space: &GroundSpace,
    cfg: &SamplerConfig,
    h: &Integrand<'_>,
) -> Result<Estimate> {
    let mut v = mc_estimate_many(space, cfg, 1, &|eta, out| out[0] = h(eta))?;
    Ok(v.remove(0))
}

/// Component-wise estimates of a vector integrand, all components evaluated
/// on the same draws (paired).
pub fn mc_estimate_many(
    space: &GroundSpace,
    cfg: &SamplerConfig,
    dims: usize,
    h: &MultiIntegrand<'_>,
) -> Result<Vec<Estimate>> {
    if cfg.samples < 2 {
        return Err(Error::TooFewSamples(cfg.samples));
    }
    let workers = (cfg.workers.max(1) as u64).min(cfg.samples);
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let chunk = cfg.samples.div_ceil(workers);
    let run = |w: u64| -> Result<Vec<Welford>> {
        let mut acc = vec![Welford::default(); dims];
        let mut buf = vec![0.0; dims];
        let end = ((w + 1) * chunk).min(cfg.samples);
        for i in (w * chunk)..end {
            let eta = sample_configuration(space, &mut stream(&base, i));
            h(&eta, &mut buf);
            for (a, &x) in acc.iter_mut().zip(&buf) {
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        value: x,
                        counts: eta.counts().to_vec(),
                    });
                }
                a.push(x);
            }
        }
        Ok(acc)
    };
    let parts: Vec<Result<Vec<Welford>>> = if workers == 1 {
        vec![run(0)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers).map(|w| scope.spawn(move || run(w))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    };
    let mut total = vec![Welford::default(); dims];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part?) {
            *t = t.merge(p);
        }
    }
    Ok(total
        .into_iter()
        .map(|t| {
            let var = t.m2 / (t.n - 1) as f64;
            Estimate {
                mean: t.mean,
                std_error: (var.max(0.0) / t.n as f64).sqrt(),
                n: t.n,
            }
        })
        .collect())
}

pub fn mc_expectation(
    f: &Functional,
    space: &GroundSpace,
    cfg: &SamplerConfig,
) -> Result<Estimate> {
    mc_estimate(space, cfg, &|eta| f.eval(eta))
}

/// Paired estimator of `E[Σ_z k_z u(η, z) − Σ_z λ_z u(η + δ_z, z)]`.
pub fn mc_mecke_defect(
    u: &RandomField,
    space: &GroundSpace,
    cfg: &SamplerConfig,
) -> Result<Estimate> {
    mc_estimate(space, cfg, &|eta| mecke_integrand(space, u, eta))
}

/// Per-configuration Mecke defect `∫ u dη − ∫ u(η + δ_z, z) ν(dz)`.
pub fn mecke_integrand(space: &GroundSpace, u: &RandomField, eta: &Configuration) -> f64 {
    space
        .weights()
        .iter()
        .enumerate()
        .map(|(z, &lambda)| {
            f64::from(eta.count(z)) * u.eval(eta, z) - lambda * u.eval(&eta.plus(z), z)
        })
        .sum()
}

/// Monte Carlo backend.
#[derive(Debug, Clone)]
pub struct McEngine {
    space: GroundSpace,
    cfg: SamplerConfig,
}

impl McEngine {
    pub fn new(space: &GroundSpace, cfg: SamplerConfig) -> Self {
        Self {
            space: space.clone(),
            cfg,
        }
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }
}

impl Backend for McEngine {
    fn kind(&self) -> BackendKind {
        BackendKind::Mc
    }

    fn space(&self) -> &GroundSpace {
        &self.space
    }

    fn expect_many(&self, dims: usize, h: &MultiIntegrand<'_>) -> Result<Vec<BackendValue>> {
        Ok(mc_estimate_many(&self.space, &self.cfg, dims, h)?
            .into_iter()
            .map(|e| BackendValue {
                value: e.mean,
                uncertainty: Uncertainty::Statistical {
                    std_error: e.std_error,
                    n: e.n,
                },
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::SiteSet;
    use crate::registry;

    fn space() -> GroundSpace {
        GroundSpace::canonical()
    }

    #[test]
    fn poisson_mean_and_variance() {
        let cfg = SamplerConfig::new(3, 100_000, 4);
        let total = registry::linear_count(&space(), SiteSet::all(3)).unwrap();
        let e = mc_expectation(&total, &space(), &cfg).unwrap();
        assert!((e.mean - 3.0).abs() <= 4.0 * e.std_error);
        // Var η({1}) = 0.5: estimate E (k_1 − 0.5)²
        let v = mc_estimate(&space(), &cfg, &|eta| {
            (f64::from(eta.count(0)) - 0.5).powi(2)
        })
        .unwrap();
        assert!((v.mean - 0.5).abs() <= 4.0 * v.std_error);
        let sq = registry::poly_count(&space(), SiteSet::all(3), 2).unwrap();
        let e = mc_expectation(&sq, &space(), &cfg).unwrap();
        assert!((e.mean - 12.0).abs() <= 4.0 * e.std_error);
    }

    #[test]
    fn large_mean_switchover() {
        let big = GroundSpace::new(vec![25.0, 4.0]).unwrap();
        let cfg = SamplerConfig::new(9, 50_000, 2);
        let e = mc_estimate(&big, &cfg, &|eta| f64::from(eta.count(0))).unwrap();
        assert!((e.mean - 25.0).abs() <= 4.0 * e.std_error);
        let v = mc_estimate(&big, &cfg, &|eta| (f64::from(eta.count(0)) - 25.0).powi(2)).unwrap();
        assert!((v.mean - 25.0).abs() <= 4.0 * v.std_error);
    }

    #[test]
    fn constant_has_zero_error() {
        let e = mc_expectation(
            &Functional::constant(2.5),
            &space(),
            &SamplerConfig::new(1, 100, 3),
        )
        .unwrap();
        assert_eq!(e.mean, 2.5);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.n, 100);
    }

    #[test]
    fn reproducible_and_worker_invariant() {
        let f = registry::bounded_sigmoid(&space(), SiteSet::new([0, 2]), 0.8).unwrap();
        let a = mc_expectation(&f, &space(), &SamplerConfig::new(42, 10_000, 1)).unwrap();
        let b = mc_expectation(&f, &space(), &SamplerConfig::new(42, 10_000, 1)).unwrap();
        assert_eq!(a, b);
        let c = mc_expectation(&f, &space(), &SamplerConfig::new(42, 10_000, 7)).unwrap();
        assert!((a.mean - c.mean).abs() < 1e-12);
        let d = mc_expectation(&f, &space(), &SamplerConfig::new(43, 10_000, 1)).unwrap();
        assert_ne!(a.mean, d.mean);
    }

    #[test]
    fn errors() {
        assert_eq!(
            mc_expectation(
                &Functional::constant(1.0),
                &space(),
                &SamplerConfig::new(0, 1, 1)
            ),
            Err(Error::TooFewSamples(1))
        );
        let bad = Functional::new("bad", serde_json::Value::Null, |eta| {
            if eta.count(2) > 1 {
                f64::NAN
            } else {
                0.0
            }
        });
        match mc_expectation(&bad, &space(), &SamplerConfig::new(0, 1000, 2)) {
            Err(Error::NonFinite { counts, .. }) => assert!(counts[2] > 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mecke_defects() {
        let cfg = SamplerConfig::new(5, 100_000, 4);
        let ones = RandomField::deterministic(vec![1.0; 3]);
        let e = mc_mecke_defect(&ones, &space(), &cfg).unwrap();
        assert!(e.mean.abs() <= 4.0 * e.std_error);
        let b = SiteSet::new([0, 1]);
        let sig = registry::bounded_sigmoid(&space(), b, 1.0).unwrap();
        let u = RandomField::deterministic(vec![1.0, 1.0, 0.0]).scaled_by(&sig);
        let e = mc_mecke_defect(&u, &space(), &cfg).unwrap();
        assert!(e.mean.abs() <= 4.0 * e.std_error);
        let g = RandomField::deterministic(vec![2.0, -1.0, 0.5]);
        let e = mc_mecke_defect(&g, &space(), &cfg).unwrap();
        assert!(e.mean.abs() <= 4.0 * e.std_error);
    }

    #[test]
    fn sample_stream_is_prefix_stable() {
        let a = sample_configurations(&space(), 7, 5);
        let b = sample_configurations(&space(), 7, 10);
        assert_eq!(a[..], b[..5]);
    }
}
