//! Finite ground space `(Z, ν)` and point configurations on it.
//!
//! Sites are indexed `0..n`. A configuration stores one multiplicity per site,
//! so `η(B)` is a sum over the members of `B`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite set of sites with strictly positive intensity weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct GroundSpace {
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSpace {
    weights: Vec<f64>,
}

impl TryFrom<RawSpace> for GroundSpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        GroundSpace::new(raw.weights)
    }
}

impl GroundSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySpace);
        }
        for (site, &value) in weights.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidWeight { site, value });
            }
        }
        Ok(Self { weights })
    }

    /// The three-site space with weights (0.5, 1.0, 1.5) used by the default suite.
    pub fn canonical() -> Self {
        Self {
            weights: vec![0.5, 1.0, 1.5],
        }
    }

    pub fn site_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, site: usize) -> f64 {
        self.weights[site]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn check_site(&self, site: usize) -> Result<()> {
        if site < self.site_count() {
            Ok(())
        } else {
            Err(Error::SiteOutOfRange {
                site,
                sites: self.site_count(),
            })
        }
    }

    /// `ν(B)`.
    pub fn measure_of(&self, set: &SiteSet) -> Result<f64> {
        set.check_within(self.site_count())?;
        Ok(set.iter().map(|i| self.weights[i]).sum())
    }

    pub fn empty_configuration(&self) -> Configuration {
        Configuration {
            counts: vec![0; self.site_count()],
        }
    }

    pub fn configuration(&self, counts: Vec<u32>) -> Result<Configuration> {
        if counts.len() != self.site_count() {
            return Err(Error::Shape {
                expected: self.site_count(),
                got: counts.len(),
            });
        }
        Ok(Configuration { counts })
    }
}

/// A finite counting measure: multiplicity `k_i` at every site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    counts: Vec<u32>,
}

impl Configuration {
    /// Builds a configuration without reference to a space. Use
    /// [`GroundSpace::configuration`] when the length should be checked.
    pub fn from_counts(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, site: usize) -> u32 {
        self.counts[site]
    }

    pub fn site_count(&self) -> usize {
        self.counts.len()
    }

    pub fn total_points(&self) -> u64 {
        self.counts.iter().map(|&k| u64::from(k)).sum()
    }

    /// `η(B)`.
    pub fn count_of(&self, set: &SiteSet) -> Result<u64> {
        set.check_within(self.site_count())
            .map_err(|_| Error::Shape {
                expected: set.max_member().map_or(0, |m| m + 1),
                got: self.site_count(),
            })?;
        Ok(set.iter().map(|i| u64::from(self.counts[i])).sum())
    }

    /// Fast unchecked `η(B)`; the set must already be validated for this size.
    pub(crate) fn count_in(&self, set: &SiteSet) -> u64 {
        set.iter().map(|i| u64::from(self.counts[i])).sum()
    }

    /// `η + δ_z`.
    pub fn add_point(&self, site: usize) -> Result<Configuration> {
        self.check_site(site)?;
        Ok(self.plus(site))
    }

    /// `η − δ_z`; fails when `z` carries no point.
    pub fn drop_point(&self, site: usize) -> Result<Configuration> {
        self.check_site(site)?;
        if self.counts[site] == 0 {
            return Err(Error::PointAbsent { site });
        }
        Ok(self.minus(site))
    }

    pub(crate) fn plus(&self, site: usize) -> Configuration {
        let mut counts = self.counts.clone();
        counts[site] += 1;
        Configuration { counts }
    }

    pub(crate) fn minus(&self, site: usize) -> Configuration {
        let mut counts = self.counts.clone();
        counts[site] -= 1;
        Configuration { counts }
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site < self.site_count() {
            Ok(())
        } else {
            Err(Error::SiteOutOfRange {
                site,
                sites: self.site_count(),
            })
        }
    }
}

/// Subset of sites, stored sorted and deduplicated (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SiteSet {
    members: Vec<usize>,
}

impl SiteSet {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    pub fn all(sites: usize) -> Self {
        Self {
            members: (0..sites).collect(),
        }
    }

    /// Builds a set from 1-based indices, as written in config files.
    pub fn from_one_based(indices: &[usize], sites: usize) -> Result<Self> {
        let mut members = Vec::with_capacity(indices.len());
        for &i in indices {
            if i == 0 || i > sites {
                return Err(Error::InvalidSet(format!("index {i} outside 1..={sites}")));
            }
            members.push(i - 1);
        }
        Ok(Self::new(members))
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.members.iter().map(|i| i + 1).collect()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.members.binary_search(&site).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn max_member(&self) -> Option<usize> {
        self.members.last().copied()
    }

    pub fn check_within(&self, sites: usize) -> Result<()> {
        match self.max_member() {
            Some(m) if m >= sites => Err(Error::InvalidSet(format!(
                "site {m} outside a space with {sites} sites"
            ))),
            _ => Ok(()),
        }
    }
}
