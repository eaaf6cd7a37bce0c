use serde::{Deserialize, Serialize};

use super::world::{AffinityCurve, ClickWeights};
use crate::error::{Error, Result};

/// Synthetic population and dataset parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub users: usize,
    pub items: usize,
    pub categories: usize,
    pub sessions: usize,
    pub candidates_per_session: usize,
    pub age_buckets: usize,
    pub occupation_buckets: usize,
    /// Short-sequence length is uniform in `0..=short_len_max`.
    pub short_len_max: usize,
    /// Older (14–180 day) clicks, uniform in `long_len_min..=long_len_max`.
    pub long_len_min: usize,
    pub long_len_max: usize,
    /// Fraction of sessions (taken from the end) held out for testing.
    pub test_fraction: f64,
    pub dirichlet_alpha: f64,
    pub visit_median: f64,
    pub visit_sigma: f64,
    pub affinity: AffinityCurve,
    pub click: ClickWeights,
    pub rng_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            users: 2000,
            items: 1000,
            categories: 8,
            sessions: 50_000,
            candidates_per_session: 4,
            age_buckets: 6,
            occupation_buckets: 8,
            short_len_max: 30,
            long_len_min: 20,
            long_len_max: 150,
            test_fraction: 0.1,
            dirichlet_alpha: 0.3,
            visit_median: 5.0,
            visit_sigma: 1.0,
            affinity: AffinityCurve::default(),
            click: ClickWeights::default(),
            rng_seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("users", self.users),
            ("items", self.items),
            ("categories", self.categories),
            ("sessions", self.sessions),
            ("age_buckets", self.age_buckets),
            ("occupation_buckets", self.occupation_buckets),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Validation(format!("gen.{name} must be >= 1")));
            }
        }
        if self.candidates_per_session < 2 {
            return Err(Error::Validation("gen.candidates_per_session must be >= 2".into()));
        }
        if self.items < self.categories {
            return Err(Error::Validation(
                "gen.items must be >= gen.categories so every category has an item".into(),
            ));
        }
        if self.long_len_min > self.long_len_max {
            return Err(Error::Validation("gen.long_len_min exceeds gen.long_len_max".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Validation("gen.test_fraction must lie in [0, 1)".into()));
        }
        if !(self.dirichlet_alpha > 0.0 && self.visit_median > 0.0 && self.visit_sigma > 0.0) {
            return Err(Error::Validation(
                "gen.dirichlet_alpha, gen.visit_median and gen.visit_sigma must be positive".into(),
            ));
        }
        Ok(())
    }
}
