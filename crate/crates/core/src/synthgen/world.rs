use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma, LogNormal};
use serde::{Deserialize, Serialize};

use super::config::GenConfig;
use crate::datamodel::{stay_bucket, ItemRef};
use crate::numerics::sigmoid;

/// Logit weights of the ground-truth click process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClickWeights {
    pub w_trig: f64,
    pub w_pref: f64,
    pub bias_1: f64,
    pub bias_0: f64,
}

impl Default for ClickWeights {
    fn default() -> Self {
        ClickWeights {
            w_trig: 3.0,
            w_pref: 2.5,
            bias_1: -2.5,
            bias_0: -2.0,
        }
    }
}

/// `θ_u = σ(a − b·ln(1 + visit_rate))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffinityCurve {
    pub a: f64,
    pub b: f64,
}

impl Default for AffinityCurve {
    fn default() -> Self {
        AffinityCurve { a: 1.5, b: 1.2 }
    }
}

impl AffinityCurve {
    pub fn affinity(&self, visit_rate: f64) -> f64 {
        sigmoid(self.a - self.b * (1.0 + visit_rate).ln())
    }
}

/// Latent parameters of a synthetic population.
///
/// Ids are 1-based everywhere (0 is padding); the per-entity vectors here are
/// indexed by `id - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    pub n_users: usize,
    pub n_items: usize,
    pub n_categories: usize,
    pub item_category: Vec<usize>,
    pub user_pref: Vec<Vec<f64>>,
    pub user_visit_rate: Vec<f64>,
    pub trigger_affinity: Vec<f64>,
    pub user_age: Vec<usize>,
    pub user_occupation: Vec<usize>,
    pub user_stay_seconds: Vec<f64>,
    pub affinity_curve: AffinityCurve,
    pub click: ClickWeights,
    pub rng_seed: u64,
}

impl World {
    pub fn category_of(&self, item_id: usize) -> usize {
        self.item_category[item_id - 1]
    }

    pub fn pref(&self, user: usize, category: usize) -> f64 {
        self.user_pref[user - 1][category - 1]
    }

    pub fn monthly_visit_count(&self, user: usize) -> u32 {
        self.user_visit_rate[user - 1].round() as u32
    }

    pub fn stay_bucket(&self, user: usize) -> usize {
        stay_bucket(self.user_stay_seconds[user - 1])
    }

    /// Items of each category, indexed by `category - 1`.
    pub fn items_by_category(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_categories];
        for (i, &c) in self.item_category.iter().enumerate() {
            out[c - 1].push(i + 1);
        }
        out
    }

    /// Item → category map indexed by item id, with slot 0 for padding.
    pub fn item_category_map(&self) -> Vec<usize> {
        std::iter::once(0).chain(self.item_category.iter().copied()).collect()
    }

    /// True probability that the session's entry was caused by the trigger.
    pub fn session_intent_prob(&self, user: usize, trigger_category: usize) -> f64 {
        let scale = 0.5 + self.pref(user, trigger_category) * self.n_categories as f64 / 2.0;
        (self.trigger_affinity[user - 1] * scale).clamp(0.0, 1.0)
    }

    /// `P(click | candidate, intent)` under the generating process.
    pub fn true_click_prob(&self, user: usize, intent: u8, candidate: &ItemRef, trigger: &ItemRef) -> f64 {
        let pref = self.pref(user, candidate.category_id);
        let w = &self.click;
        if intent == 1 {
            let same = if candidate.category_id == trigger.category_id { 1.0 } else { 0.0 };
            sigmoid(w.w_trig * same + w.w_pref * pref + w.bias_1)
        } else {
            sigmoid(w.w_pref * pref * self.n_categories as f64 / 2.0 + w.bias_0)
        }
    }

    /// Bayes-optimal CTR: the intent mixture of the two conditional click rates.
    pub fn bayes_ctr(&self, user: usize, candidate: &ItemRef, trigger: &ItemRef) -> f64 {
        let theta = self.session_intent_prob(user, trigger.category_id);
        mixture(
            theta,
            self.true_click_prob(user, 1, candidate, trigger),
            self.true_click_prob(user, 0, candidate, trigger),
        )
    }

    /// Probability that the posterior intention label comes out 1 for a
    /// session with `n_candidates` candidates, given only the user and the
    /// trigger category. This is the best any scorer that sees neither the
    /// candidates nor the clicks can do.
    pub fn intent_label_prob(&self, user: usize, trigger_category: usize, n_candidates: usize) -> f64 {
        let theta = self.session_intent_prob(user, trigger_category);
        let pt = self.pref(user, trigger_category);
        let anchor = ItemRef {
            item_id: 0,
            category_id: trigger_category,
            timestamp: 0,
        };
        let from_trigger = (n_candidates / 2) as i32;
        let from_pref = (n_candidates - n_candidates / 2) as i32;
        let miss = |intent: u8| {
            // a candidate hits iff it is clicked and shares the trigger's category
            let q = self.true_click_prob(user, intent, &anchor, &anchor);
            (1.0 - q).powi(from_trigger) * (1.0 - pt * q).powi(from_pref)
        };
        mixture(theta, 1.0 - miss(1), 1.0 - miss(0))
    }
}

/// `θ·p₁ + (1−θ)·p₀`.
pub fn mixture(theta: f64, p1: f64, p0: f64) -> f64 {
    theta * p1 + (1.0 - theta) * p0
}

/// Samples a population. Deterministic in `cfg.rng_seed`.
pub fn generate_world(cfg: &GenConfig) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(0);

    let n_cat = cfg.categories;
    let item_category: Vec<usize> = (0..cfg.items)
        .map(|i| if i < n_cat { i + 1 } else { rng.random_range(1..=n_cat) })
        .collect();

    let gamma = Gamma::new(cfg.dirichlet_alpha, 1.0).expect("positive concentration");
    let user_pref: Vec<Vec<f64>> = (0..cfg.users)
        .map(|_| {
            if n_cat == 1 {
                return vec![1.0];
            }
            let draws: Vec<f64> = (0..n_cat).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            if total > 0.0 {
                draws.iter().map(|d| d / total).collect()
            } else {
                vec![1.0 / n_cat as f64; n_cat]
            }
        })
        .collect();

    let visits = LogNormal::new(cfg.visit_median.ln(), cfg.visit_sigma).expect("valid log-normal");
    let user_visit_rate: Vec<f64> = (0..cfg.users).map(|_| visits.sample(&mut rng)).collect();
    let trigger_affinity = user_visit_rate
        .iter()
        .map(|&v| cfg.affinity.affinity(v))
        .collect();
    let user_age = (0..cfg.users).map(|_| rng.random_range(1..=cfg.age_buckets)).collect();
    let user_occupation = (0..cfg.users)
        .map(|_| rng.random_range(1..=cfg.occupation_buckets))
        .collect();
    let stay_noise = LogNormal::new(0.0, 0.8).expect("valid log-normal");
    let user_stay_seconds = user_visit_rate
        .iter()
        .map(|&v| 20.0 * (1.0 + v).ln() * stay_noise.sample(&mut rng))
        .collect();

    World {
        n_users: cfg.users,
        n_items: cfg.items,
        n_categories: n_cat,
        item_category,
        user_pref,
        user_visit_rate,
        trigger_affinity,
        user_age,
        user_occupation,
        user_stay_seconds,
        affinity_curve: cfg.affinity,
        click: cfg.click,
        rng_seed: cfg.rng_seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_cfg() -> GenConfig {
        GenConfig {
            users: 300,
            items: 200,
            categories: 8,
            sessions: 100,
            ..GenConfig::default()
        }
    }

    #[test]
    fn same_seed_same_world() {
        let a = serde_json::to_string(&generate_world(&small_cfg())).unwrap();
        let b = serde_json::to_string(&generate_world(&small_cfg())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_category_means_degenerate_preferences() {
        let w = generate_world(&GenConfig {
            categories: 1,
            ..small_cfg()
        });
        assert!(w.user_pref.iter().all(|p| p == &vec![1.0]));
    }

    #[test]
    fn preferences_are_distributions() {
        let w = generate_world(&small_cfg());
        for p in &w.user_pref {
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        assert!(w.items_by_category().iter().all(|c| !c.is_empty()));
    }

    #[test]
    fn affinity_strictly_decreases_with_visits() {
        let curve = AffinityCurve::default();
        let rates = [0.0, 0.5, 1.0, 3.0, 7.0, 15.0, 30.0, 100.0];
        for w in rates.windows(2) {
            assert!(curve.affinity(w[0]) > curve.affinity(w[1]));
        }
    }

    #[test]
    fn heavy_visitors_are_less_trigger_driven() {
        let w = generate_world(&GenConfig {
            users: 3000,
            ..small_cfg()
        });
        let mean = |f: &dyn Fn(f64) -> bool| {
            let sel: Vec<f64> = w
                .user_visit_rate
                .iter()
                .zip(&w.trigger_affinity)
                .filter(|(v, _)| f(**v))
                .map(|(_, t)| *t)
                .collect();
            assert!(!sel.is_empty());
            sel.iter().sum::<f64>() / sel.len() as f64
        };
        assert!(mean(&|v| v > 15.0) < mean(&|v| v < 3.0));
    }

    fn one_user_world(pref: Vec<f64>) -> World {
        let mut w = generate_world(&GenConfig {
            users: 1,
            items: pref.len(),
            categories: pref.len(),
            ..small_cfg()
        });
        w.user_pref = vec![pref];
        w
    }

    #[test]
    fn click_prob_closed_form() {
        let w = one_user_world(vec![0.0, 1.0]);
        let trig = ItemRef { item_id: 1, category_id: 1, timestamp: 0 };
        let cand = ItemRef { item_id: 1, category_id: 1, timestamp: 0 };
        assert_abs_diff_eq!(w.true_click_prob(1, 1, &cand, &trig), sigmoid(0.5), epsilon = 1e-15);
        // σ(2.5·1·2/2 − 2) = σ(0.5)
        let other = ItemRef { item_id: 2, category_id: 2, timestamp: 0 };
        assert_abs_diff_eq!(w.true_click_prob(1, 0, &other, &trig), sigmoid(0.5), epsilon = 1e-15);
    }

    #[test]
    fn habit_intent_ignores_trigger() {
        let w = one_user_world(vec![0.3, 0.7]);
        let cand = ItemRef { item_id: 2, category_id: 2, timestamp: 0 };
        let t1 = ItemRef { item_id: 1, category_id: 1, timestamp: 0 };
        let t2 = ItemRef { item_id: 2, category_id: 2, timestamp: 0 };
        assert_eq!(w.true_click_prob(1, 0, &cand, &t1), w.true_click_prob(1, 0, &cand, &t2));
        assert_ne!(w.true_click_prob(1, 1, &cand, &t1), w.true_click_prob(1, 1, &cand, &t2));
    }

    #[test]
    fn zero_trigger_weight_removes_trigger_dependence() {
        let mut w = one_user_world(vec![0.3, 0.7]);
        w.click.w_trig = 0.0;
        let cand = ItemRef { item_id: 2, category_id: 2, timestamp: 0 };
        let t1 = ItemRef { item_id: 1, category_id: 1, timestamp: 0 };
        let t2 = ItemRef { item_id: 2, category_id: 2, timestamp: 0 };
        assert_eq!(w.true_click_prob(1, 1, &cand, &t1), w.true_click_prob(1, 1, &cand, &t2));
        // Remaining difference is the bias and preference scaling only.
        let p1 = w.true_click_prob(1, 1, &cand, &t1);
        assert_abs_diff_eq!(p1, sigmoid(2.5 * 0.7 - 2.5), epsilon = 1e-15);
    }

    #[test]
    fn mixture_endpoints() {
        assert_eq!(mixture(1.0, 0.8, 0.2), 0.8);
        assert_eq!(mixture(0.0, 0.8, 0.2), 0.2);
        assert_abs_diff_eq!(mixture(0.5, 0.8, 0.2), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn bayes_ctr_uses_session_intent() {
        let mut w = one_user_world(vec![0.5, 0.5]);
        let cand = ItemRef { item_id: 2, category_id: 2, timestamp: 0 };
        let trig = ItemRef { item_id: 1, category_id: 1, timestamp: 0 };
        w.trigger_affinity = vec![1.0];
        // θ' = clamp(1 · (0.5 + 0.5·2/2)) = 1
        assert_eq!(w.bayes_ctr(1, &cand, &trig), w.true_click_prob(1, 1, &cand, &trig));
        w.trigger_affinity = vec![0.0];
        assert_eq!(w.bayes_ctr(1, &cand, &trig), w.true_click_prob(1, 0, &cand, &trig));
    }
}
