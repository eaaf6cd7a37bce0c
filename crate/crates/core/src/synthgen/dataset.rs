use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::GenConfig;
use super::world::World;
use crate::datamodel::{
    posterior_intention_label, Candidate, CrossFeatures, ItemRef, SessionRecord, UserProfile, Vocab,
};

const DAY: i64 = 86_400;
const SHORT_WINDOW: i64 = 14 * DAY;
const LONG_WINDOW: i64 = 180 * DAY;
/// Entry time of session 0; later sessions are one second apart.
const EPOCH: i64 = 200 * DAY;

/// Per-session random stream, independent of how sessions are scheduled.
fn session_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn sample_item<R: Rng>(rng: &mut R, by_cat: &[Vec<usize>], cat: usize, ts: i64) -> ItemRef {
    ItemRef {
        item_id: *by_cat[cat - 1].choose(rng).expect("every category has items"),
        category_id: cat,
        timestamp: ts,
    }
}

struct Sampler<'a> {
    world: &'a World,
    cfg: &'a GenConfig,
    users: WeightedIndex<f64>,
    prefs: Vec<WeightedIndex<f64>>,
    by_cat: Vec<Vec<usize>>,
}

impl<'a> Sampler<'a> {
    fn new(world: &'a World, cfg: &'a GenConfig) -> Self {
        let users = WeightedIndex::new(&world.user_visit_rate).expect("positive visit rates");
        let prefs = world
            .user_pref
            .iter()
            .map(|p| WeightedIndex::new(p).expect("preference has mass"))
            .collect();
        Sampler {
            world,
            cfg,
            users,
            prefs,
            by_cat: world.items_by_category(),
        }
    }

    fn pref_category<R: Rng>(&self, rng: &mut R, user: usize) -> usize {
        self.prefs[user - 1].sample(rng) + 1
    }

    fn session(&self, index: usize) -> SessionRecord {
        let world = self.world;
        let mut rng = session_rng(self.cfg.rng_seed, index);
        let now = EPOCH + index as i64;

        let user = self.users.sample(&mut rng) + 1;
        let trig_cat = self.pref_category(&mut rng, user);
        let trigger = sample_item(&mut rng, &self.by_cat, trig_cat, now);
        let theta = world.session_intent_prob(user, trig_cat);
        let latent: u8 = rng.random_bool(theta).into();

        let n = self.cfg.candidates_per_session;
        let candidates: Vec<Candidate> = (0..n)
            .map(|i| {
                let cat = if i < n / 2 {
                    trig_cat
                } else {
                    self.pref_category(&mut rng, user)
                };
                let item = sample_item(&mut rng, &self.by_cat, cat, now);
                let p = world.true_click_prob(user, latent, &item, &trigger);
                Candidate {
                    item,
                    click_label: rng.random_bool(p).into(),
                }
            })
            .collect();
        let post_entry_clicks: Vec<ItemRef> = candidates
            .iter()
            .filter(|c| c.click_label == 1)
            .map(|c| c.item)
            .collect();

        let n_short = rng.random_range(0..=self.cfg.short_len_max);
        let n_old = rng.random_range(self.cfg.long_len_min..=self.cfg.long_len_max);
        let mut short_seq: Vec<ItemRef> = (0..n_short)
            .map(|_| {
                let ts = now - rng.random_range(1..SHORT_WINDOW);
                let cat = self.pref_category(&mut rng, user);
                sample_item(&mut rng, &self.by_cat, cat, ts)
            })
            .collect();
        let older: Vec<ItemRef> = (0..n_old)
            .map(|_| {
                let ts = now - rng.random_range(SHORT_WINDOW..LONG_WINDOW);
                let cat = self.pref_category(&mut rng, user);
                sample_item(&mut rng, &self.by_cat, cat, ts)
            })
            .collect();
        short_seq.sort_by(|a, b| b.timestamp.cmp(&a.timestamp));
        let mut long_seq: Vec<ItemRef> = short_seq.iter().copied().chain(older).collect();
        long_seq.sort_by(|a, b| b.timestamp.cmp(&a.timestamp));

        SessionRecord {
            user_id: user,
            user_profile: UserProfile {
                age_bucket: world.user_age[user - 1],
                occupation_bucket: world.user_occupation[user - 1],
            },
            cross_features: CrossFeatures {
                monthly_visit_count: world.monthly_visit_count(user),
                avg_stay_duration_bucket: world.stay_bucket(user),
            },
            trigger,
            short_seq,
            long_seq,
            intent_label: posterior_intention_label(&trigger, &post_entry_clicks),
            candidates,
            post_entry_clicks,
            latent_intent: Some(latent),
        }
    }
}

/// Generates `cfg.sessions` records. Session `i` depends only on
/// `(cfg.rng_seed, i)` and the world.
pub fn generate_dataset(world: &World, cfg: &GenConfig) -> Vec<SessionRecord> {
    generate_sessions(world, cfg, 0..cfg.sessions)
}

/// Generates the sessions with the given indices.
pub fn generate_sessions(
    world: &World,
    cfg: &GenConfig,
    indices: impl IntoIterator<Item = usize>,
) -> Vec<SessionRecord> {
    let sampler = Sampler::new(world, cfg);
    indices.into_iter().map(|i| sampler.session(i)).collect()
}

/// Splits by session index: the first `1 - test_fraction` train, the rest test.
pub fn split_train_test(mut records: Vec<SessionRecord>, test_fraction: f64) -> (Vec<SessionRecord>, Vec<SessionRecord>) {
    let n_test = ((records.len() as f64) * test_fraction).round() as usize;
    let test = records.split_off(records.len() - n_test.min(records.len()));
    (records, test)
}

/// Everything needed to encode a dataset and recompute its oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub vocab: Vocab,
    /// Item id → category id; slot 0 is padding.
    pub item_category: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_config: Option<GenConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<World>,
}

impl Sidecar {
    pub fn for_world(world: &World, cfg: &GenConfig) -> Self {
        Sidecar {
            vocab: Vocab::for_counts(
                world.n_users,
                world.n_items,
                world.n_categories,
                cfg.age_buckets,
                cfg.occupation_buckets,
            ),
            item_category: world.item_category_map(),
            gen_config: Some(cfg.clone()),
            world: Some(world.clone()),
        }
    }
}
