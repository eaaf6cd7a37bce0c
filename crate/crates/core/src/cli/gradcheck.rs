//! Whole-model gradient check on a tiny generated batch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::datamodel::{encode_sessions, posterior_intention_label, OovPolicy, SeqCaps};
use crate::error::{Error, Result};
use crate::models::DianModel;
use crate::numerics::{finite_diff_gradcheck, sample_coordinates, GradCheckReport, DEFAULT_PERTURBATION};
use crate::synthgen::{generate_sessions, generate_world, Sidecar};
use crate::training::{batch_loss, loss_and_grads};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

const SESSIONS: usize = 2;
const CANDIDATES: usize = 2;
const EMBED_RANGE: f64 = 0.5;

/// Builds a 4-row batch from the configured generator, computes analytic
/// gradients of the full training loss and compares `n_coords` of them
/// (spread over every table) against central differences.
pub fn run_gradcheck(cfg: &RunConfig, n_coords: usize, seed: u64, inject_fault: bool) -> Result<GradCheckReport> {
    cfg.model.validate()?;
    cfg.gen.validate()?;
    let world = generate_world(&cfg.gen);
    let mut records = generate_sessions(&world, &cfg.gen, 0..SESSIONS);
    for r in &mut records {
        r.candidates.truncate(CANDIDATES);
        r.post_entry_clicks = r.candidates.iter().filter(|c| c.click_label == 1).map(|c| c.item).collect();
        r.intent_label = posterior_intention_label(&r.trigger, &r.post_entry_clicks);
    }
    let vocab = Sidecar::for_world(&world, &cfg.gen).vocab;
    let model = DianModel::new(cfg.model.clone(), vocab)?;
    let caps = SeqCaps {
        short: cfg.model.k_short,
        long: cfg.model.k_long,
    };
    let batch = encode_sessions(&records, &model.vocab, caps, OovPolicy::Reject)?;
    let alpha = cfg.train.alpha;

    // The training init keeps embeddings within ±0.05, which leaves some
    // attention gradients near 1e-9, below central-difference roundoff.
    // Checking at a wider random point exercises the same code paths.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = model.init_params();
    for (name, entry) in store.iter_mut() {
        if name.starts_with("emb.") {
            for v in entry.value.data_mut() {
                *v = rng.random_range(-EMBED_RANGE..EMBED_RANGE);
            }
        }
    }
    let (_, _, grads) = loss_and_grads(&model, &store, &batch, alpha)?;
    store.accumulate(&grads)?;

    let coords = sample_coordinates(&store, n_coords, |name| name.starts_with("emb."), &mut rng);
    if inject_fault {
        let target = coords
            .iter()
            .find(|c| store.grad(&c.name).map(|g| g.data()[c.index] != 0.0).unwrap_or(false))
            .or(coords.first())
            .ok_or_else(|| Error::GradCheck("no coordinates to corrupt".into()))?;
        let g = &mut store.entry_mut(&target.name)?.grad.data_mut()[target.index];
        *g = *g * 1.5 + 1e-3;
    }
    finite_diff_gradcheck(
        &mut store,
        |s| batch_loss(&model, s, &batch, alpha),
        &coords,
        DEFAULT_PERTURBATION,
    )
}
