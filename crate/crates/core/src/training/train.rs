//! Mini-batch Adam training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalReport};
use super::loss::multitask_loss_grad;
use crate::datamodel::EncodedBatch;
use crate::error::{Error, Result};
use crate::models::{DianModel, ForwardTrace};
use crate::numerics::{adam_step, AdamConfig, Grads, ParamStore};
use crate::synthgen::World;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Upper bound on rows per step; whole sessions are packed greedily.
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the intention loss term.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub shuffle_seed: u64,
    /// Write a metrics line every this many steps (0: only the final line).
    pub eval_every: usize,
    /// Stop after this many steps (0: no limit).
    pub max_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            batch_size: 256,
            epochs: 2,
            learning_rate: adam.learning_rate,
            alpha: 0.1,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.epsilon,
            shuffle_seed: 0,
            eval_every: 500,
            max_steps: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be positive".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("train.alpha must be a finite non-negative number".into()));
        }
        self.adam().validate()
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub step: usize,
    pub epoch: usize,
    /// Mean training loss over the steps since the previous line.
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub store: ParamStore,
    pub steps: usize,
    pub history: Vec<MetricsLine>,
}

/// Loss, trace and parameter gradients for one batch.
pub fn loss_and_grads(
    model: &DianModel,
    store: &ParamStore,
    batch: &EncodedBatch,
    alpha: f64,
) -> Result<(f64, ForwardTrace, Grads)> {
    let (trace, cache) = model.forward_with_cache(store, batch)?;
    let lg = multitask_loss_grad(&trace, &batch.click, &batch.row_intent(), alpha)?;
    let grads = model.backward(store, batch, &cache, &trace, &lg.d_y_hat, lg.d_y_int.as_deref())?;
    Ok((lg.loss, trace, grads))
}

/// Loss only, no gradients.
pub fn batch_loss(model: &DianModel, store: &ParamStore, batch: &EncodedBatch, alpha: f64) -> Result<f64> {
    let trace = model.forward(store, batch)?;
    super::loss::multitask_loss(&trace, &batch.click, &batch.row_intent(), alpha)
}

/// Groups consecutive sessions (in `order`) into batches of at most
/// `batch_size` rows. A session larger than the cap gets a batch of its own.
pub fn pack_sessions(batch: &EncodedBatch, order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let rows_per = {
        let mut v = vec![0usize; batch.num_sessions()];
        for &s in &batch.row_session {
            v[s] += 1;
        }
        v
    };
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut cur_rows = 0;
    for &s in order {
        if !cur.is_empty() && cur_rows + rows_per[s] > batch_size {
            out.push(std::mem::take(&mut cur));
            cur_rows = 0;
        }
        cur.push(s);
        cur_rows += rows_per[s];
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Trains from the model's seeded initialisation.
pub fn train(
    model: &DianModel,
    data: &EncodedBatch,
    eval_set: Option<&EncodedBatch>,
    world: Option<&World>,
    cfg: &TrainConfig,
    on_line: impl FnMut(&MetricsLine) -> Result<()>,
) -> Result<TrainOutcome> {
    let store = model.init_params();
    train_from(model, store, data, eval_set, world, cfg, on_line)
}

/// Trains starting from an existing parameter store.
pub fn train_from(
    model: &DianModel,
    mut store: ParamStore,
    data: &EncodedBatch,
    eval_set: Option<&EncodedBatch>,
    world: Option<&World>,
    cfg: &TrainConfig,
    mut on_line: impl FnMut(&MetricsLine) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.check_store(&store)?;
    if data.num_sessions() == 0 {
        return Err(Error::Validation("training split is empty".into()));
    }
    let adam = cfg.adam();
    let mut history = Vec::new();
    let mut step = 0usize;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut epoch = 0;
    let mut emit = |step: usize, epoch: usize, loss_sum: &mut f64, loss_count: &mut usize, store: &ParamStore| -> Result<()> {
        let eval = match eval_set {
            Some(es) => Some(evaluate(model, store, es, world)?),
            None => None,
        };
        let line = MetricsLine {
            step,
            epoch,
            train_loss: *loss_sum / (*loss_count).max(1) as f64,
            eval,
        };
        *loss_sum = 0.0;
        *loss_count = 0;
        on_line(&line)?;
        history.push(line);
        Ok(())
    };
    'epochs: while epoch < cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..data.num_sessions()).collect();
        order.shuffle(&mut rng);
        for (b, sessions) in pack_sessions(data, &order, cfg.batch_size).iter().enumerate() {
            let sub = data.select_sessions(sessions);
            let (loss, _, grads) = loss_and_grads(model, &store, &sub, cfg.alpha)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step, batch: b });
            }
            store.accumulate(&grads)?;
            adam_step(&mut store, &adam);
            step += 1;
            loss_sum += loss;
            loss_count += 1;
            if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
                emit(step, epoch, &mut loss_sum, &mut loss_count, &store)?;
            }
            if cfg.max_steps > 0 && step >= cfg.max_steps {
                break 'epochs;
            }
        }
        epoch += 1;
    }
    emit(step, epoch.min(cfg.epochs.saturating_sub(1)), &mut loss_sum, &mut loss_count, &store)?;
    Ok(TrainOutcome { store, steps: step, history })
}
