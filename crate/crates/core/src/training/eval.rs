//! Read-only evaluation of a model or of the generator's oracle scorer.

use serde::{Deserialize, Serialize};

use super::loss::log_loss;
use super::metrics::{accuracy, auc, majority_baseline};
use crate::datamodel::{EncodedBatch, ItemRef};
use crate::error::{Error, Result};
use crate::models::DianModel;
use crate::numerics::ParamStore;
use crate::synthgen::World;

/// Sessions scored per forward pass during evaluation.
const EVAL_CHUNK_SESSIONS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Model variant name, or `ORACLE` for the generator's Bayes scorer.
    pub scorer: String,
    pub rows: usize,
    pub sessions: usize,
    pub ctr_auc: f64,
    pub log_loss: f64,
    /// Intention metrics are computed once per session; absent for variants
    /// without an intention net or when the split has a single intent class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_majority_baseline: Option<f64>,
    /// AUC of the Bayes-optimal scorer on the same rows (needs the world).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_ctr_auc: Option<f64>,
    /// `oracle_ctr_auc − ctr_auc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_gap: Option<f64>,
}

/// Scores every row of `batch` without touching `store`.
pub fn predict_batch(model: &DianModel, store: &ParamStore, batch: &EncodedBatch) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n_s = batch.num_sessions();
    let mut y_hat = Vec::with_capacity(batch.num_rows());
    let mut y_int: Option<Vec<f64>> = model.variant().has_intention_net().then(Vec::new);
    let mut start = 0;
    while start < n_s {
        let end = (start + EVAL_CHUNK_SESSIONS).min(n_s);
        let ids: Vec<usize> = (start..end).collect();
        let chunk = if start == 0 && end == n_s { batch.clone() } else { batch.select_sessions(&ids) };
        let trace = model.forward(store, &chunk)?;
        y_hat.extend_from_slice(&trace.y_hat);
        if let (Some(acc), Some(part)) = (y_int.as_mut(), trace.y_int.as_ref()) {
            acc.extend_from_slice(part);
        }
        start = end;
    }
    Ok((y_hat, y_int))
}

/// Bayes-optimal click probability for every row.
pub fn oracle_scores(world: &World, batch: &EncodedBatch) -> Result<Vec<f64>> {
    (0..batch.num_rows())
        .map(|r| {
            let s = batch.row_session[r];
            let user = batch.user[s];
            if user == 0 || user > world.n_users || batch.target_item[r] == 0 || batch.trigger_item[s] == 0 {
                return Err(Error::Validation(format!("row {r} references an id outside the world")));
            }
            let cand = ItemRef {
                item_id: batch.target_item[r],
                category_id: batch.target_cat[r],
                timestamp: 0,
            };
            let trig = ItemRef {
                item_id: batch.trigger_item[s],
                category_id: batch.trigger_cat[s],
                timestamp: 0,
            };
            Ok(world.bayes_ctr(user, &cand, &trig))
        })
        .collect()
}

/// Full evaluation of a trained (or freshly initialised) model.
pub fn evaluate(model: &DianModel, store: &ParamStore, batch: &EncodedBatch, world: Option<&World>) -> Result<EvalReport> {
    if batch.num_rows() == 0 {
        return Err(Error::Validation("cannot evaluate an empty split".into()));
    }
    let (y_hat, y_int) = predict_batch(model, store, batch)?;
    let ctr_auc = auc(&y_hat, &batch.click)?;
    let mut report = EvalReport {
        scorer: model.variant().to_string(),
        rows: batch.num_rows(),
        sessions: batch.num_sessions(),
        ctr_auc,
        log_loss: log_loss(&y_hat, &batch.click),
        intent_auc: None,
        intent_accuracy: None,
        intent_majority_baseline: None,
        oracle_ctr_auc: None,
        oracle_gap: None,
    };
    if let Some(y_int) = y_int {
        let firsts = batch.session_first_rows();
        let scores: Vec<f64> = firsts.iter().map(|&r| y_int[r]).collect();
        let labels = &batch.session_intent;
        report.intent_auc = auc(&scores, labels).ok();
        report.intent_accuracy = Some(accuracy(&scores, labels, 0.5));
        report.intent_majority_baseline = Some(majority_baseline(labels));
    }
    if let Some(world) = world {
        let oracle = auc(&oracle_scores(world, batch)?, &batch.click)?;
        report.oracle_ctr_auc = Some(oracle);
        report.oracle_gap = Some(oracle - ctr_auc);
    }
    Ok(report)
}

/// Evaluates the generator's Bayes scorer as if it were a model.
pub fn evaluate_oracle(world: &World, batch: &EncodedBatch) -> Result<EvalReport> {
    let scores = oracle_scores(world, batch)?;
    let ctr_auc = auc(&scores, &batch.click)?;
    Ok(EvalReport {
        scorer: "ORACLE".into(),
        rows: batch.num_rows(),
        sessions: batch.num_sessions(),
        ctr_auc,
        log_loss: log_loss(&scores, &batch.click),
        intent_auc: None,
        intent_accuracy: None,
        intent_majority_baseline: None,
        oracle_ctr_auc: Some(ctr_auc),
        oracle_gap: Some(0.0),
    })
}
