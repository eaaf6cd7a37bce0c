//! Loss, metrics, the Adam training loop and evaluation.

mod eval;
mod loss;
mod metrics;
mod train;

pub use eval::{evaluate, evaluate_oracle, oracle_scores, predict_batch, EvalReport};
pub use loss::{bce, bce_grad, log_loss, multitask_loss, multitask_loss_grad, LossGrad, PROB_CLAMP};
pub use metrics::{accuracy, auc, auc_counts, majority_baseline};
pub use train::{batch_loss, loss_and_grads, pack_sessions, train, train_from, MetricsLine, TrainConfig, TrainOutcome};
