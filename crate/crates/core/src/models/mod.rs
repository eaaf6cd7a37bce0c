//! Intention net, trigger-aware net (TAN), trigger-free net (TFN) and their
//! fusion, plus the ablation variants.
//!
//! All sub-nets share one set of embedding tables. Each interest-extraction
//! stack pairs a short-term and a long-term attention with separate
//! projections; the long-term one first hard-searches the long sequence for
//! items in the anchor's category.

mod attention;
mod checkpoint;
mod config;
mod net;

pub use attention::{embed_items, hard_search, target_attention, CATEGORY_TABLE, ITEM_TABLE};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Variant};
pub use net::{
    DianModel, ForwardCache, ForwardTrace, InitKind, AGE_TABLE, INTENT_MLP, OCCUPATION_TABLE,
    STAY_TABLE, TAN_MLP, TAN_TARGET_LONG, TAN_TARGET_SHORT, TAN_TRIGGER_LONG, TAN_TRIGGER_SHORT,
    TFN_MLP, TFN_TARGET_LONG, TFN_TARGET_SHORT, USER_TABLE, VISIT_TABLE,
};
