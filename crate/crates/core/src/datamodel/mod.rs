//! Session schema, posterior intention labeling and batch encoding.

mod encode;
mod features;
pub mod io;
mod record;

pub use encode::{encode_sessions, EncodedBatch, OovPolicy, SeqCaps, Vocab};
pub use features::{
    bucketize_cross_features, stay_bucket, visit_bucket, visit_bucket_label, NUM_CROSS_BUCKETS,
    STAY_BOUNDARIES, VISIT_BOUNDARIES,
};
pub use record::{
    posterior_intention_label, Candidate, CrossFeatures, ItemRef, SessionRecord, UserProfile,
};
