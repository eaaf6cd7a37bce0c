//! Synthetic trigger-induced-recommendation population with an exact click
//! oracle.
//!
//! Each session is caused either by the trigger (intent 1) or by habit
//! (intent 0); the click process is the two-component mixture over that
//! latent intent, so [`World::bayes_ctr`] is the best possible scorer.

mod config;
mod dataset;
pub mod stats;
mod world;

pub use config::GenConfig;
pub use dataset::{generate_dataset, generate_sessions, split_train_test, Sidecar};
pub use stats::{summarize, DatasetSummary};
pub use world::{generate_world, mixture, AffinityCurve, ClickWeights, World};
