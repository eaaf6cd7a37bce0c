//! Intention-aware click-through-rate prediction for trigger-induced
//! recommendation.
//!
//! A user enters a mini-app by clicking a trigger item. The click probability
//! of each follow-up item is modeled as a mixture over why the user entered:
//!
//! ```text
//! P(click) = P(intent=1)·P(click | intent=1) + P(intent=0)·P(click | intent=0)
//! ```
//!
//! [`models`] estimates the three factors with an intention net, a
//! trigger-aware net and a trigger-free net over shared embeddings;
//! [`synthgen`] produces data whose true click process has exactly this form.

pub mod cli;
pub mod datamodel;
pub mod error;
pub mod models;
pub mod numerics;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
