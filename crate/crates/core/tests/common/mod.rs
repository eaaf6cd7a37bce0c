//! Small worlds and models shared by the integration tests.
#![allow(dead_code)]

use dian::datamodel::{encode_sessions, EncodedBatch, OovPolicy, SeqCaps, SessionRecord, Vocab};
use dian::models::{DianModel, ModelConfig, Variant};
use dian::synthgen::{generate_dataset, generate_world, GenConfig, Sidecar, World};

pub fn small_gen(sessions: usize, seed: u64) -> GenConfig {
    GenConfig {
        users: 60,
        items: 80,
        categories: 5,
        sessions,
        short_len_max: 12,
        long_len_min: 5,
        long_len_max: 40,
        rng_seed: seed,
        ..GenConfig::default()
    }
}

pub struct Fixture {
    pub world: World,
    pub records: Vec<SessionRecord>,
    pub vocab: Vocab,
}

pub fn fixture(cfg: &GenConfig) -> Fixture {
    let world = generate_world(cfg);
    let records = generate_dataset(&world, cfg);
    let vocab = Sidecar::for_world(&world, cfg).vocab;
    Fixture { world, records, vocab }
}

pub fn small_model_config(variant: Variant, init_seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        init_seed,
        mlp_hidden: vec![32, 16],
        ..ModelConfig::default()
    }
}

pub fn small_model(variant: Variant, vocab: Vocab, init_seed: u64) -> DianModel {
    DianModel::new(small_model_config(variant, init_seed), vocab).unwrap()
}

pub fn encode(records: &[SessionRecord], vocab: &Vocab) -> EncodedBatch {
    encode_sessions(records, vocab, SeqCaps::default(), OovPolicy::Reject).unwrap()
}
