use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which sub-nets are assembled and how their outputs are fused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// Intention-gated mixture of the trigger-aware and trigger-free nets.
    Dian,
    TanOnly,
    TfnOnly,
    /// Plain average of the two expert nets, no intention net.
    AvgFusion,
    /// Same network as `Dian`, trained without the auxiliary intention loss.
    NoIntentLoss,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Dian,
        Variant::TanOnly,
        Variant::TfnOnly,
        Variant::AvgFusion,
        Variant::NoIntentLoss,
    ];

    pub fn has_intention_net(self) -> bool {
        matches!(self, Variant::Dian | Variant::NoIntentLoss)
    }

    pub fn has_tan(self) -> bool {
        self != Variant::TfnOnly
    }

    pub fn has_tfn(self) -> bool {
        self != Variant::TanOnly
    }

    /// Weight of the intention loss actually applied for this variant.
    pub fn intent_loss_weight(self, alpha: f64) -> f64 {
        if self == Variant::Dian {
            alpha
        } else {
            0.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Dian => "DIAN",
            Variant::TanOnly => "TAN_ONLY",
            Variant::TfnOnly => "TFN_ONLY",
            Variant::AvgFusion => "AVG_FUSION",
            Variant::NoIntentLoss => "NO_INTENT_LOSS",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant `{s}` (expected one of DIAN, TAN_ONLY, TFN_ONLY, AVG_FUSION, NO_INTENT_LOSS)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Item-id embedding width.
    pub d_id: usize,
    /// Category embedding width; an item vector is `d_id + d_cat` wide.
    pub d_cat: usize,
    pub d_user: usize,
    /// Width of the age and occupation embeddings.
    pub d_profile: usize,
    /// Width of the visit-bucket and stay-bucket embeddings.
    pub d_cross: usize,
    pub n_heads: usize,
    pub mlp_hidden: Vec<usize>,
    pub k_short: usize,
    pub k_long: usize,
    pub hard_search_k: usize,
    pub variant: Variant,
    /// Let the CTR loss reach the intention net through the fusion gate.
    pub intent_grad_through_fusion: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_id: 12,
            d_cat: 4,
            d_user: 8,
            d_profile: 4,
            d_cross: 4,
            n_heads: 4,
            mlp_hidden: vec![64, 32, 16],
            k_short: 20,
            k_long: 100,
            hard_search_k: 10,
            variant: Variant::Dian,
            intent_grad_through_fusion: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Width of an item embedding.
    pub fn d_item(&self) -> usize {
        self.d_id + self.d_cat
    }

    /// Width of the user embedding (id ⊕ age ⊕ occupation).
    pub fn d_user_total(&self) -> usize {
        self.d_user + 2 * self.d_profile
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_id", self.d_id),
            ("d_cat", self.d_cat),
            ("d_user", self.d_user),
            ("d_profile", self.d_profile),
            ("d_cross", self.d_cross),
            ("n_heads", self.n_heads),
            ("k_short", self.k_short),
            ("k_long", self.k_long),
            ("hard_search_k", self.hard_search_k),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be >= 1")));
            }
        }
        if self.d_item() % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "item width d_id + d_cat = {} is not divisible by n_heads = {}",
                self.d_item(),
                self.n_heads
            )));
        }
        if self.mlp_hidden.is_empty() || self.mlp_hidden.contains(&0) {
            return Err(Error::Config("model.mlp_hidden needs positive widths".into()));
        }
        if self.mlp_hidden.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("model.mlp_hidden must be strictly decreasing".into()));
        }
        Ok(())
    }
}
