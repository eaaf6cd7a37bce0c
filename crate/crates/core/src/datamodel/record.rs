use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An item reference with its leaf category and an event time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemRef {
    pub item_id: usize,
    pub category_id: usize,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserProfile {
    pub age_bucket: usize,
    pub occupation_bucket: usize,
}

/// User × mini-app cross features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossFeatures {
    pub monthly_visit_count: u32,
    pub avg_stay_duration_bucket: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub item: ItemRef,
    pub click_label: u8,
}

/// One mini-app entry: who entered, through which trigger, what they had done
/// before, what was shown afterwards and what they clicked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub user_id: usize,
    pub user_profile: UserProfile,
    pub cross_features: CrossFeatures,
    pub trigger: ItemRef,
    /// Clicks within the past 14 days, most recent first.
    pub short_seq: Vec<ItemRef>,
    /// Clicks within the past 180 days, most recent first.
    pub long_seq: Vec<ItemRef>,
    pub candidates: Vec<Candidate>,
    pub post_entry_clicks: Vec<ItemRef>,
    pub intent_label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_intent: Option<u8>,
}

/// Posterior entering-intention label: 1 iff some post-entry click hits the
/// trigger item or its leaf category.
pub fn posterior_intention_label(trigger: &ItemRef, post_entry_clicks: &[ItemRef]) -> u8 {
    post_entry_clicks
        .iter()
        .any(|c| c.item_id == trigger.item_id || c.category_id == trigger.category_id)
        .into()
}

fn sorted_descending(seq: &[ItemRef]) -> bool {
    seq.windows(2).all(|w| w[0].timestamp >= w[1].timestamp)
}

impl SessionRecord {
    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Validation("session has no candidates".into()));
        }
        if self.candidates.iter().any(|c| c.click_label > 1) {
            return Err(Error::Validation("click_label must be 0 or 1".into()));
        }
        if self.intent_label > 1 || self.latent_intent.is_some_and(|l| l > 1) {
            return Err(Error::Validation("intent labels must be 0 or 1".into()));
        }
        if !sorted_descending(&self.short_seq) || !sorted_descending(&self.long_seq) {
            return Err(Error::Validation(
                "behavior sequences must be sorted most-recent-first".into(),
            ));
        }
        if let (Some(s), Some(l)) = (self.short_seq.last(), self.long_seq.last()) {
            if s.timestamp < l.timestamp {
                return Err(Error::Validation(
                    "short_seq extends beyond the long_seq window".into(),
                ));
            }
        }
        if self.intent_label != posterior_intention_label(&self.trigger, &self.post_entry_clicks) {
            return Err(Error::Validation(
                "intent_label disagrees with the posterior labeling rule".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(id: usize, cat: usize) -> ItemRef {
        ItemRef {
            item_id: id,
            category_id: cat,
            timestamp: 0,
        }
    }

    #[test]
    fn clicking_the_trigger_itself_labels_one() {
        assert_eq!(posterior_intention_label(&item(4, 2), &[item(9, 7), item(4, 2)]), 1);
    }

    #[test]
    fn same_category_click_labels_one() {
        assert_eq!(posterior_intention_label(&item(4, 2), &[item(11, 2)]), 1);
    }

    #[test]
    fn no_clicks_labels_zero() {
        assert_eq!(posterior_intention_label(&item(4, 2), &[]), 0);
    }

    #[test]
    fn other_category_clicks_label_zero() {
        assert_eq!(posterior_intention_label(&item(4, 2), &[item(5, 3), item(6, 1)]), 0);
    }

    fn arb_items() -> impl Strategy<Value = Vec<ItemRef>> {
        prop::collection::vec((1usize..30, 1usize..6), 0..12)
            .prop_map(|v| v.into_iter().map(|(i, c)| item(i, c)).collect())
    }

    proptest! {
        #[test]
        fn label_is_order_insensitive(clicks in arb_items(), trig in (1usize..30, 1usize..6), seed in any::<u64>()) {
            let trigger = item(trig.0, trig.1);
            let mut shuffled = clicks.clone();
            // Deterministic permutation from the seed.
            let n = shuffled.len();
            if n > 1 {
                for i in 0..n {
                    let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % n as u64) as usize;
                    shuffled.swap(i, j);
                }
            }
            prop_assert_eq!(
                posterior_intention_label(&trigger, &clicks),
                posterior_intention_label(&trigger, &shuffled)
            );
        }

        #[test]
        fn adding_trigger_category_click_never_lowers_label(clicks in arb_items(), trig in (1usize..30, 1usize..6), other in 1usize..30) {
            let trigger = item(trig.0, trig.1);
            let before = posterior_intention_label(&trigger, &clicks);
            let mut more = clicks.clone();
            more.push(item(other, trig.1));
            let after = posterior_intention_label(&trigger, &more);
            prop_assert!(after >= before);
            prop_assert_eq!(after, 1);
        }
    }
}
