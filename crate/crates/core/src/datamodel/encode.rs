//! Encoding of session records into padded, masked index batches.

use serde::{Deserialize, Serialize};

use super::features::{visit_bucket, NUM_CROSS_BUCKETS};
use super::record::{ItemRef, SessionRecord};
use crate::error::{Error, Result};

/// Vocabulary sizes per namespace. Index 0 is reserved for padding/unknown in
/// every namespace, so a size `n` admits real ids `1..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocab {
    pub user: usize,
    pub item: usize,
    pub category: usize,
    pub age: usize,
    pub occupation: usize,
    pub visit: usize,
    pub stay: usize,
}

impl Vocab {
    /// Vocabulary for `n_*` real entities plus the padding slot.
    pub fn for_counts(users: usize, items: usize, categories: usize, ages: usize, occupations: usize) -> Self {
        Vocab {
            user: users + 1,
            item: items + 1,
            category: categories + 1,
            age: ages + 1,
            occupation: occupations + 1,
            visit: NUM_CROSS_BUCKETS + 1,
            stay: NUM_CROSS_BUCKETS + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("user", self.user),
            ("item", self.item),
            ("category", self.category),
            ("age", self.age),
            ("occupation", self.occupation),
            ("visit", self.visit),
            ("stay", self.stay),
        ];
        for (name, size) in sizes {
            if size < 2 {
                return Err(Error::Config(format!("vocab `{name}` must have size >= 2")));
            }
        }
        Ok(())
    }
}

/// What to do with ids outside the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OovPolicy {
    Reject,
    /// Map to the shared unknown index 0 (inference on unseen entities).
    MapToUnknown,
}

/// Sequence length caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeqCaps {
    pub short: usize,
    pub long: usize,
}

impl Default for SeqCaps {
    fn default() -> Self {
        SeqCaps { short: 20, long: 100 }
    }
}

/// Integer-indexed mini-batch.
///
/// Every `(session, candidate)` pair is a row. Fields that do not depend on the
/// candidate are stored once per session and referenced from rows through
/// `row_session`; `session_*` accessors return them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub k_short: usize,
    pub k_long: usize,

    pub user: Vec<usize>,
    pub age: Vec<usize>,
    pub occupation: Vec<usize>,
    pub visit: Vec<usize>,
    pub stay: Vec<usize>,
    pub trigger_item: Vec<usize>,
    pub trigger_cat: Vec<usize>,
    /// `[sessions × k_short]`, right-padded with 0.
    pub short_items: Vec<usize>,
    pub short_cats: Vec<usize>,
    pub short_mask: Vec<bool>,
    /// `[sessions × k_long]`, right-padded with 0.
    pub long_items: Vec<usize>,
    pub long_cats: Vec<usize>,
    pub long_mask: Vec<bool>,
    pub session_intent: Vec<f64>,

    pub row_session: Vec<usize>,
    pub target_item: Vec<usize>,
    pub target_cat: Vec<usize>,
    pub click: Vec<f64>,
}

impl EncodedBatch {
    pub fn num_sessions(&self) -> usize {
        self.user.len()
    }

    pub fn num_rows(&self) -> usize {
        self.row_session.len()
    }

    /// Intent label replicated onto each row.
    pub fn row_intent(&self) -> Vec<f64> {
        self.row_session.iter().map(|&s| self.session_intent[s]).collect()
    }

    /// First row index of each session, in session order.
    pub fn session_first_rows(&self) -> Vec<usize> {
        let mut first = vec![usize::MAX; self.num_sessions()];
        for (r, &s) in self.row_session.iter().enumerate() {
            if first[s] == usize::MAX {
                first[s] = r;
            }
        }
        first
    }

    /// `(item, category)` pairs of the non-padded short sequence of a session.
    pub fn decode_short(&self, session: usize) -> Vec<(usize, usize)> {
        decode(&self.short_items, &self.short_cats, &self.short_mask, session, self.k_short)
    }

    pub fn decode_long(&self, session: usize) -> Vec<(usize, usize)> {
        decode(&self.long_items, &self.long_cats, &self.long_mask, session, self.k_long)
    }

    /// A new batch containing the given sessions (in the given order) and all
    /// of their rows.
    pub fn select_sessions(&self, sessions: &[usize]) -> EncodedBatch {
        let mut rows_of = vec![Vec::new(); self.num_sessions()];
        for (r, &s) in self.row_session.iter().enumerate() {
            rows_of[s].push(r);
        }
        let pick = |v: &Vec<usize>| sessions.iter().map(|&s| v[s]).collect::<Vec<_>>();
        let span = |v: &[usize], k: usize| -> Vec<usize> {
            sessions.iter().flat_map(|&s| v[s * k..(s + 1) * k].iter().copied()).collect()
        };
        let span_mask = |v: &[bool], k: usize| -> Vec<bool> {
            sessions.iter().flat_map(|&s| v[s * k..(s + 1) * k].iter().copied()).collect()
        };
        let mut out = EncodedBatch {
            k_short: self.k_short,
            k_long: self.k_long,
            user: pick(&self.user),
            age: pick(&self.age),
            occupation: pick(&self.occupation),
            visit: pick(&self.visit),
            stay: pick(&self.stay),
            trigger_item: pick(&self.trigger_item),
            trigger_cat: pick(&self.trigger_cat),
            short_items: span(&self.short_items, self.k_short),
            short_cats: span(&self.short_cats, self.k_short),
            short_mask: span_mask(&self.short_mask, self.k_short),
            long_items: span(&self.long_items, self.k_long),
            long_cats: span(&self.long_cats, self.k_long),
            long_mask: span_mask(&self.long_mask, self.k_long),
            session_intent: sessions.iter().map(|&s| self.session_intent[s]).collect(),
            row_session: Vec::new(),
            target_item: Vec::new(),
            target_cat: Vec::new(),
            click: Vec::new(),
        };
        for (new_s, &s) in sessions.iter().enumerate() {
            for &r in &rows_of[s] {
                out.row_session.push(new_s);
                out.target_item.push(self.target_item[r]);
                out.target_cat.push(self.target_cat[r]);
                out.click.push(self.click[r]);
            }
        }
        out
    }
}

fn decode(items: &[usize], cats: &[usize], mask: &[bool], s: usize, k: usize) -> Vec<(usize, usize)> {
    (s * k..(s + 1) * k)
        .filter(|&i| mask[i])
        .map(|i| (items[i], cats[i]))
        .collect()
}

struct Checker {
    policy: OovPolicy,
    row: usize,
}

impl Checker {
    fn id(&self, field: &str, id: usize, size: usize) -> Result<usize> {
        if id < size {
            Ok(id)
        } else if self.policy == OovPolicy::MapToUnknown {
            Ok(0)
        } else {
            Err(Error::Encoding {
                field: field.to_string(),
                row: self.row,
                message: format!("id {id} outside vocabulary of size {size}"),
            })
        }
    }

    fn item(&self, field: &str, it: &ItemRef, vocab: &Vocab) -> Result<(usize, usize)> {
        Ok((
            self.id(&format!("{field}.item_id"), it.item_id, vocab.item)?,
            self.id(&format!("{field}.category_id"), it.category_id, vocab.category)?,
        ))
    }
}

/// Encodes records into one batch. Sequences keep their `cap` most recent
/// entries; rows follow input order with candidates in listed order.
pub fn encode_sessions(
    records: &[SessionRecord],
    vocab: &Vocab,
    caps: SeqCaps,
    policy: OovPolicy,
) -> Result<EncodedBatch> {
    if caps.short == 0 || caps.long == 0 {
        return Err(Error::Config("sequence caps must be >= 1".into()));
    }
    let n = records.len();
    let mut b = EncodedBatch {
        k_short: caps.short,
        k_long: caps.long,
        user: Vec::with_capacity(n),
        age: Vec::with_capacity(n),
        occupation: Vec::with_capacity(n),
        visit: Vec::with_capacity(n),
        stay: Vec::with_capacity(n),
        trigger_item: Vec::with_capacity(n),
        trigger_cat: Vec::with_capacity(n),
        short_items: vec![0; n * caps.short],
        short_cats: vec![0; n * caps.short],
        short_mask: vec![false; n * caps.short],
        long_items: vec![0; n * caps.long],
        long_cats: vec![0; n * caps.long],
        long_mask: vec![false; n * caps.long],
        session_intent: Vec::with_capacity(n),
        row_session: Vec::new(),
        target_item: Vec::new(),
        target_cat: Vec::new(),
        click: Vec::new(),
    };
    for (row, rec) in records.iter().enumerate() {
        let ck = Checker { policy, row };
        if rec.candidates.is_empty() {
            return Err(Error::Encoding {
                field: "candidates".into(),
                row,
                message: "at least one candidate required".into(),
            });
        }
        if rec.intent_label > 1 {
            return Err(Error::Encoding {
                field: "intent_label".into(),
                row,
                message: format!("label {} not in {{0,1}}", rec.intent_label),
            });
        }
        b.user.push(ck.id("user_id", rec.user_id, vocab.user)?);
        b.age.push(ck.id("user_profile.age_bucket", rec.user_profile.age_bucket, vocab.age)?);
        b.occupation.push(ck.id(
            "user_profile.occupation_bucket",
            rec.user_profile.occupation_bucket,
            vocab.occupation,
        )?);
        b.visit.push(ck.id(
            "cross_features.monthly_visit_count",
            visit_bucket(rec.cross_features.monthly_visit_count) + 1,
            vocab.visit,
        )?);
        b.stay.push(ck.id(
            "cross_features.avg_stay_duration_bucket",
            rec.cross_features.avg_stay_duration_bucket + 1,
            vocab.stay,
        )?);
        let (ti, tc) = ck.item("trigger", &rec.trigger, vocab)?;
        b.trigger_item.push(ti);
        b.trigger_cat.push(tc);
        for (p, it) in rec.short_seq.iter().take(caps.short).enumerate() {
            let (i, c) = ck.item("short_seq", it, vocab)?;
            let at = row * caps.short + p;
            b.short_items[at] = i;
            b.short_cats[at] = c;
            b.short_mask[at] = true;
        }
        for (p, it) in rec.long_seq.iter().take(caps.long).enumerate() {
            let (i, c) = ck.item("long_seq", it, vocab)?;
            let at = row * caps.long + p;
            b.long_items[at] = i;
            b.long_cats[at] = c;
            b.long_mask[at] = true;
        }
        b.session_intent.push(f64::from(rec.intent_label));
        for cand in &rec.candidates {
            if cand.click_label > 1 {
                return Err(Error::Encoding {
                    field: "candidates.click_label".into(),
                    row,
                    message: format!("label {} not in {{0,1}}", cand.click_label),
                });
            }
            let (i, c) = ck.item("candidates.item", &cand.item, vocab)?;
            b.row_session.push(row);
            b.target_item.push(i);
            b.target_cat.push(c);
            b.click.push(f64::from(cand.click_label));
        }
    }
    Ok(b)
}
