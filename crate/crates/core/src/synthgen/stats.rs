//! Summary statistics of generated datasets.

use serde::{Deserialize, Serialize};

use crate::datamodel::{visit_bucket, visit_bucket_label, SessionRecord, NUM_CROSS_BUCKETS};

/// Click rates of trigger-category and other-category candidates for one
/// visit bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketGap {
    pub bucket: usize,
    pub label: String,
    pub sessions: usize,
    pub trigger_cat_ctr: f64,
    pub other_cat_ctr: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub sessions: usize,
    pub rows: usize,
    pub base_ctr: f64,
    pub intent_label_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent_intent_rate: Option<f64>,
    pub gap_by_visit_bucket: Vec<BucketGap>,
    pub gap_spearman_rho: f64,
    pub gap_spearman_p: f64,
}

/// CTR gap per visit bucket; buckets lacking either kind of candidate are skipped.
pub fn ctr_gap_by_visit_bucket(records: &[SessionRecord]) -> Vec<BucketGap> {
    // (sessions, trig clicks, trig rows, other clicks, other rows)
    let mut acc = vec![(0usize, 0usize, 0usize, 0usize, 0usize); NUM_CROSS_BUCKETS];
    for r in records {
        let a = &mut acc[visit_bucket(r.cross_features.monthly_visit_count)];
        a.0 += 1;
        for c in &r.candidates {
            let click = usize::from(c.click_label);
            if c.item.category_id == r.trigger.category_id {
                a.1 += click;
                a.2 += 1;
            } else {
                a.3 += click;
                a.4 += 1;
            }
        }
    }
    acc.into_iter()
        .enumerate()
        .filter(|(_, a)| a.2 > 0 && a.4 > 0)
        .map(|(b, (s, tc, tr, oc, or))| {
            let t = tc as f64 / tr as f64;
            let o = oc as f64 / or as f64;
            BucketGap {
                bucket: b,
                label: visit_bucket_label(b),
                sessions: s,
                trigger_cat_ctr: t,
                other_cat_ctr: o,
                gap: t - o,
            }
        })
        .collect()
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Spearman ρ and its exact one-sided permutation p-value `P(ρ_perm ≤ ρ)`,
/// enumerating all `n!` orderings of `y` (n ≤ 9).
pub fn spearman_lower_tail(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 3 || n > 9 || y.len() != n {
        return None;
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let rho = pearson(&rx, &ry);
    let mut perm = ry.clone();
    let (mut total, mut hits) = (0u64, 0u64);
    // Heap's algorithm.
    let mut c = vec![0usize; n];
    let mut visit = |p: &[f64]| {
        total += 1;
        if pearson(&rx, p) <= rho + 1e-12 {
            hits += 1;
        }
    };
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Some((rho, hits as f64 / total as f64))
}

pub fn summarize(records: &[SessionRecord]) -> DatasetSummary {
    let rows: usize = records.iter().map(|r| r.candidates.len()).sum();
    let clicks: usize = records
        .iter()
        .flat_map(|r| &r.candidates)
        .map(|c| usize::from(c.click_label))
        .sum();
    let n = records.len().max(1) as f64;
    let intent = records.iter().map(|r| f64::from(r.intent_label)).sum::<f64>() / n;
    let latent = records
        .iter()
        .map(|r| r.latent_intent.map(f64::from))
        .sum::<Option<f64>>()
        .map(|s| s / n);
    let gaps = ctr_gap_by_visit_bucket(records);
    let xs: Vec<f64> = gaps.iter().map(|g| g.bucket as f64).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.gap).collect();
    let (rho, p) = spearman_lower_tail(&xs, &ys).unwrap_or((f64::NAN, f64::NAN));
    DatasetSummary {
        sessions: records.len(),
        rows,
        base_ctr: clicks as f64 / rows.max(1) as f64,
        intent_label_rate: intent,
        latent_intent_rate: latent,
        gap_by_visit_bucket: gaps,
        gap_spearman_rho: rho,
        gap_spearman_p: p,
    }
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "sessions           {}", self.sessions)?;
        writeln!(f, "rows               {}", self.rows)?;
        writeln!(f, "base CTR           {:.4}", self.base_ctr)?;
        writeln!(f, "intent label rate  {:.4}", self.intent_label_rate)?;
        if let Some(l) = self.latent_intent_rate {
            writeln!(f, "latent intent rate {l:.4}")?;
        }
        writeln!(f, "visits/month  sessions  trigger-cat CTR  other CTR   gap")?;
        for g in &self.gap_by_visit_bucket {
            writeln!(
                f,
                "{:>12}  {:>8}  {:>15.4}  {:>9.4}  {:>6.4}",
                g.label, g.sessions, g.trigger_cat_ctr, g.other_cat_ctr, g.gap
            )?;
        }
        write!(
            f,
            "gap vs bucket: spearman rho {:.3}, one-sided p {:.4}",
            self.gap_spearman_rho, self.gap_spearman_p
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_decreasing_sequence() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [0.9, 0.7, 0.5, 0.4, 0.2, 0.1, 0.0];
        let (rho, p) = spearman_lower_tail(&x, &y).unwrap();
        assert!((rho + 1.0).abs() < 1e-12);
        assert!((p - 1.0 / 5040.0).abs() < 1e-15);
    }

    #[test]
    fn increasing_sequence_has_large_lower_p() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let (rho, p) = spearman_lower_tail(&x, &x).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }
}
