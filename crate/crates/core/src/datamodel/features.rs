//! Bucketing of user × mini-app cross features.

/// Visit-count bucket boundaries; 15 is a boundary so "more than 15 visits a
/// month" is its own range.
pub const VISIT_BOUNDARIES: [f64; 6] = [0.0, 1.0, 3.0, 7.0, 15.0, 30.0];
/// Stay-duration bucket boundaries in seconds.
pub const STAY_BOUNDARIES: [f64; 6] = [0.0, 10.0, 30.0, 60.0, 180.0, 600.0];
/// Buckets per cross feature (one more than the number of boundaries).
pub const NUM_CROSS_BUCKETS: usize = 7;

/// Number of boundaries strictly below `x`: bucket 0 holds exactly the lower
/// edge, the last bucket is open-ended.
fn bucket(x: f64, boundaries: &[f64]) -> usize {
    boundaries.iter().filter(|&&b| b < x).count()
}

pub fn visit_bucket(monthly_visit_count: u32) -> usize {
    bucket(f64::from(monthly_visit_count), &VISIT_BOUNDARIES)
}

pub fn stay_bucket(avg_stay_seconds: f64) -> usize {
    bucket(avg_stay_seconds.max(0.0), &STAY_BOUNDARIES)
}

/// Maps raw cross features to `(visit_bucket, stay_bucket)`, each in `0..7`.
pub fn bucketize_cross_features(monthly_visit_count: u32, avg_stay_seconds: f64) -> (usize, usize) {
    (visit_bucket(monthly_visit_count), stay_bucket(avg_stay_seconds))
}

/// Human-readable label for a visit bucket.
pub fn visit_bucket_label(b: usize) -> String {
    match b {
        0 => "0".to_string(),
        b if b < VISIT_BOUNDARIES.len() => {
            format!("{}-{}", VISIT_BOUNDARIES[b - 1] as u32 + 1, VISIT_BOUNDARIES[b] as u32)
        }
        _ => format!(">{}", VISIT_BOUNDARIES[VISIT_BOUNDARIES.len() - 1] as u32),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_visits_fall_in_the_15_to_30_bucket() {
        assert_eq!(visit_bucket(16), 5);
        assert_eq!(visit_bucket(15), 4);
        assert_eq!(visit_bucket(30), 5);
        assert_eq!(visit_bucket(31), 6);
    }

    #[test]
    fn zero_visits_is_bucket_zero() {
        assert_eq!(visit_bucket(0), 0);
        assert_eq!(visit_bucket(1), 1);
    }

    #[test]
    fn stay_45_seconds_is_bucket_3() {
        assert_eq!(bucketize_cross_features(0, 45.0), (0, 3));
        assert_eq!(stay_bucket(0.0), 0);
        assert_eq!(stay_bucket(10_000.0), 6);
    }

    #[test]
    fn labels() {
        assert_eq!(visit_bucket_label(0), "0");
        assert_eq!(visit_bucket_label(5), "16-30");
        assert_eq!(visit_bucket_label(6), ">30");
    }
}
