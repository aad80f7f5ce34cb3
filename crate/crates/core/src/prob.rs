//! Probability-vector helpers shared by every module.

use crate::error::{Error, Result};

/// Absolute tolerance for stochasticity checks at construction time.
pub const PROB_TOL: f64 = 1e-12;

/// Checks that `p` is a probability vector within [`PROB_TOL`] and returns it
/// renormalized. Entries in `[-PROB_TOL, 0)` are clamped to zero.
pub fn checked_distribution(field: &str, p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution {
            field: field.to_string(),
            reason: "empty vector".into(),
        });
    }
    for (i, &x) in p.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::InvalidDistribution {
                field: field.to_string(),
                reason: format!("entry {i} is not finite"),
            });
        }
        if x < -PROB_TOL {
            return Err(Error::InvalidDistribution {
                field: field.to_string(),
                reason: format!("entry {i} is negative ({x})"),
            });
        }
    }
    let sum: f64 = p.iter().map(|x| x.max(0.0)).sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidDistribution {
            field: field.to_string(),
            reason: format!("entries sum to {sum}, not 1"),
        });
    }
    Ok(p.iter().map(|x| x.max(0.0) / sum).collect())
}

/// Draws an index from `p` using a single uniform variate in `[0, 1)`.
///
/// Falls back to the last positive entry when rounding leaves `u` above the
/// cumulative sum.
pub fn sample_index(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in p.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last_positive = i;
        acc += w;
        if u < acc {
            return i;
        }
    }
    last_positive
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Sorted distinct values (exact equality).
pub fn distinct_values(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sums_and_negatives() {
        assert!(checked_distribution("p", &[0.5, 0.6]).is_err());
        assert!(checked_distribution("p", &[1.1, -0.1]).is_err());
        assert!(checked_distribution("p", &[]).is_err());
        let p = checked_distribution("p", &[0.25, 0.75]).unwrap();
        assert_eq!(p, vec![0.25, 0.75]);
    }

    #[test]
    fn sampling_respects_zero_mass() {
        let p = [0.0, 0.3, 0.0, 0.7];
        assert_eq!(sample_index(&p, 0.0), 1);
        assert_eq!(sample_index(&p, 0.29), 1);
        assert_eq!(sample_index(&p, 0.31), 3);
        assert_eq!(sample_index(&p, 0.999_999_999_9), 3);
    }
}
