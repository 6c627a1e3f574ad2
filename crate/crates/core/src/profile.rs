//! Candidate group-by-neighborhood means and the conditional associations
//! they imply.

use serde::{Deserialize, Serialize};

use crate::data::{AggregateData, FEASIBILITY_TOL};
use crate::error::{EiError, Result};

/// Per-neighborhood group means `Y_n^1`, `Y_n^0`, aligned with the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeansProfile {
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
}

impl GroupMeansProfile {
    pub fn new(y1: Vec<f64>, y0: Vec<f64>) -> Self {
        Self { y1, y0 }
    }

    /// Completes a profile from group-1 means through the adding-up
    /// constraint. Neighborhoods without group 0 get `Y_n^0 = Y_n`, and
    /// neighborhoods without group 1 get `Y_n^1 = Y_n`, whatever was passed.
    pub fn from_group1(data: &AggregateData, y1: &[f64]) -> Self {
        let mut full1 = Vec::with_capacity(y1.len());
        let mut full0 = Vec::with_capacity(y1.len());
        for (r, &v) in data.records().iter().zip(y1) {
            let (a, b) = complete(r.x, r.y, v);
            full1.push(a);
            full0.push(b);
        }
        Self::new(full1, full0)
    }

    /// Equal group means in every neighborhood (`Y_n^1 = Y_n^0 = Y_n`).
    pub fn homogeneous(data: &AggregateData) -> Self {
        let y: Vec<f64> = data.records().iter().map(|r| r.y).collect();
        Self::new(y.clone(), y)
    }

    /// `alpha * a + (1 - alpha) * b`, entrywise.
    pub fn mix(a: &Self, b: &Self, alpha: f64) -> Self {
        let lerp = |u: &[f64], v: &[f64]| -> Vec<f64> {
            u.iter()
                .zip(v)
                .map(|(p, q)| alpha * p + (1.0 - alpha) * q)
                .collect()
        };
        Self::new(lerp(&a.y1, &b.y1), lerp(&a.y0, &b.y0))
    }

    pub fn check_feasible(&self, data: &AggregateData) -> Result<()> {
        let n = data.len();
        if self.y1.len() != n || self.y0.len() != n {
            return Err(EiError::Infeasible(format!(
                "profile has {} / {} entries for {} neighborhoods",
                self.y1.len(),
                self.y0.len(),
                n
            )));
        }
        let bounds = data.bounds();
        for (i, r) in data.records().iter().enumerate() {
            let (a, b) = (self.y1[i], self.y0[i]);
            if !bounds.contains(a) || !bounds.contains(b) {
                return Err(EiError::Infeasible(format!(
                    "neighborhood {}: group means ({a}, {b}) outside [{}, {}]",
                    r.id, bounds.lo, bounds.hi
                )));
            }
            let gap = r.x * a + (1.0 - r.x) * b - r.y;
            if gap.abs() > FEASIBILITY_TOL {
                return Err(EiError::Infeasible(format!(
                    "neighborhood {}: adding-up violated by {gap:e}",
                    r.id
                )));
            }
        }
        Ok(())
    }
}

/// Fills in the group mean implied by adding-up, given `Y_n^1 = v`.
pub(crate) fn complete(x: f64, y: f64, v: f64) -> (f64, f64) {
    // A single-group neighborhood has only the observed mean.
    if x >= 1.0 || x <= 0.0 {
        (y, y)
    } else {
        (v, (y - x * v) / (1.0 - x))
    }
}

/// Group means, their difference, and both conditional associations implied
/// by a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub y1: f64,
    pub y0: f64,
    pub d: f64,
    pub delta_b: f64,
    pub delta_w: f64,
}

/// Evaluates the associations of a profile without validating it.
///
/// The between-group association is `sum_n p_n Var(X|n) (Y_n^1 - Y_n^0)`;
/// the within-group association is
/// `E[X] Cov(Y_n^1, X_n | X = 1) + (1 - E[X]) Cov(Y_n^0, X_n | X = 0)`,
/// the covariances taken under neighborhood weights `p_n x_n / E[X]` and
/// `p_n (1 - x_n) / (1 - E[X])`.
pub(crate) fn summarize_unchecked(data: &AggregateData, y1: &[f64], y0: &[f64]) -> ProfileSummary {
    let recs = data.records();
    let ex: f64 = recs.iter().map(|r| r.p * r.x).sum();
    let (mut m1, mut m0, mut x1, mut x0, mut db) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, r) in recs.iter().enumerate() {
        let w1 = r.p * r.x / ex;
        let w0 = r.p * (1.0 - r.x) / (1.0 - ex);
        m1 += w1 * y1[i];
        m0 += w0 * y0[i];
        x1 += w1 * r.x;
        x0 += w0 * r.x;
        db += r.p * r.x * (1.0 - r.x) * (y1[i] - y0[i]);
    }
    let (mut c1, mut c0) = (0.0, 0.0);
    for (i, r) in recs.iter().enumerate() {
        let w1 = r.p * r.x / ex;
        let w0 = r.p * (1.0 - r.x) / (1.0 - ex);
        c1 += w1 * (y1[i] - m1) * (r.x - x1);
        c0 += w0 * (y0[i] - m0) * (r.x - x0);
    }
    ProfileSummary {
        y1: m1,
        y0: m0,
        d: m1 - m0,
        delta_b: db,
        delta_w: ex * c1 + (1.0 - ex) * c0,
    }
}

/// Validates feasibility and evaluates the profile's group means and
/// conditional associations.
pub fn summarize_profile(
    data: &AggregateData,
    profile: &GroupMeansProfile,
) -> Result<ProfileSummary> {
    profile.check_feasible(data)?;
    Ok(summarize_unchecked(data, &profile.y1, &profile.y0))
}

/// Returns `(delta_B, delta_W)` for a feasible profile.
pub fn deltas_from_profile(
    data: &AggregateData,
    profile: &GroupMeansProfile,
) -> Result<(f64, f64)> {
    let s = summarize_profile(data, profile)?;
    Ok((s.delta_b, s.delta_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::dataset_a;
    use crate::data::moments;

    #[test]
    fn homogeneous_profile_on_dataset_a() {
        let a = dataset_a();
        let p = GroupMeansProfile::new(vec![0.3, 0.9], vec![0.3, 0.9]);
        let s = summarize_profile(&a, &p).unwrap();
        assert_eq!(s.delta_b, 0.0);
        assert!((s.delta_w - 0.0576).abs() < 1e-15);
        assert!((s.d - 0.36).abs() < 1e-15);
        let m = moments(&a).unwrap();
        let decomposed = (s.delta_b + s.delta_w) / ((1.0 - m.gamma) * m.var_x);
        assert!((decomposed - 0.36).abs() < 1e-14);
    }

    #[test]
    fn saturated_group1_profile_on_dataset_a() {
        let a = dataset_a();
        let p = GroupMeansProfile::from_group1(&a, &[1.0, 1.0]);
        assert!((p.y0[0] - 0.125).abs() < 1e-15);
        assert!((p.y0[1] - 0.5).abs() < 1e-15);
        let (db, _) = deltas_from_profile(&a, &p).unwrap();
        assert!((db - 0.11).abs() < 1e-15);
    }

    #[test]
    fn equal_group_means_have_no_between_association() {
        let a = dataset_a();
        let p = GroupMeansProfile::homogeneous(&a);
        assert_eq!(deltas_from_profile(&a, &p).unwrap().0, 0.0);
    }

    #[test]
    fn infeasible_profile_rejected() {
        let a = dataset_a();
        let p = GroupMeansProfile::new(vec![0.3, 0.9], vec![0.3, 0.8]);
        assert!(matches!(
            deltas_from_profile(&a, &p),
            Err(EiError::Infeasible(_))
        ));
        let p = GroupMeansProfile::from_group1(&a, &[1.2, 1.0]);
        assert!(matches!(
            deltas_from_profile(&a, &p),
            Err(EiError::Infeasible(_))
        ));
        let short = GroupMeansProfile::new(vec![0.3], vec![0.3]);
        assert!(short.check_feasible(&a).is_err());
    }
}
