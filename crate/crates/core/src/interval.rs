use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalStatus {
    Identified,
    Bounded,
    Rejected,
}

/// A closed interval of outcome values.
///
/// A rejected interval keeps its raw endpoints (`lo > hi`) so the size of the
/// contradiction stays visible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub status: IntervalStatus,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Self {
            lo: v,
            hi: v,
            status: IntervalStatus::Identified,
        }
    }

    /// Builds `[lo, hi]`, classifying it by its endpoints.
    pub fn new(lo: f64, hi: f64) -> Self {
        let status = if lo > hi {
            IntervalStatus::Rejected
        } else if lo == hi {
            IntervalStatus::Identified
        } else {
            IntervalStatus::Bounded
        };
        Self { lo, hi, status }
    }

    pub fn rejected(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            status: IntervalStatus::Rejected,
        }
    }

    pub fn is_rejected(&self) -> bool {
        self.status == IntervalStatus::Rejected
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        !self.is_rejected() && v >= self.lo - tol && v <= self.hi + tol
    }

    /// `self` lies inside `outer`, up to `tol` at each endpoint.
    pub fn is_subset_of(&self, outer: &Interval, tol: f64) -> bool {
        !self.is_rejected() && self.lo >= outer.lo - tol && self.hi <= outer.hi + tol
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.status {
            IntervalStatus::Identified => write!(f, "{{{:.4}}}", self.lo),
            IntervalStatus::Bounded => write!(f, "[{:.4}, {:.4}]", self.lo, self.hi),
            IntervalStatus::Rejected => write!(f, "rejected ({:.4} > {:.4})", self.lo, self.hi),
        }
    }
}

/// Collects lower bounds, upper bounds, and point restrictions on a scalar and
/// intersects them, naming the binding constraints when they conflict.
#[derive(Debug, Clone, Default)]
pub(crate) struct ConstraintSet {
    lower: Vec<(f64, String)>,
    upper: Vec<(f64, String)>,
    equal: Vec<(f64, String)>,
}

impl ConstraintSet {
    pub fn at_least(&mut self, v: f64, label: impl Into<String>) {
        self.lower.push((v, label.into()));
    }

    pub fn at_most(&mut self, v: f64, label: impl Into<String>) {
        self.upper.push((v, label.into()));
    }

    pub fn equal_to(&mut self, v: f64, label: impl Into<String>) {
        self.equal.push((v, label.into()));
    }

    fn binding_lower(&self) -> Option<&(f64, String)> {
        self.lower.iter().max_by(|a, b| a.0.total_cmp(&b.0))
    }

    fn binding_upper(&self) -> Option<&(f64, String)> {
        self.upper.iter().min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Intersects every constraint. Conflicts smaller than `tol` are absorbed.
    pub fn solve(&self, tol: f64) -> (Interval, Option<String>) {
        let lower = self.binding_lower();
        let upper = self.binding_upper();
        let lo = lower.map_or(f64::NEG_INFINITY, |c| c.0);
        let hi = upper.map_or(f64::INFINITY, |c| c.0);

        if let Some((v0, l0)) = self.equal.first() {
            for (v, l) in &self.equal[1..] {
                if (v - v0).abs() > tol {
                    return (
                        Interval::rejected(v0.max(*v), v0.min(*v)),
                        Some(format!("{l0} = {v0:.6} conflicts with {l} = {v:.6}")),
                    );
                }
            }
            if let Some((b, l)) = lower.filter(|c| c.0 > v0 + tol) {
                return (
                    Interval::rejected(*b, *v0),
                    Some(format!("{l} = {b:.6} exceeds {l0} = {v0:.6}")),
                );
            }
            if let Some((b, l)) = upper.filter(|c| c.0 < v0 - tol) {
                return (
                    Interval::rejected(*v0, *b),
                    Some(format!("{l0} = {v0:.6} exceeds {l} = {b:.6}")),
                );
            }
            return (Interval::point(*v0), None);
        }

        if lo > hi + tol {
            let (ll, ul) = (&lower.unwrap().1, &upper.unwrap().1);
            return (
                Interval::rejected(lo, hi),
                Some(format!(
                    "lower bound {ll} = {lo:.6} exceeds upper bound {ul} = {hi:.6}"
                )),
            );
        }
        if lo > hi {
            return (Interval::point(0.5 * (lo + hi)), None);
        }
        (Interval::new(lo, hi), None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(Interval::new(0.0, 1.0).status, IntervalStatus::Bounded);
        assert_eq!(Interval::new(0.5, 0.5).status, IntervalStatus::Identified);
        assert_eq!(Interval::new(0.6, 0.5).status, IntervalStatus::Rejected);
    }

    #[test]
    fn constraints_intersect() {
        let mut c = ConstraintSet::default();
        c.at_least(0.2, "a");
        c.at_least(0.36, "b");
        c.at_most(0.8, "c");
        c.at_most(1.0, "d");
        let (iv, why) = c.solve(1e-10);
        assert_eq!((iv.lo, iv.hi), (0.36, 0.8));
        assert!(why.is_none());
    }

    #[test]
    fn conflict_names_binding_constraints() {
        let mut c = ConstraintSet::default();
        c.at_least(1.0, "D_ER");
        c.at_most(0.8, "D+_MOB");
        let (iv, why) = c.solve(1e-10);
        assert!(iv.is_rejected());
        let why = why.unwrap();
        assert!(why.contains("D_ER") && why.contains("D+_MOB"), "{why}");
    }

    #[test]
    fn point_restriction_checked_against_bounds() {
        let mut c = ConstraintSet::default();
        c.at_least(0.2, "lo");
        c.at_most(0.8, "hi");
        c.equal_to(1.0, "D_ER");
        assert!(c.solve(1e-10).0.is_rejected());

        let mut c = ConstraintSet::default();
        c.at_least(0.2, "lo");
        c.equal_to(0.36, "D_NM");
        assert_eq!(c.solve(1e-10).0, Interval::point(0.36));
    }

    #[test]
    fn conflicting_points_rejected() {
        let mut c = ConstraintSet::default();
        c.equal_to(0.0, "zero");
        c.equal_to(0.1, "D_ER");
        assert!(c.solve(1e-10).0.is_rejected());
    }
}
