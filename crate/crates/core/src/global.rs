//! Method-of-bounds intervals and sharp bounds under sign assumptions for the
//! group-mean difference and each group mean.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assumptions::{
    resolve_cell, AssumptionSet, Orientation, ResolvedCell, SignAssumption, TargetAnchors,
};
use crate::data::{
    moments, AggregateData, AggregateRow, Moments, OutcomeBounds, FEASIBILITY_TOL,
    NORMALIZATION_TOL,
};
use crate::error::{EiError, Result};
use crate::interval::Interval;
use crate::point::{ecological_regression, neighborhood_model, PointEstimates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "D")]
    Difference,
    #[serde(rename = "Y1")]
    Group1Mean,
    #[serde(rename = "Y0")]
    Group0Mean,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Difference, Target::Group1Mean, Target::Group0Mean];

    pub fn for_group(group: u8) -> Result<Self> {
        match group {
            1 => Ok(Target::Group1Mean),
            0 => Ok(Target::Group0Mean),
            g => Err(EiError::Configuration(format!(
                "group must be 0 or 1, got {g}"
            ))),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Difference => "D",
            Target::Group1Mean => "Y1",
            Target::Group0Mean => "Y0",
        })
    }
}

impl FromStr for Target {
    type Err = EiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d" | "diff" => Ok(Target::Difference),
            "1" | "y1" => Ok(Target::Group1Mean),
            "0" | "y0" => Ok(Target::Group0Mean),
            other => Err(EiError::Configuration(format!(
                "unknown target {other:?}; expected d, 1 or 0"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobEstimates {
    pub y1: Interval,
    pub y0: Interval,
    pub d: Interval,
}

impl MobEstimates {
    pub fn for_target(&self, target: Target) -> Interval {
        match target {
            Target::Difference => self.d,
            Target::Group1Mean => self.y1,
            Target::Group0Mean => self.y0,
        }
    }
}

pub fn method_of_bounds(data: &AggregateData) -> Result<MobEstimates> {
    let m = moments(data)?;
    Ok(mob_with(data, &m))
}

fn mob_with(data: &AggregateData, m: &Moments) -> MobEstimates {
    let OutcomeBounds { lo, hi } = data.bounds();
    let (mut y1_hi, mut y1_lo, mut y0_hi, mut y0_lo) = (0.0, 0.0, 0.0, 0.0);
    for r in data.records() {
        let (x, y) = (r.x, r.y);
        y1_hi += r.p * (y - lo * (1.0 - x)).min(hi * x);
        y1_lo += r.p * (y - hi * (1.0 - x)).max(lo * x);
        y0_hi += r.p * (y - lo * x).min(hi * (1.0 - x));
        y0_lo += r.p * (y - hi * x).max(lo * (1.0 - x));
    }
    let (y1_lo, y1_hi) = (y1_lo / m.ex, y1_hi / m.ex);
    let (y0_lo, y0_hi) = (y0_lo / (1.0 - m.ex), y0_hi / (1.0 - m.ex));
    MobEstimates {
        y1: Interval::new(y1_lo, y1_hi),
        y0: Interval::new(y0_lo, y0_hi),
        d: Interval::new(y1_lo - y0_hi, y1_hi - y0_lo),
    }
}

/// Everything the bound formulas read from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsInputs {
    pub moments: Moments,
    /// Absent when prevalence does not vary across neighborhoods.
    pub er: Option<PointEstimates>,
    pub nm: PointEstimates,
    pub mob: MobEstimates,
}

impl BoundsInputs {
    pub fn compute(data: &AggregateData) -> Result<Self> {
        let m = moments(data)?;
        let er = match ecological_regression(data) {
            Ok(er) => Some(er),
            Err(EiError::NoVariation) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            moments: m,
            er,
            nm: neighborhood_model(data)?,
            mob: mob_with(data, &m),
        })
    }

    fn tolerance(&self, bounds: OutcomeBounds) -> f64 {
        FEASIBILITY_TOL * bounds.width().max(1.0)
    }

    /// Sharp bounds on `target` under `assumptions`.
    pub fn bounds(
        &self,
        bounds: OutcomeBounds,
        target: Target,
        assumptions: AssumptionSet,
    ) -> Result<BoundsReport> {
        assumptions.validate()?;
        let tol = self.tolerance(bounds);
        let mut notes = Vec::new();
        let cell = match self.er {
            Some(er) => resolve_cell(assumptions, Some(er.d - self.nm.d), tol)?,
            None => {
                // With no variation in prevalence the within-group association
                // is identically zero, so any declaration about it is vacuous
                // and reinforcement holds automatically.
                notes.push(
                    "prevalence does not vary across neighborhoods: the within-group \
                     association is identically zero and its sign restriction is vacuous"
                        .to_string(),
                );
                let declared_between = matches!(
                    assumptions.between,
                    SignAssumption::NonNegative | SignAssumption::NonPositive
                );
                let effective = if declared_between {
                    assumptions
                } else {
                    assumptions.with_reinforcement(false)
                };
                let mut c = resolve_cell(effective, None, tol)?;
                c.within = SignAssumption::Unknown;
                c.contextual_reinforcement = assumptions.contextual_reinforcement;
                c
            }
        };

        let ey = self.moments.ey;
        let er = self.er;
        let anchors = match target {
            Target::Difference => TargetAnchors {
                name: "D",
                mob: (self.mob.d.lo, self.mob.d.hi),
                within: er.map(|e| e.d),
                within_label: "D_ER",
                between: self.nm.d,
                between_label: "D_NM",
                zero_point: 0.0,
                orientation: Orientation::Increasing,
            },
            Target::Group1Mean => TargetAnchors {
                name: "Y1",
                mob: (self.mob.y1.lo, self.mob.y1.hi),
                within: er.map(|e| e.y1),
                within_label: "Y1_ER",
                between: self.nm.y1,
                between_label: "Y1_NM",
                zero_point: ey,
                orientation: Orientation::Increasing,
            },
            Target::Group0Mean => TargetAnchors {
                name: "Y0",
                mob: (self.mob.y0.lo, self.mob.y0.hi),
                within: er.map(|e| e.y0),
                within_label: "Y0_ER",
                between: self.nm.y0,
                between_label: "Y0_NM",
                zero_point: ey,
                orientation: Orientation::Decreasing,
            },
        };
        let (interval, rejection_reason) = anchors.identify(&cell, tol, || EiError::NoVariation)?;
        Ok(BoundsReport {
            target,
            interval,
            cell,
            inputs: *self,
            rejection_reason,
            notes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub target: Target,
    pub interval: Interval,
    pub cell: ResolvedCell,
    pub inputs: BoundsInputs,
    pub rejection_reason: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl BoundsReport {
    pub fn is_rejected(&self) -> bool {
        self.interval.is_rejected()
    }

    /// The resolved cell as explicit declarations. Under reinforcement this
    /// fixes the branch chosen on these data, so that recomputing on
    /// resamples targets the same endpoint formulas.
    pub fn pinned_assumptions(&self) -> AssumptionSet {
        if self.cell.tie {
            // Both branches meet at the between anchor.
            return AssumptionSet::new(SignAssumption::Unknown, SignAssumption::Zero);
        }
        AssumptionSet::new(self.cell.within, self.cell.between)
    }
}

pub fn bounds_for_target(
    data: &AggregateData,
    target: Target,
    assumptions: AssumptionSet,
) -> Result<BoundsReport> {
    BoundsInputs::compute(data)?.bounds(data.bounds(), target, assumptions)
}

pub fn bounds_for_d(data: &AggregateData, assumptions: AssumptionSet) -> Result<BoundsReport> {
    bounds_for_target(data, Target::Difference, assumptions)
}

pub fn bounds_for_mean(
    data: &AggregateData,
    group: u8,
    assumptions: AssumptionSet,
) -> Result<BoundsReport> {
    bounds_for_target(data, Target::for_group(group)?, assumptions)
}

/// A neighborhood with outcome and population shares of each of several groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiGroupRow {
    pub id: String,
    pub population: f64,
    pub shares: Vec<f64>,
    pub y_mean: f64,
}

impl MultiGroupRow {
    pub fn new(id: impl Into<String>, population: f64, shares: Vec<f64>, y_mean: f64) -> Self {
        Self {
            id: id.into(),
            population,
            shares,
            y_mean,
        }
    }
}

/// Collapses multi-group rows to the indicator of group `g` versus the rest.
pub fn collapse_groups(
    rows: &[MultiGroupRow],
    bounds: OutcomeBounds,
    g: usize,
) -> Result<AggregateData> {
    let width = rows.first().map_or(0, |r| r.shares.len());
    if width < 2 {
        return Err(EiError::Input("need shares for at least two groups".into()));
    }
    if g >= width {
        return Err(EiError::Configuration(format!(
            "group index {g} out of range for {width} groups"
        )));
    }
    let mut collapsed = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let fail = |message: String| EiError::Validation {
            row: i + 1,
            id: r.id.clone(),
            message,
        };
        if r.shares.len() != width {
            return Err(fail(format!(
                "expected {width} group shares, got {}",
                r.shares.len()
            )));
        }
        if r.shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(fail("group shares must be nonnegative".into()));
        }
        let total: f64 = r.shares.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(fail(format!("group shares sum to {total}, not 1")));
        }
        collapsed.push(AggregateRow::new(
            r.id.clone(),
            r.population,
            r.shares[g].min(1.0),
            r.y_mean,
        ));
    }
    AggregateData::from_rows_relaxed(&collapsed, bounds)
}

/// Bounds on the mean outcome of group `g` among several groups.
pub fn multi_group_bounds(
    rows: &[MultiGroupRow],
    bounds: OutcomeBounds,
    g: usize,
    assumptions: AssumptionSet,
) -> Result<BoundsReport> {
    let data = collapse_groups(rows, bounds, g)?;
    bounds_for_target(&data, Target::Group1Mean, assumptions)
}
