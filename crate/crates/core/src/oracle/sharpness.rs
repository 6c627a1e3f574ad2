//! Agreement between analytic bounds and enumerated extremes.

use serde::{Deserialize, Serialize};

use crate::assumptions::AssumptionSet;
use crate::data::{AggregateData, NeighborhoodRecord, OutcomeBounds};
use crate::error::Result;
use crate::global::{BoundsInputs, Target};
use crate::interval::Interval;
use crate::local::{local_monotone_bounds, tilde_monotone_bounds, LocalBoundsReport, TildeGroup};

use super::enumerate::{
    enumerate_feasible, enumerate_local, enumerate_pooled, CellExtremes, EnumerationResult,
};

/// Which bound an audit entry checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditScope {
    Global,
    /// One neighborhood, by id.
    Neighborhood(String),
    /// Neighborhoods pooled by prevalence, by member ids.
    Pooled(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessEntry {
    pub scope: AuditScope,
    pub assumptions: AssumptionSet,
    pub target: Target,
    pub analytic: Interval,
    pub enumerated: Option<(f64, f64)>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub grid_points: usize,
    pub entries: Vec<SharpnessEntry>,
}

impl SharpnessReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SharpnessEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    fn extend(&mut self, other: SharpnessReport) {
        self.entries.extend(other.entries);
    }
}

/// Grid tolerance for a target: twice the grid step over its natural range.
pub fn grid_tolerance(bounds: OutcomeBounds, target: Target, grid_points: usize) -> f64 {
    let range = match target {
        Target::Difference => 2.0 * bounds.width(),
        _ => bounds.width(),
    };
    range * 2.0 / (grid_points - 1) as f64
}

/// An analytic interval agrees with enumeration when both endpoints match
/// within `tol`, or when both are empty. Contradictions smaller than `tol`
/// sit on the boundary of the grid's resolution and are not held against
/// either side.
fn agrees(analytic: &Interval, enumerated: Option<(f64, f64)>, tol: f64) -> bool {
    match (analytic.is_rejected(), enumerated) {
        (false, Some((lo, hi))) => {
            (lo - analytic.lo).abs() <= tol && (hi - analytic.hi).abs() <= tol
        }
        (true, None) => true,
        (true, Some(_)) => analytic.lo - analytic.hi <= tol,
        (false, None) => false,
    }
}

fn pick(c: &CellExtremes, target: Target) -> Option<(f64, f64)> {
    match target {
        Target::Difference => c.d,
        Target::Group1Mean => c.y1,
        Target::Group0Mean => c.y0,
    }
}

/// Every sign cell, each with and without reinforcement where the two are
/// compatible.
pub fn audit_cells() -> Vec<AssumptionSet> {
    AssumptionSet::table_cells()
        .flat_map(|a| [a, a.with_reinforcement(true)])
        .filter(|a| a.validate().is_ok())
        .collect()
}

fn global_entries(
    data: &AggregateData,
    inputs: &BoundsInputs,
    e: &EnumerationResult,
    assumptions: AssumptionSet,
) -> Result<Vec<SharpnessEntry>> {
    let cell = e.cell(assumptions);
    Target::ALL
        .into_iter()
        .map(|target| {
            let report = inputs.bounds(data.bounds(), target, assumptions)?;
            let tolerance = grid_tolerance(data.bounds(), target, e.grid_points);
            let enumerated = pick(&cell, target);
            Ok(SharpnessEntry {
                scope: AuditScope::Global,
                assumptions,
                target,
                analytic: report.interval,
                enumerated,
                tolerance,
                pass: agrees(&report.interval, enumerated, tolerance),
            })
        })
        .collect()
}

/// Compares the global bounds on all three targets under `assumptions` with
/// enumeration.
pub fn sharpness_check(
    data: &AggregateData,
    assumptions: AssumptionSet,
    grid_points: usize,
) -> Result<SharpnessReport> {
    assumptions.validate()?;
    let e = enumerate_feasible(data, grid_points)?;
    let inputs = BoundsInputs::compute(data)?;
    Ok(SharpnessReport {
        grid_points,
        entries: global_entries(data, &inputs, &e, assumptions)?,
    })
}

/// [`sharpness_check`] over every cell of [`audit_cells`], sharing one
/// enumeration.
pub fn sharpness_audit(data: &AggregateData, grid_points: usize) -> Result<SharpnessReport> {
    let e = enumerate_feasible(data, grid_points)?;
    let inputs = BoundsInputs::compute(data)?;
    let mut entries = Vec::new();
    for a in audit_cells() {
        entries.extend(global_entries(data, &inputs, &e, a)?);
    }
    Ok(SharpnessReport {
        grid_points,
        entries,
    })
}

fn local_entries(
    scope: AuditScope,
    report: &LocalBoundsReport,
    e: &EnumerationResult,
    bounds: OutcomeBounds,
    assumptions: AssumptionSet,
) -> Vec<SharpnessEntry> {
    let cell = e.cell(assumptions);
    [
        (Target::Difference, report.d),
        (Target::Group1Mean, report.y1),
        (Target::Group0Mean, report.y0),
    ]
    .into_iter()
    .map(|(target, iv)| {
        let analytic = iv.expect("mixed neighborhoods have all three intervals");
        let tolerance = grid_tolerance(bounds, target, e.grid_points);
        let enumerated = pick(&cell, target);
        SharpnessEntry {
            scope: scope.clone(),
            assumptions,
            target,
            analytic,
            enumerated,
            tolerance,
            pass: agrees(&analytic, enumerated, tolerance),
        }
    })
    .collect()
}

/// Local bounds of one mixed neighborhood against enumeration, every cell.
/// `slope` stands in for the regression derivative at its prevalence.
pub fn local_sharpness_audit(
    record: &NeighborhoodRecord,
    bounds: OutcomeBounds,
    slope: f64,
    grid_points: usize,
) -> Result<SharpnessReport> {
    let e = enumerate_local(record, bounds, slope, grid_points)?;
    let mut out = SharpnessReport {
        grid_points,
        entries: Vec::new(),
    };
    for a in audit_cells() {
        let report = local_monotone_bounds(record, bounds, a, Some(slope), true)?;
        out.entries.extend(local_entries(
            AuditScope::Neighborhood(record.id.clone()),
            &report,
            &e,
            bounds,
            a,
        ));
    }
    Ok(out)
}

/// Pooled bounds of a same-prevalence group against enumeration of its
/// members' profiles, every cell.
pub fn tilde_sharpness_audit(
    data: &AggregateData,
    group: &TildeGroup,
    slope: f64,
    grid_points: usize,
) -> Result<SharpnessReport> {
    let e = enumerate_pooled(data, &group.indices, slope, grid_points)?;
    let mut out = SharpnessReport {
        grid_points,
        entries: Vec::new(),
    };
    for a in audit_cells() {
        let report = tilde_monotone_bounds(group, data.bounds(), a, Some(slope))?;
        out.entries.extend(local_entries(
            AuditScope::Pooled(group.members.clone()),
            &report,
            &e,
            data.bounds(),
            a,
        ));
    }
    Ok(out)
}

/// Global, local and pooled audits of one dataset. Local audits run on every
/// mixed neighborhood with the supplied slope; pooled audits on every group
/// of two or more neighborhoods.
pub fn full_audit(
    data: &AggregateData,
    slope: f64,
    grid_points: usize,
    pooling_tolerance: f64,
) -> Result<SharpnessReport> {
    let mut out = sharpness_audit(data, grid_points)?;
    for r in data.records().iter().filter(|r| r.is_mixed()) {
        out.extend(local_sharpness_audit(r, data.bounds(), slope, grid_points)?);
    }
    for g in crate::local::tilde_groups(data, pooling_tolerance)? {
        let mixed = g.indices.iter().all(|&i| data.records()[i].is_mixed());
        if g.indices.len() > 1 && mixed {
            out.extend(tilde_sharpness_audit(data, &g, slope, grid_points)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assumptions::SignAssumption::*;
    use crate::data::fixtures::dataset_a;
    use crate::data::{load_aggregate, AggregateRow};
    use crate::local::{tilde_aggregate, DEFAULT_POOLING_TOLERANCE};

    #[test]
    fn dataset_a_every_cell() {
        let r = sharpness_audit(&dataset_a(), 201).unwrap();
        assert_eq!(r.entries.len(), audit_cells().len() * 3);
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn dataset_a_within_nonpositive_rejection_agrees() {
        let r =
            sharpness_check(&dataset_a(), AssumptionSet::new(NonPositive, Unknown), 201).unwrap();
        let d = &r.entries[0];
        assert!(d.analytic.is_rejected());
        assert!(d.enumerated.is_none());
        assert!(r.passed());
    }

    #[test]
    fn three_neighborhood_instance_all_tables() {
        let d = load_aggregate(
            &[
                AggregateRow::new("a", 3.0, 0.2, 0.35),
                AggregateRow::new("b", 2.0, 0.55, 0.5),
                AggregateRow::new("c", 4.0, 0.8, 0.7),
            ],
            OutcomeBounds::unit(),
        )
        .unwrap();
        let r = sharpness_audit(&d, 201).unwrap();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn constant_prevalence_every_cell() {
        let d = load_aggregate(
            &[
                AggregateRow::new("a", 1.0, 0.4, -0.5),
                AggregateRow::new("b", 2.0, 0.4, 2.5),
            ],
            OutcomeBounds::new(-1.0, 3.0).unwrap(),
        )
        .unwrap();
        let r = sharpness_audit(&d, 201).unwrap();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn local_every_cell() {
        let rec = NeighborhoodRecord::new("n", 1.0, 0.5, 0.9);
        for slope in [-0.3, 0.0, 0.1, 0.5] {
            let r = local_sharpness_audit(&rec, OutcomeBounds::unit(), slope, 201).unwrap();
            assert!(
                r.passed(),
                "slope {slope}: {:?}",
                r.failures().collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn pooled_every_cell() {
        let d = load_aggregate(
            &[
                AggregateRow::new("a", 1.0, 0.4, 0.2),
                AggregateRow::new("b", 3.0, 0.4, 0.9),
                AggregateRow::new("c", 2.0, 0.7, 0.6),
            ],
            OutcomeBounds::unit(),
        )
        .unwrap();
        let g = tilde_aggregate(&d, 0.4, DEFAULT_POOLING_TOLERANCE).unwrap();
        for slope in [-0.2, 0.15, 0.6] {
            let r = tilde_sharpness_audit(&d, &g, slope, 201).unwrap();
            assert!(
                r.passed(),
                "slope {slope}: {:?}",
                r.failures().collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn disagreement_is_reported() {
        let iv = Interval::new(0.2, 0.8);
        assert!(agrees(&iv, Some((0.2, 0.8)), 0.01));
        assert!(!agrees(&iv, Some((0.2, 0.7)), 0.01));
        assert!(!agrees(&iv, None, 0.01));
        assert!(agrees(&Interval::rejected(0.5, 0.4), None, 0.01));
        assert!(!agrees(
            &Interval::rejected(0.5, 0.4),
            Some((0.4, 0.5)),
            0.01
        ));
    }
}
