//! Aggregate (neighborhood-level) data, its validation, and population moments.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{EiError, Result};

/// Absolute tolerance, in outcome units, for feasibility and adding-up checks.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Tolerance on the sum of normalized population shares.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// One neighborhood: population share, group-1 prevalence and mean outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodRecord {
    pub id: String,
    pub p: f64,
    pub x: f64,
    pub y: f64,
}

impl NeighborhoodRecord {
    pub fn new(id: impl Into<String>, p: f64, x: f64, y: f64) -> Self {
        Self {
            id: id.into(),
            p,
            x,
            y,
        }
    }

    /// Both groups are present in the neighborhood.
    pub fn is_mixed(&self) -> bool {
        self.x > 0.0 && self.x < 1.0
    }
}

/// Known range of the group-by-neighborhood mean outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeBounds {
    pub lo: f64,
    pub hi: f64,
}

impl OutcomeBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(EiError::Input(format!(
                "outcome bounds must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo - FEASIBILITY_TOL && y <= self.hi + FEASIBILITY_TOL
    }

    /// Parses `LO:HI`.
    pub fn parse(text: &str) -> Result<Self> {
        let (lo, hi) = text
            .split_once(':')
            .ok_or_else(|| EiError::Input(format!("bounds must be LO:HI, got {text:?}")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| EiError::Input(format!("bounds must be LO:HI, got {text:?}")))
        };
        Self::new(parse(lo)?, parse(hi)?)
    }
}

impl Default for OutcomeBounds {
    fn default() -> Self {
        Self::unit()
    }
}

/// A raw input row before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub id: String,
    pub population: f64,
    pub x_share: f64,
    pub y_mean: f64,
}

impl AggregateRow {
    pub fn new(id: impl Into<String>, population: f64, x_share: f64, y_mean: f64) -> Self {
        Self {
            id: id.into(),
            population,
            x_share,
            y_mean,
        }
    }
}

/// Validated neighborhood-level data with population shares summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateData {
    records: Vec<NeighborhoodRecord>,
    bounds: OutcomeBounds,
    /// Sum of raw populations before normalization.
    population_total: f64,
}

impl AggregateData {
    pub fn records(&self) -> &[NeighborhoodRecord] {
        &self.records
    }

    pub fn bounds(&self) -> OutcomeBounds {
        self.bounds
    }

    pub fn population_total(&self) -> f64 {
        self.population_total
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Builds a dataset after normalization and range validation, but only
    /// requires both groups to have positive overall mass (0 < E[X] < 1)
    /// rather than a mixed neighborhood. Used for indicator-collapsed
    /// multi-group data, where fully segregated neighborhoods are legitimate.
    pub(crate) fn from_rows_relaxed(rows: &[AggregateRow], bounds: OutcomeBounds) -> Result<Self> {
        let data = Self::normalize(rows, bounds)?;
        let ex: f64 = data.records.iter().map(|r| r.p * r.x).sum();
        if ex <= 0.0 || ex >= 1.0 {
            return Err(EiError::DegenerateGroup(format!(
                "overall group prevalence E[X] = {ex} leaves one group empty"
            )));
        }
        Ok(data)
    }

    /// Rebuilds a dataset from already-validated records, renormalizing
    /// their shares. Used by resampling.
    pub(crate) fn resampled(&self, picks: &[usize]) -> Result<Self> {
        let rows: Vec<AggregateRow> = picks
            .iter()
            .map(|&i| {
                let r = &self.records[i];
                AggregateRow::new(r.id.clone(), r.p, r.x, r.y)
            })
            .collect();
        load_aggregate(&rows, self.bounds)
    }

    fn normalize(rows: &[AggregateRow], bounds: OutcomeBounds) -> Result<Self> {
        if rows.is_empty() {
            return Err(EiError::Input("no rows supplied".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            let fail = |message: String| EiError::Validation {
                row: i + 1,
                id: row.id.clone(),
                message,
            };
            if !row.population.is_finite() || row.population < 0.0 {
                return Err(fail(format!(
                    "population must be nonnegative, got {}",
                    row.population
                )));
            }
            if !row.x_share.is_finite() || !(0.0..=1.0).contains(&row.x_share) {
                return Err(fail(format!(
                    "x_share must lie in [0, 1], got {}",
                    row.x_share
                )));
            }
            if !row.y_mean.is_finite() || !bounds.contains(row.y_mean) {
                return Err(fail(format!(
                    "y_mean {} lies outside outcome bounds [{}, {}]",
                    row.y_mean, bounds.lo, bounds.hi
                )));
            }
        }
        let total: f64 = rows.iter().map(|r| r.population).sum();
        if total <= 0.0 {
            return Err(EiError::NonDegeneracy("all populations are zero".into()));
        }
        let records = rows
            .iter()
            .map(|r| {
                NeighborhoodRecord::new(r.id.clone(), r.population / total, r.x_share, r.y_mean)
            })
            .collect();
        Ok(Self {
            records,
            bounds,
            population_total: total,
        })
    }
}

/// Validates rows, normalizes populations to shares, and enforces that some
/// neighborhood with positive population contains both groups.
pub fn load_aggregate(rows: &[AggregateRow], bounds: OutcomeBounds) -> Result<AggregateData> {
    let data = AggregateData::normalize(rows, bounds)?;
    if !data.records.iter().any(|r| r.p > 0.0 && r.is_mixed()) {
        return Err(EiError::NonDegeneracy(
            "no neighborhood with positive population has prevalence strictly inside (0, 1)".into(),
        ));
    }
    Ok(data)
}

/// Reads `id,population,x_share,y_mean` delimited text.
pub fn read_aggregate_csv<R: Read>(reader: R, bounds: OutcomeBounds) -> Result<AggregateData> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| EiError::Input(format!("cannot read header: {e}")))?
        .clone();
    for required in ["id", "population", "x_share", "y_mean"] {
        if !headers.iter().any(|h| h == required) {
            return Err(EiError::Input(format!("missing column `{required}`")));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.deserialize::<AggregateRow>().enumerate() {
        let row = record.map_err(|e| EiError::Validation {
            row: i + 1,
            id: "?".into(),
            message: format!("malformed row: {e}"),
        })?;
        rows.push(row);
    }
    load_aggregate(&rows, bounds)
}

/// Population moments of the group indicator and the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub ex: f64,
    pub ey: f64,
    /// Var(X) = E[X](1 - E[X]) for the binary group indicator.
    pub var_x: f64,
    /// Var(X_N), the between-neighborhood variance of prevalence.
    pub var_xn: f64,
    /// Share of Var(X) preserved under aggregation.
    pub gamma: f64,
    pub cov_xn_yn: f64,
}

pub fn moments(data: &AggregateData) -> Result<Moments> {
    let recs = data.records();
    let ex: f64 = recs.iter().map(|r| r.p * r.x).sum();
    let ey: f64 = recs.iter().map(|r| r.p * r.y).sum();
    let var_x = ex * (1.0 - ex);
    if var_x <= 0.0 {
        return Err(EiError::DegenerateGroup(format!(
            "E[X] = {ex}; one group has no members"
        )));
    }
    // Centering on an observed prevalence keeps identical prevalences at
    // exactly zero variance.
    let anchor = recs.iter().find(|r| r.p > 0.0).map_or(ex, |r| r.x);
    let shift: f64 = recs.iter().map(|r| r.p * (r.x - anchor)).sum();
    let dev = |r: &NeighborhoodRecord| (r.x - anchor) - shift;
    let var_xn: f64 = recs.iter().map(|r| r.p * dev(r).powi(2)).sum();
    let cov_xn_yn: f64 = recs.iter().map(|r| r.p * dev(r) * (r.y - ey)).sum();
    Ok(Moments {
        ex,
        ey,
        var_x,
        var_xn,
        gamma: var_xn / var_x,
        cov_xn_yn,
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn equal_prevalences_have_zero_variance() {
        let d = load_aggregate(
            &[
                AggregateRow::new("a", 1.0, 0.7013, 0.2),
                AggregateRow::new("b", 3.3, 0.7013, 0.9),
                AggregateRow::new("c", 0.0, 0.1, 0.5),
            ],
            OutcomeBounds::unit(),
        )
        .unwrap();
        let m = moments(&d).unwrap();
        assert_eq!((m.var_xn, m.cov_xn_yn), (0.0, 0.0));
    }

    #[test]
    fn equal_populations_normalize_to_halves() {
        let a = dataset_a();
        assert_eq!(a.records()[0].p, 0.5);
        assert_eq!(a.records()[1].p, 0.5);
        assert_eq!(a.population_total(), 200.0);
        assert_eq!(a.records()[0].id, "a");
    }

    #[test]
    fn out_of_range_outcome_names_row() {
        let err = load_aggregate(
            &[AggregateRow::new("a", 1.0, 0.5, 1.2)],
            OutcomeBounds::unit(),
        )
        .unwrap_err();
        match err {
            EiError::Validation { row, id, message } => {
                assert_eq!(row, 1);
                assert_eq!(id, "a");
                assert!(message.contains("y_mean"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prevalence_outside_unit_interval_rejected() {
        let err = load_aggregate(
            &[
                AggregateRow::new("a", 1.0, 0.5, 0.5),
                AggregateRow::new("b", 1.0, 1.5, 0.5),
            ],
            OutcomeBounds::unit(),
        )
        .unwrap_err();
        assert!(matches!(err, EiError::Validation { row: 2, .. }));
    }

    #[test]
    fn no_interior_prevalence_is_degenerate() {
        let err = load_aggregate(
            &[
                AggregateRow::new("a", 1.0, 0.0, 0.3),
                AggregateRow::new("b", 1.0, 1.0, 0.9),
            ],
            OutcomeBounds::unit(),
        )
        .unwrap_err();
        assert!(matches!(err, EiError::NonDegeneracy(_)));
    }

    #[test]
    fn zero_populations_are_degenerate() {
        let err = load_aggregate(
            &[AggregateRow::new("a", 0.0, 0.5, 0.3)],
            OutcomeBounds::unit(),
        )
        .unwrap_err();
        assert!(matches!(err, EiError::NonDegeneracy(_)));
    }

    #[test]
    fn mixed_neighborhood_with_zero_population_does_not_count() {
        let err = load_aggregate(
            &[
                AggregateRow::new("a", 0.0, 0.5, 0.3),
                AggregateRow::new("b", 1.0, 1.0, 0.9),
            ],
            OutcomeBounds::unit(),
        )
        .unwrap_err();
        assert!(matches!(err, EiError::NonDegeneracy(_)));
    }

    #[test]
    fn dataset_a_moments() {
        let m = moments(&dataset_a()).unwrap();
        assert!((m.ex - 0.5).abs() < 1e-15);
        assert!((m.ey - 0.6).abs() < 1e-15);
        assert!((m.var_x - 0.25).abs() < 1e-15);
        assert!((m.var_xn - 0.09).abs() < 1e-15);
        assert!((m.gamma - 0.36).abs() < 1e-14);
        assert!((m.cov_xn_yn - 0.09).abs() < 1e-15);
    }

    #[test]
    fn single_neighborhood_has_no_between_variation() {
        let m = moments(&single(0.5, 0.5)).unwrap();
        assert_eq!(m.var_xn, 0.0);
        assert_eq!(m.gamma, 0.0);
    }

    #[test]
    fn constant_outcome_has_zero_covariance() {
        let d = load_aggregate(
            &[
                AggregateRow::new("a", 3.0, 0.1, 0.4),
                AggregateRow::new("b", 1.0, 0.7, 0.4),
                AggregateRow::new("c", 2.0, 0.4, 0.4),
            ],
            OutcomeBounds::unit(),
        )
        .unwrap();
        assert!(moments(&d).unwrap().cov_xn_yn.abs() < 1e-16);
    }

    #[test]
    fn csv_reader_round_trip() {
        let text = "id,population,x_share,y_mean\na,100,0.2,0.3\nb,100,0.8,0.9\n";
        let d = read_aggregate_csv(text.as_bytes(), OutcomeBounds::unit()).unwrap();
        assert_eq!(d, dataset_a());
    }

    #[test]
    fn csv_reader_reports_malformed_row_number() {
        let text = "id,population,x_share,y_mean\na,100,0.2,0.3\nb,abc,0.8,0.9\n";
        let err = read_aggregate_csv(text.as_bytes(), OutcomeBounds::unit()).unwrap_err();
        assert!(matches!(err, EiError::Validation { row: 2, .. }), "{err:?}");
    }

    #[test]
    fn bounds_parse() {
        assert_eq!(OutcomeBounds::parse("0:1").unwrap(), OutcomeBounds::unit());
        assert_eq!(OutcomeBounds::parse("-2.5:3").unwrap().lo, -2.5);
        assert!(OutcomeBounds::parse("1:0").is_err());
        assert!(OutcomeBounds::parse("0-1").is_err());
    }
}
