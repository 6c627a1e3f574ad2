//! Ecological regression and the neighborhood model.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{moments, AggregateData};
use crate::error::{EiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ER")]
    EcologicalRegression,
    #[serde(rename = "NM")]
    NeighborhoodModel,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::EcologicalRegression => "ER",
            Method::NeighborhoodModel => "NM",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub d: f64,
    pub y1: f64,
    pub y0: f64,
    pub method: Method,
    /// Both group means fall inside the outcome bounds. Ecological regression
    /// can violate this; the estimates are returned unclamped.
    pub feasible: bool,
}

/// Population-weighted least squares of `Y_n` on `X_n`, via centered
/// cross-products.
pub fn ecological_regression(data: &AggregateData) -> Result<PointEstimates> {
    let m = moments(data)?;
    if m.var_xn <= 0.0 {
        return Err(EiError::NoVariation);
    }
    let d = m.cov_xn_yn / m.var_xn;
    let y1 = m.ey + d * (1.0 - m.ex);
    let y0 = m.ey - d * m.ex;
    let b = data.bounds();
    Ok(PointEstimates {
        d,
        y1,
        y0,
        method: Method::EcologicalRegression,
        feasible: b.contains(y1) && b.contains(y0),
    })
}

/// Prevalence-weighted neighborhood averages: every member of a
/// neighborhood is assigned the neighborhood mean.
pub fn neighborhood_model(data: &AggregateData) -> Result<PointEstimates> {
    let m = moments(data)?;
    let (mut s1, mut s0) = (0.0, 0.0);
    for r in data.records() {
        s1 += r.p * r.x * r.y;
        s0 += r.p * (1.0 - r.x) * r.y;
    }
    let y1 = s1 / m.ex;
    let y0 = s0 / (1.0 - m.ex);
    let b = data.bounds();
    Ok(PointEstimates {
        d: y1 - y0,
        y1,
        y0,
        method: Method::NeighborhoodModel,
        feasible: b.contains(y1) && b.contains(y0),
    })
}

/// A point estimator of the group means, selectable by name.
pub trait PointEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, data: &AggregateData) -> Result<PointEstimates>;
}

pub struct EcologicalRegression;

impl PointEstimator for EcologicalRegression {
    fn name(&self) -> &'static str {
        "er"
    }

    fn estimate(&self, data: &AggregateData) -> Result<PointEstimates> {
        ecological_regression(data)
    }
}

pub struct NeighborhoodModel;

impl PointEstimator for NeighborhoodModel {
    fn name(&self) -> &'static str {
        "nm"
    }

    fn estimate(&self, data: &AggregateData) -> Result<PointEstimates> {
        neighborhood_model(data)
    }
}

/// All registered point estimators, in display order.
pub fn point_estimators() -> Vec<Box<dyn PointEstimator>> {
    vec![Box::new(EcologicalRegression), Box::new(NeighborhoodModel)]
}

pub fn point_estimator(name: &str) -> Result<Box<dyn PointEstimator>> {
    let key = name.trim().to_ascii_lowercase();
    point_estimators()
        .into_iter()
        .find(|e| e.name() == key)
        .ok_or_else(|| {
            EiError::Configuration(format!(
                "unknown point estimator {name:?}; expected er or nm"
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::{dataset_a, single};
    use crate::data::{load_aggregate, AggregateRow, OutcomeBounds};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn ecological_regression_on_dataset_a() {
        let er = ecological_regression(&dataset_a()).unwrap();
        assert!(close(er.d, 1.0) && close(er.y1, 1.1) && close(er.y0, 0.1));
        assert!(!er.feasible);
    }

    #[test]
    fn neighborhood_model_on_dataset_a() {
        let nm = neighborhood_model(&dataset_a()).unwrap();
        assert!(close(nm.y1, 0.78) && close(nm.y0, 0.42) && close(nm.d, 0.36));
        assert!(nm.feasible);
        let er = ecological_regression(&dataset_a()).unwrap();
        assert!(close(nm.d, 0.36 * er.d));
    }

    #[test]
    fn flat_outcome() {
        let d = load_aggregate(
            &[
                AggregateRow::new("a", 2.0, 0.1, 0.35),
                AggregateRow::new("b", 1.0, 0.6, 0.35),
                AggregateRow::new("c", 1.0, 0.9, 0.35),
            ],
            OutcomeBounds::unit(),
        )
        .unwrap();
        let er = ecological_regression(&d).unwrap();
        assert!(er.d.abs() < 1e-14);
        assert!(close(er.y1, 0.35) && close(er.y0, 0.35));
        let nm = neighborhood_model(&d).unwrap();
        assert!(nm.d.abs() < 1e-14 && close(nm.y1, 0.35));
    }

    #[test]
    fn single_neighborhood_has_no_regression_slope() {
        assert_eq!(
            ecological_regression(&single(0.5, 0.5)).unwrap_err(),
            EiError::NoVariation
        );
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(point_estimator("ER").unwrap().name(), "er");
        assert_eq!(point_estimator("nm").unwrap().name(), "nm");
        assert!(point_estimator("king").is_err());
        let a = dataset_a();
        for e in point_estimators() {
            assert!(e.estimate(&a).is_ok());
        }
    }
}
