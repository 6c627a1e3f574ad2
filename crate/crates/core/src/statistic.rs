//! Named statistics of aggregate data, for resampling and the command line.

use serde::{Deserialize, Serialize};

use crate::assumptions::AssumptionSet;
use crate::data::{moments, AggregateData};
use crate::error::{EiError, Result};
use crate::global::{bounds_for_target, method_of_bounds, Target};
use crate::interval::Interval;
use crate::point::{point_estimator, PointEstimates};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatValue {
    Scalar(f64),
    Interval(Interval),
}

impl StatValue {
    /// Scalar, or the two interval endpoints.
    pub fn components(&self) -> Vec<f64> {
        match self {
            StatValue::Scalar(v) => vec![*v],
            StatValue::Interval(iv) => vec![iv.lo, iv.hi],
        }
    }
}

/// A quantity computed from aggregate data.
pub trait Statistic: Send + Sync {
    fn name(&self) -> String;
    fn evaluate(&self, data: &AggregateData) -> Result<StatValue>;
}

/// Population-weighted mean outcome.
pub struct MeanOutcome;

impl Statistic for MeanOutcome {
    fn name(&self) -> String {
        "mean-y".into()
    }

    fn evaluate(&self, data: &AggregateData) -> Result<StatValue> {
        Ok(StatValue::Scalar(
            data.records().iter().map(|r| r.p * r.y).sum(),
        ))
    }
}

pub struct Gamma;

impl Statistic for Gamma {
    fn name(&self) -> String {
        "gamma".into()
    }

    fn evaluate(&self, data: &AggregateData) -> Result<StatValue> {
        Ok(StatValue::Scalar(moments(data)?.gamma))
    }
}

/// One component of a registered point estimator.
pub struct PointStatistic {
    pub estimator: String,
    pub target: Target,
}

fn pick(p: &PointEstimates, target: Target) -> f64 {
    match target {
        Target::Difference => p.d,
        Target::Group1Mean => p.y1,
        Target::Group0Mean => p.y0,
    }
}

impl Statistic for PointStatistic {
    fn name(&self) -> String {
        format!("{}-{}", self.estimator, self.target)
    }

    fn evaluate(&self, data: &AggregateData) -> Result<StatValue> {
        let p = point_estimator(&self.estimator)?.estimate(data)?;
        Ok(StatValue::Scalar(pick(&p, self.target)))
    }
}

pub struct MobStatistic {
    pub target: Target,
}

impl Statistic for MobStatistic {
    fn name(&self) -> String {
        format!("mob-{}", self.target)
    }

    fn evaluate(&self, data: &AggregateData) -> Result<StatValue> {
        Ok(StatValue::Interval(
            method_of_bounds(data)?.for_target(self.target),
        ))
    }
}

/// Sharp bounds under a fixed assumption cell. A rejected cell is an error,
/// so that resampling counts it as a failed replicate.
pub struct BoundsStatistic {
    pub target: Target,
    pub assumptions: AssumptionSet,
}

impl Statistic for BoundsStatistic {
    fn name(&self) -> String {
        format!("bounds-{} ({})", self.target, self.assumptions)
    }

    fn evaluate(&self, data: &AggregateData) -> Result<StatValue> {
        let report = bounds_for_target(data, self.target, self.assumptions)?;
        if report.is_rejected() {
            return Err(EiError::Infeasible(format!(
                "assumption rejected: {}",
                report.rejection_reason.unwrap_or_default()
            )));
        }
        Ok(StatValue::Interval(report.interval))
    }
}

pub const STATISTIC_NAMES: [&str; 6] = ["mean-y", "gamma", "er", "nm", "mob", "bounds"];

/// Looks up a statistic by name. `target` and `assumptions` parameterize the
/// estimator and bound statistics and are ignored by the others.
pub fn statistic_by_name(
    name: &str,
    target: Target,
    assumptions: AssumptionSet,
) -> Result<Box<dyn Statistic>> {
    Ok(match name.trim().to_ascii_lowercase().as_str() {
        "mean-y" => Box::new(MeanOutcome),
        "gamma" => Box::new(Gamma),
        key @ ("er" | "nm") => Box::new(PointStatistic {
            estimator: key.to_string(),
            target,
        }),
        "mob" => Box::new(MobStatistic { target }),
        "bounds" => Box::new(BoundsStatistic {
            target,
            assumptions,
        }),
        other => {
            return Err(EiError::Configuration(format!(
                "unknown statistic {other:?}; expected one of {}",
                STATISTIC_NAMES.join(", ")
            )))
        }
    })
}
