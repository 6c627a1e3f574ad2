//! Neighborhood-level identification: per-neighborhood method of bounds,
//! the local-linear derivative of the prevalence-outcome regression, local
//! sign-assumption bounds, and their pooled (same-prevalence) versions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assumptions::{resolve_cell, AssumptionSet, Orientation, ResolvedCell, TargetAnchors};
use crate::data::{AggregateData, NeighborhoodRecord, OutcomeBounds, FEASIBILITY_TOL};
use crate::error::{EiError, Result};
use crate::interval::{Interval, IntervalStatus};

/// Prevalence tolerance used to pool neighborhoods by default. Equivalent to
/// comparing prevalences rounded to nine decimals.
pub const DEFAULT_POOLING_TOLERANCE: f64 = 5e-10;

/// Per-neighborhood bounds on the group means and their difference. A mean
/// is absent when the neighborhood has no members of that group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMob {
    pub x: f64,
    pub y: f64,
    pub y1: Option<Interval>,
    pub y0: Option<Interval>,
    pub d: Option<Interval>,
}

impl LocalMob {
    fn mixed(x: f64, y: f64, y1: (f64, f64), y0: (f64, f64)) -> Self {
        Self {
            x,
            y,
            y1: Some(Interval::new(y1.0, y1.1)),
            y0: Some(Interval::new(y0.0, y0.1)),
            d: Some(Interval::new(y1.0 - y0.1, y1.1 - y0.0)),
        }
    }
}

/// `(Y1-, Y1+, Y0-, Y0+)` for a neighborhood with `0 < x < 1`.
pub(crate) fn mob_endpoints(x: f64, y: f64, b: OutcomeBounds) -> (f64, f64, f64, f64) {
    let y1_hi = ((y - b.lo * (1.0 - x)) / x).min(b.hi);
    let y1_lo = ((y - b.hi * (1.0 - x)) / x).max(b.lo);
    let y0_hi = ((y - b.lo * x) / (1.0 - x)).min(b.hi);
    let y0_lo = ((y - b.hi * x) / (1.0 - x)).max(b.lo);
    (y1_lo, y1_hi, y0_lo, y0_hi)
}

pub fn neighborhood_mob(record: &NeighborhoodRecord, bounds: OutcomeBounds) -> LocalMob {
    let (x, y) = (record.x, record.y);
    if x >= 1.0 {
        return LocalMob {
            x,
            y,
            y1: Some(Interval::point(y)),
            y0: None,
            d: None,
        };
    }
    if x <= 0.0 {
        return LocalMob {
            x,
            y,
            y1: None,
            y0: Some(Interval::point(y)),
            d: None,
        };
    }
    let (a, b, c, d) = mob_endpoints(x, y, bounds);
    LocalMob::mixed(x, y, (a, b), (c, d))
}

/// Epanechnikov kernel. The constant cancels in weighted least squares.
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeEstimate {
    pub x0: f64,
    pub slope: f64,
    /// Fitted level of the regression function at `x0`.
    pub level: f64,
    pub bandwidth: f64,
    pub effective_n: usize,
}

/// Kernel-weighted local-linear fit over `records`.
fn fit_local_linear<'a>(
    records: impl Iterator<Item = &'a NeighborhoodRecord> + Clone,
    x0: f64,
    h: f64,
) -> Result<DerivativeEstimate> {
    let undefined = |reason: String| EiError::UndefinedDerivative { x0, reason };
    let (mut sw, mut sx, mut sy, mut n) = (0.0, 0.0, 0.0, 0usize);
    for r in records.clone() {
        let w = r.p * epanechnikov((r.x - x0) / h);
        if w > 0.0 {
            sw += w;
            sx += w * r.x;
            sy += w * r.y;
            n += 1;
        }
    }
    if n < 2 {
        return Err(undefined(format!(
            "{n} neighborhood(s) within bandwidth {h}; need at least 2"
        )));
    }
    let (xb, yb) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for r in records {
        let w = r.p * epanechnikov((r.x - x0) / h);
        if w > 0.0 {
            sxx += w * (r.x - xb) * (r.x - xb);
            sxy += w * (r.x - xb) * (r.y - yb);
        }
    }
    if sxx <= 1e-14 * sw * h * h {
        return Err(undefined(format!(
            "no prevalence spread among the {n} neighborhoods within bandwidth {h}"
        )));
    }
    let slope = sxy / sxx;
    Ok(DerivativeEstimate {
        x0,
        slope,
        level: yb + slope * (x0 - xb),
        bandwidth: h,
        effective_n: n,
    })
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(EiError::Configuration(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    Ok(())
}

/// Population-weighted local-linear slope of `Y_n` on `X_n` at `x0`.
///
/// Prevalences outside the observed range are refused rather than
/// extrapolated.
pub fn local_derivative(
    data: &AggregateData,
    x0: f64,
    bandwidth: f64,
) -> Result<DerivativeEstimate> {
    check_bandwidth(bandwidth)?;
    let (lo, hi) = data
        .records()
        .iter()
        .filter(|r| r.p > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(r.x), b.max(r.x))
        });
    if !(x0 >= lo && x0 <= hi) {
        return Err(EiError::UndefinedDerivative {
            x0,
            reason: format!("outside the observed prevalence range [{lo}, {hi}]"),
        });
    }
    fit_local_linear(data.records().iter(), x0, bandwidth)
}

/// Fifteen log-spaced bandwidths from 0.02 to 0.5.
pub fn default_bandwidth_grid() -> Vec<f64> {
    log_grid(0.02, 0.5, 15)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    // Pin the endpoints against rounding in exp(ln(.)).
    g[0] = lo;
    g[n - 1] = hi;
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthChoice {
    pub bandwidth: f64,
    pub candidates: Vec<f64>,
    /// Population-weighted out-of-fold squared error per candidate; `None`
    /// when the fit was undefined on some fold.
    pub cv_error: Vec<Option<f64>>,
}

/// K-fold cross-validated bandwidth for the local-linear level fit.
///
/// Ties (within a negligible fraction of the outcome variance) go to the
/// largest candidate.
pub fn cv_bandwidth(
    data: &AggregateData,
    folds: usize,
    candidates: &[f64],
    seed: u64,
) -> Result<BandwidthChoice> {
    if candidates.is_empty() {
        return Err(EiError::Configuration("empty bandwidth grid".into()));
    }
    for &h in candidates {
        check_bandwidth(h)?;
    }
    let recs = data.records();
    if folds < 2 || recs.len() < folds {
        return Err(EiError::InsufficientData(format!(
            "{}-fold cross-validation needs at least {} neighborhoods, got {}",
            folds,
            folds.max(2),
            recs.len()
        )));
    }
    let mut order: Vec<usize> = (0..recs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0usize; recs.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    // Per candidate: total error, or the first fold on which the fit failed.
    let outcomes: Vec<std::result::Result<f64, usize>> = candidates
        .iter()
        .map(|&h| {
            let mut total = 0.0;
            for k in 0..folds {
                let train = recs
                    .iter()
                    .zip(&fold_of)
                    .filter(move |(_, &f)| f != k)
                    .map(|(r, _)| r);
                for (r, _) in recs.iter().zip(&fold_of).filter(|(_, &f)| f == k) {
                    let fit = fit_local_linear(train.clone(), r.x, h).map_err(|_| k)?;
                    total += r.p * (r.y - fit.level).powi(2);
                }
            }
            Ok(total)
        })
        .collect();
    let cv_error: Vec<Option<f64>> = outcomes.iter().map(|o| o.ok()).collect();

    let best = cv_error
        .iter()
        .filter_map(|e| *e)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        let (h, fold) = candidates
            .iter()
            .zip(&outcomes)
            .max_by(|a, b| a.0.total_cmp(b.0))
            .map(|(&h, o)| (h, *o.as_ref().unwrap_err()))
            .expect("non-empty grid");
        return Err(EiError::WidenGrid {
            bandwidth: h,
            fold: fold + 1,
        });
    }
    let ey: f64 = recs.iter().map(|r| r.p * r.y).sum();
    let var_y: f64 = recs.iter().map(|r| r.p * (r.y - ey).powi(2)).sum();
    let tie = 1e-10 * var_y.max(f64::MIN_POSITIVE);
    let bandwidth = candidates
        .iter()
        .zip(&cv_error)
        .filter(|(_, e)| e.is_some_and(|e| e <= best + tie))
        .map(|(&h, _)| h)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BandwidthChoice {
        bandwidth,
        candidates: candidates.to_vec(),
        cv_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBoundsReport {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub d: Option<Interval>,
    pub y1: Option<Interval>,
    pub y0: Option<Interval>,
    pub cell: ResolvedCell,
    pub slope: Option<f64>,
    pub status: IntervalStatus,
    pub rejection_reason: Option<String>,
}

/// Bounds on a neighborhood's group means under local sign assumptions.
///
/// Restrictions on the local within-group association use the slope of the
/// prevalence-outcome regression at the neighborhood's prevalence, which only
/// speaks to this neighborhood if neighborhoods sharing a prevalence share
/// their group means. Callers must acknowledge that assumption through
/// `same_prevalence_same_means`; the pooled version
/// ([`tilde_monotone_bounds`]) does not need it.
pub fn local_monotone_bounds(
    record: &NeighborhoodRecord,
    bounds: OutcomeBounds,
    assumptions: AssumptionSet,
    slope: Option<f64>,
    same_prevalence_same_means: bool,
) -> Result<LocalBoundsReport> {
    let mob = neighborhood_mob(record, bounds);
    let report = bounds_from_parts(&record.id, &mob, bounds, assumptions, slope)?;
    if report.slope.is_some() && !same_prevalence_same_means {
        return Err(EiError::Configuration(
            "within-group restrictions at a single neighborhood require acknowledging that \
             neighborhoods with equal prevalence share group means"
                .into(),
        ));
    }
    Ok(report)
}

fn bounds_from_parts(
    id: &str,
    mob: &LocalMob,
    bounds: OutcomeBounds,
    assumptions: AssumptionSet,
    slope: Option<f64>,
) -> Result<LocalBoundsReport> {
    let tol = FEASIBILITY_TOL * bounds.width().max(1.0);
    let (x, y) = (mob.x, mob.y);
    let (Some(md), Some(m1), Some(m0)) = (mob.d, mob.y1, mob.y0) else {
        // Only one group lives here; its mean is the neighborhood mean.
        return Ok(LocalBoundsReport {
            id: id.to_string(),
            x,
            y,
            d: None,
            y1: mob.y1,
            y0: mob.y0,
            cell: resolve_cell(assumptions.with_reinforcement(false), None, tol)?,
            slope: None,
            status: IntervalStatus::Identified,
            rejection_reason: None,
        });
    };
    if assumptions.contextual_reinforcement && slope.is_none() {
        assumptions.validate()?;
        return Err(EiError::Configuration(
            "local contextual reinforcement requires the regression slope".into(),
        ));
    }
    let cell = resolve_cell(assumptions, slope, tol)?;
    let uses_slope = cell.within != crate::assumptions::SignAssumption::Unknown || cell.tie;
    let missing = || {
        EiError::Configuration("a within-group restriction requires the regression slope".into())
    };

    let targets = [
        TargetAnchors {
            name: "D_n",
            mob: (md.lo, md.hi),
            within: slope,
            within_label: "slope",
            between: 0.0,
            between_label: "0",
            zero_point: 0.0,
            orientation: Orientation::Increasing,
        },
        TargetAnchors {
            name: "Y1_n",
            mob: (m1.lo, m1.hi),
            within: slope.map(|s| y + (1.0 - x) * s),
            within_label: "Y_n + (1 - X_n) slope",
            between: y,
            between_label: "Y_n",
            zero_point: y,
            orientation: Orientation::Increasing,
        },
        TargetAnchors {
            name: "Y0_n",
            mob: (m0.lo, m0.hi),
            within: slope.map(|s| y - x * s),
            within_label: "Y_n - X_n slope",
            between: y,
            between_label: "Y_n",
            zero_point: y,
            orientation: Orientation::Decreasing,
        },
    ];
    let mut out = Vec::with_capacity(3);
    let mut reason = None;
    for t in &targets {
        let (iv, why) = t.identify(&cell, tol, missing)?;
        if reason.is_none() {
            reason = why;
        }
        out.push(iv);
    }
    let status = if out.iter().any(Interval::is_rejected) {
        IntervalStatus::Rejected
    } else if out.iter().all(|i| i.status == IntervalStatus::Identified) {
        IntervalStatus::Identified
    } else {
        IntervalStatus::Bounded
    };
    Ok(LocalBoundsReport {
        id: id.to_string(),
        x,
        y,
        d: Some(out[0]),
        y1: Some(out[1]),
        y0: Some(out[2]),
        cell,
        slope: if uses_slope { slope } else { None },
        status,
        rejection_reason: reason,
    })
}

/// Neighborhoods sharing a prevalence value, pooled with population weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeGroup {
    pub prevalence: f64,
    pub members: Vec<String>,
    /// Positions of the members in the dataset.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// Pooled mean outcome and pooled bounds (weighted member endpoints).
    pub pooled: LocalMob,
}

/// Pools every neighborhood whose prevalence is within `tolerance` of
/// `prevalence`.
pub fn tilde_aggregate(
    data: &AggregateData,
    prevalence: f64,
    tolerance: f64,
) -> Result<TildeGroup> {
    let indices: Vec<usize> = data
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| (r.x - prevalence).abs() <= tolerance)
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(EiError::NotFound {
            prevalence,
            tolerance,
        });
    }
    pool(data, indices)
}

fn pool(data: &AggregateData, indices: Vec<usize>) -> Result<TildeGroup> {
    let recs = data.records();
    let mass: f64 = indices.iter().map(|&i| recs[i].p).sum();
    if mass <= 0.0 {
        return Err(EiError::InsufficientData(
            "every pooled neighborhood has zero population".into(),
        ));
    }
    let weights: Vec<f64> = indices.iter().map(|&i| recs[i].p / mass).collect();
    let wavg = |f: &dyn Fn(&NeighborhoodRecord) -> f64| -> f64 {
        indices
            .iter()
            .zip(&weights)
            .map(|(&i, w)| w * f(&recs[i]))
            .sum()
    };
    let x = wavg(&|r| r.x);
    let y = wavg(&|r| r.y);
    let bounds = data.bounds();
    let pooled = if indices.iter().all(|&i| recs[i].is_mixed()) {
        let mut e = [0.0; 4];
        for (&i, w) in indices.iter().zip(&weights) {
            let (a, b, c, d) = mob_endpoints(recs[i].x, recs[i].y, bounds);
            for (acc, v) in e.iter_mut().zip([a, b, c, d]) {
                *acc += w * v;
            }
        }
        LocalMob::mixed(x, y, (e[0], e[1]), (e[2], e[3]))
    } else {
        let probe = NeighborhoodRecord::new("", 1.0, x, y);
        neighborhood_mob(&probe, bounds)
    };
    Ok(TildeGroup {
        prevalence: x,
        members: indices.iter().map(|&i| recs[i].id.clone()).collect(),
        indices,
        weights,
        pooled,
    })
}

/// Partitions the dataset into pooling groups, ordered by prevalence. A group
/// collects consecutive prevalences within `tolerance` of its smallest one.
pub fn tilde_groups(data: &AggregateData, tolerance: f64) -> Result<Vec<TildeGroup>> {
    let recs = data.records();
    let mut order: Vec<usize> = (0..recs.len()).collect();
    order.sort_by(|&a, &b| recs[a].x.total_cmp(&recs[b].x).then(a.cmp(&b)));
    let mut groups = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for i in order {
        if let Some(&first) = current.first() {
            if recs[i].x - recs[first].x > tolerance {
                groups.push(pool(data, std::mem::take(&mut current))?);
            }
        }
        current.push(i);
    }
    if !current.is_empty() {
        groups.push(pool(data, current)?);
    }
    Ok(groups)
}

/// Local bounds applied to a pooled group. These bound the pooled
/// (population-weighted) group means of all neighborhoods at this prevalence.
pub fn tilde_monotone_bounds(
    group: &TildeGroup,
    bounds: OutcomeBounds,
    assumptions: AssumptionSet,
    slope: Option<f64>,
) -> Result<LocalBoundsReport> {
    let id = group.members.join("+");
    bounds_from_parts(&id, &group.pooled, bounds, assumptions, slope)
}
