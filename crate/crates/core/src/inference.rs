//! Neighborhood bootstrap and confidence intervals for partially identified
//! parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::AggregateData;
use crate::error::{EiError, Result};
use crate::interval::Interval;
use crate::statistic::{StatValue, Statistic};

/// Standard normal CDF, accurate to about machine precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile, polished with Newton steps on [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    let mut z = Normal::standard().inverse_cdf(p);
    if z.is_finite() {
        for _ in 0..2 {
            z -= (normal_cdf(z) - p) / normal_pdf(z);
        }
    }
    z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub statistic: String,
    pub requested: usize,
    /// Successful replicate values, in replicate order.
    pub replicates: Vec<StatValue>,
    /// Standard deviation of each component across successful replicates;
    /// absent with fewer than two successes.
    pub se: Vec<Option<f64>>,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub seed: u64,
}

/// Draws one resample: `n` neighborhoods uniformly with replacement. Their
/// population shares travel with them and are renormalized.
fn resample(data: &AggregateData, rng: &mut ChaCha8Rng) -> Result<AggregateData> {
    let n = data.len();
    let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    data.resampled(&picks)
}

/// Neighborhood-level bootstrap of `statistic`.
///
/// Replicate `r` uses its own ChaCha stream of the master seed, so results do
/// not depend on thread count or scheduling.
pub fn bootstrap(
    data: &AggregateData,
    statistic: &dyn Statistic,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if replicates == 0 {
        return Err(EiError::Configuration(
            "at least one bootstrap replicate is required".into(),
        ));
    }
    let outcomes: Vec<Result<StatValue>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let sample = resample(data, &mut rng)?;
            statistic.evaluate(&sample)
        })
        .collect();

    let mut values = Vec::with_capacity(replicates);
    let mut first_failure = None;
    for o in outcomes {
        match o {
            Ok(v) => values.push(v),
            Err(e) => {
                first_failure.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let failures = replicates - values.len();
    if values.is_empty() {
        return Err(EiError::BootstrapFailure {
            replicates,
            first_failure: first_failure.unwrap_or_default(),
        });
    }
    let width = values[0].components().len();
    let se = (0..width)
        .map(|j| {
            let xs: Vec<f64> = values.iter().map(|v| v.components()[j]).collect();
            sample_sd(&xs)
        })
        .collect();
    Ok(BootstrapResult {
        statistic: statistic.name(),
        requested: replicates,
        replicates: values,
        se,
        failures,
        first_failure,
        seed,
    })
}

/// Welford's update keeps identical values at exactly zero spread.
fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &x) in xs.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    Some((m2 / (xs.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub critical_value: f64,
}

/// Confidence interval that covers the true parameter (not the whole
/// identified set) with probability `level`.
///
/// The critical value `c` solves
/// `Phi(c + (hi - lo) / max(se_lo, se_hi)) - Phi(-c) = level`, which moves from
/// the two-sided quantile for a point to the one-sided quantile for a wide
/// interval.
pub fn imbens_manski_ci(
    interval: &Interval,
    se_lo: f64,
    se_hi: f64,
    level: f64,
) -> Result<ConfidenceInterval> {
    if ![interval.lo, interval.hi, se_lo, se_hi, level]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(EiError::Input(
            "confidence interval inputs must be finite".into(),
        ));
    }
    if interval.is_rejected() || interval.lo > interval.hi {
        return Err(EiError::Input(format!(
            "cannot build a confidence interval around a rejected interval {interval}"
        )));
    }
    if se_lo < 0.0 || se_hi < 0.0 {
        return Err(EiError::Input("standard errors must be nonnegative".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EiError::Configuration(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let smax = se_lo.max(se_hi);
    if smax == 0.0 {
        return Ok(ConfidenceInterval {
            lo: interval.lo,
            hi: interval.hi,
            level,
            critical_value: normal_quantile(level),
        });
    }
    let ratio = interval.width() / smax;
    let f = |c: f64| normal_cdf(c + ratio) - normal_cdf(-c) - level;
    let c = if f(0.0) >= 0.0 {
        0.0
    } else {
        let (mut a, mut b) = (0.0, 10.0);
        while b - a > 1e-12 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    Ok(ConfidenceInterval {
        lo: interval.lo - c * se_lo,
        hi: interval.hi + c * se_hi,
        level,
        critical_value: c,
    })
}
