//! Conditional associations estimated from individual-level data, used to
//! check sign assumptions empirically.
//!
//! `E[Cov(A, B | C)]` is estimated stratum by stratum as
//! `sum_c Pr(C = c) Var(A | C = c) beta_c`, where `beta_c` is the weighted
//! least-squares slope of `B` on `A` in stratum `c`, with variance
//! `sum_c Pr(C = c)^2 Var(A | C = c)^2 SE(beta_c)^2`. Stratum shares are
//! treated as known.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{EiError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroRecord {
    /// Group indicator, 0 or 1.
    pub x: u8,
    pub y: f64,
    /// Prevalence of group 1 in the individual's neighborhood.
    pub xn: f64,
    pub weight: f64,
    pub stratum: String,
}

/// One observation for [`conditional_covariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct CovRow<K> {
    pub a: f64,
    pub b: f64,
    pub weight: f64,
    pub stratum: K,
}

impl<K> CovRow<K> {
    pub fn new(a: f64, b: f64, weight: f64, stratum: K) -> Self {
        Self {
            a,
            b,
            weight,
            stratum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub theta: f64,
    pub se: f64,
    pub strata_used: usize,
    pub strata_dropped: usize,
}

impl CovarianceEstimate {
    pub fn z(&self) -> f64 {
        if self.se > 0.0 {
            self.theta / self.se
        } else if self.theta == 0.0 {
            0.0
        } else {
            self.theta.signum() * f64::INFINITY
        }
    }

    /// Sign verdict from a two-sided test at `level` (e.g. 0.95).
    pub fn verdict(&self, level: f64) -> Verdict {
        let crit = crate::inference::normal_quantile(0.5 + level / 2.0);
        let z = self.z();
        if z > crit {
            Verdict::Positive
        } else if z < -crit {
            Verdict::Negative
        } else {
            Verdict::Indeterminate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Positive,
    Negative,
    Indeterminate,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Positive => "positive",
            Verdict::Negative => "negative",
            Verdict::Indeterminate => "indeterminate",
        })
    }
}

/// Denominator of the within-stratum variance of `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VarianceDenominator {
    /// Weighted variance scaled by `n_c / (n_c - 1)`.
    #[default]
    Sample,
    /// Plain weighted variance.
    Population,
}

/// Minimum number of positively weighted rows for a stratum to have both a
/// slope and a residual variance.
pub const MIN_STRATUM_ROWS: usize = 3;

pub fn conditional_covariance<K: Ord + Clone>(rows: &[CovRow<K>]) -> Result<CovarianceEstimate> {
    conditional_covariance_with(rows, VarianceDenominator::Sample)
}

#[derive(Default)]
struct Stratum {
    rows: Vec<usize>,
    w: f64,
    wa: f64,
    wb: f64,
}

pub fn conditional_covariance_with<K: Ord + Clone>(
    rows: &[CovRow<K>],
    denominator: VarianceDenominator,
) -> Result<CovarianceEstimate> {
    let mut strata: BTreeMap<K, Stratum> = BTreeMap::new();
    let mut total = 0.0;
    for (i, r) in rows.iter().enumerate() {
        if !(r.weight.is_finite() && r.weight >= 0.0 && r.a.is_finite() && r.b.is_finite()) {
            return Err(EiError::Input(format!(
                "row {}: non-finite value or negative weight",
                i + 1
            )));
        }
        if r.weight == 0.0 {
            continue;
        }
        let s = strata.entry(r.stratum.clone()).or_default();
        s.rows.push(i);
        s.w += r.weight;
        s.wa += r.weight * r.a;
        s.wb += r.weight * r.b;
        total += r.weight;
    }
    if total <= 0.0 {
        return Err(EiError::InsufficientData(
            "no positively weighted rows".into(),
        ));
    }

    let (mut theta, mut var, mut used, mut dropped) = (0.0, 0.0, 0usize, 0usize);
    for s in strata.values() {
        let n = s.rows.len();
        let (ma, mb) = (s.wa / s.w, s.wb / s.w);
        let (mut saa, mut sab) = (0.0, 0.0);
        for &i in &s.rows {
            let r = &rows[i];
            saa += r.weight * (r.a - ma) * (r.a - ma);
            sab += r.weight * (r.a - ma) * (r.b - mb);
        }
        if n < MIN_STRATUM_ROWS || saa <= 1e-12 * s.w * ma.abs().max(1.0).powi(2) {
            dropped += 1;
            continue;
        }
        let beta = sab / saa;
        let mut sse = 0.0;
        for &i in &s.rows {
            let r = &rows[i];
            let e = r.b - mb - beta * (r.a - ma);
            sse += r.weight * e * e;
        }
        let se2_beta = sse / (n - 2) as f64 / saa;
        let mut var_a = saa / s.w;
        if denominator == VarianceDenominator::Sample {
            var_a *= n as f64 / (n - 1) as f64;
        }
        let pr = s.w / total;
        theta += pr * var_a * beta;
        var += (pr * var_a).powi(2) * se2_beta;
        used += 1;
    }
    if used == 0 {
        return Err(EiError::InsufficientData(format!(
            "none of {dropped} strata has at least {MIN_STRATUM_ROWS} rows with variation in the regressor"
        )));
    }
    Ok(CovarianceEstimate {
        theta,
        se: var.sqrt(),
        strata_used: used,
        strata_dropped: dropped,
    })
}

/// Estimates of both conditional associations. Either may be undefined on
/// its own (for instance, the within-group association when every
/// individual lives in one neighborhood).
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSigns {
    pub delta_w: Result<CovarianceEstimate>,
    pub delta_b: Result<CovarianceEstimate>,
}

pub const DEFAULT_BIN_WIDTH: f64 = 0.05;

/// Index of the prevalence bin: prevalences are rounded to the nearest
/// multiple of `width`.
pub fn prevalence_bin(xn: f64, width: f64) -> i64 {
    (xn / width).round() as i64
}

/// Within-group association: `A = X_N`, `B = Y`, strata by group.
/// Between-group association: `A = X`, `B = Y`, strata by binned `X_N`.
pub fn estimate_delta_signs(micro: &[MicroRecord], xn_bin_width: f64) -> Result<DeltaSigns> {
    if !(xn_bin_width.is_finite() && xn_bin_width > 0.0) {
        return Err(EiError::Configuration(format!(
            "bin width must be positive, got {xn_bin_width}"
        )));
    }
    let has = |g: u8| micro.iter().any(|m| m.x == g && m.weight > 0.0);
    if !has(0) || !has(1) {
        return Err(EiError::InsufficientData(
            "both groups must be present in the individual-level data".into(),
        ));
    }
    let within: Vec<CovRow<u8>> = micro
        .iter()
        .map(|m| CovRow::new(m.xn, m.y, m.weight, m.x))
        .collect();
    let between: Vec<CovRow<i64>> = micro
        .iter()
        .map(|m| {
            CovRow::new(
                m.x as f64,
                m.y,
                m.weight,
                prevalence_bin(m.xn, xn_bin_width),
            )
        })
        .collect();
    let signs = DeltaSigns {
        delta_w: conditional_covariance(&within),
        delta_b: conditional_covariance(&between),
    };
    if let (Err(_), Err(e)) = (&signs.delta_w, &signs.delta_b) {
        return Err(e.clone());
    }
    Ok(signs)
}

/// Reads `x,y,x_n,weight,stratum` delimited text. The weight column may be
/// omitted or left blank, meaning weight 1.
pub fn read_micro_csv<R: Read>(reader: R) -> Result<Vec<MicroRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| EiError::Input(format!("cannot read header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(["x", "y", "x_n", "stratum"]) {
        *slot = col(name).ok_or_else(|| EiError::Input(format!("missing column `{name}`")))?;
    }
    let [ix, iy, ixn, istratum] = idx;
    let iw = col("weight");

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| EiError::Validation {
            row,
            id: "?".into(),
            message: format!("malformed row: {e}"),
        })?;
        let stratum = rec.get(istratum).unwrap_or("").to_string();
        let fail = |message: String| EiError::Validation {
            row,
            id: stratum.clone(),
            message,
        };
        let num = |j: usize, name: &str| -> Result<f64> {
            let s = rec.get(j).unwrap_or("");
            s.parse::<f64>()
                .map_err(|_| fail(format!("{name} is not a number: {s:?}")))
        };
        let x = num(ix, "x")?;
        let x = match x {
            0.0 => 0u8,
            1.0 => 1u8,
            v => return Err(fail(format!("x must be 0 or 1, got {v}"))),
        };
        let y = num(iy, "y")?;
        let xn = num(ixn, "x_n")?;
        if !(0.0..=1.0).contains(&xn) {
            return Err(fail(format!("x_n must lie in [0, 1], got {xn}")));
        }
        let weight = match iw.and_then(|j| rec.get(j)).filter(|s| !s.is_empty()) {
            None => 1.0,
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| fail(format!("weight is not a number: {s:?}")))?,
        };
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(fail(format!("weight must be nonnegative, got {weight}")));
        }
        if !y.is_finite() {
            return Err(fail("y must be finite".into()));
        }
        out.push(MicroRecord {
            x,
            y,
            xn,
            weight,
            stratum,
        });
    }
    if out.is_empty() {
        return Err(EiError::Input("no rows supplied".into()));
    }
    Ok(out)
}
