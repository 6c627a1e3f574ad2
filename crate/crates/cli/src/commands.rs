//! The subcommands. Each returns a rendered report plus the exit status it
//! implies; errors carry their own status.

use std::fs::File;
use std::path::Path;

use monotone_ei::local::{default_bandwidth_grid, tilde_groups, DEFAULT_POOLING_TOLERANCE};
use monotone_ei::oracle::{sharpness_audit, sharpness_check, SharpnessReport};
use monotone_ei::{
    bootstrap, cv_bandwidth, estimate_delta_signs, imbens_manski_ci, local_derivative,
    local_monotone_bounds, read_aggregate_csv, read_micro_csv, statistic_by_name,
    tilde_monotone_bounds, AggregateData, AssumptionSet, BoundsInputs, BoundsReport,
    ConfidenceInterval, CovarianceEstimate, EiError, Interval, IntervalStatus, LocalBoundsReport,
    MobEstimates, Moments, PointEstimates, ResolvedCell, Sign, StatValue, Target, Verdict,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::render;

pub const EXIT_INPUT: i32 = 1;
pub const EXIT_STATISTICAL: i32 = 2;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn statistical(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_STATISTICAL,
            message: message.into(),
        }
    }
}

impl From<EiError> for Failure {
    fn from(e: EiError) -> Self {
        let code = if e.is_statistical() {
            EXIT_STATISTICAL
        } else {
            EXIT_INPUT
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// A finished report. A nonzero `code` with a `warning` still prints the
/// report (for example, a rejected assumption cell).
pub struct Output {
    pub text: String,
    pub code: i32,
    pub warning: Option<String>,
}

impl Output {
    fn ok(text: String) -> Self {
        Self {
            text,
            code: 0,
            warning: None,
        }
    }
}

type CmdResult = std::result::Result<Output, Failure>;

fn open(path: &Path) -> std::result::Result<File, Failure> {
    File::open(path).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("cannot open {}: {e}", path.display()),
    })
}

pub fn load(cfg: &RunConfig) -> std::result::Result<AggregateData, Failure> {
    Ok(read_aggregate_csv(open(cfg.input()?)?, cfg.bounds)?)
}

#[derive(Debug, Serialize)]
pub struct TargetBounds {
    #[serde(flatten)]
    pub interval: Interval,
    pub rejection_reason: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct BoundsOutput {
    pub neighborhoods: usize,
    pub population: f64,
    pub moments: Moments,
    pub mob: MobEstimates,
    pub er: Option<PointEstimates>,
    pub nm: PointEstimates,
    pub assumptions: AssumptionSet,
    pub cell: ResolvedCell,
    pub implied_sign: Option<Sign>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<TargetBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y1: Option<TargetBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<TargetBounds>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn bounds(cfg: &RunConfig) -> CmdResult {
    let data = load(cfg)?;
    let inputs = BoundsInputs::compute(&data)?;
    let targets: Vec<Target> = match cfg.group {
        Some(t) => vec![t],
        None => Target::ALL.to_vec(),
    };
    let reports: Vec<BoundsReport> = targets
        .iter()
        .map(|&t| inputs.bounds(data.bounds(), t, cfg.assumptions))
        .collect::<monotone_ei::Result<_>>()?;

    let find = |t: Target| {
        reports
            .iter()
            .find(|r| r.target == t)
            .map(|r| TargetBounds {
                interval: r.interval,
                rejection_reason: r.rejection_reason.clone(),
            })
    };
    let cell = reports[0].cell;
    let out = BoundsOutput {
        neighborhoods: data.len(),
        population: data.population_total(),
        moments: inputs.moments,
        mob: inputs.mob,
        er: inputs.er,
        nm: inputs.nm,
        assumptions: cfg.assumptions,
        cell,
        implied_sign: cell.implied_sign,
        d: find(Target::Difference),
        y1: find(Target::Group1Mean),
        y0: find(Target::Group0Mean),
        notes: reports[0].notes.clone(),
    };
    let text = render::emit(cfg.format, &out, render::bounds_table, render::bounds_csv);

    let rejected: Vec<String> = reports
        .iter()
        .filter(|r| r.is_rejected())
        .map(|r| {
            format!(
                "{}: {}",
                r.target,
                r.rejection_reason.as_deref().unwrap_or("rejected")
            )
        })
        .collect();
    if rejected.is_empty() {
        Ok(Output::ok(text))
    } else {
        Ok(Output {
            text,
            code: EXIT_STATISTICAL,
            warning: Some(format!(
                "assumptions rejected by the data: {}",
                rejected.join("; ")
            )),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct LocalRow {
    #[serde(flatten)]
    pub report: LocalBoundsReport,
    /// Estimated regression slope at this prevalence, whether or not the
    /// assumptions used it.
    pub regression_slope: f64,
}

#[derive(Debug, Serialize)]
pub struct Skipped {
    pub id: String,
    pub x: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub slope: f64,
    pub level: f64,
}

#[derive(Debug, Serialize)]
pub struct LocalOutput {
    pub bandwidth: f64,
    pub bandwidth_source: &'static str,
    pub assumptions: AssumptionSet,
    pub pooled: bool,
    pub neighborhoods: Vec<LocalRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<Skipped>,
    pub curve: Vec<CurvePoint>,
}

const CURVE_POINTS: usize = 50;

fn slope_curve(data: &AggregateData, h: f64) -> Vec<CurvePoint> {
    let (lo, hi) = data
        .records()
        .iter()
        .filter(|r| r.p > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(r.x), b.max(r.x))
        });
    if hi <= lo {
        return Vec::new();
    }
    (0..CURVE_POINTS)
        .filter_map(|i| {
            let x = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
            local_derivative(data, x.min(hi), h)
                .ok()
                .map(|d| CurvePoint {
                    x: d.x0,
                    slope: d.slope,
                    level: d.level,
                })
        })
        .collect()
}

/// One unit of local analysis: a neighborhood, or a pooled prevalence group.
struct Unit {
    id: String,
    x: f64,
    report: Box<dyn Fn(f64) -> monotone_ei::Result<LocalBoundsReport>>,
}

pub fn local(cfg: &RunConfig) -> CmdResult {
    let data = load(cfg)?;
    let (bandwidth, bandwidth_source) = match cfg.bandwidth {
        Some(h) => (h, "given"),
        None => {
            let grid = default_bandwidth_grid();
            let choice = cv_bandwidth(&data, cfg.cv_folds, &grid, cfg.seed)?;
            (choice.bandwidth, "cross-validation")
        }
    };

    let a = cfg.assumptions;
    let bounds = data.bounds();
    let units: Vec<Unit> = if cfg.pooled {
        tilde_groups(&data, DEFAULT_POOLING_TOLERANCE)?
            .into_iter()
            .map(|g| Unit {
                id: g.members.join("+"),
                x: g.prevalence,
                report: Box::new(move |s| tilde_monotone_bounds(&g, bounds, a, Some(s))),
            })
            .collect()
    } else {
        let ack = cfg.same_means;
        data.records()
            .iter()
            .cloned()
            .map(|r| Unit {
                id: r.id.clone(),
                x: r.x,
                report: Box::new(move |s| local_monotone_bounds(&r, bounds, a, Some(s), ack)),
            })
            .collect()
    };

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for u in &units {
        match local_derivative(&data, u.x, bandwidth) {
            Ok(d) => rows.push(LocalRow {
                report: (u.report)(d.slope).map_err(|e| match e {
                    EiError::Configuration(msg) => Failure {
                        code: EXIT_INPUT,
                        message: format!(
                            "{msg}; pass --same-means, or --pooled to pool by prevalence"
                        ),
                    },
                    e => e.into(),
                })?,
                regression_slope: d.slope,
            }),
            Err(e) if e.is_statistical() => skipped.push(Skipped {
                id: u.id.clone(),
                x: u.x,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    if !skipped.is_empty() && !cfg.skip_undefined {
        let ids: Vec<&str> = skipped.iter().map(|s| s.id.as_str()).collect();
        return Err(Failure::statistical(format!(
            "regression derivative undefined at {}: {}; pass --skip-undefined to omit them",
            ids.join(", "),
            skipped[0].reason
        )));
    }

    let curve = slope_curve(&data, bandwidth);
    if let Some(path) = &cfg.curve {
        std::fs::write(path, render::curve_csv(&curve)).map_err(|e| Failure {
            code: EXIT_INPUT,
            message: format!("cannot write {}: {e}", path.display()),
        })?;
    }
    let out = LocalOutput {
        bandwidth,
        bandwidth_source,
        assumptions: a,
        pooled: cfg.pooled,
        neighborhoods: rows,
        skipped,
        curve,
    };
    let text = render::emit(cfg.format, &out, render::local_table, render::local_csv);
    let rejected: Vec<&str> = out
        .neighborhoods
        .iter()
        .filter(|r| r.report.status == IntervalStatus::Rejected)
        .map(|r| r.report.id.as_str())
        .collect();
    if rejected.is_empty() {
        Ok(Output::ok(text))
    } else {
        Ok(Output {
            text,
            code: EXIT_STATISTICAL,
            warning: Some(format!("assumptions rejected at {}", rejected.join(", "))),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct SignEstimate {
    pub theta: Option<f64>,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub verdict: Option<Verdict>,
    pub strata_used: Option<usize>,
    pub strata_dropped: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SignEstimate {
    fn new(r: &monotone_ei::Result<CovarianceEstimate>, level: f64) -> Self {
        match r {
            Ok(e) => Self {
                theta: Some(e.theta),
                se: Some(e.se),
                z: Some(e.z()),
                verdict: Some(e.verdict(level)),
                strata_used: Some(e.strata_used),
                strata_dropped: Some(e.strata_dropped),
                error: None,
            },
            Err(e) => Self {
                theta: None,
                se: None,
                z: None,
                verdict: None,
                strata_used: None,
                strata_dropped: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MicroOutput {
    pub rows: usize,
    pub bin_width: f64,
    pub level: f64,
    pub delta_w: SignEstimate,
    pub delta_b: SignEstimate,
}

pub fn micro_signs(cfg: &RunConfig) -> CmdResult {
    let micro = read_micro_csv(open(cfg.input()?)?)?;
    let signs = estimate_delta_signs(&micro, cfg.bin_width)?;
    let out = MicroOutput {
        rows: micro.len(),
        bin_width: cfg.bin_width,
        level: cfg.level,
        delta_w: SignEstimate::new(&signs.delta_w, cfg.level),
        delta_b: SignEstimate::new(&signs.delta_b, cfg.level),
    };
    Ok(Output::ok(render::emit(
        cfg.format,
        &out,
        render::micro_table,
        render::micro_csv,
    )))
}

#[derive(Debug, Serialize)]
pub struct CiOutput {
    pub statistic: String,
    pub target: Option<Target>,
    /// Assumptions the resampled statistic was evaluated under; contextual
    /// reinforcement is pinned to the branch chosen on the full sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionSet>,
    pub estimate: Interval,
    pub se_lo: f64,
    pub se_hi: f64,
    pub ci: ConfidenceInterval,
    pub replicates: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub seed: u64,
}

pub fn ci(cfg: &RunConfig) -> CmdResult {
    if cfg.replicates < 2 {
        return Err(EiError::Configuration("at least two replicates are required".into()).into());
    }
    let data = load(cfg)?;
    let name = cfg.statistic.trim().to_ascii_lowercase();
    let target = cfg.group.unwrap_or(Target::Difference);
    let scalar_only = matches!(name.as_str(), "mean-y" | "gamma");

    let mut assumptions = None;
    if name == "bounds" {
        let report =
            BoundsInputs::compute(&data)?.bounds(data.bounds(), target, cfg.assumptions)?;
        if report.is_rejected() {
            return Err(Failure::statistical(format!(
                "assumptions rejected by the data: {}",
                report.rejection_reason.unwrap_or_default()
            )));
        }
        assumptions = Some(report.pinned_assumptions());
    }
    let statistic = statistic_by_name(&name, target, assumptions.unwrap_or(cfg.assumptions))?;
    let estimate = statistic.evaluate(&data)?;
    let boot = bootstrap(&data, statistic.as_ref(), cfg.replicates, cfg.seed)?;
    let se: Vec<f64> = boot
        .se
        .iter()
        .map(|s| {
            s.ok_or_else(|| {
                Failure::statistical(format!(
                    "fewer than two successful replicates; first failure: {}",
                    boot.first_failure.as_deref().unwrap_or("none")
                ))
            })
        })
        .collect::<std::result::Result<_, _>>()?;
    let (interval, se_lo, se_hi) = match estimate {
        StatValue::Scalar(v) => (Interval::point(v), se[0], se[0]),
        StatValue::Interval(iv) => (iv, se[0], se[1]),
    };
    let ci = imbens_manski_ci(&interval, se_lo, se_hi, cfg.level)?;
    let out = CiOutput {
        statistic: statistic.name(),
        target: (!scalar_only).then_some(target),
        assumptions,
        estimate: interval,
        se_lo,
        se_hi,
        ci,
        replicates: boot.requested,
        failures: boot.failures,
        first_failure: boot.first_failure.clone(),
        seed: cfg.seed,
    };
    Ok(Output::ok(render::emit(
        cfg.format,
        &out,
        render::ci_table,
        render::ci_csv,
    )))
}

pub fn audit(cfg: &RunConfig) -> CmdResult {
    let data = load(cfg)?;
    if cfg.grid_points < 2 {
        return Err(EiError::Configuration("grid-points must be at least 2".into()).into());
    }
    let report: SharpnessReport = if cfg.assumptions == AssumptionSet::default() {
        sharpness_audit(&data, cfg.grid_points)?
    } else {
        sharpness_check(&data, cfg.assumptions, cfg.grid_points)?
    };
    let text = render::emit(cfg.format, &report, render::audit_table, render::audit_csv);
    let failed = report.failures().count();
    if failed == 0 {
        Ok(Output::ok(text))
    } else {
        Ok(Output {
            text,
            code: EXIT_STATISTICAL,
            warning: Some(format!(
                "{failed} of {} comparisons disagree with enumeration",
                report.entries.len()
            )),
        })
    }
}
