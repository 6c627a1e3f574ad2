//! Output formats. JSON is canonical and keeps full precision; tables round
//! to four decimals for reading; CSV is flat and plot-ready.

use std::fmt::Write;

use monotone_ei::oracle::{AuditScope, SharpnessReport};
use monotone_ei::{Interval, IntervalStatus, Target};
use serde::Serialize;

use crate::commands::{BoundsOutput, CiOutput, CurvePoint, LocalOutput, MicroOutput, SignEstimate};
use crate::config::Format;

pub fn emit<T: Serialize>(
    format: Format,
    value: &T,
    table: fn(&T) -> String,
    csv: fn(&T) -> String,
) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Table => table(value),
        Format::Csv => csv(value),
    }
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn opt4(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), f4)
}

fn iv(i: &Interval) -> String {
    i.to_string()
}

fn status(s: IntervalStatus) -> &'static str {
    match s {
        IntervalStatus::Identified => "identified",
        IntervalStatus::Bounded => "bounded",
        IntervalStatus::Rejected => "rejected",
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn bounds_table(o: &BoundsOutput) -> String {
    let mut s = String::new();
    let m = &o.moments;
    writeln!(s, "neighborhoods  {}", o.neighborhoods).unwrap();
    writeln!(s, "population     {}", f4(o.population)).unwrap();
    writeln!(s, "E[X]           {}", f4(m.ex)).unwrap();
    writeln!(s, "E[Y]           {}", f4(m.ey)).unwrap();
    writeln!(s, "gamma          {}", f4(m.gamma)).unwrap();
    writeln!(s, "assumptions    {}", o.assumptions).unwrap();
    if let Some(sign) = o.implied_sign {
        writeln!(s, "implied sign   {sign}").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "{:<8}{:<30}{:<30}{:<30}", "", "D", "Y1", "Y0").unwrap();
    let row = |s: &mut String, name: &str, cells: [String; 3]| {
        writeln!(
            s,
            "{:<8}{:<30}{:<30}{:<30}",
            name, cells[0], cells[1], cells[2]
        )
        .unwrap();
    };
    row(&mut s, "MOB", [iv(&o.mob.d), iv(&o.mob.y1), iv(&o.mob.y0)]);
    match &o.er {
        Some(er) => row(&mut s, "ER", [f4(er.d), f4(er.y1), f4(er.y0)]),
        None => row(&mut s, "ER", ["undefined".into(), "-".into(), "-".into()]),
    }
    row(&mut s, "NM", [f4(o.nm.d), f4(o.nm.y1), f4(o.nm.y0)]);
    let cell = |b: &Option<crate::commands::TargetBounds>| {
        b.as_ref().map_or_else(|| "-".into(), |b| iv(&b.interval))
    };
    row(&mut s, "bounds", [cell(&o.d), cell(&o.y1), cell(&o.y0)]);
    for b in [&o.d, &o.y1, &o.y0].into_iter().flatten() {
        if let Some(r) = &b.rejection_reason {
            writeln!(s, "rejected: {r}").unwrap();
        }
    }
    for n in &o.notes {
        writeln!(s, "note: {n}").unwrap();
    }
    s
}

pub fn bounds_csv(o: &BoundsOutput) -> String {
    let mut s = String::from("quantity,target,lo,hi,status\n");
    let mut push = |q: &str, t: Target, i: &Interval| {
        writeln!(s, "{q},{t},{},{},{}", i.lo, i.hi, status(i.status)).unwrap();
    };
    for (t, i) in [
        (Target::Difference, &o.mob.d),
        (Target::Group1Mean, &o.mob.y1),
        (Target::Group0Mean, &o.mob.y0),
    ] {
        push("mob", t, i);
    }
    if let Some(er) = &o.er {
        for (t, v) in [
            (Target::Difference, er.d),
            (Target::Group1Mean, er.y1),
            (Target::Group0Mean, er.y0),
        ] {
            push("er", t, &Interval::point(v));
        }
    }
    for (t, v) in [
        (Target::Difference, o.nm.d),
        (Target::Group1Mean, o.nm.y1),
        (Target::Group0Mean, o.nm.y0),
    ] {
        push("nm", t, &Interval::point(v));
    }
    for (t, b) in [
        (Target::Difference, &o.d),
        (Target::Group1Mean, &o.y1),
        (Target::Group0Mean, &o.y0),
    ] {
        if let Some(b) = b {
            push("bounds", t, &b.interval);
        }
    }
    s
}

fn opt_iv(i: &Option<Interval>) -> String {
    i.as_ref().map_or_else(|| "-".into(), iv)
}

pub fn local_table(o: &LocalOutput) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "bandwidth      {} ({})",
        f4(o.bandwidth),
        o.bandwidth_source
    )
    .unwrap();
    writeln!(s, "assumptions    {}", o.assumptions).unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:<16}{:<8}{:<8}{:<9}{:<24}{:<24}{:<24}",
        "id", "x", "y", "slope", "D", "Y1", "Y0"
    )
    .unwrap();
    for r in &o.neighborhoods {
        let b = &r.report;
        writeln!(
            s,
            "{:<16}{:<8}{:<8}{:<9}{:<24}{:<24}{:<24}",
            b.id,
            f4(b.x),
            f4(b.y),
            f4(r.regression_slope),
            opt_iv(&b.d),
            opt_iv(&b.y1),
            opt_iv(&b.y0)
        )
        .unwrap();
    }
    for k in &o.skipped {
        writeln!(s, "skipped {}: {}", k.id, k.reason).unwrap();
    }
    s
}

pub fn local_csv(o: &LocalOutput) -> String {
    let mut s = String::from("id,x,y,regression_slope,d_lo,d_hi,y1_lo,y1_hi,y0_lo,y0_hi,status\n");
    let ends = |i: &Option<Interval>| match i {
        Some(i) => format!("{},{}", i.lo, i.hi),
        None => ",".into(),
    };
    for r in &o.neighborhoods {
        let b = &r.report;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            csv_field(&b.id),
            b.x,
            b.y,
            r.regression_slope,
            ends(&b.d),
            ends(&b.y1),
            ends(&b.y0),
            status(b.status)
        )
        .unwrap();
    }
    s
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("x,slope,level\n");
    for c in curve {
        writeln!(s, "{},{},{}", c.x, c.slope, c.level).unwrap();
    }
    s
}

fn verdict(e: &SignEstimate) -> String {
    e.verdict
        .map_or_else(|| "undefined".into(), |v| v.to_string())
}

pub fn micro_table(o: &MicroOutput) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "rows {}  bin width {}  level {}",
        o.rows, o.bin_width, o.level
    )
    .unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:<10}{:<10}{:<10}{:<10}verdict",
        "", "estimate", "se", "z"
    )
    .unwrap();
    for (name, e) in [("delta_W", &o.delta_w), ("delta_B", &o.delta_b)] {
        writeln!(
            s,
            "{:<10}{:<10}{:<10}{:<10}{}",
            name,
            opt4(e.theta),
            opt4(e.se),
            opt4(e.z),
            verdict(e)
        )
        .unwrap();
        if let Some(err) = &e.error {
            writeln!(s, "  {name}: {err}").unwrap();
        }
    }
    s
}

pub fn micro_csv(o: &MicroOutput) -> String {
    let mut s = String::from("quantity,estimate,se,z,verdict\n");
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for (name, e) in [("delta_w", &o.delta_w), ("delta_b", &o.delta_b)] {
        writeln!(
            s,
            "{name},{},{},{},{}",
            opt(e.theta),
            opt(e.se),
            opt(e.z),
            verdict(e)
        )
        .unwrap();
    }
    s
}

pub fn ci_table(o: &CiOutput) -> String {
    let mut s = String::new();
    writeln!(s, "statistic      {}", o.statistic).unwrap();
    writeln!(s, "estimate       {}", iv(&o.estimate)).unwrap();
    writeln!(
        s,
        "se             {} (lower)  {} (upper)",
        f4(o.se_lo),
        f4(o.se_hi)
    )
    .unwrap();
    writeln!(
        s,
        "{:.0}% CI         [{}, {}]  critical value {}",
        100.0 * o.ci.level,
        f4(o.ci.lo),
        f4(o.ci.hi),
        f4(o.ci.critical_value)
    )
    .unwrap();
    writeln!(s, "replicates     {} ({} failed)", o.replicates, o.failures).unwrap();
    if let Some(f) = &o.first_failure {
        writeln!(s, "first failure  {f}").unwrap();
    }
    writeln!(s, "seed           {}", o.seed).unwrap();
    s
}

pub fn ci_csv(o: &CiOutput) -> String {
    let mut s = String::from(
        "statistic,estimate_lo,estimate_hi,se_lo,se_hi,ci_lo,ci_hi,level,critical_value,replicates,failures,seed\n",
    );
    writeln!(
        s,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        csv_field(&o.statistic),
        o.estimate.lo,
        o.estimate.hi,
        o.se_lo,
        o.se_hi,
        o.ci.lo,
        o.ci.hi,
        o.ci.level,
        o.ci.critical_value,
        o.replicates,
        o.failures,
        o.seed
    )
    .unwrap();
    s
}

fn scope(s: &AuditScope) -> String {
    match s {
        AuditScope::Global => "global".into(),
        AuditScope::Neighborhood(id) => id.clone(),
        AuditScope::Pooled(ids) => ids.join("+"),
    }
}

fn enumerated(e: Option<(f64, f64)>) -> String {
    e.map_or_else(
        || "empty".into(),
        |(lo, hi)| format!("[{}, {}]", f4(lo), f4(hi)),
    )
}

pub fn audit_table(r: &SharpnessReport) -> String {
    let mut s = String::new();
    let failed = r.failures().count();
    writeln!(
        s,
        "grid {}  comparisons {}  failures {}",
        r.grid_points,
        r.entries.len(),
        failed
    )
    .unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:<58}{:<8}{:<28}enumerated",
        "assumptions", "target", "analytic"
    )
    .unwrap();
    for e in &r.entries {
        writeln!(
            s,
            "{:<58}{:<8}{:<28}{:<24}{}",
            e.assumptions.to_string(),
            e.target.to_string(),
            iv(&e.analytic),
            enumerated(e.enumerated),
            if e.pass { "ok" } else { "FAIL" }
        )
        .unwrap();
    }
    s
}

pub fn audit_csv(r: &SharpnessReport) -> String {
    let mut s = String::from(
        "scope,within,between,cr,target,analytic_lo,analytic_hi,analytic_status,enum_lo,enum_hi,tolerance,pass\n",
    );
    for e in &r.entries {
        let (lo, hi) = e
            .enumerated
            .map_or((String::new(), String::new()), |(a, b)| {
                (a.to_string(), b.to_string())
            });
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&scope(&e.scope)),
            e.assumptions.within,
            e.assumptions.between,
            e.assumptions.contextual_reinforcement,
            e.target,
            e.analytic.lo,
            e.analytic.hi,
            status(e.analytic.status),
            lo,
            hi,
            e.tolerance,
            e.pass
        )
        .unwrap();
    }
    s
}
