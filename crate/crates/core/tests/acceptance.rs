//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails or overruns its time budget.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use monotone_ei::assumptions::SignAssumption::*;
use monotone_ei::global::BoundsInputs;
use monotone_ei::inference::{bootstrap, imbens_manski_ci, normal_quantile};
use monotone_ei::local::DEFAULT_POOLING_TOLERANCE;
use monotone_ei::micro::DEFAULT_BIN_WIDTH;
use monotone_ei::oracle::*;
use monotone_ei::statistic::BoundsStatistic;
use monotone_ei::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(scale)
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, bounds: OutcomeBounds) -> Vec<AggregateRow> {
    (0..n)
        .map(|i| {
            AggregateRow::new(
                format!("n{i}"),
                rng.random_range(1.0..100.0),
                rng.random_range(0.02..0.98),
                rng.random_range(bounds.lo..=bounds.hi),
            )
        })
        .collect()
}

fn random_bounds(rng: &mut ChaCha8Rng) -> OutcomeBounds {
    if rng.random_bool(0.5) {
        OutcomeBounds::unit()
    } else {
        OutcomeBounds::new(-1.0, 3.0).unwrap()
    }
}

fn identity_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..500 {
        let bounds = random_bounds(&mut rng);
        let n = rng.random_range(2..=50);
        let data = load_aggregate(&random_rows(&mut rng, n, bounds), bounds)
            .map_err(|e| format!("dataset {i}: {e}"))?;
        let inputs = BoundsInputs::compute(&data).map_err(|e| e.to_string())?;
        let er = inputs
            .er
            .ok_or_else(|| format!("dataset {i}: no prevalence variation"))?;
        let (d_er, d_nm, gamma) = (er.d, inputs.nm.d, inputs.moments.gamma);
        let scale = bounds.width();
        ensure(rel_close(d_nm, gamma * d_er, 1e-12, scale), || {
            format!("dataset {i}: D_NM {d_nm} vs gamma D_ER {}", gamma * d_er)
        })?;
        worst = worst.max((d_nm - gamma * d_er).abs() / scale);
        let zero = 1e-12 * scale;
        let same_sign = (d_er.abs() <= zero && d_nm.abs() <= zero)
            || (d_er > 0.0 && d_nm > 0.0)
            || (d_er < 0.0 && d_nm < 0.0);
        ensure(same_sign, || {
            format!("dataset {i}: signs of {d_er} and {d_nm} differ")
        })?;
        ensure(d_er.abs() >= d_nm.abs() - zero, || {
            format!("dataset {i}: |D_ER| {d_er} < |D_NM| {d_nm}")
        })?;
        ensure(inputs.mob.d.contains(d_nm, zero), || {
            format!("dataset {i}: D_NM {d_nm} outside {}", inputs.mob.d)
        })?;
    }
    Ok(format!(
        "500 datasets, worst |D_NM - gamma D_ER| / range = {worst:.1e}"
    ))
}

fn random_population(seed: u64) -> PopulationConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef = || rng.random_range(-0.3..0.3);
    let mu1 = Polynomial(vec![0.5 + coef(), coef(), coef()]);
    let mu0 = Polynomial(vec![0.5 + coef(), coef(), coef()]);
    let mut law = OutcomeLaw::smooth(mu1, mu0);
    law.neighborhood_noise = 0.1;
    law.individual = match seed % 3 {
        0 => IndividualNoise::None,
        1 => IndividualNoise::Bernoulli,
        _ => IndividualNoise::Gaussian(0.1),
    };
    let mut cfg = PopulationConfig::new(2 + (seed as usize % 29), law, seed);
    cfg.sizes = (5, 60);
    cfg
}

fn bias_identities() -> Outcome {
    let mut done = 0;
    let mut seed = 0u64;
    let mut worst = 0.0f64;
    while done < 200 {
        seed += 1;
        let truth = match synthesize_population(&random_population(seed)) {
            Ok(t) => t,
            Err(EiError::NonDegeneracy(_)) => continue,
            Err(e) => return Err(format!("population {seed}: {e}")),
        };
        let data = &truth.data;
        let m = moments(data).map_err(|e| e.to_string())?;
        let er = match ecological_regression(data) {
            Ok(er) => er,
            Err(EiError::NoVariation) => continue,
            Err(e) => return Err(e.to_string()),
        };
        let nm = neighborhood_model(data).map_err(|e| e.to_string())?;
        let t = truth.truth;
        let checks = [
            ("ER difference", er.d - t.d, t.delta_w / m.var_xn),
            ("NM difference", nm.d - t.d, -t.delta_b / m.var_x),
            (
                "ER group 1",
                er.y1 - t.y1,
                t.delta_w * (1.0 - m.ex) / m.var_xn,
            ),
            ("ER group 0", er.y0 - t.y0, -t.delta_w * m.ex / m.var_xn),
            ("NM group 1", nm.y1 - t.y1, -t.delta_b / m.ex),
            ("NM group 0", nm.y0 - t.y0, t.delta_b / (1.0 - m.ex)),
            (
                "decomposition",
                t.d,
                (t.delta_b + t.delta_w) / ((1.0 - m.gamma) * m.var_x),
            ),
        ];
        for (name, lhs, rhs) in checks {
            ensure(rel_close(lhs, rhs, 1e-9, 1e-6), || {
                format!("population {seed}, {name}: {lhs} vs {rhs}")
            })?;
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-6));
        }
        done += 1;
    }
    Ok(format!(
        "200 populations, 7 identities each, worst relative gap {worst:.1e}"
    ))
}

fn sharpness_instance(i: usize, rng: &mut ChaCha8Rng) -> (AggregateData, f64) {
    let bounds = if i % 5 == 4 {
        OutcomeBounds::new(-1.0, 3.0).unwrap()
    } else {
        OutcomeBounds::unit()
    };
    let n = 2 + i % 3;
    loop {
        let mut rows = random_rows(rng, n, bounds);
        if i % 4 == 1 {
            // Shared prevalence exercises the pooled bounds.
            rows[1].x_share = rows[0].x_share;
        }
        if i % 10 == 7 {
            rows[n - 1].x_share = if i % 20 == 7 { 1.0 } else { 0.0 };
        }
        if i % 25 == 3 {
            // Constant outcome: every estimator agrees on zero difference.
            let c = rows[0].y_mean;
            rows.iter_mut().for_each(|r| r.y_mean = c);
        }
        let slope = match i % 7 {
            0 => 0.0,
            _ => rng.random_range(-1.0..1.0) * bounds.width(),
        };
        if let Ok(d) = load_aggregate(&rows, bounds) {
            return (d, slope);
        }
    }
}

fn sharpness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let grid = 201;
    let mut entries = 0usize;
    let mut pooled_instances = 0usize;
    // (within, between, reinforcement, target) -> (non-empty, rejected)
    let mut coverage: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for i in 0..200 {
        let (data, slope) = sharpness_instance(i, &mut rng);
        let report = full_audit(&data, slope, grid, DEFAULT_POOLING_TOLERANCE)
            .map_err(|e| format!("instance {i}: {e}"))?;
        if let Some(f) = report.failures().next() {
            return Err(format!("instance {i}: {f:?}"));
        }
        for e in &report.entries {
            if e.scope != AuditScope::Global || e.assumptions.contextual_reinforcement {
                continue;
            }
            let key = format!(
                "{} / {} / {}",
                e.assumptions.within, e.assumptions.between, e.target
            );
            let c = coverage.entry(key).or_default();
            if e.analytic.is_rejected() {
                c.1 += 1;
            } else {
                c.0 += 1;
            }
        }
        if i % 4 == 1 {
            pooled_instances += 1;
        }
        entries += report.entries.len();
    }
    let unexercised: Vec<&String> = coverage
        .iter()
        .filter(|(_, c)| c.0 == 0)
        .map(|(k, _)| k)
        .collect();
    ensure(coverage.len() == 48 && unexercised.is_empty(), || {
        format!("cells never non-empty: {unexercised:?}")
    })?;
    Ok(format!(
        "200 instances, {entries} interval comparisons, {pooled_instances} with pooled groups, \
         all 48 table cells non-empty at least once"
    ))
}

fn worked_example() -> Outcome {
    let data = load_aggregate(
        &[
            AggregateRow::new("a", 100.0, 0.2, 0.3),
            AggregateRow::new("b", 100.0, 0.8, 0.9),
        ],
        OutcomeBounds::unit(),
    )
    .map_err(|e| e.to_string())?;
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let mob = method_of_bounds(&data).map_err(|e| e.to_string())?;
    ensure(close(mob.d.lo, 0.2) && close(mob.d.hi, 0.8), || {
        format!("MOB D {}", mob.d)
    })?;
    let er = ecological_regression(&data).map_err(|e| e.to_string())?;
    ensure(
        close(er.d, 1.0) && close(er.y1, 1.1) && close(er.y0, 0.1),
        || format!("ER {er:?}"),
    )?;
    let nm = neighborhood_model(&data).map_err(|e| e.to_string())?;
    ensure(
        close(nm.d, 0.36) && close(nm.y1, 0.78) && close(nm.y0, 0.42),
        || format!("NM {nm:?}"),
    )?;
    for a in [
        AssumptionSet::reinforcing(),
        AssumptionSet::new(Unknown, NonNegative),
    ] {
        let iv = bounds_for_d(&data, a).map_err(|e| e.to_string())?.interval;
        ensure(close(iv.lo, 0.36) && close(iv.hi, 0.8), || {
            format!("{a}: {iv}")
        })?;
    }
    Ok("MOB [0.2, 0.8], ER (1.0, 1.1, 0.1), NM (0.36, 0.78, 0.42), shaded cell [0.36, 0.8]".into())
}

fn kernel_derivative() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let rows: Vec<AggregateRow> = (0..40)
        .map(|i| {
            let x = rng.random_range(0.05..0.95);
            AggregateRow::new(
                format!("n{i}"),
                rng.random_range(1.0..10.0),
                x,
                0.1 + 0.4 * x,
            )
        })
        .collect();
    let linear = load_aggregate(&rows, OutcomeBounds::unit()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for x0 in [0.3, 0.5, 0.7] {
        for h in [0.15, 0.3, 1.0] {
            let s = local_derivative(&linear, x0, h)
                .map_err(|e| e.to_string())?
                .slope;
            worst = worst.max((s - 0.4).abs());
        }
    }
    ensure(worst <= 1e-8, || format!("linear slope off by {worst:e}"))?;

    let rows: Vec<AggregateRow> = (0..500)
        .map(|i| {
            let x = (i as f64 + 0.5) / 500.0;
            AggregateRow::new(format!("g{i}"), 1.0, x, x * x)
        })
        .collect();
    let quad = load_aggregate(&rows, OutcomeBounds::unit()).map_err(|e| e.to_string())?;
    let s = local_derivative(&quad, 0.5, 0.05)
        .map_err(|e| e.to_string())?
        .slope;
    ensure((s - 1.0).abs() <= 0.05, || format!("quadratic slope {s}"))?;
    Ok(format!(
        "linear error {worst:.1e}; quadratic slope at 0.5 = {s:.6}"
    ))
}

fn micro_population(law: OutcomeLaw, draw: u64) -> Vec<MicroRecord> {
    let mut cfg = PopulationConfig::new(40, law, 77);
    cfg.sizes = (400, 400);
    cfg.prevalence = PrevalenceLaw::Lattice { step: 0.05 };
    cfg.outcome_seed = Some(draw);
    synthesize_population(&cfg)
        .expect("valid population")
        .micro_records()
}

fn binary(law: OutcomeLaw) -> OutcomeLaw {
    OutcomeLaw {
        individual: IndividualNoise::Bernoulli,
        ..law
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn conditional_covariance_suite() -> Outcome {
    let reps = 500;
    let null = binary(OutcomeLaw::constant(0.5));
    let mut inside = [0usize; 2];
    for r in 0..reps {
        let s = estimate_delta_signs(&micro_population(null.clone(), 1000 + r), DEFAULT_BIN_WIDTH)
            .map_err(|e| e.to_string())?;
        for (k, est) in [s.delta_w, s.delta_b].into_iter().enumerate() {
            let est = est.map_err(|e| e.to_string())?;
            inside[k] += usize::from(est.theta.abs() < 3.0 * est.se);
        }
    }
    ensure(
        inside.iter().all(|&c| c as f64 >= 0.99 * reps as f64),
        || format!("null coverage {inside:?} of {reps}"),
    )?;

    let known = binary(OutcomeLaw::smooth(
        Polynomial(vec![0.55, 0.2]),
        Polynomial(vec![0.4, 0.1]),
    ));
    let mut cfg = PopulationConfig::new(40, known.clone(), 77);
    cfg.sizes = (400, 400);
    cfg.prevalence = PrevalenceLaw::Lattice { step: 0.05 };
    let (true_b, true_w) = synthesize_population(&cfg)
        .map_err(|e| e.to_string())?
        .expected_deltas();
    let mut theta = [Vec::new(), Vec::new()];
    let mut se = [Vec::new(), Vec::new()];
    for r in 0..reps {
        let s = estimate_delta_signs(
            &micro_population(known.clone(), 5000 + r),
            DEFAULT_BIN_WIDTH,
        )
        .map_err(|e| e.to_string())?;
        for (k, est) in [s.delta_w, s.delta_b].into_iter().enumerate() {
            let est = est.map_err(|e| e.to_string())?;
            theta[k].push(est.theta);
            se[k].push(est.se);
        }
    }
    let mut detail = Vec::new();
    for (k, (name, truth)) in [("delta_W", true_w), ("delta_B", true_b)]
        .into_iter()
        .enumerate()
    {
        let (m, sd) = mean_sd(&theta[k]);
        let mc_se = sd / (reps as f64).sqrt();
        ensure((m - truth).abs() < 3.0 * mc_se, || {
            format!("{name}: mean {m} vs truth {truth}, MC se {mc_se:e}")
        })?;
        let (mean_se, _) = mean_sd(&se[k]);
        let ratio = mean_se / sd;
        ensure((ratio - 1.0).abs() <= 0.2, || {
            format!("{name}: reported se {mean_se:e} vs replicate sd {sd:e}")
        })?;
        detail.push(format!(
            "{name} bias {:.1e} (3 MC se {:.1e}), se ratio {ratio:.3}",
            m - truth,
            3.0 * mc_se
        ));
    }
    Ok(format!(
        "null: {}/{} and {}/{} inside 3 SE; {}",
        inside[0],
        reps,
        inside[1],
        reps,
        detail.join("; ")
    ))
}

fn coverage_dataset(rng: &mut ChaCha8Rng) -> AggregateData {
    let noise: Normal<f64> = Normal::new(0.0, 0.05).unwrap();
    let rows: Vec<AggregateRow> = (0..200)
        .map(|i| {
            let x: f64 = rng.random_range(0.2..0.8);
            let y: f64 = (0.3 + 0.4 * x + noise.sample(rng)).clamp(0.0, 1.0);
            AggregateRow::new(format!("n{i}"), rng.random_range(1.0..3.0), x, y)
        })
        .collect();
    load_aggregate(&rows, OutcomeBounds::unit()).unwrap()
}

fn inference_suite() -> Outcome {
    let point =
        imbens_manski_ci(&Interval::point(0.0), 0.1, 0.1, 0.95).map_err(|e| e.to_string())?;
    let wide =
        imbens_manski_ci(&Interval::new(0.0, 1.0), 0.1, 0.1, 0.95).map_err(|e| e.to_string())?;
    ensure((point.critical_value - 1.959964).abs() <= 1e-5, || {
        format!("point critical value {}", point.critical_value)
    })?;
    ensure((wide.critical_value - 1.644854).abs() <= 1e-5, || {
        format!("wide critical value {}", wide.critical_value)
    })?;

    // Equal group means within every neighborhood and a linear outcome
    // surface: the true difference is the slope times the population gamma,
    // the lower end of the reinforcement bounds.
    let (a, b) = (0.2f64, 0.8f64);
    let ex = (a + b) / 2.0;
    let truth = 0.4 * ((b - a).powi(2) / 12.0) / (ex * (1.0 - ex));
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let datasets = 200;
    let mut covered = 0;
    for k in 0..datasets {
        let data = coverage_dataset(&mut rng);
        let report =
            bounds_for_d(&data, AssumptionSet::reinforcing()).map_err(|e| e.to_string())?;
        let stat = BoundsStatistic {
            target: Target::Difference,
            assumptions: report.pinned_assumptions(),
        };
        let boot = bootstrap(&data, &stat, 200, 9000 + k).map_err(|e| e.to_string())?;
        let (Some(se_lo), Some(se_hi)) = (boot.se[0], boot.se[1]) else {
            return Err(format!("dataset {k}: too few successful replicates"));
        };
        let ci =
            imbens_manski_ci(&report.interval, se_lo, se_hi, 0.95).map_err(|e| e.to_string())?;
        covered += usize::from(ci.lo <= truth && truth <= ci.hi);
    }
    let rate = covered as f64 / datasets as f64;
    ensure((0.90..=0.99).contains(&rate), || format!("coverage {rate}"))?;
    Ok(format!(
        "critical values {:.6} / {:.6}; coverage {covered}/{datasets} = {rate:.3} (z_0.95 = {:.6})",
        point.critical_value,
        wide.critical_value,
        normal_quantile(0.95)
    ))
}

/// Published application figures. Needs an aggregate table (columns `id`,
/// `population`, `x_share` = Republican vote share, `y_mean` = vaccination
/// rate) named by `MONOTONE_EI_APPLICATION_CSV`.
fn application() -> Option<Outcome> {
    let path = std::env::var("MONOTONE_EI_APPLICATION_CSV").ok()?;
    Some((|| {
        let file = std::fs::File::open(&path).map_err(|e| format!("{path}: {e}"))?;
        let data = read_aggregate_csv(file, OutcomeBounds::unit()).map_err(|e| e.to_string())?;
        let inputs = BoundsInputs::compute(&data).map_err(|e| e.to_string())?;
        let er = inputs.er.ok_or("no prevalence variation")?;
        let near = |v: f64, want: f64| (v - want).abs() <= 0.02;
        ensure(
            near(inputs.mob.d.lo, -0.774) && near(inputs.mob.d.hi, 0.528),
            || format!("MOB D {}", inputs.mob.d),
        )?;
        ensure(near(inputs.nm.d, -0.055) && near(er.d, -0.479), || {
            format!("NM {} ER {}", inputs.nm.d, er.d)
        })?;
        let cr = AssumptionSet::reinforcing();
        let d = inputs
            .bounds(data.bounds(), Target::Difference, cr)
            .map_err(|e| e.to_string())?;
        let y1 = inputs
            .bounds(data.bounds(), Target::Group1Mean, cr)
            .map_err(|e| e.to_string())?;
        let y0 = inputs
            .bounds(data.bounds(), Target::Group0Mean, cr)
            .map_err(|e| e.to_string())?;
        let ok = near(d.interval.lo, -0.479)
            && near(d.interval.hi, -0.055)
            && near(y1.interval.lo, 0.33)
            && near(y1.interval.hi, 0.56)
            && near(y0.interval.lo, 0.61)
            && near(y0.interval.hi, 0.81);
        ensure(ok, || {
            format!(
                "CR bounds D {} Y1 {} Y0 {}",
                d.interval, y1.interval, y0.interval
            )
        })?;
        let stat = BoundsStatistic {
            target: Target::Difference,
            assumptions: d.pinned_assumptions(),
        };
        let boot = bootstrap(&data, &stat, 1000, 2024).map_err(|e| e.to_string())?;
        let (Some(lo), Some(hi)) = (boot.se[0], boot.se[1]) else {
            return Err("too few successful replicates".into());
        };
        let ci = imbens_manski_ci(&d.interval, lo, hi, 0.95).map_err(|e| e.to_string())?;
        ensure(near(ci.lo, -0.518) && near(ci.hi, -0.051), || {
            format!("CI [{}, {}]", ci.lo, ci.hi)
        })?;
        Ok(format!(
            "D {} ; CI [{:.3}, {:.3}]",
            d.interval, ci.lo, ci.hi
        ))
    })())
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("identity suite", Duration::from_secs(10), identity_suite),
        ("bias identities", Duration::from_secs(30), bias_identities),
        ("sharpness audit", Duration::from_secs(300), sharpness),
        ("worked example", Duration::from_secs(5), worked_example),
        (
            "kernel derivative",
            Duration::from_secs(5),
            kernel_derivative,
        ),
        (
            "conditional covariance",
            Duration::from_secs(120),
            conditional_covariance_suite,
        ),
        ("inference", Duration::from_secs(300), inference_suite),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) if elapsed <= budget => {
                println!("PASS  {name}: {detail} [{elapsed:.1?} / budget {budget:?}]")
            }
            Ok(detail) => {
                failed += 1;
                println!("FAIL  {name}: over budget {elapsed:.1?} > {budget:?} ({detail})")
            }
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{elapsed:.1?}]")
            }
        }
    }
    match application() {
        None => println!(
            "SKIP  application reproduction: set MONOTONE_EI_APPLICATION_CSV to the county table"
        ),
        Some(Ok(detail)) => println!("PASS  application reproduction: {detail}"),
        Some(Err(why)) => {
            failed += 1;
            println!("FAIL  application reproduction: {why}")
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
