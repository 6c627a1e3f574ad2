//! Checks of estimators against synthetic populations with known truth.

use monotone_ei::inference::bootstrap;
use monotone_ei::local::default_bandwidth_grid;
use monotone_ei::micro::{
    conditional_covariance_with, prevalence_bin, VarianceDenominator, DEFAULT_BIN_WIDTH,
};
use monotone_ei::oracle::*;
use monotone_ei::statistic::MeanOutcome;
use monotone_ei::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn sine_data(seed: u64) -> AggregateData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let rows: Vec<AggregateRow> = (0..200)
        .map(|i| {
            let x: f64 = rng.random_range(0.02..0.98);
            let m = 0.5 + 0.3 * (2.0 * std::f64::consts::PI * x).sin();
            let y: f64 = (m + noise.sample(&mut rng)).clamp(0.0, 1.0);
            AggregateRow::new(format!("n{i}"), rng.random_range(1.0..5.0), x, y)
        })
        .collect();
    load_aggregate(&rows, OutcomeBounds::unit()).unwrap()
}

#[test]
fn cross_validation_picks_interior_bandwidths() {
    let grid = default_bandwidth_grid();
    let interior = (0..50)
        .filter(|&seed| {
            let h = cv_bandwidth(&sine_data(seed), 10, &grid, seed)
                .unwrap()
                .bandwidth;
            h > grid[0] && h < grid[grid.len() - 1]
        })
        .count();
    assert!(interior >= 45, "only {interior} of 50 interior");
}

#[test]
fn regression_slope_accounts_for_difference_and_within_association() {
    let law = OutcomeLaw::smooth(
        Polynomial(vec![0.4, 0.3, -0.1]),
        Polynomial(vec![0.3, 0.1, 0.05]),
    );
    let mut cfg = PopulationConfig::new(400, law, 12);
    cfg.sizes = (1000, 1000);
    cfg.prevalence = PrevalenceLaw::Uniform { lo: 0.05, hi: 0.95 };
    let t = synthesize_population(&cfg).unwrap();
    let law = &t.config.outcome;
    let mu = |x: f64| x * law.mu1.eval(x) + (1.0 - x) * law.mu0.eval(x);
    for x in [0.2, 0.5, 0.8] {
        let d = law.mu1.eval(x) - law.mu0.eval(x);
        let h = 1e-5;
        let fd = (mu(x + h) - mu(x - h)) / (2.0 * h);
        assert!((d + t.local_within(x) - fd).abs() < 1e-8);
        assert!((t.regression_slope(x) - fd).abs() < 1e-8);
        let est = local_derivative(&t.data, x, 0.1).unwrap().slope;
        assert!((est - fd).abs() < 0.02, "x = {x}: {est} vs {fd}");
    }
}

#[test]
fn bootstrap_se_of_weighted_mean_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<AggregateRow> = (0..50)
        .map(|i| {
            AggregateRow::new(
                format!("n{i}"),
                rng.random_range(1.0..20.0),
                rng.random_range(0.1..0.9),
                rng.random_range(0.0..1.0),
            )
        })
        .collect();
    let data = load_aggregate(&rows, OutcomeBounds::unit()).unwrap();
    let ybar: f64 = data.records().iter().map(|r| r.p * r.y).sum();
    let closed = data
        .records()
        .iter()
        .map(|r| (r.p * (r.y - ybar)).powi(2))
        .sum::<f64>()
        .sqrt();
    let boot = bootstrap(&data, &MeanOutcome, 2000, 8).unwrap();
    let se = boot.se[0].unwrap();
    assert!((se / closed - 1.0).abs() < 0.15, "{se} vs {closed}");
}

#[test]
fn multi_group_bounds_are_sharp_on_the_collapsed_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let rows: Vec<MultiGroupRow> = (0..3)
        .map(|i| {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            MultiGroupRow::new(
                format!("n{i}"),
                rng.random_range(1.0..10.0),
                raw.iter().map(|s| s / total).collect(),
                rng.random_range(0.0..1.0),
            )
        })
        .collect();
    for g in 0..3 {
        let data = global::collapse_groups(&rows, OutcomeBounds::unit(), g).unwrap();
        let audit = sharpness_audit(&data, 201).unwrap();
        assert!(
            audit.passed(),
            "group {g}: {:?}",
            audit.failures().collect::<Vec<_>>()
        );
        for a in audit_cells() {
            let direct = multi_group_bounds(&rows, OutcomeBounds::unit(), g, a).unwrap();
            let entry = audit
                .entries
                .iter()
                .find(|e| e.assumptions == a && e.target == Target::Group1Mean)
                .unwrap();
            assert_eq!(direct.interval, entry.analytic);
        }
    }
}

fn lattice_population(
    law: OutcomeLaw,
    neighborhoods: usize,
    size: u32,
    seed: u64,
) -> SyntheticTruth {
    let mut cfg = PopulationConfig::new(neighborhoods, law, seed);
    cfg.sizes = (size, size);
    cfg.prevalence = PrevalenceLaw::Lattice { step: 0.05 };
    synthesize_population(&cfg).unwrap()
}

#[test]
fn negative_associations_are_detected_in_micro_data() {
    let mut law = OutcomeLaw::smooth(Polynomial(vec![0.6, -0.3]), Polynomial(vec![0.7, -0.2]));
    law.individual = IndividualNoise::Bernoulli;
    let t = lattice_population(law, 100, 1000, 5);
    let (db, dw) = t.expected_deltas();
    assert!(db < 0.0 && dw < 0.0);
    let micro = t.micro_records();
    assert_eq!(micro.len(), 100_000);
    let s = estimate_delta_signs(&micro, DEFAULT_BIN_WIDTH).unwrap();
    assert_eq!(s.delta_w.unwrap().verdict(0.95), Verdict::Negative);
    assert_eq!(s.delta_b.unwrap().verdict(0.95), Verdict::Negative);
}

#[test]
fn stratifying_by_prevalence_matches_stratifying_by_neighborhood() {
    let mut law = OutcomeLaw::smooth(Polynomial(vec![0.5, 0.2]), Polynomial(vec![0.3, 0.1]));
    law.neighborhood_noise = 0.1;
    law.individual = IndividualNoise::Bernoulli;
    let t = lattice_population(law, 60, 300, 6);
    let micro = t.micro_records();
    let by_hood: Vec<CovRow<String>> = micro
        .iter()
        .map(|m| CovRow::new(m.x as f64, m.y, m.weight, m.stratum.clone()))
        .collect();
    let by_bin: Vec<CovRow<i64>> = micro
        .iter()
        .map(|m| {
            CovRow::new(
                m.x as f64,
                m.y,
                m.weight,
                prevalence_bin(m.xn, DEFAULT_BIN_WIDTH),
            )
        })
        .collect();

    let pop = VarianceDenominator::Population;
    let a = conditional_covariance_with(&by_hood, pop).unwrap();
    let b = conditional_covariance_with(&by_bin, pop).unwrap();
    assert!(
        (a.theta - b.theta).abs() < 1e-12,
        "{} vs {}",
        a.theta,
        b.theta
    );
    // The population value is the realized between-group association.
    assert!((a.theta - t.truth.delta_b).abs() < 1e-12);

    // Small-sample corrections differ by stratum size only.
    let a = conditional_covariance(&by_hood).unwrap();
    let b = conditional_covariance(&by_bin).unwrap();
    assert!((a.theta / b.theta - 1.0).abs() < 0.01);
}
