//! Finite synthetic populations with known group means and associations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{load_aggregate, AggregateData, AggregateRow, OutcomeBounds};
use crate::error::{EiError, Result};
use crate::micro::MicroRecord;
use crate::profile::{summarize_unchecked, GroupMeansProfile};

/// Coefficients in increasing order of degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        Self(vec![c])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.0.len() <= 1 {
            return Self(vec![0.0]);
        }
        Self(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PrevalenceLaw {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Beta {
        a: f64,
        b: f64,
    },
    /// Uniform over the interior multiples of `step`.
    Lattice {
        step: f64,
    },
    /// One value per neighborhood, cycled.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IndividualNoise {
    /// Every member gets the group mean of the neighborhood.
    None,
    /// Outcomes are 0/1 with the neighborhood group mean as probability.
    Bernoulli,
    /// Gaussian noise around the group mean, clipped to the outcome bounds.
    Gaussian(f64),
}

/// Expected outcome of a group-`g` member in a neighborhood of prevalence
/// `x` is `mu_g(x)` plus a neighborhood-level uniform shock of half-width
/// `neighborhood_noise`, clipped to the outcome bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLaw {
    pub mu1: Polynomial,
    pub mu0: Polynomial,
    pub neighborhood_noise: f64,
    pub individual: IndividualNoise,
}

impl OutcomeLaw {
    pub fn constant(c: f64) -> Self {
        Self::smooth(Polynomial::constant(c), Polynomial::constant(c))
    }

    /// Outcome equal to the group indicator.
    pub fn group_indicator() -> Self {
        Self::smooth(Polynomial::constant(1.0), Polynomial::constant(0.0))
    }

    pub fn smooth(mu1: Polynomial, mu0: Polynomial) -> Self {
        Self {
            mu1,
            mu0,
            neighborhood_noise: 0.0,
            individual: IndividualNoise::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub neighborhoods: usize,
    /// Inclusive range of individuals per neighborhood.
    pub sizes: (u32, u32),
    pub prevalence: PrevalenceLaw,
    pub outcome: OutcomeLaw,
    pub bounds: OutcomeBounds,
    /// Seed for neighborhood composition and neighborhood-level shocks.
    pub seed: u64,
    /// Seed for individual-level outcome noise; defaults to `seed`. Varying it
    /// alone redraws outcomes on a fixed set of neighborhoods.
    pub outcome_seed: Option<u64>,
}

impl PopulationConfig {
    pub fn new(neighborhoods: usize, outcome: OutcomeLaw, seed: u64) -> Self {
        Self {
            neighborhoods,
            sizes: (50, 200),
            prevalence: PrevalenceLaw::Uniform { lo: 0.05, hi: 0.95 },
            outcome,
            bounds: OutcomeBounds::unit(),
            seed,
            outcome_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticNeighborhood {
    pub id: String,
    pub size: u32,
    pub group1: u32,
    /// Expected group means before individual noise.
    pub expected_y1: f64,
    pub expected_y0: f64,
    pub outcomes1: Vec<f64>,
    pub outcomes0: Vec<f64>,
}

impl SyntheticNeighborhood {
    pub fn prevalence(&self) -> f64 {
        self.group1 as f64 / self.size as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueParameters {
    pub y1: f64,
    pub y0: f64,
    pub d: f64,
    pub delta_b: f64,
    pub delta_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub config: PopulationConfig,
    pub neighborhoods: Vec<SyntheticNeighborhood>,
    /// Computed from the individuals.
    pub truth: TrueParameters,
    /// Realized group means per neighborhood, aligned with `data`.
    pub profile: GroupMeansProfile,
    pub data: AggregateData,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn draw_prevalence(law: &PrevalenceLaw, i: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    Ok(match law {
        PrevalenceLaw::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
        PrevalenceLaw::Beta { a, b } => Beta::new(*a, *b)
            .map_err(|e| EiError::Configuration(format!("beta law: {e}")))?
            .sample(rng),
        PrevalenceLaw::Lattice { step } => {
            let k = (1.0 / step).round() as i64;
            if k < 2 {
                return Err(EiError::Configuration(format!(
                    "lattice step {step} too coarse"
                )));
            }
            rng.random_range(1..k) as f64 * step
        }
        PrevalenceLaw::Fixed(v) => {
            if v.is_empty() {
                return Err(EiError::Configuration("no fixed prevalences".into()));
            }
            v[i % v.len()]
        }
    })
}

/// Builds a finite population and its exact truth.
pub fn synthesize_population(config: &PopulationConfig) -> Result<SyntheticTruth> {
    let PopulationConfig {
        neighborhoods,
        sizes,
        outcome,
        bounds,
        ..
    } = config;
    if *neighborhoods == 0 || sizes.0 == 0 || sizes.0 > sizes.1 {
        return Err(EiError::Configuration(
            "need at least one neighborhood and a valid positive size range".into(),
        ));
    }
    if outcome.individual == IndividualNoise::Bernoulli && (bounds.lo < 0.0 || bounds.hi > 1.0) {
        return Err(EiError::Configuration(
            "binary outcomes need bounds inside [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.outcome_seed.unwrap_or(config.seed));
    noise_rng.set_stream(1);
    let gaussian = match outcome.individual {
        IndividualNoise::Gaussian(sd) => {
            Some(Normal::new(0.0, sd).map_err(|e| EiError::Configuration(format!("noise: {e}")))?)
        }
        _ => None,
    };
    let clip = |v: f64| v.clamp(bounds.lo, bounds.hi);

    let mut hoods = Vec::with_capacity(*neighborhoods);
    for i in 0..*neighborhoods {
        let size = rng.random_range(sizes.0..=sizes.1);
        let x = draw_prevalence(&config.prevalence, i, &mut rng)?.clamp(0.0, 1.0);
        let group1 = (x * size as f64).round() as u32;
        let xr = group1 as f64 / size as f64;
        let shock = |rng: &mut ChaCha8Rng| {
            if outcome.neighborhood_noise > 0.0 {
                rng.random_range(-outcome.neighborhood_noise..=outcome.neighborhood_noise)
            } else {
                0.0
            }
        };
        let m1 = clip(outcome.mu1.eval(xr) + shock(&mut rng));
        let m0 = clip(outcome.mu0.eval(xr) + shock(&mut rng));
        let mut draw = |m: f64, n: u32| -> Vec<f64> {
            (0..n)
                .map(|_| match outcome.individual {
                    IndividualNoise::None => m,
                    IndividualNoise::Bernoulli => {
                        if noise_rng.random::<f64>() < m {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    IndividualNoise::Gaussian(_) => clip(
                        m + gaussian
                            .as_ref()
                            .expect("gaussian law")
                            .sample(&mut noise_rng),
                    ),
                })
                .collect()
        };
        let outcomes1 = draw(m1, group1);
        let outcomes0 = draw(m0, size - group1);
        hoods.push(SyntheticNeighborhood {
            id: format!("n{i}"),
            size,
            group1,
            expected_y1: m1,
            expected_y0: m0,
            outcomes1,
            outcomes0,
        });
    }
    truth_from_neighborhoods(config.clone(), hoods)
}

/// Computes every truth field directly from the individuals.
fn truth_from_neighborhoods(
    config: PopulationConfig,
    hoods: Vec<SyntheticNeighborhood>,
) -> Result<SyntheticTruth> {
    let total: f64 = hoods.iter().map(|h| h.size as f64).sum();
    let n1: f64 = hoods.iter().map(|h| h.group1 as f64).sum();
    let n0 = total - n1;
    if n1 == 0.0 || n0 == 0.0 {
        return Err(EiError::NonDegeneracy("one group has no members".into()));
    }
    let rows: Vec<AggregateRow> = hoods
        .iter()
        .map(|h| {
            let sum: f64 = h.outcomes1.iter().chain(&h.outcomes0).sum();
            AggregateRow::new(
                h.id.clone(),
                h.size as f64,
                h.prevalence(),
                sum / h.size as f64,
            )
        })
        .collect();
    let data = load_aggregate(&rows, config.bounds)?;

    let s1: f64 = hoods.iter().flat_map(|h| &h.outcomes1).sum();
    let s0: f64 = hoods.iter().flat_map(|h| &h.outcomes0).sum();
    let (y1, y0) = (s1 / n1, s0 / n0);

    // Average within-neighborhood covariance of the indicator and outcome.
    let mut delta_b = 0.0;
    for h in &hoods {
        let n = h.size as f64;
        let ybar = (h.outcomes1.iter().sum::<f64>() + h.outcomes0.iter().sum::<f64>()) / n;
        let xbar = h.prevalence();
        let cov = (h
            .outcomes1
            .iter()
            .map(|y| (1.0 - xbar) * (y - ybar))
            .sum::<f64>()
            + h.outcomes0.iter().map(|y| -xbar * (y - ybar)).sum::<f64>())
            / n;
        delta_b += n / total * cov;
    }

    // Covariance of neighborhood prevalence and outcome within each group.
    let within = |pick: fn(&SyntheticNeighborhood) -> &Vec<f64>, count: f64, ybar: f64| {
        let xbar: f64 = hoods
            .iter()
            .map(|h| pick(h).len() as f64 * h.prevalence())
            .sum::<f64>()
            / count;
        hoods
            .iter()
            .map(|h| {
                pick(h)
                    .iter()
                    .map(|y| (h.prevalence() - xbar) * (y - ybar))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / count
    };
    let ex = n1 / total;
    let delta_w =
        ex * within(|h| &h.outcomes1, n1, y1) + (1.0 - ex) * within(|h| &h.outcomes0, n0, y0);

    let profile = GroupMeansProfile::new(
        hoods
            .iter()
            .zip(data.records())
            .map(|(h, r)| {
                if h.outcomes1.is_empty() {
                    r.y
                } else {
                    mean(&h.outcomes1)
                }
            })
            .collect(),
        hoods
            .iter()
            .zip(data.records())
            .map(|(h, r)| {
                if h.outcomes0.is_empty() {
                    r.y
                } else {
                    mean(&h.outcomes0)
                }
            })
            .collect(),
    );
    Ok(SyntheticTruth {
        config,
        neighborhoods: hoods,
        truth: TrueParameters {
            y1,
            y0,
            d: y1 - y0,
            delta_b,
            delta_w,
        },
        profile,
        data,
    })
}

impl SyntheticTruth {
    /// Associations implied by the expected (pre-noise) group means. These
    /// are the estimands of individual-level estimators when outcomes are
    /// redrawn on the same neighborhoods.
    pub fn expected_deltas(&self) -> (f64, f64) {
        let y1: Vec<f64> = self.neighborhoods.iter().map(|h| h.expected_y1).collect();
        let y0: Vec<f64> = self.neighborhoods.iter().map(|h| h.expected_y0).collect();
        let s = summarize_unchecked(&self.data, &y1, &y0);
        (s.delta_b, s.delta_w)
    }

    /// Local within-group association `x mu1'(x) + (1 - x) mu0'(x)` of the
    /// smooth law.
    pub fn local_within(&self, x: f64) -> f64 {
        let law = &self.config.outcome;
        x * law.mu1.derivative().eval(x) + (1.0 - x) * law.mu0.derivative().eval(x)
    }

    /// Slope of the aggregate regression `mu(x) = x mu1(x) + (1 - x) mu0(x)`.
    pub fn regression_slope(&self, x: f64) -> f64 {
        let law = &self.config.outcome;
        law.mu1.eval(x) - law.mu0.eval(x) + self.local_within(x)
    }

    /// Every individual as a unit-weight record stratified by neighborhood.
    pub fn micro_records(&self) -> Vec<MicroRecord> {
        let mut out = Vec::new();
        for h in &self.neighborhoods {
            let xn = h.prevalence();
            for (x, ys) in [(1u8, &h.outcomes1), (0u8, &h.outcomes0)] {
                out.extend(ys.iter().map(|&y| MicroRecord {
                    x,
                    y,
                    xn,
                    weight: 1.0,
                    stratum: h.id.clone(),
                }));
            }
        }
        out
    }
}
