//! Monotone ecological inference.
//!
//! Point estimates, sharp partial-identification bounds, and confidence
//! intervals for group-level mean outcomes (and their difference) from data
//! aggregated to neighborhoods, under sign restrictions on the within-group
//! and between-group conditional associations.

pub mod assumptions;
pub mod data;
pub mod error;
pub mod global;
pub mod inference;
pub mod interval;
pub mod local;
pub mod micro;
pub mod oracle;
pub mod point;
pub mod profile;
pub mod statistic;

pub use assumptions::{AssumptionSet, ResolvedCell, Sign, SignAssumption};
pub use data::{
    load_aggregate, moments, read_aggregate_csv, AggregateData, AggregateRow, Moments,
    NeighborhoodRecord, OutcomeBounds,
};
pub use error::{EiError, Result};
pub use global::{
    bounds_for_d, bounds_for_mean, bounds_for_target, method_of_bounds, multi_group_bounds,
    BoundsInputs, BoundsReport, MobEstimates, MultiGroupRow, Target,
};
pub use inference::{bootstrap, imbens_manski_ci, BootstrapResult, ConfidenceInterval};
pub use interval::{Interval, IntervalStatus};
pub use local::{
    cv_bandwidth, local_derivative, local_monotone_bounds, neighborhood_mob, tilde_aggregate,
    tilde_monotone_bounds, BandwidthChoice, DerivativeEstimate, LocalBoundsReport, LocalMob,
    TildeGroup,
};
pub use micro::{
    conditional_covariance, estimate_delta_signs, read_micro_csv, CovRow, CovarianceEstimate,
    DeltaSigns, MicroRecord, Verdict,
};
pub use point::{ecological_regression, neighborhood_model, PointEstimates, PointEstimator};
pub use profile::{deltas_from_profile, summarize_profile, GroupMeansProfile, ProfileSummary};
pub use statistic::{statistic_by_name, StatValue, Statistic};
