//! Ground truth at desk scale: synthetic populations with known parameters,
//! and exhaustive search over feasible group-mean profiles.

mod enumerate;
mod sharpness;
mod synth;

pub use enumerate::{
    enumerate_feasible, enumerate_feasible_capped, enumerate_local, enumerate_pooled, grid_profile,
    CellExtremes, EnumerationResult, DEFAULT_GRID_CAP,
};
pub use sharpness::{
    audit_cells, full_audit, grid_tolerance, local_sharpness_audit, sharpness_audit,
    sharpness_check, tilde_sharpness_audit, AuditScope, SharpnessEntry, SharpnessReport,
};
pub use synth::{
    synthesize_population, IndividualNoise, OutcomeLaw, Polynomial, PopulationConfig,
    PrevalenceLaw, SyntheticNeighborhood, SyntheticTruth, TrueParameters,
};
