//! Sign assumptions on the conditional associations and the machinery that
//! turns an assumption cell into constraints on a target quantity.
//!
//! Every identification result in this crate (global and neighborhood-level)
//! has the same shape. Given the data, the target is an affine function of
//! the group-mean difference, and each association is an affine function of
//! the target that vanishes at a known anchor:
//!
//! * the within-group association is nonnegative exactly when the target sits
//!   on one side of its within anchor (ecological regression globally, the
//!   local regression slope locally);
//! * the between-group association is nonnegative exactly when the target sits
//!   on the other side of its between anchor (the neighborhood model globally,
//!   zero difference locally).
//!
//! Each cell is therefore the intersection of the method-of-bounds interval
//! with at most two half-lines or points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EiError, Result};
use crate::interval::{ConstraintSet, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignAssumption {
    #[default]
    Unknown,
    NonNegative,
    NonPositive,
    Zero,
}

impl SignAssumption {
    pub const ALL: [SignAssumption; 4] = [
        SignAssumption::Unknown,
        SignAssumption::NonNegative,
        SignAssumption::NonPositive,
        SignAssumption::Zero,
    ];

    pub fn is_declared(self) -> bool {
        self != SignAssumption::Unknown
    }

    fn symbol(self) -> &'static str {
        match self {
            SignAssumption::Unknown => "?",
            SignAssumption::NonNegative => ">= 0",
            SignAssumption::NonPositive => "<= 0",
            SignAssumption::Zero => "= 0",
        }
    }

    /// Whether `value` satisfies the assumption, with `band` of slack.
    pub fn admits(self, value: f64, band: f64) -> bool {
        match self {
            SignAssumption::Unknown => true,
            SignAssumption::NonNegative => value >= -band,
            SignAssumption::NonPositive => value <= band,
            SignAssumption::Zero => value.abs() <= band,
        }
    }
}

impl fmt::Display for SignAssumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SignAssumption::Unknown => "unknown",
            SignAssumption::NonNegative => "nonneg",
            SignAssumption::NonPositive => "nonpos",
            SignAssumption::Zero => "zero",
        };
        f.write_str(s)
    }
}

impl FromStr for SignAssumption {
    type Err = EiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unknown" | "?" | "none" => Ok(SignAssumption::Unknown),
            "nonneg" | "nonnegative" | ">=0" | "+" => Ok(SignAssumption::NonNegative),
            "nonpos" | "nonpositive" | "<=0" | "-" => Ok(SignAssumption::NonPositive),
            "zero" | "0" | "=0" => Ok(SignAssumption::Zero),
            other => Err(EiError::Configuration(format!(
                "unknown sign assumption {other:?}; expected nonneg, nonpos, zero or unknown"
            ))),
        }
    }
}

/// Sign declarations for the within-group and between-group associations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct AssumptionSet {
    pub within: SignAssumption,
    pub between: SignAssumption,
    pub contextual_reinforcement: bool,
}

impl AssumptionSet {
    pub fn new(within: SignAssumption, between: SignAssumption) -> Self {
        Self {
            within,
            between,
            contextual_reinforcement: false,
        }
    }

    pub fn reinforcing() -> Self {
        Self {
            contextual_reinforcement: true,
            ..Self::default()
        }
    }

    pub fn with_reinforcement(mut self, cr: bool) -> Self {
        self.contextual_reinforcement = cr;
        self
    }

    /// Contextual reinforcement forbids opposite strict declarations.
    pub fn validate(&self) -> Result<()> {
        use SignAssumption::*;
        if self.contextual_reinforcement
            && matches!(
                (self.within, self.between),
                (NonNegative, NonPositive) | (NonPositive, NonNegative)
            )
        {
            return Err(EiError::Configuration(format!(
                "contextual reinforcement requires the associations to share a sign, \
                 but within is {} and between is {}",
                self.within, self.between
            )));
        }
        Ok(())
    }

    /// All sixteen sign cells, without contextual reinforcement.
    pub fn table_cells() -> impl Iterator<Item = AssumptionSet> {
        SignAssumption::ALL.into_iter().flat_map(|w| {
            SignAssumption::ALL
                .into_iter()
                .map(move |b| AssumptionSet::new(w, b))
        })
    }
}

impl fmt::Display for AssumptionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "delta_W {}, delta_B {}",
            self.within.symbol(),
            self.between.symbol()
        )?;
        if self.contextual_reinforcement {
            f.write_str(", contextual reinforcement")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
    #[serde(rename = "0")]
    Zero,
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
            Sign::Zero => "0",
        })
    }
}

/// The cell actually applied after contextual reinforcement is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedCell {
    pub within: SignAssumption,
    pub between: SignAssumption,
    pub contextual_reinforcement: bool,
    /// Under contextual reinforcement, the sign of the difference implied by
    /// the data (or by a declared sign).
    pub implied_sign: Option<Sign>,
    /// Within and between anchors coincide under reinforcement: the target
    /// is point-identified at the between anchor.
    pub tie: bool,
}

/// Resolves contextual reinforcement into an ordinary sign cell.
///
/// `anchor_gap` is (within anchor - between anchor) in difference units, i.e.
/// `D_ER - D_NM` globally or the local slope locally. It is only needed when
/// reinforcement is declared without any sign.
pub(crate) fn resolve_cell(
    assumptions: AssumptionSet,
    anchor_gap: Option<f64>,
    tol: f64,
) -> Result<ResolvedCell> {
    use SignAssumption::*;
    assumptions.validate()?;
    let mut cell = ResolvedCell {
        within: assumptions.within,
        between: assumptions.between,
        contextual_reinforcement: assumptions.contextual_reinforcement,
        implied_sign: None,
        tie: false,
    };
    if !assumptions.contextual_reinforcement {
        return Ok(cell);
    }
    let strict = |s: SignAssumption| matches!(s, NonNegative | NonPositive);
    let declared = [assumptions.within, assumptions.between]
        .into_iter()
        .find(|s| strict(*s));
    match declared {
        Some(sign) => {
            if cell.within == Unknown {
                cell.within = sign;
            }
            if cell.between == Unknown {
                cell.between = sign;
            }
            cell.implied_sign = Some(if sign == NonNegative {
                Sign::Positive
            } else {
                Sign::Negative
            });
        }
        None if cell.within == Unknown && cell.between == Unknown => {
            let gap = anchor_gap.ok_or_else(|| {
                EiError::Configuration("contextual reinforcement needs the anchor gap".into())
            })?;
            if gap > tol {
                cell.within = NonNegative;
                cell.between = NonNegative;
                cell.implied_sign = Some(Sign::Positive);
            } else if gap < -tol {
                cell.within = NonPositive;
                cell.between = NonPositive;
                cell.implied_sign = Some(Sign::Negative);
            } else {
                cell.implied_sign = Some(Sign::Zero);
                cell.tie = true;
            }
        }
        // A zero declaration makes the product of associations zero, so
        // reinforcement adds nothing.
        None => {}
    }
    Ok(cell)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Orientation {
    /// Target increases with the group-mean difference (D, group-1 mean).
    Increasing,
    /// Target decreases with the group-mean difference (group-0 mean).
    Decreasing,
}

/// Anchor values of one target quantity, with labels for diagnostics.
#[derive(Debug, Clone)]
pub(crate) struct TargetAnchors<'a> {
    pub name: &'a str,
    pub mob: (f64, f64),
    pub within: Option<f64>,
    pub within_label: &'a str,
    pub between: f64,
    pub between_label: &'a str,
    /// Value when both associations are zero.
    pub zero_point: f64,
    pub orientation: Orientation,
}

impl TargetAnchors<'_> {
    /// Intersects the method-of-bounds interval with the cell's restrictions.
    /// `missing_within` is returned when the cell needs the within anchor but
    /// it is undefined.
    pub fn identify(
        &self,
        cell: &ResolvedCell,
        tol: f64,
        missing_within: impl FnOnce() -> EiError,
    ) -> Result<(Interval, Option<String>)> {
        use SignAssumption::*;
        let mut c = ConstraintSet::default();
        c.at_least(self.mob.0, format!("{}-_MOB", self.name));
        c.at_most(self.mob.1, format!("{}+_MOB", self.name));

        if cell.tie {
            c.equal_to(
                self.between,
                format!(
                    "{} (= {} under reinforcement tie)",
                    self.between_label, self.within_label
                ),
            );
            return Ok(c.solve(tol));
        }

        if cell.within == Zero && cell.between == Zero {
            c.equal_to(self.zero_point, "both associations zero");
        }

        let increasing = self.orientation == Orientation::Increasing;
        if cell.within != Unknown {
            let w = self.within.ok_or_else(missing_within)?;
            let label = format!("{} (delta_W {})", self.within_label, cell.within.symbol());
            // delta_W >= 0 places an increasing target at or below its anchor.
            match (cell.within, increasing) {
                (NonNegative, true) | (NonPositive, false) => c.at_most(w, label),
                (NonPositive, true) | (NonNegative, false) => c.at_least(w, label),
                (Zero, _) => c.equal_to(w, label),
                (Unknown, _) => unreachable!(),
            }
        }
        if cell.between != Unknown {
            let b = self.between;
            let label = format!("{} (delta_B {})", self.between_label, cell.between.symbol());
            match (cell.between, increasing) {
                (NonNegative, true) | (NonPositive, false) => c.at_least(b, label),
                (NonPositive, true) | (NonNegative, false) => c.at_most(b, label),
                (Zero, _) => c.equal_to(b, label),
                (Unknown, _) => unreachable!(),
            }
        }
        Ok(c.solve(tol))
    }
}
