//! Brute-force search over feasible group-mean profiles.
//!
//! Every feasible profile is parameterized by the group-1 means, one per
//! mixed neighborhood, each ranging over the interval that keeps the implied
//! group-0 mean inside the outcome bounds. The group means, their difference
//! and both associations are affine in these coordinates, so the search grids
//! all coordinates but one and walks the last one as an exact line segment.
//! Sign cells cut each segment into sub-segments that are solved exactly,
//! which also makes the equality cells exact instead of relying on a grid
//! point landing on zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assumptions::{AssumptionSet, SignAssumption};
use crate::data::{AggregateData, NeighborhoodRecord, OutcomeBounds};
use crate::error::{EiError, Result};
use crate::profile::{summarize_unchecked, GroupMeansProfile};

/// Default cap on the number of grid points visited.
pub const DEFAULT_GRID_CAP: u128 = 10_000_000;

/// Slack on association signs, in association units.
const SIGN_BAND: f64 = 1e-12;

const D: usize = 0;
const Y1: usize = 1;
const Y0: usize = 2;
const DW: usize = 3;
const DB: usize = 4;

/// Feasible range of a group-1 mean given `(x, y)` and the outcome bounds.
fn group1_range(x: f64, y: f64, b: OutcomeBounds) -> (f64, f64) {
    // x v + (1 - x) w = y with v, w in [lo, hi].
    let lo = b.lo.max((y - (1.0 - x) * b.hi) / x);
    let hi = b.hi.min((y - (1.0 - x) * b.lo) / x);
    (lo, hi.max(lo))
}

/// The five tracked quantities as affine functions of the coordinates:
/// `value = base + sum_n coef[n] * (v_n - lo_n)`.
#[derive(Debug, Clone)]
pub(crate) struct AffineSystem {
    lengths: Vec<f64>,
    base: [f64; 5],
    coef: Vec<[f64; 5]>,
}

impl AffineSystem {
    /// Reads off the affine form of `eval` from evaluations at the lower
    /// corner and one step along each coordinate, then checks it at the
    /// centre of the box.
    fn from_evaluator(ranges: &[(f64, f64)], eval: impl Fn(&[f64]) -> [f64; 5]) -> Self {
        let lows: Vec<f64> = ranges.iter().map(|r| r.0).collect();
        let lengths: Vec<f64> = ranges.iter().map(|r| r.1 - r.0).collect();
        let base = eval(&lows);
        let coef: Vec<[f64; 5]> = (0..ranges.len())
            .map(|n| {
                if lengths[n] <= 0.0 {
                    return [0.0; 5];
                }
                let mut v = lows.clone();
                v[n] += lengths[n];
                let at = eval(&v);
                std::array::from_fn(|q| (at[q] - base[q]) / lengths[n])
            })
            .collect();
        let centre: Vec<f64> = lows
            .iter()
            .zip(&lengths)
            .map(|(l, d)| l + d / 2.0)
            .collect();
        let direct = eval(&centre);
        for q in 0..5 {
            let predicted = base[q]
                + coef
                    .iter()
                    .zip(&lengths)
                    .map(|(c, d)| c[q] * d / 2.0)
                    .sum::<f64>();
            assert!(
                (predicted - direct[q]).abs() <= 1e-9 * (1.0 + direct[q].abs()),
                "tracked quantity {q} is not affine in the group-1 means"
            );
        }
        Self {
            lengths,
            base,
            coef,
        }
    }
}

/// Extremes of the three targets over the profiles in one sign cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellExtremes {
    pub assumptions: AssumptionSet,
    /// Number of grid lines (outer grid points) meeting the cell.
    pub lines: u64,
    pub d: Option<(f64, f64)>,
    pub y1: Option<(f64, f64)>,
    pub y0: Option<(f64, f64)>,
}

impl CellExtremes {
    pub fn is_empty(&self) -> bool {
        self.lines == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    pub grid_points: usize,
    /// Outer grid points visited; each carries one exact line segment.
    pub lines: u128,
    /// Lines meeting at least one sign cell (all of them, for valid data).
    pub feasible_lines: u64,
    /// The sixteen cells, in [`AssumptionSet::table_cells`] order.
    pub cells: Vec<CellExtremes>,
    /// Profiles whose two associations share a sign (their product is
    /// nonnegative).
    pub reinforcing: CellExtremes,
    /// The within-group association is zero on every feasible profile (no
    /// variation in prevalence).
    pub within_vanishes: bool,
}

impl EnumerationResult {
    pub fn unrestricted(&self) -> &CellExtremes {
        &self.cells[0]
    }

    /// Enumerated extremes under `assumptions`. With reinforcement and a
    /// strict declared sign, the sign is propagated to the other association,
    /// matching the analytic convention; a zero declaration makes
    /// reinforcement vacuous.
    pub fn cell(&self, assumptions: AssumptionSet) -> CellExtremes {
        use SignAssumption::*;
        let find = |w: SignAssumption, b: SignAssumption| {
            *self
                .cells
                .iter()
                .find(|c| c.assumptions.within == w && c.assumptions.between == b)
                .expect("all sixteen cells are enumerated")
        };
        let (mut w, b) = (assumptions.within, assumptions.between);
        if self.within_vanishes {
            // Every within declaration holds everywhere and reinforcement
            // holds automatically.
            w = Unknown;
        }
        if !assumptions.contextual_reinforcement {
            return find(w, b);
        }
        let strict = [w, b]
            .into_iter()
            .find(|s| matches!(s, NonNegative | NonPositive));
        let mut out = match strict {
            Some(s) => find(
                if w == Unknown { s } else { w },
                if b == Unknown { s } else { b },
            ),
            None if w == Unknown && b == Unknown => self.reinforcing,
            None => find(w, b),
        };
        out.assumptions = assumptions;
        out
    }
}

#[derive(Clone, Copy)]
struct Acc {
    lines: u64,
    ext: [(f64, f64); 3],
}

impl Acc {
    const EMPTY: Acc = Acc {
        lines: 0,
        ext: [(f64::INFINITY, f64::NEG_INFINITY); 3],
    };

    fn merge(&mut self, o: &Acc) {
        self.lines += o.lines;
        for (a, b) in self.ext.iter_mut().zip(&o.ext) {
            a.0 = a.0.min(b.0);
            a.1 = a.1.max(b.1);
        }
    }

    fn finish(&self, assumptions: AssumptionSet) -> CellExtremes {
        let get = |k: usize| (self.lines > 0).then_some(self.ext[k]);
        CellExtremes {
            assumptions,
            lines: self.lines,
            d: get(0),
            y1: get(1),
            y0: get(2),
        }
    }
}

/// `{t in [0, len] : a + b t` satisfies `sign}`.
fn segment(a: f64, b: f64, sign: SignAssumption, len: f64) -> Option<(f64, f64)> {
    let (lo, hi) = match sign {
        SignAssumption::Unknown => (0.0, len),
        _ if b == 0.0 => {
            if sign.admits(a, SIGN_BAND) {
                (0.0, len)
            } else {
                return None;
            }
        }
        SignAssumption::NonNegative => {
            let r = (-SIGN_BAND - a) / b;
            if b > 0.0 {
                (r, len)
            } else {
                (0.0, r)
            }
        }
        SignAssumption::NonPositive => {
            let r = (SIGN_BAND - a) / b;
            if b > 0.0 {
                (0.0, r)
            } else {
                (r, len)
            }
        }
        SignAssumption::Zero => {
            let (r1, r2) = ((-SIGN_BAND - a) / b, (SIGN_BAND - a) / b);
            (r1.min(r2), r1.max(r2))
        }
    };
    let (lo, hi) = (lo.max(0.0), hi.min(len));
    (lo <= hi).then_some((lo, hi))
}

struct Walker<'a> {
    sys: &'a AffineSystem,
    outer: Vec<usize>,
    line: Option<usize>,
    grid: usize,
}

impl Walker<'_> {
    fn step(&self, n: usize) -> f64 {
        self.sys.lengths[n] / (self.grid - 1) as f64
    }

    /// Visits every outer grid point below `depth`, with `acc` holding the
    /// partial values of the five quantities.
    fn walk(&self, depth: usize, vals: [f64; 5], cells: &mut [Acc; 17]) {
        if depth == self.outer.len() {
            self.visit_line(vals, cells);
            return;
        }
        let n = self.outer[depth];
        let h = self.step(n);
        for k in 0..self.grid {
            let dv = h * k as f64;
            let next = std::array::from_fn(|q| vals[q] + self.sys.coef[n][q] * dv);
            self.walk(depth + 1, next, cells);
        }
    }

    fn visit_line(&self, vals: [f64; 5], cells: &mut [Acc; 17]) {
        let (slope, len) = match self.line {
            Some(l) => (self.sys.coef[l], self.sys.lengths[l]),
            None => ([0.0; 5], 0.0),
        };
        let segs_w = SignAssumption::ALL.map(|s| segment(vals[DW], slope[DW], s, len));
        let segs_b = SignAssumption::ALL.map(|s| segment(vals[DB], slope[DB], s, len));
        let widen = |acc: &mut Acc, lo: f64, hi: f64| {
            for (k, q) in [D, Y1, Y0].into_iter().enumerate() {
                let (u, v) = (vals[q] + slope[q] * lo, vals[q] + slope[q] * hi);
                let e = &mut acc.ext[k];
                e.0 = e.0.min(u.min(v));
                e.1 = e.1.max(u.max(v));
            }
        };
        let meet = |i: usize, j: usize| match (segs_w[i], segs_b[j]) {
            (Some(a), Some(b)) => {
                let (lo, hi) = (a.0.max(b.0), a.1.min(b.1));
                (lo <= hi).then_some((lo, hi))
            }
            _ => None,
        };
        for i in 0..4 {
            for j in 0..4 {
                if let Some((lo, hi)) = meet(i, j) {
                    cells[4 * i + j].lines += 1;
                    widen(&mut cells[4 * i + j], lo, hi);
                }
            }
        }
        // Both nonnegative or both nonpositive.
        let mut hit = false;
        for k in [1, 2] {
            if let Some((lo, hi)) = meet(k, k) {
                widen(&mut cells[16], lo, hi);
                hit = true;
            }
        }
        cells[16].lines += u64::from(hit);
    }
}

pub(crate) fn enumerate_system(
    sys: &AffineSystem,
    grid_points: usize,
    cap: u128,
) -> Result<EnumerationResult> {
    if grid_points < 2 {
        return Err(EiError::Configuration(format!(
            "grid needs at least 2 points per coordinate, got {grid_points}"
        )));
    }
    let mut free: Vec<usize> = (0..sys.lengths.len())
        .filter(|&n| sys.lengths[n] > 0.0)
        .collect();
    // The longest coordinate is walked exactly.
    let line = free
        .iter()
        .copied()
        .max_by(|&a, &b| sys.lengths[a].total_cmp(&sys.lengths[b]));
    free.retain(|&n| Some(n) != line);
    let lines = (grid_points as u128)
        .checked_pow(free.len() as u32)
        .unwrap_or(u128::MAX);
    let points = lines.saturating_mul(grid_points as u128);
    if lines > cap {
        return Err(EiError::InstanceTooLarge { points, cap });
    }
    let walker = Walker {
        sys,
        outer: free,
        line,
        grid: grid_points,
    };

    let run = |first: Option<usize>| -> [Acc; 17] {
        let mut cells = [Acc::EMPTY; 17];
        match first {
            None => walker.walk(0, sys.base, &mut cells),
            Some(k) => {
                let n = walker.outer[0];
                let dv = walker.step(n) * k as f64;
                let vals = std::array::from_fn(|q| sys.base[q] + sys.coef[n][q] * dv);
                walker.walk(1, vals, &mut cells);
            }
        }
        cells
    };
    let merge = |mut a: [Acc; 17], b: [Acc; 17]| {
        for (x, y) in a.iter_mut().zip(&b) {
            x.merge(y);
        }
        a
    };
    // Partitions the first outer coordinate across workers.
    let acc = if walker.outer.is_empty() {
        run(None)
    } else {
        (0..grid_points)
            .into_par_iter()
            .map(|k| run(Some(k)))
            .reduce(|| [Acc::EMPTY; 17], merge)
    };

    let within_vanishes = sys.base[DW].abs() <= SIGN_BAND
        && sys
            .coef
            .iter()
            .zip(&sys.lengths)
            .all(|(c, len)| (c[DW] * len).abs() <= SIGN_BAND);
    let cells: Vec<CellExtremes> = AssumptionSet::table_cells()
        .enumerate()
        .map(|(i, a)| acc[i].finish(a))
        .collect();
    Ok(EnumerationResult {
        grid_points,
        lines,
        feasible_lines: cells[0].lines,
        cells,
        reinforcing: acc[16].finish(AssumptionSet::reinforcing()),
        within_vanishes,
    })
}

/// Global system: one coordinate per neighborhood (fixed for single-group
/// neighborhoods), with every quantity evaluated through the profile
/// summary.
pub(crate) fn global_system(data: &AggregateData) -> AffineSystem {
    let b = data.bounds();
    let ranges: Vec<(f64, f64)> = data
        .records()
        .iter()
        .map(|r| {
            if r.is_mixed() && r.p > 0.0 {
                group1_range(r.x, r.y, b)
            } else {
                (r.y, r.y)
            }
        })
        .collect();
    AffineSystem::from_evaluator(&ranges, |v| {
        let p = GroupMeansProfile::from_group1(data, v);
        let s = summarize_unchecked(data, &p.y1, &p.y0);
        [s.d, s.y1, s.y0, s.delta_w, s.delta_b]
    })
}

/// Enumerates feasible profiles of `data` on a grid of `grid_points` values
/// per neighborhood.
pub fn enumerate_feasible(data: &AggregateData, grid_points: usize) -> Result<EnumerationResult> {
    enumerate_feasible_capped(data, grid_points, DEFAULT_GRID_CAP)
}

pub fn enumerate_feasible_capped(
    data: &AggregateData,
    grid_points: usize,
    cap: u128,
) -> Result<EnumerationResult> {
    enumerate_system(&global_system(data), grid_points, cap)
}

/// Pooled group means of neighborhoods sharing a prevalence, with the local
/// within-group association given by `slope - D`.
pub(crate) fn pooled_system(
    members: &[&NeighborhoodRecord],
    bounds: OutcomeBounds,
    slope: f64,
) -> AffineSystem {
    let mass: f64 = members.iter().map(|r| r.p).sum();
    let weights: Vec<f64> = members.iter().map(|r| r.p / mass).collect();
    let ranges: Vec<(f64, f64)> = members
        .iter()
        .map(|r| group1_range(r.x, r.y, bounds))
        .collect();
    AffineSystem::from_evaluator(&ranges, |v| {
        let (mut y1, mut y0, mut db) = (0.0, 0.0, 0.0);
        for ((r, w), &v1) in members.iter().zip(&weights).zip(v) {
            let v0 = (r.y - r.x * v1) / (1.0 - r.x);
            y1 += w * v1;
            y0 += w * v0;
            db += w * r.x * (1.0 - r.x) * (v1 - v0);
        }
        let d = y1 - y0;
        [d, y1, y0, slope - d, db]
    })
}

/// Enumerates the group means of one mixed neighborhood. `slope` is the
/// derivative of the prevalence-outcome regression at its prevalence.
pub fn enumerate_local(
    record: &NeighborhoodRecord,
    bounds: OutcomeBounds,
    slope: f64,
    grid_points: usize,
) -> Result<EnumerationResult> {
    if !record.is_mixed() {
        return Err(EiError::Input(format!(
            "neighborhood {} has a single group; its means are identified",
            record.id
        )));
    }
    let probe = NeighborhoodRecord::new(record.id.clone(), 1.0, record.x, record.y);
    enumerate_system(
        &pooled_system(&[&probe], bounds, slope),
        grid_points,
        DEFAULT_GRID_CAP,
    )
}

/// Enumerates the pooled group means of the neighborhoods at `indices`, which
/// must share a prevalence and all be mixed.
pub fn enumerate_pooled(
    data: &AggregateData,
    indices: &[usize],
    slope: f64,
    grid_points: usize,
) -> Result<EnumerationResult> {
    let members: Vec<&NeighborhoodRecord> = indices.iter().map(|&i| &data.records()[i]).collect();
    if members.is_empty() || members.iter().any(|r| !r.is_mixed()) {
        return Err(EiError::Input(
            "pooled enumeration needs mixed members".into(),
        ));
    }
    if members.iter().map(|r| r.p).sum::<f64>() <= 0.0 {
        return Err(EiError::InsufficientData(
            "pooled members have no population".into(),
        ));
    }
    enumerate_system(
        &pooled_system(&members, data.bounds(), slope),
        grid_points,
        DEFAULT_GRID_CAP,
    )
}

/// The feasible profile at grid index `k[n]` of each neighborhood, for
/// closure and containment checks.
pub fn grid_profile(data: &AggregateData, grid_points: usize, k: &[usize]) -> GroupMeansProfile {
    let b = data.bounds();
    let y1: Vec<f64> = data
        .records()
        .iter()
        .zip(k)
        .map(|(r, &k)| {
            if !r.is_mixed() {
                return r.y;
            }
            let (lo, hi) = group1_range(r.x, r.y, b);
            if k + 1 >= grid_points {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (grid_points - 1) as f64
            }
        })
        .collect();
    GroupMeansProfile::from_group1(data, &y1)
}
