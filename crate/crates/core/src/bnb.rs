//! Branch-and-bound search for one rotation row and its translation component.
//!
//! A sub-problem maximizes the number of correspondences with
//! `|r . p_i + t - q_i^j| <= eps` over unit rows `r` and scalar `t`. The row
//! is searched over the square `[-pi/2, pi/2]^2` of the exponential-map disk;
//! each square cell bounds both the upper-hemisphere rows and their
//! negations at once. The translation never gets branched: for a fixed cell
//! each correspondence admits an interval of feasible `t`, and the best `t`
//! is the max-stabbing probe of those intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{branch_angular_radius, clamped_acos, exp_map_pos, AxisLabel, DiskPoint, UnitVec3, Vec3};
use crate::interval::{Interval, StabBuffer};
use crate::pipeline::CorrespondenceSet;

/// Which half of the sphere a row was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    Positive,
    Negative,
}

/// A square cell of the disk domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub center: DiskPoint,
    pub half_side: f64,
}

impl Cell {
    /// The square circumscribing the radius-`pi/2` disk.
    pub fn root() -> Self {
        Self {
            center: DiskPoint::ORIGIN,
            half_side: FRAC_PI_2,
        }
    }

    pub fn contains(&self, d: &DiskPoint) -> bool {
        (d.u - self.center.u).abs() <= self.half_side && (d.v - self.center.v).abs() <= self.half_side
    }
}

/// Splits a cell into its four quadrants.
pub fn subdivide(cell: &Cell) -> [Cell; 4] {
    let h = 0.5 * cell.half_side;
    let DiskPoint { u, v } = cell.center;
    [(-h, -h), (h, -h), (-h, h), (h, h)].map(|(du, dv)| Cell {
        center: DiskPoint::new(u + du, v + dv),
        half_side: h,
    })
}

/// Cached upper bound of a cell with the max-stabbing probes of both hemispheres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub upper: usize,
    pub t_pos: f64,
    pub t_neg: f64,
}

/// A cell together with its evaluated bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub cell: Cell,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBound {
    pub value: usize,
    pub row: UnitVec3,
    pub t: f64,
    pub hemisphere: Hemisphere,
}

/// Range of `r . p` over every row `r` within `alpha` radians of `center`,
/// given `p = norm * unit`. Returned as `(min, max)`.
#[inline]
pub(crate) fn dot_range(center: &Vec3, unit: &Vec3, norm: f64, alpha: f64) -> (f64, f64) {
    if norm == 0.0 {
        return (0.0, 0.0);
    }
    let theta = clamped_acos(center.dot(unit));
    let dmax = norm * (theta - alpha).max(0.0).cos();
    let dmin = norm * (theta + alpha).min(PI).cos();
    (dmin, dmax)
}

/// Feasible translations for one correspondence over the upper-hemisphere
/// rows of a cell.
pub fn candidate_interval_pos(p: &Vec3, q_j: f64, center_row: &Vec3, half_side: f64, epsilon: f64) -> Interval {
    let norm = p.norm();
    let unit = if norm > 0.0 { p / norm } else { Vec3::zeros() };
    let (dmin, dmax) = dot_range(center_row, &unit, norm, branch_angular_radius(half_side));
    Interval::new(q_j - epsilon - dmax, q_j + epsilon - dmin)
}

/// Same as [`candidate_interval_pos`] for the negated rows.
pub fn candidate_interval_neg(p: &Vec3, q_j: f64, center_row: &Vec3, half_side: f64, epsilon: f64) -> Interval {
    let norm = p.norm();
    let unit = if norm > 0.0 { p / norm } else { Vec3::zeros() };
    let (dmin, dmax) = dot_range(center_row, &unit, norm, branch_angular_radius(half_side));
    Interval::new(q_j - epsilon + dmin, q_j + epsilon + dmax)
}

/// A consensus objective over `(row, t)` that the branch-and-bound loop can
/// drive: it needs a valid upper bound per cell and exact evaluation.
pub trait AxisObjective: Sync {
    fn axis(&self) -> AxisLabel;

    /// Largest value the objective can take.
    fn capacity(&self) -> usize;

    fn upper_bound(&self, cell: &Cell) -> Bounds;

    /// Exact objective at a row and translation component.
    fn evaluate(&self, row: &Vec3, t: f64) -> usize;
}

/// Evaluates the objective at the cell center for both hemispheres. Two
/// probes are tried per hemisphere: the one recorded by the upper bound and
/// the best translation for the center row itself (a zero-width cell).
/// Ties go to the positive hemisphere, then to the upper-bound probe.
pub fn lower_bound_of<O: AxisObjective + ?Sized>(objective: &O, cell: &Cell, bounds: &Bounds) -> LowerBound {
    let row = exp_map_pos(cell.center);
    let exact = objective.upper_bound(&Cell {
        center: cell.center,
        half_side: 0.0,
    });
    let best = |r: &Vec3, probes: [f64; 2]| {
        let a = objective.evaluate(r, probes[0]);
        let b = objective.evaluate(r, probes[1]);
        if b > a {
            (b, probes[1])
        } else {
            (a, probes[0])
        }
    };
    let (pos, t_pos) = best(&row, [bounds.t_pos, exact.t_pos]);
    let (neg, t_neg) = best(&-row.into_inner(), [bounds.t_neg, exact.t_neg]);
    if neg > pos {
        LowerBound {
            value: neg,
            row: -row,
            t: t_neg,
            hemisphere: Hemisphere::Negative,
        }
    } else {
        LowerBound {
            value: pos,
            row,
            t: t_pos,
            hemisphere: Hemisphere::Positive,
        }
    }
}

/// Correspondence-based sub-problem for one axis.
#[derive(Debug, Clone)]
pub struct AxisProblem {
    axis: AxisLabel,
    epsilon: f64,
    points: Vec<Vec3>,
    units: Vec<Vec3>,
    norms: Vec<f64>,
    targets: Vec<f64>,
}

impl AxisProblem {
    pub fn new(set: &CorrespondenceSet, axis: AxisLabel, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if set.is_empty() {
            return Err(Error::EmptyInput("correspondence set"));
        }
        let points: Vec<Vec3> = set.iter().map(|c| c.p).collect();
        let norms: Vec<f64> = points.iter().map(|p| p.norm()).collect();
        let units = points
            .iter()
            .zip(&norms)
            .map(|(p, &n)| if n > 0.0 { p / n } else { Vec3::zeros() })
            .collect();
        let targets = set.iter().map(|c| axis.component(&c.q)).collect();
        Ok(Self {
            axis,
            epsilon,
            points,
            units,
            norms,
            targets,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Projected targets `q_i^j`.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// `(p_i, q_i^j)` for the correspondences satisfied at `(row, t)`.
    pub fn inlier_samples(&self, row: &Vec3, t: f64) -> Vec<(Vec3, f64)> {
        self.points
            .iter()
            .zip(&self.targets)
            .filter(|(p, q)| (row.dot(p) + t - *q).abs() <= self.epsilon)
            .map(|(p, q)| (*p, *q))
            .collect()
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

impl AxisObjective for AxisProblem {
    fn axis(&self) -> AxisLabel {
        self.axis
    }

    fn capacity(&self) -> usize {
        self.points.len()
    }

    fn upper_bound(&self, cell: &Cell) -> Bounds {
        let center = exp_map_pos(cell.center).into_inner();
        let alpha = branch_angular_radius(cell.half_side);
        let eps = self.epsilon;
        let n = self.points.len();
        let mut pos = StabBuffer::with_capacity(n);
        let mut neg = StabBuffer::with_capacity(n);
        for i in 0..n {
            let (dmin, dmax) = dot_range(&center, &self.units[i], self.norms[i], alpha);
            let q = self.targets[i];
            pos.push(Interval::new(q - eps - dmax, q + eps - dmin));
            neg.push(Interval::new(q - eps + dmin, q + eps + dmax));
        }
        let sp = pos.stab();
        let sn = neg.stab();
        Bounds {
            upper: sp.count.max(sn.count),
            t_pos: sp.position.unwrap_or(0.0),
            t_neg: sn.position.unwrap_or(0.0),
        }
    }

    fn evaluate(&self, row: &Vec3, t: f64) -> usize {
        evaluate_axis_objective(&self.points, &self.targets, self.epsilon, row, t)
    }
}

pub(crate) fn evaluate_axis_objective(points: &[Vec3], targets: &[f64], epsilon: f64, row: &Vec3, t: f64) -> usize {
    points
        .iter()
        .zip(targets)
        .filter(|(p, q)| (row.dot(p) + t - *q).abs() <= epsilon)
        .count()
}

pub fn upper_bound(problem: &AxisProblem, cell: &Cell) -> Bounds {
    problem.upper_bound(cell)
}

pub fn lower_bound(problem: &AxisProblem, cell: &Cell, bounds: &Bounds) -> LowerBound {
    lower_bound_of(problem, cell, bounds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Cells whose children would be smaller than this half-side (radians)
    /// are not split; a retired cell that could still beat the incumbent
    /// leaves the result uncertified.
    pub min_sigma: f64,
    /// Hard cap on subdivisions; `None` means unbounded.
    pub max_iterations: Option<usize>,
    /// Evaluate the four children of a split concurrently.
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            min_sigma: 1e-9,
            max_iterations: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSolution {
    pub axis: AxisLabel,
    pub row: UnitVec3,
    pub t: f64,
    pub inliers: usize,
    /// Best upper bound left when the search stopped; equals `inliers` when certified.
    pub upper: usize,
    pub iterations: usize,
    pub hemisphere: Hemisphere,
    /// The bound gap closed to zero.
    pub certified: bool,
    pub elapsed_ms: f64,
}

struct Queued {
    branch: Branch,
    depth: u32,
    seq: u64,
}

impl Queued {
    fn key(&self) -> (usize, u32, std::cmp::Reverse<u64>) {
        (self.branch.bounds.upper, self.depth, std::cmp::Reverse(self.seq))
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // largest upper bound first, then smaller cells, then insertion order
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

fn evaluate_cells<O: AxisObjective + ?Sized>(objective: &O, cells: &[Cell], parallel: bool) -> Vec<(Branch, LowerBound)> {
    let eval = |cell: &Cell| {
        let bounds = objective.upper_bound(cell);
        let lower = lower_bound_of(objective, cell, &bounds);
        (Branch { cell: *cell, bounds }, lower)
    };
    if parallel {
        cells.par_iter().map(eval).collect()
    } else {
        cells.iter().map(eval).collect()
    }
}

/// Best-first branch and bound over the disk square.
///
/// The search pops the cell with the largest upper bound, splits it in four
/// and keeps only children that could still beat the incumbent. Cells whose
/// split would go below `min_sigma` are retired instead of split, and the
/// search carries on with the rest. It stops when the best remaining upper
/// bound is no better than the incumbent, or after `max_iterations` splits.
/// The result is certified when neither a retired cell nor an unexplored one
/// could beat it.
pub fn solve<O: AxisObjective + ?Sized>(objective: &O, config: &SolverConfig) -> Result<AxisSolution> {
    if objective.capacity() == 0 {
        return Err(Error::EmptyInput("axis problem"));
    }
    if !(config.min_sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("min_sigma must be positive, got {}", config.min_sigma)));
    }
    let start = Instant::now();

    let root = evaluate_cells(objective, &[Cell::root()], false).remove(0);
    let mut best = root.1;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    if root.0.bounds.upper > best.value {
        heap.push(Queued {
            branch: root.0,
            depth: 0,
            seq,
        });
    }

    let mut iterations = 0usize;
    // largest upper bound among cells retired at the resolution floor
    let mut unresolved = 0usize;
    let mut exhausted_at = None;
    while let Some(top) = heap.pop() {
        let upper = top.branch.bounds.upper;
        if upper <= best.value {
            break;
        }
        if config.max_iterations.is_some_and(|m| iterations >= m) {
            exhausted_at = Some(upper);
            break;
        }
        if 0.5 * top.branch.cell.half_side < config.min_sigma {
            debug!(
                "axis {}: cell at {:?} reached the resolution floor with upper {upper}, best {}",
                objective.axis(),
                top.branch.cell.center,
                best.value
            );
            unresolved = unresolved.max(upper);
            continue;
        }
        iterations += 1;

        let children = subdivide(&top.branch.cell);
        let evaluated = evaluate_cells(objective, &children, config.parallel);
        for (_, lower) in &evaluated {
            if lower.value > best.value {
                best = *lower;
            }
        }
        for (branch, _) in evaluated {
            if branch.bounds.upper > best.value {
                seq += 1;
                heap.push(Queued {
                    branch,
                    depth: top.depth + 1,
                    seq,
                });
            }
        }
    }
    let remaining_upper = unresolved.max(exhausted_at.unwrap_or(0)).max(best.value);

    Ok(AxisSolution {
        axis: objective.axis(),
        row: best.row,
        t: best.t,
        inliers: best.value,
        upper: remaining_upper,
        iterations,
        hemisphere: best.hemisphere,
        certified: remaining_upper == best.value,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Least-squares refit of `(row, t)` on `samples` (`(p, q_j)` pairs),
/// accepted only when the objective keeps its value.
///
/// The optimum found by the search is a small region of rows rather than a
/// point, and the returned cell center can sit anywhere inside it. Refitting
/// on the inliers moves the row toward the middle of that region without
/// giving up the certified count.
pub fn polish<O: AxisObjective + ?Sized>(objective: &O, samples: &[(Vec3, f64)], solution: &AxisSolution) -> AxisSolution {
    if samples.len() < 4 {
        return *solution;
    }
    let n = samples.len() as f64;
    let cp = samples.iter().fold(Vec3::zeros(), |a, (p, _)| a + p) / n;
    let cq = samples.iter().map(|(_, q)| q).sum::<f64>() / n;
    let mut cov = nalgebra::Matrix3::zeros();
    let mut rhs = Vec3::zeros();
    for (p, q) in samples {
        let d = p - cp;
        cov += d * d.transpose();
        rhs += d * (q - cq);
    }
    let Some(raw) = cov.cholesky().map(|c| c.solve(&rhs)) else {
        return *solution;
    };
    let norm = raw.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return *solution;
    }
    let row = Vec3::from(raw / norm);
    let t = cq - row.dot(&cp);
    let inliers = objective.evaluate(&row, t);
    if inliers < solution.inliers {
        return *solution;
    }
    AxisSolution {
        row: UnitVec3::new_unchecked(row),
        t,
        inliers,
        upper: solution.upper.max(inliers),
        hemisphere: if row.z < 0.0 { Hemisphere::Negative } else { Hemisphere::Positive },
        ..*solution
    }
}

/// Solves the correspondence-based sub-problem for one axis.
pub fn solve_axis(problem: &AxisProblem, config: &SolverConfig) -> Result<AxisSolution> {
    solve(problem, config)
}

/// [`polish`] on the inliers of `solution`.
pub fn polish_axis(problem: &AxisProblem, solution: &AxisSolution) -> AxisSolution {
    polish(problem, &problem.inlier_samples(&solution.row, solution.t), solution)
}
