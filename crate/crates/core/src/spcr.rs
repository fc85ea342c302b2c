//! Registration without putative correspondences.
//!
//! Each source point may match any target point, so the per-axis objective
//! counts source points that have *some* target whose projection is within
//! `eps`. For a cell, every (source, target) pair yields a feasible interval
//! of `t`; the intervals of one source are merged before stabbing so that a
//! source contributes at most once to the bound.

use crate::bnb::{self, check_epsilon, dot_range, AxisObjective, AxisSolution, Bounds, Cell, LowerBound, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{branch_angular_radius, exp_map_pos, AxisLabel, Vec3};
use crate::interval::{merge_into, Interval, StabBuffer};

#[derive(Debug, Clone)]
pub struct SpcrProblem {
    axis: AxisLabel,
    epsilon: f64,
    source: Vec<Vec3>,
    units: Vec<Vec3>,
    norms: Vec<f64>,
    /// Target projections sorted ascending, with their original indices.
    sorted_targets: Vec<f64>,
    sorted_index: Vec<usize>,
}

impl SpcrProblem {
    pub fn new(source: &[Vec3], target: &[Vec3], axis: AxisLabel, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if source.is_empty() {
            return Err(Error::EmptyInput("source cloud"));
        }
        if target.is_empty() {
            return Err(Error::EmptyInput("target cloud"));
        }
        let norms: Vec<f64> = source.iter().map(|p| p.norm()).collect();
        let units = source
            .iter()
            .zip(&norms)
            .map(|(p, &n)| if n > 0.0 { p / n } else { Vec3::zeros() })
            .collect();
        let mut order: Vec<usize> = (0..target.len()).collect();
        order.sort_by(|&a, &b| axis.component(&target[a]).total_cmp(&axis.component(&target[b])));
        let sorted_targets = order.iter().map(|&k| axis.component(&target[k])).collect();
        Ok(Self {
            axis,
            epsilon,
            source: source.to_vec(),
            units,
            norms,
            sorted_targets,
            sorted_index: order,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn source_len(&self) -> usize {
        self.source.len()
    }

    pub fn target_len(&self) -> usize {
        self.sorted_targets.len()
    }

    /// Positions in the sorted target list whose projection lies in `[x - eps, x + eps]`.
    fn matching_range(&self, x: f64) -> std::ops::Range<usize> {
        let lo = self.sorted_targets.partition_point(|&q| q < x - self.epsilon);
        let hi = self.sorted_targets.partition_point(|&q| q <= x + self.epsilon);
        lo..hi.max(lo)
    }

    /// Nearest target projection to `x`, if any lies within `eps`.
    fn nearest_match(&self, x: f64) -> Option<f64> {
        let k = self.sorted_targets.partition_point(|&q| q < x);
        [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter_map(|k| self.sorted_targets.get(k).copied())
            .filter(|q| (x - q).abs() <= self.epsilon)
            .min_by(|a, b| (x - a).abs().total_cmp(&(x - b).abs()))
    }

    /// Each matched source point paired with its nearest target projection.
    pub fn inlier_samples(&self, row: &Vec3, t: f64) -> Vec<(Vec3, f64)> {
        self.source
            .iter()
            .filter_map(|p| self.nearest_match(row.dot(p) + t).map(|q| (*p, q)))
            .collect()
    }

    fn has_match(&self, x: f64) -> bool {
        // |x - q| <= eps checked directly on the neighbours of x, so the test
        // agrees bit-for-bit with a brute-force double loop
        let k = self.sorted_targets.partition_point(|&q| q < x);
        let near = |k: usize| (x - self.sorted_targets[k]).abs() <= self.epsilon;
        (k < self.sorted_targets.len() && near(k)) || (k > 0 && near(k - 1))
    }
}

impl AxisObjective for SpcrProblem {
    fn axis(&self) -> AxisLabel {
        self.axis
    }

    fn capacity(&self) -> usize {
        self.source.len()
    }

    fn upper_bound(&self, cell: &Cell) -> Bounds {
        let center = exp_map_pos(cell.center).into_inner();
        let alpha = branch_angular_radius(cell.half_side);
        let eps = self.epsilon;
        let n = self.sorted_targets.len();

        let mut group = Vec::with_capacity(n);
        let mut merged_pos = Vec::new();
        let mut merged_neg = Vec::new();
        for i in 0..self.source.len() {
            let (dmin, dmax) = dot_range(&center, &self.units[i], self.norms[i], alpha);
            group.clear();
            group.extend(self.sorted_targets.iter().map(|q| Interval::new(q - eps - dmax, q + eps - dmin)));
            merge_into(&mut group, &mut merged_pos);
            group.clear();
            group.extend(self.sorted_targets.iter().map(|q| Interval::new(q - eps + dmin, q + eps + dmax)));
            merge_into(&mut group, &mut merged_neg);
        }

        let stab = |merged: &[Interval]| {
            let mut buf = StabBuffer::with_capacity(merged.len());
            merged.iter().for_each(|iv| buf.push(*iv));
            buf.stab()
        };
        let sp = stab(&merged_pos);
        let sn = stab(&merged_neg);
        Bounds {
            upper: sp.count.max(sn.count),
            t_pos: sp.position.unwrap_or(0.0),
            t_neg: sn.position.unwrap_or(0.0),
        }
    }

    fn evaluate(&self, row: &Vec3, t: f64) -> usize {
        self.source.iter().filter(|p| self.has_match(row.dot(p) + t)).count()
    }
}

/// Number of source points with at least one target within `eps` along the axis.
pub fn spcr_objective(problem: &SpcrProblem, row: &Vec3, t: f64) -> usize {
    problem.evaluate(row, t)
}

pub fn spcr_upper_bound(problem: &SpcrProblem, cell: &Cell) -> Bounds {
    problem.upper_bound(cell)
}

pub fn spcr_lower_bound(problem: &SpcrProblem, cell: &Cell, bounds: &Bounds) -> LowerBound {
    bnb::lower_bound_of(problem, cell, bounds)
}

pub fn spcr_solve_axis(problem: &SpcrProblem, config: &SolverConfig) -> Result<AxisSolution> {
    bnb::solve(problem, config)
}

/// Least-squares refit against the nearest matches, keeping the count.
pub fn spcr_polish_axis(problem: &SpcrProblem, solution: &AxisSolution) -> AxisSolution {
    bnb::polish(problem, &problem.inlier_samples(&solution.row, solution.t), solution)
}

/// `(source index, target index)` pairs, sorted and free of duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidatePairSet {
    pairs: Vec<(usize, usize)>,
}

impl CandidatePairSet {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of distinct source indices.
    pub fn source_count(&self) -> usize {
        let mut n = 0;
        let mut last = None;
        for &(i, _) in &self.pairs {
            if last != Some(i) {
                n += 1;
                last = Some(i);
            }
        }
        n
    }
}

/// Every pair that satisfies the axis constraint at the solution.
pub fn extract_candidates(problem: &SpcrProblem, solution: &AxisSolution) -> CandidatePairSet {
    let row = solution.row.into_inner();
    let mut pairs = Vec::new();
    for (i, p) in problem.source.iter().enumerate() {
        let x = row.dot(p) + solution.t;
        for pos in problem.matching_range(x) {
            // re-check with the same predicate the objective uses
            if (x - problem.sorted_targets[pos]).abs() <= problem.epsilon {
                pairs.push((i, problem.sorted_index[pos]));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    CandidatePairSet { pairs }
}
