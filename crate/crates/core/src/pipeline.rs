//! End-to-end registration: three independent axis solves, assembly of the
//! rigid transform, and the final consensus count.

use std::time::Instant;

use log::warn;
use nalgebra::{Matrix3, Unit};
use serde::{Deserialize, Serialize};

use crate::bnb::{polish_axis, solve_axis, AxisObjective, AxisProblem, AxisSolution, Hemisphere, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{matrix_from_rows, nearest_rotation, orthogonality_defect, AxisLabel, RigidTransform, Rotation, Vec3};
use crate::interval::{grouped_stab, stab, Interval};
use crate::spcr::{extract_candidates, spcr_polish_axis, spcr_solve_axis, CandidatePairSet, SpcrProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p: Vec3,
    pub q: Vec3,
}

/// Putative point pairs `(p_i, q_i)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Self {
        Self { pairs }
    }

    pub fn from_points(source: &[Vec3], target: &[Vec3]) -> Self {
        assert_eq!(source.len(), target.len(), "source and target lengths differ");
        Self::new(source.iter().zip(target).map(|(&p, &q)| Correspondence { p, q }).collect())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Correspondence> {
        self.pairs.iter()
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn is_finite(&self) -> bool {
        self.pairs
            .iter()
            .all(|c| c.p.iter().chain(c.q.iter()).all(|x| x.is_finite()))
    }
}

impl FromIterator<Correspondence> for CorrespondenceSet {
    fn from_iter<I: IntoIterator<Item = Correspondence>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    pub solver: SolverConfig,
    /// Largest orthogonality defect still reported as certified.
    pub defect_threshold: f64,
    /// Least-squares refit of each axis solution on its own inliers,
    /// kept only when the axis count does not drop.
    pub polish: bool,
    /// Least-squares polish on the final joint inliers.
    pub refine: bool,
    /// Axis solved with the correspondence-free objective in [`register_spcr`].
    pub spcr_axis: AxisLabel,
    /// Run the three axis solves concurrently.
    pub parallel_axes: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            defect_threshold: 0.15,
            polish: true,
            refine: false,
            spcr_axis: AxisLabel::X,
            parallel_axes: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    /// Indexed by [`AxisLabel::index`].
    pub axis_solutions: [AxisSolution; 3],
    pub consensus: usize,
    /// Max abs entry of `M M^T - I` for the raw stacked rows.
    pub orthogonality_defect: f64,
    pub certified: bool,
    pub runtime_ms: f64,
}

impl RegistrationResult {
    pub fn axis_inliers(&self) -> [usize; 3] {
        self.axis_solutions.map(|s| s.inliers)
    }

    pub fn iterations(&self) -> [usize; 3] {
        self.axis_solutions.map(|s| s.iterations)
    }

    pub fn axis_runtime_ms(&self) -> [f64; 3] {
        self.axis_solutions.map(|s| s.elapsed_ms)
    }
}

/// Number of correspondences whose residual is within `eps` on every axis.
pub fn evaluate_joint_objective(set: &CorrespondenceSet, transform: &RigidTransform, epsilon: f64) -> usize {
    set.iter()
        .filter(|c| within(&(transform.apply(&c.p) - c.q), epsilon))
        .count()
}

fn within(residual: &Vec3, epsilon: f64) -> bool {
    residual.iter().all(|r| r.abs() <= epsilon)
}

fn map_axes<F>(parallel: bool, f: F) -> Result<[AxisSolution; 3]>
where
    F: Fn(AxisLabel) -> Result<AxisSolution> + Sync,
{
    let (x, (y, z)) = if parallel {
        rayon::join(
            || f(AxisLabel::X),
            || rayon::join(|| f(AxisLabel::Y), || f(AxisLabel::Z)),
        )
    } else {
        (f(AxisLabel::X), (f(AxisLabel::Y), f(AxisLabel::Z)))
    };
    Ok([x?, y?, z?])
}

/// Projects the stacked axis rows onto SO(3) and reports the defect.
fn assemble_rotation(solutions: &[AxisSolution; 3]) -> Result<(Rotation, f64)> {
    let rows: [Vec3; 3] = solutions.map(|s| s.row.into_inner());
    let m: Matrix3<f64> = matrix_from_rows(&rows);
    let defect = orthogonality_defect(&m);
    Ok((nearest_rotation(&m)?, defect))
}

/// Best translation component for a fixed row: stab the exact feasibility
/// intervals `[q - eps - r.p, q + eps - r.p]`.
fn restab_translation(set: &CorrespondenceSet, axis: AxisLabel, row: &Vec3, epsilon: f64) -> f64 {
    let intervals: Vec<Interval> = set
        .iter()
        .map(|c| {
            let base = axis.component(&c.q) - row.dot(&c.p);
            Interval::new(base - epsilon, base + epsilon)
        })
        .collect();
    stab(&intervals).position.unwrap_or(0.0)
}

/// An uncertified axis search may stop short of its optimum. If the final
/// rotation row already does better on that axis, record it as the axis
/// solution so per-axis counts stay upper bounds of the joint consensus.
fn adopt_final_rows(solutions: &mut [AxisSolution; 3], transform: &RigidTransform, objectives: [&dyn AxisObjective; 3]) {
    for (j, (sol, objective)) in solutions.iter_mut().zip(objectives).enumerate() {
        let row = transform.rotation.matrix().row(j).transpose();
        let t = transform.translation[j];
        let inliers = objective.evaluate(&row, t);
        if inliers > sol.inliers {
            sol.row = Unit::new_normalize(row);
            sol.t = t;
            sol.inliers = inliers;
            sol.upper = sol.upper.max(inliers);
            sol.certified = sol.upper == inliers;
            sol.hemisphere = if row.z < 0.0 { Hemisphere::Negative } else { Hemisphere::Positive };
        }
    }
}

/// Registers a correspondence set by solving the X, Y and Z sub-problems.
pub fn register(set: &CorrespondenceSet, epsilon: f64, config: &RegistrationConfig) -> Result<RegistrationResult> {
    let start = Instant::now();
    if set.is_empty() {
        return Err(Error::EmptyInput("correspondence set"));
    }
    if set.len() < 3 {
        warn!("registering only {} correspondences; the pose is under-determined", set.len());
    }
    let [px, py, pz] = AxisLabel::ALL.map(|axis| AxisProblem::new(set, axis, epsilon));
    let problems = [px?, py?, pz?];
    let mut solutions = map_axes(config.parallel_axes, |axis| {
        let problem = &problems[axis.index()];
        let solution = solve_axis(problem, &config.solver)?;
        Ok(if config.polish { polish_axis(problem, &solution) } else { solution })
    })?;

    let (rotation, defect) = assemble_rotation(&solutions)?;
    let translation = Vec3::from_fn(|j, _| {
        let axis = AxisLabel::ALL[j];
        restab_translation(set, axis, &rotation.matrix().row(j).transpose(), epsilon)
    });
    let mut transform = RigidTransform::new(rotation, translation);
    if config.refine {
        transform = refine_on_inliers(set, &transform, epsilon);
    }
    let consensus = evaluate_joint_objective(set, &transform, epsilon);
    let [ox, oy, oz] = &problems;
    adopt_final_rows(&mut solutions, &transform, [ox, oy, oz]);

    Ok(RegistrationResult {
        transform,
        consensus,
        orthogonality_defect: defect,
        certified: solutions.iter().all(|s| s.certified) && defect <= config.defect_threshold,
        axis_solutions: solutions,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Least-squares rigid fit (Kabsch) on the joint inliers of `transform`.
/// Falls back to the input when fewer than three inliers exist.
pub fn refine_on_inliers(set: &CorrespondenceSet, transform: &RigidTransform, epsilon: f64) -> RigidTransform {
    let inliers: Vec<&crate::pipeline::Correspondence> = set
        .iter()
        .filter(|c| within(&(transform.apply(&c.p) - c.q), epsilon))
        .collect();
    if inliers.len() < 3 {
        return *transform;
    }
    let n = inliers.len() as f64;
    let cp = inliers.iter().fold(Vec3::zeros(), |a, c| a + c.p) / n;
    let cq = inliers.iter().fold(Vec3::zeros(), |a, c| a + c.q) / n;
    let h = inliers
        .iter()
        .fold(Matrix3::zeros(), |a, c| a + (c.q - cq) * (c.p - cp).transpose());
    match nearest_rotation(&h) {
        Ok(r) => RigidTransform::new(r, cq - r * cp),
        Err(_) => *transform,
    }
}

/// Pairs as a correspondence set, grouped by source index.
fn candidate_set(source: &[Vec3], target: &[Vec3], candidates: &CandidatePairSet) -> CorrespondenceSet {
    candidates
        .pairs()
        .iter()
        .map(|&(i, k)| Correspondence {
            p: source[i],
            q: target[k],
        })
        .collect()
}

/// Translation component that matches the most source points, letting each
/// source count once across its candidate targets.
fn restab_translation_grouped(
    source: &[Vec3],
    target: &[Vec3],
    candidates: &CandidatePairSet,
    axis: AxisLabel,
    row: &Vec3,
    epsilon: f64,
) -> f64 {
    let mut groups: Vec<Vec<Interval>> = Vec::new();
    let mut last = None;
    for &(i, k) in candidates.pairs() {
        if last != Some(i) {
            groups.push(Vec::new());
            last = Some(i);
        }
        let base = axis.component(&target[k]) - row.dot(&source[i]);
        groups.last_mut().unwrap().push(Interval::new(base - epsilon, base + epsilon));
    }
    grouped_stab(&groups).position.unwrap_or(0.0)
}

/// Source points that have some target within `eps` on all three axes.
pub fn evaluate_spcr_joint_objective(source: &[Vec3], target: &[Vec3], transform: &RigidTransform, epsilon: f64) -> usize {
    source
        .iter()
        .filter(|p| {
            let x = transform.apply(p);
            target.iter().any(|q| within(&(x - q), epsilon))
        })
        .count()
}

/// Registers two clouds without correspondences.
///
/// The configured axis (X by default) is solved with the correspondence-free
/// objective; every pair feasible at its solution becomes a candidate
/// correspondence for the two remaining axes.
pub fn register_spcr(source: &[Vec3], target: &[Vec3], epsilon: f64, config: &RegistrationConfig) -> Result<RegistrationResult> {
    let start = Instant::now();
    if source.len() < 3 || target.len() < 3 {
        warn!(
            "registering clouds of {} and {} points; the pose is under-determined",
            source.len(),
            target.len()
        );
    }
    let first_axis = config.spcr_axis;
    let first_problem = SpcrProblem::new(source, target, first_axis, epsilon)?;
    let mut first = spcr_solve_axis(&first_problem, &config.solver)?;
    if config.polish {
        first = spcr_polish_axis(&first_problem, &first);
    }
    let candidates = extract_candidates(&first_problem, &first);
    if candidates.is_empty() {
        return Err(Error::RegistrationFailed(format!(
            "no candidate correspondences after solving axis {first_axis}"
        )));
    }
    let set = candidate_set(source, target, &candidates);

    let mut problems: [Option<AxisProblem>; 3] = [None, None, None];
    for axis in AxisLabel::ALL {
        if axis != first_axis {
            problems[axis.index()] = Some(AxisProblem::new(&set, axis, epsilon)?);
        }
    }
    let mut solutions = map_axes(config.parallel_axes, |axis| match &problems[axis.index()] {
        None => Ok(first),
        Some(problem) => {
            let solution = solve_axis(problem, &config.solver)?;
            Ok(if config.polish { polish_axis(problem, &solution) } else { solution })
        }
    })?;

    let (rotation, defect) = assemble_rotation(&solutions)?;
    let translation = Vec3::from_fn(|j, _| {
        let axis = AxisLabel::ALL[j];
        let row = rotation.matrix().row(j).transpose();
        restab_translation_grouped(source, target, &candidates, axis, &row, epsilon)
    });
    let mut transform = RigidTransform::new(rotation, translation);
    if config.refine {
        transform = refine_on_inliers(&set, &transform, epsilon);
    }
    let consensus = evaluate_spcr_joint_objective(source, target, &transform, epsilon);
    let objectives: [&dyn AxisObjective; 3] = std::array::from_fn(|j| match &problems[j] {
        Some(p) => p as &dyn AxisObjective,
        None => &first_problem as &dyn AxisObjective,
    });
    adopt_final_rows(&mut solutions, &transform, objectives);

    Ok(RegistrationResult {
        transform,
        consensus,
        orthogonality_defect: defect,
        certified: solutions.iter().all(|s| s.certified) && defect <= config.defect_threshold,
        axis_solutions: solutions,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
