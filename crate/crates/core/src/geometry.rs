//! Vectors, rotations, rigid transforms and the hemisphere-to-disk
//! exponential map used to parametrize a single rotation row.
//!
//! A rotation row `r` lives on the unit sphere. The upper hemisphere
//! (`r.z >= 0`) is mapped onto a planar disk of radius `pi/2` by
//! `d = gamma * d_hat  ->  r = [sin(gamma) d_hat, cos(gamma)]`; the lower
//! hemisphere reuses the same disk with the image negated.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::fmt;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type UnitVec3 = Unit<Vector3<f64>>;
pub type Rotation = Rotation3<f64>;

/// A point of the 2-D exponential-map domain, in radians.
///
/// Points of the circumscribed square `[-pi/2, pi/2]^2` may lie outside the
/// disk proper; their radius is clamped to `pi/2` when mapped.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiskPoint {
    pub u: f64,
    pub v: f64,
}

impl DiskPoint {
    pub const ORIGIN: DiskPoint = DiskPoint { u: 0.0, v: 0.0 };

    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn norm(&self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn distance(&self, other: &DiskPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Which row of the rotation (and component of the translation) a
/// sub-problem estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AxisLabel {
    X,
    Y,
    Z,
}

impl AxisLabel {
    pub const ALL: [AxisLabel; 3] = [AxisLabel::X, AxisLabel::Y, AxisLabel::Z];

    pub fn index(self) -> usize {
        match self {
            AxisLabel::X => 0,
            AxisLabel::Y => 1,
            AxisLabel::Z => 2,
        }
    }

    /// The coordinate of `v` along this axis.
    pub fn component(self, v: &Vec3) -> f64 {
        v[self.index()]
    }
}

impl fmt::Display for AxisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AxisLabel::X => "X",
            AxisLabel::Y => "Y",
            AxisLabel::Z => "Z",
        };
        f.write_str(s)
    }
}

/// Maps a disk point onto the upper hemisphere. The origin maps to `+z`.
pub fn exp_map_pos(d: DiskPoint) -> UnitVec3 {
    let norm = d.norm();
    if norm == 0.0 {
        return Vec3::z_axis();
    }
    let gamma = norm.min(FRAC_PI_2);
    let (s, c) = gamma.sin_cos();
    let v = Vec3::new(s * d.u / norm, s * d.v / norm, c);
    // sin^2 + cos^2 is 1 only up to rounding
    Unit::new_normalize(v)
}

/// Maps a disk point onto the lower hemisphere; exact negation of [`exp_map_pos`].
pub fn exp_map_neg(d: DiskPoint) -> UnitVec3 {
    -exp_map_pos(d)
}

/// Angle between two nonzero vectors, in `[0, pi]`.
pub fn angle_between(a: &Vec3, b: &Vec3) -> Result<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegeneratePoint);
    }
    Ok(clamped_acos(a.dot(b) / (na * nb)))
}

#[inline]
pub(crate) fn clamped_acos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

/// Upper bound on the angle between any row mapped from a square cell of
/// half-side `half_side` and the row mapped from the cell center.
pub fn branch_angular_radius(half_side: f64) -> f64 {
    SQRT_2 * half_side
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self::new(r_inv, -(r_inv * self.translation))
    }
}

pub fn apply_transform(t: &RigidTransform, p: &Vec3) -> Vec3 {
    t.apply(p)
}

/// Projects a 3x3 matrix of (possibly non-orthogonal) stacked rows onto the
/// closest rotation in Frobenius norm: the polar factor, with the sign of the
/// last singular direction flipped when needed so that `det = +1`.
pub fn nearest_rotation(rows: &Matrix3<f64>) -> Result<Rotation> {
    if rows.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularRows(f64::NAN));
    }
    let svd = rows.svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(min_sv > 1e-12 * max_sv.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularRows(min_sv));
    }
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::SingularRows(min_sv));
    };
    let mut correction = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // singular values are sorted descending, so the last direction is the
        // cheapest one to flip
        correction[(2, 2)] = -1.0;
    }
    Ok(Rotation::from_matrix_unchecked(u * correction * v_t))
}

/// Max absolute entry of `M M^T - I`.
pub fn orthogonality_defect(rows: &Matrix3<f64>) -> f64 {
    (rows * rows.transpose() - Matrix3::identity()).amax()
}

/// Geodesic distance between two rotations, in degrees.
pub fn rotation_error(r_gt: &Rotation, r_est: &Rotation) -> f64 {
    let rel = r_gt.matrix().transpose() * r_est.matrix();
    clamped_acos((rel.trace() - 1.0) / 2.0).to_degrees()
}

pub fn translation_error(t_gt: &Vec3, t_est: &Vec3) -> f64 {
    (t_gt - t_est).norm()
}

/// Rotation matrix with the given rows.
pub fn matrix_from_rows(rows: &[Vec3; 3]) -> Matrix3<f64> {
    Matrix3::from_rows(&[rows[0].transpose(), rows[1].transpose(), rows[2].transpose()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn vclose(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn exp_map_pos_examples() {
        assert!(vclose(&exp_map_pos(DiskPoint::ORIGIN), &Vec3::z(), 1e-15));
        assert!(vclose(&exp_map_pos(DiskPoint::new(FRAC_PI_2, 0.0)), &Vec3::x(), 1e-15));
        assert!(vclose(
            &exp_map_pos(DiskPoint::new(0.0, -FRAC_PI_2)),
            &Vec3::new(0.0, -1.0, 0.0),
            1e-15
        ));
    }

    #[test]
    fn exp_map_neg_examples() {
        assert!(vclose(&exp_map_neg(DiskPoint::ORIGIN), &-Vec3::z(), 1e-15));
        assert!(vclose(&exp_map_neg(DiskPoint::new(FRAC_PI_2, 0.0)), &-Vec3::x(), 1e-15));
        let h = 0.5f64.sqrt();
        assert!(vclose(
            &exp_map_neg(DiskPoint::new(0.0, PI / 4.0)),
            &Vec3::new(0.0, -h, -h),
            1e-15
        ));
    }

    #[test]
    fn square_corner_is_clamped_to_equator() {
        let r = exp_map_pos(DiskPoint::new(FRAC_PI_2, FRAC_PI_2));
        assert!(close(r.z, 0.0, 1e-15));
        assert!(close(r.x, r.y, 1e-15));
    }

    #[test]
    fn angle_between_examples() {
        assert!(close(angle_between(&Vec3::x(), &Vec3::y()).unwrap(), FRAC_PI_2, 1e-15));
        assert_eq!(angle_between(&Vec3::x(), &Vec3::x()).unwrap(), 0.0);
        assert!(close(angle_between(&Vec3::x(), &-Vec3::x()).unwrap(), PI, 1e-15));
        assert!(matches!(
            angle_between(&Vec3::zeros(), &Vec3::x()),
            Err(Error::DegeneratePoint)
        ));
    }

    #[test]
    fn branch_radius_examples() {
        assert_eq!(branch_angular_radius(0.0), 0.0);
        assert!(close(branch_angular_radius(1.0), SQRT_2, 1e-15));
        assert!(close(branch_angular_radius(PI / 4.0), 1.110_720_734_539_59, 1e-12));
    }

    #[test]
    fn apply_transform_examples() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(apply_transform(&RigidTransform::identity(), &p), p);
        let shift = RigidTransform::new(Rotation::identity(), Vec3::x());
        assert_eq!(apply_transform(&shift, &Vec3::zeros()), Vec3::x());
        let rz = RigidTransform::new(Rotation::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2), Vec3::zeros());
        assert!(vclose(&apply_transform(&rz, &Vec3::x()), &Vec3::y(), 1e-15));
    }

    #[test]
    fn nearest_rotation_examples() {
        let r = nearest_rotation(&Matrix3::identity()).unwrap();
        assert!((r.matrix() - Matrix3::identity()).amax() < 1e-15);

        let truth = Rotation::from_euler_angles(0.3, -1.1, 2.0);
        let r = nearest_rotation(truth.matrix()).unwrap();
        assert!((r.matrix() - truth.matrix()).norm() < 1e-12);
    }

    #[test]
    fn nearest_rotation_perturbed_matches_polar_oracle() {
        // Oracle: R = M (M^T M)^{-1/2} through a symmetric eigendecomposition.
        let truth = Rotation::from_euler_angles(0.7, 0.2, -0.4);
        let mut m = *truth.matrix();
        m[(1, 2)] += 0.01;
        let eig = (m.transpose() * m).symmetric_eigen();
        let inv_sqrt = eig.eigenvectors
            * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        let oracle = m * inv_sqrt;

        let r = nearest_rotation(&m).unwrap();
        assert!((r.matrix() - oracle).amax() < 1e-12);
        assert!((r.matrix() - truth.matrix()).norm() <= 0.02);
    }

    #[test]
    fn nearest_rotation_fixes_reflection() {
        let m = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        let r = nearest_rotation(&m).unwrap();
        assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_rotation_rejects_singular() {
        let m = Matrix3::from_rows(&[
            Vec3::x().transpose(),
            Vec3::x().transpose(),
            Vec3::z().transpose(),
        ]);
        assert!(matches!(nearest_rotation(&m), Err(Error::SingularRows(_))));
    }

    #[test]
    fn rotation_error_examples() {
        let id = Rotation::identity();
        assert_eq!(rotation_error(&id, &id), 0.0);
        let rz = Rotation::from_axis_angle(&Vec3::z_axis(), 10f64.to_radians());
        assert!(close(rotation_error(&id, &rz), 10.0, 1e-9));
        let rx = Rotation::from_axis_angle(&Vec3::x_axis(), PI);
        assert!(close(rotation_error(&id, &rx), 180.0, 1e-9));
    }

    #[test]
    fn translation_error_examples() {
        let a = Vec3::new(1.0, 1.0, 1.0);
        assert_eq!(translation_error(&a, &a), 0.0);
        assert_eq!(translation_error(&Vec3::zeros(), &Vec3::new(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(translation_error(&a, &Vec3::new(1.0, 1.0, 2.0)), 1.0);
    }

    fn disk_point() -> impl Strategy<Value = DiskPoint> {
        (0.0..FRAC_PI_2, 0.0..2.0 * PI).prop_map(|(r, a)| DiskPoint::new(r * a.cos(), r * a.sin()))
    }

    proptest! {
        #[test]
        fn exp_map_is_unit_and_signed(u in -FRAC_PI_2..FRAC_PI_2, v in -FRAC_PI_2..FRAC_PI_2) {
            let d = DiskPoint::new(u, v);
            let pos = exp_map_pos(d);
            let neg = exp_map_neg(d);
            prop_assert!((pos.norm() - 1.0).abs() <= 1e-12);
            prop_assert!(pos.z >= 0.0);
            prop_assert_eq!(neg.into_inner(), -pos.into_inner());
        }

        #[test]
        fn exp_map_is_one_lipschitz(a in disk_point(), b in disk_point()) {
            let ang = angle_between(&exp_map_pos(a), &exp_map_pos(b)).unwrap();
            prop_assert!(ang <= a.distance(&b) + 1e-12);
        }

        #[test]
        fn rotation_error_symmetric(a in proptest::array::uniform3(-3.0..3.0f64),
                                    b in proptest::array::uniform3(-3.0..3.0f64)) {
            let ra = Rotation::from_scaled_axis(Vec3::from(a));
            let rb = Rotation::from_scaled_axis(Vec3::from(b));
            let e1 = rotation_error(&ra, &rb);
            let e2 = rotation_error(&rb, &ra);
            prop_assert!((e1 - e2).abs() <= 1e-9);
        }

        #[test]
        fn nearest_rotation_idempotent(entries in proptest::array::uniform9(-1.0..1.0f64)) {
            let m = Matrix3::from_row_slice(&entries) + Matrix3::identity() * 2.0;
            let once = nearest_rotation(&m).unwrap();
            let twice = nearest_rotation(once.matrix()).unwrap();
            prop_assert!((once.matrix() - twice.matrix()).amax() <= 1e-12);
        }
    }
}
