use nalgebra::{Isometry3, Matrix4, Quaternion, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{Mat3, Vec3};

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: renormalize(rotation),
            translation,
        }
    }

    /// Builds a pose from raw quaternion coefficients in (w, x, y, z) order.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64, translation: Vec3) -> Self {
        Self {
            rotation: UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
            translation,
        }
    }

    pub fn from_rotation_matrix(r: &Mat3, translation: Vec3) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Camera at `eye` looking at `target`, with image "up" closest to `up`.
    ///
    /// Returns `None` when the viewing direction is parallel to `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Option<Self> {
        let forward = (target - eye).try_normalize(1e-12)?;
        Self::looking_along(eye, forward, up)
    }

    /// Camera at `eye` whose optical axis points along `forward`.
    pub fn looking_along(eye: Vec3, forward: Vec3, up: Vec3) -> Option<Self> {
        let z = forward.try_normalize(1e-12)?;
        let x = z.cross(&up).try_normalize(1e-9)?;
        let y = z.cross(&x);
        let r = Mat3::from_columns(&[x, y, z]);
        Some(Self::from_rotation_matrix(&r, eye))
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(inv, -(inv * self.translation))
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        *self.rotation.to_rotation_matrix().matrix()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        self.to_isometry().to_homogeneous()
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Quaternion coefficients (w, x, y, z) with the sign chosen so that w ≥ 0.
    pub fn canonical_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    /// Left-multiplies a rotation-vector increment and adds a translation increment.
    pub fn perturbed(&self, rotvec: &Vec3, dt: &Vec3) -> Pose {
        Pose::new(
            UnitQuaternion::from_scaled_axis(*rotvec) * self.rotation,
            self.translation + dt,
        )
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Geodesic angle of the relative rotation between two poses, in [0, π].
pub fn rotation_error(a: &Pose, b: &Pose) -> f64 {
    let rel = a.rotation.inverse() * b.rotation;
    let q = rel.quaternion();
    2.0 * q.vector().norm().atan2(q.w.abs())
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    /// (w, x, y, z)
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            rotation: self.canonical_wxyz(),
            translation: self.translation.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PoseRepr::deserialize(d)?;
        let [w, x, y, z] = r.rotation;
        if !(w * w + x * x + y * y + z * z).is_normal() {
            return Err(serde::de::Error::custom("zero quaternion"));
        }
        Ok(Pose::from_wxyz(w, x, y, z, Vec3::from(r.translation)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform4(-1.0f64..1.0),
            prop::array::uniform3(-10.0f64..10.0),
        )
            .prop_filter("non-degenerate quaternion", |(q, _)| {
                q.iter().map(|v| v * v).sum::<f64>() > 1e-3
            })
            .prop_map(|(q, t)| Pose::from_wxyz(q[0], q[1], q[2], q[3], Vec3::from(t)))
    }

    fn pose_close(a: &Pose, b: &Pose, tol: f64) -> bool {
        rotation_error(a, b) < tol && (a.translation - b.translation).norm() < tol
    }

    fn homogeneous_to_pose(m: &Matrix4<f64>) -> Pose {
        let r: Mat3 = m.fixed_view::<3, 3>(0, 0).into();
        Pose::from_rotation_matrix(&r, m.fixed_view::<3, 1>(0, 3).into())
    }

    #[test]
    fn identity_composition() {
        let p = Pose::from_wxyz(0.3, -0.2, 0.5, 0.1, Vec3::new(1.0, 2.0, -3.0));
        assert!(pose_close(&Pose::identity().compose(&p), &p, 1e-12));
        assert!(pose_close(&p.compose(&p.inverse()), &Pose::identity(), 1e-9));
        assert!(pose_close(&Pose::identity().inverse(), &Pose::identity(), 0.0 + 1e-15));
    }

    #[test]
    fn quarter_turn_rotation_error() {
        let a = Pose::new(
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2),
            Vec3::zeros(),
        );
        assert!((rotation_error(&a, &Pose::identity()) - FRAC_PI_2).abs() < 1e-12);
        let half = Pose::new(
            UnitQuaternion::from_axis_angle(&Vec3::y_axis(), PI),
            Vec3::zeros(),
        );
        assert!((rotation_error(&half, &Pose::identity()) - PI).abs() < 1e-12);
    }

    #[test]
    fn look_at_axes() {
        let p = Pose::look_at(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::z()).unwrap();
        let r = p.rotation_matrix();
        // optical axis toward +x, image down toward -z
        assert!((r.column(2) - Vec3::x()).norm() < 1e-12);
        assert!((r.column(1) + Vec3::z()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!(Pose::look_at(Vec3::zeros(), Vec3::z(), Vec3::z()).is_none());
    }

    #[test]
    fn serde_canonicalizes_sign() {
        let p = Pose::from_wxyz(-0.5, 0.5, -0.5, 0.5, Vec3::new(1.0, 0.0, 0.0));
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.starts_with("{\"rotation\":[0.5,"), "{s}");
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert!(rotation_error(&p, &back) < 1e-12);
    }

    proptest! {
        #[test]
        fn quaternion_stays_unit(a in arb_pose(), b in arb_pose()) {
            prop_assert!((a.compose(&b).rotation.norm() - 1.0).abs() < 1e-9);
            prop_assert!((a.inverse().rotation.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn compose_matches_matrix_product(a in arb_pose(), b in arb_pose()) {
            let oracle = a.to_homogeneous() * b.to_homogeneous();
            let got = a.compose(&b).to_homogeneous();
            prop_assert!((oracle - got).abs().max() < 1e-9);
        }

        #[test]
        fn inverse_matches_matrix_inverse(p in arb_pose()) {
            let oracle = p.to_homogeneous().try_inverse().unwrap();
            prop_assert!(pose_close(&p.inverse(), &homogeneous_to_pose(&oracle), 1e-9));
            prop_assert!(pose_close(&p.inverse().inverse(), &p, 1e-9));
            prop_assert!(pose_close(&p.compose(&p.inverse()), &Pose::identity(), 1e-9));
        }

        #[test]
        fn compose_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(pose_close(&l, &r, 1e-9));
        }

        #[test]
        fn rotation_error_matches_trace_formula(a in arb_pose(), b in arb_pose()) {
            let rel = a.rotation_matrix().transpose() * b.rotation_matrix();
            let oracle = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
            // acos loses precision near 0 and π; compare loosely there
            prop_assert!((rotation_error(&a, &b) - oracle).abs() < 1e-6);
        }

        #[test]
        fn rotation_error_is_a_metric(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let ab = rotation_error(&a, &b);
            prop_assert!((ab - rotation_error(&b, &a)).abs() < 1e-12);
            prop_assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&ab));
            prop_assert!(rotation_error(&a, &c) <= ab + rotation_error(&b, &c) + 1e-9);
        }

        #[test]
        fn quaternion_sign_is_irrelevant(a in arb_pose(), b in arb_pose(), v in prop::array::uniform3(-5.0f64..5.0)) {
            let q = a.rotation.into_inner();
            let neg = Pose::from_wxyz(-q.w, -q.i, -q.j, -q.k, a.translation);
            prop_assert!((rotation_error(&a, &b) - rotation_error(&neg, &b)).abs() < 1e-12);
            let v = Vec3::from(v);
            prop_assert!((a.transform_point(&v) - neg.transform_point(&v)).norm() < 1e-12);
        }
    }
}
