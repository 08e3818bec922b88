use nalgebra::SVD;

use super::{GeomError, Mat3, Pose, Vec3};

/// `x ↦ scale · rotation · x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Applies the transform to a camera pose: the center is mapped as a point
    /// and the orientation is rotated.
    pub fn apply_pose(&self, p: &Pose) -> Pose {
        let r = self.rotation * p.rotation_matrix();
        Pose::from_rotation_matrix(&r, self.apply(&p.translation))
    }

    pub fn rotation_pose(&self) -> Pose {
        Pose::from_rotation_matrix(&self.rotation, self.translation)
    }
}

/// Least-squares similarity (or rigid, when `with_scale` is false) mapping
/// `src` onto `dst` (Umeyama's closed form).
///
/// Needs at least three non-collinear source points.
pub fn rigid_fit(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<Similarity, GeomError> {
    assert_eq!(src.len(), dst.len(), "point sets differ in length");
    let n = src.len();
    if n < 3 {
        return Err(GeomError::Degenerate);
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = src.iter().sum::<Vec3>() * inv_n;
    let mu_d = dst.iter().sum::<Vec3>() * inv_n;

    let mut cov = Mat3::zeros();
    let mut src_cov = Mat3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let cs = s - mu_s;
        let cd = d - mu_d;
        cov += cd * cs.transpose();
        src_cov += cs * cs.transpose();
        var_s += cs.norm_squared();
    }
    cov *= inv_n;
    var_s *= inv_n;

    let sv = src_cov.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 1e-18 || sv[1] <= 1e-10 * sv[0] {
        return Err(GeomError::Degenerate);
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.ok_or(GeomError::Degenerate)?;
    let v_t = svd.v_t.ok_or(GeomError::Degenerate)?;
    let mut s = Mat3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = if with_scale {
        let d = svd.singular_values;
        (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_s
    } else {
        1.0
    };
    let translation = mu_d - scale * (rotation * mu_s);
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn points() -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.2, -0.3),
            Vec3::new(0.3, 2.0, 0.5),
            Vec3::new(-1.0, 0.4, 1.5),
            Vec3::new(2.0, -1.0, 0.7),
        ]
    }

    #[test]
    fn recovers_constructed_similarity() {
        let r = UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0);
        let rm = *r.to_rotation_matrix().matrix();
        let t = Vec3::new(0.5, -2.0, 3.0);
        let src = points();
        let dst: Vec<_> = src.iter().map(|p| 2.5 * (rm * p) + t).collect();
        let sim = rigid_fit(&src, &dst, true).unwrap();
        assert!((sim.scale - 2.5).abs() < 1e-9);
        assert!((sim.rotation - rm).abs().max() < 1e-9);
        assert!((sim.translation - t).norm() < 1e-9);

        let rigid_dst: Vec<_> = src.iter().map(|p| rm * p + t).collect();
        let rig = rigid_fit(&src, &rigid_dst, false).unwrap();
        assert_eq!(rig.scale, 1.0);
        assert!((rig.rotation - rm).abs().max() < 1e-9);
    }

    #[test]
    fn rejects_collinear_and_short_inputs() {
        let line: Vec<_> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert_eq!(rigid_fit(&line, &line, false), Err(GeomError::Degenerate));
        let same = vec![Vec3::new(1.0, 1.0, 1.0); 4];
        assert_eq!(rigid_fit(&same, &same, false), Err(GeomError::Degenerate));
        let p = points();
        assert_eq!(rigid_fit(&p[..2], &p[..2], false), Err(GeomError::Degenerate));
    }

    #[test]
    fn reflection_is_not_returned() {
        let src = points();
        let dst: Vec<_> = src.iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
        let sim = rigid_fit(&src, &dst, false).unwrap();
        assert!((sim.rotation.determinant() - 1.0).abs() < 1e-9);
    }
}
