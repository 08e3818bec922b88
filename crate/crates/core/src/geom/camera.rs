use serde::{Deserialize, Serialize};

use super::{GeomError, Pose, Vec2, Vec3};

/// Pinhole intrinsics without distortion. Integer pixel coordinates address
/// pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeomError> {
        let cam = Self { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    /// Centered principal point and a horizontal field of view in radians.
    pub fn from_hfov(width: u32, height: u32, hfov: f64) -> Result<Self, GeomError> {
        let f = 0.5 * width as f64 / (0.5 * hfov).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let bad = |m: &str| Err(GeomError::InvalidCamera(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive");
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return bad("principal point must lie inside the image");
        }
        Ok(())
    }

    /// Same field of view at a different resolution.
    pub fn scaled(&self, width: u32, height: u32) -> Result<Self, GeomError> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self::new(
            self.fx * sx,
            self.fy * sy,
            (self.cx + 0.5) * sx - 0.5,
            (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn project(&self, p: &Vec3) -> Result<Vec2, GeomError> {
        if p.z <= 1e-9 {
            return Err(GeomError::NonPositiveDepth(p.z));
        }
        Ok(Vec2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    pub fn unproject(&self, pixel: &Vec2, depth: f64) -> Result<Vec3, GeomError> {
        if depth <= 1e-9 {
            return Err(GeomError::NonPositiveDepth(depth));
        }
        Ok(Vec3::new(
            depth * (pixel.x - self.cx) / self.fx,
            depth * (pixel.y - self.cy) / self.fy,
            depth,
        ))
    }

    pub fn contains(&self, pixel: &Vec2) -> bool {
        pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x < self.width as f64 && pixel.y < self.height as f64
    }

    pub fn ray_for_pixel(&self, pose: &Pose, pixel: &Vec2) -> Result<Ray, GeomError> {
        if !self.contains(pixel) {
            return Err(GeomError::PixelOutOfBounds(pixel.x, pixel.y));
        }
        Ok(self.ray_unchecked(pose, pixel.x, pixel.y))
    }

    /// Ray through a pixel without the bounds check; used by the renderers.
    pub(crate) fn ray_unchecked(&self, pose: &Pose, u: f64, v: f64) -> Ray {
        let d = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        Ray {
            origin: pose.translation,
            direction: (pose.rotation * d).normalize(),
        }
    }
}

/// World-frame ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    fn cam() -> CameraModel {
        CameraModel::new(500.0, 480.0, 319.5, 239.5, 640, 480).unwrap()
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let c = cam();
        let px = c.project(&Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(px, Vec2::new(c.cx, c.cy));
    }

    #[test]
    fn rejects_non_positive_depth() {
        let c = cam();
        assert!(matches!(c.project(&Vec3::new(0.0, 0.0, 0.0)), Err(GeomError::NonPositiveDepth(_))));
        assert!(c.unproject(&Vec2::new(1.0, 1.0), -1.0).is_err());
    }

    #[test]
    fn invalid_cameras() {
        assert!(CameraModel::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraModel::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraModel::new(1.0, 1.0, 1.0, 1.0, 0, 4).is_err());
    }

    #[test]
    fn center_ray_directions() {
        let c = cam();
        let center = Vec2::new(c.cx, c.cy);
        let r = c.ray_for_pixel(&Pose::identity(), &center).unwrap();
        assert!((r.direction - Vec3::z()).norm() < 1e-12);
        let flipped = Pose::new(
            UnitQuaternion::from_axis_angle(&Vec3::y_axis(), std::f64::consts::PI),
            Vec3::new(1.0, 2.0, 3.0),
        );
        let r = c.ray_for_pixel(&flipped, &center).unwrap();
        assert!((r.direction + Vec3::z()).norm() < 1e-12);
        assert_eq!(r.origin, Vec3::new(1.0, 2.0, 3.0));
        assert!(matches!(
            c.ray_for_pixel(&Pose::identity(), &Vec2::new(640.0, 0.0)),
            Err(GeomError::PixelOutOfBounds(..))
        ));
    }

    proptest! {
        #[test]
        fn project_unproject_roundtrip(u in 0.0f64..640.0, v in 0.0f64..480.0, logz in -2.0f64..4.0) {
            let c = cam();
            let z = 10f64.powf(logz);
            let p = c.unproject(&Vec2::new(u, v), z).unwrap();
            prop_assert!((p.z - z).abs() <= 1e-12 * z);
            let back = c.project(&p).unwrap();
            prop_assert!((back - Vec2::new(u, v)).norm() < 1e-9);
        }

        #[test]
        fn project_matches_scalar_formula(x in -2.0f64..2.0, y in -2.0f64..2.0, z in 0.1f64..20.0) {
            let c = cam();
            let px = c.project(&Vec3::new(x, y, z)).unwrap();
            prop_assert!((px.x - (500.0 * x / z + 319.5)).abs() < 1e-9);
            prop_assert!((px.y - (480.0 * y / z + 239.5)).abs() < 1e-9);
        }

        #[test]
        fn ray_points_reproject(
            u in 0.0f64..640.0, v in 0.0f64..480.0,
            q in prop::array::uniform4(-1.0f64..1.0),
            t in prop::array::uniform3(-5.0f64..5.0),
        ) {
            prop_assume!(q.iter().map(|a| a * a).sum::<f64>() > 1e-3);
            let c = cam();
            let pose = Pose::from_wxyz(q[0], q[1], q[2], q[3], Vec3::from(t));
            let ray = c.ray_for_pixel(&pose, &Vec2::new(u, v)).unwrap();
            prop_assert!((ray.direction.norm() - 1.0).abs() < 1e-12);
            for s in [0.5, 2.0, 10.0] {
                let pc = pose.inverse_transform_point(&ray.at(s));
                let px = c.project(&pc).unwrap();
                prop_assert!((px - Vec2::new(u, v)).norm() < 1e-8);
            }
        }
    }
}
