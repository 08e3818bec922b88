use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::field::RadianceField;
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    /// Axis-aligned box.
    Box { center: [f64; 3], half_extent: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub shape: Shape,
    pub color: [f32; 3],
    /// 1/m
    pub density: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub bbox_min: [f32; 3],
    pub bbox_max: [f32; 3],
    pub primitives: Vec<Primitive>,
}

impl Shape {
    fn contains(&self, p: &Vec3) -> bool {
        match *self {
            Shape::Box { center, half_extent } => (0..3).all(|a| (p[a] - center[a]).abs() <= half_extent[a]),
            Shape::Sphere { center, radius } => (p - Vec3::from(center)).norm_squared() <= radius * radius,
        }
    }

    fn volume(&self) -> f64 {
        match *self {
            Shape::Box { half_extent: h, .. } => 8.0 * h[0] * h[1] * h[2],
            Shape::Sphere { radius, .. } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        }
    }

    fn aabb(&self) -> (Vec3, Vec3) {
        match *self {
            Shape::Box { center, half_extent } => {
                let (c, h) = (Vec3::from(center), Vec3::from(half_extent));
                (c - h, c + h)
            }
            Shape::Sphere { center, radius } => {
                let c = Vec3::from(center);
                (c.add_scalar(-radius), c.add_scalar(radius))
            }
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if (0..3).any(|a| !(self.bbox_max[a] > self.bbox_min[a])) {
            return Err(SynthError::EmptyScene);
        }
        let lo = Vec3::new(self.bbox_min[0] as f64, self.bbox_min[1] as f64, self.bbox_min[2] as f64);
        let hi = Vec3::new(self.bbox_max[0] as f64, self.bbox_max[1] as f64, self.bbox_max[2] as f64);
        for (i, p) in self.primitives.iter().enumerate() {
            if !(p.density >= 0.0) {
                return Err(SynthError::InvalidScene(format!("primitive {i}: negative density")));
            }
            if p.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(SynthError::InvalidScene(format!("primitive {i}: color outside [0, 1]")));
            }
            let (a, b) = p.shape.aabb();
            if (0..3).any(|k| a[k] < lo[k] - 1e-9 || b[k] > hi[k] + 1e-9) {
                return Err(SynthError::InvalidScene(format!("primitive {i} leaves the scene bounds")));
            }
        }
        Ok(())
    }
}

/// Samples the scene at voxel centers. A voxel takes the density and color
/// of the smallest primitive containing its center (later primitives win
/// ties); voxels outside every primitive are vacuum.
pub fn voxelize_scene(
    spec: &SceneSpec,
    dims: [usize; 3],
    bbox: Option<([f32; 3], [f32; 3])>,
) -> Result<RadianceField, SynthError> {
    spec.validate()?;
    if dims.iter().any(|d| *d < 8) {
        return Err(SynthError::InvalidScene(format!("dims {dims:?}: need at least 8 voxels per axis")));
    }
    let (lo, hi) = bbox.unwrap_or((spec.bbox_min, spec.bbox_max));
    if (0..3).any(|a| !(hi[a] > lo[a])) {
        return Err(SynthError::EmptyScene);
    }
    let mut field = RadianceField::new(lo, hi, dims, 0.0, [0.0; 3])?;
    let mut order: Vec<usize> = (0..spec.primitives.len()).collect();
    // smallest first; among equal volumes the later primitive first
    order.sort_by(|&a, &b| {
        spec.primitives[a]
            .shape
            .volume()
            .total_cmp(&spec.primitives[b].shape.volume())
            .then(b.cmp(&a))
    });
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let c = field.voxel_center(x, y, z);
                if let Some(p) = order.iter().map(|&i| &spec.primitives[i]).find(|p| p.shape.contains(&c)) {
                    let i = field.index(x, y, z);
                    field.set_voxel(i, p.density, p.color);
                }
            }
        }
    }
    Ok(field)
}

/// Desk-scale room: a tiled floor with pseudo-randomly colored tiles and a
/// set of boxes and spheres, inside a 3.2 m cube.
pub fn default_scene() -> SceneSpec {
    const SIGMA: f32 = 50.0;
    let palette: [[f32; 3]; 8] = [
        [0.85, 0.82, 0.74],
        [0.30, 0.34, 0.45],
        [0.62, 0.52, 0.38],
        [0.18, 0.20, 0.22],
        [0.70, 0.72, 0.78],
        [0.45, 0.28, 0.22],
        [0.55, 0.62, 0.48],
        [0.38, 0.40, 0.36],
    ];
    let mut primitives = Vec::new();
    let tile = 0.4;
    for j in 0..8 {
        for i in 0..8 {
            // fixed scramble so neighboring junctions look different
            let k = (i * 5 + j * 3 + (i * j) % 7 + (i ^ j)) % palette.len();
            primitives.push(Primitive {
                shape: Shape::Box {
                    center: [-1.6 + tile * (i as f64 + 0.5), -1.6 + tile * (j as f64 + 0.5), -0.075],
                    half_extent: [tile / 2.0, tile / 2.0, 0.075],
                },
                color: palette[k],
                density: SIGMA,
            });
        }
    }
    let boxes: [([f64; 3], [f64; 3], [f32; 3]); 9] = [
        ([-0.8, -0.7, 0.3], [0.3, 0.25, 0.3], [0.80, 0.15, 0.10]),
        ([-0.8, -0.7, 0.75], [0.15, 0.15, 0.15], [0.70, 0.20, 0.60]),
        ([0.7, -0.6, 0.45], [0.2, 0.35, 0.45], [0.10, 0.25, 0.75]),
        ([0.7, -0.6, 0.62], [0.21, 0.36, 0.08], [0.95, 0.90, 0.30]),
        ([-0.6, 0.8, 0.2], [0.35, 0.2, 0.2], [0.90, 0.78, 0.10]),
        ([0.8, 0.8, 0.6], [0.25, 0.25, 0.6], [0.15, 0.60, 0.20]),
        ([0.8, 0.8, 0.3], [0.26, 0.26, 0.1], [0.05, 0.10, 0.05]),
        ([0.0, 0.0, 0.9], [0.12, 0.12, 0.9], [0.22, 0.22, 0.25]),
        ([0.1, -1.15, 0.15], [0.4, 0.15, 0.15], [0.95, 0.50, 0.10]),
    ];
    for (c, h, col) in boxes {
        primitives.push(Primitive {
            shape: Shape::Box { center: c, half_extent: h },
            color: col,
            density: SIGMA,
        });
    }
    let spheres: [([f64; 3], f64, [f32; 3]); 3] = [
        ([0.0, 0.9, 0.3], 0.3, [0.10, 0.70, 0.80]),
        ([-1.1, 0.1, 0.25], 0.25, [0.45, 0.20, 0.70]),
        ([1.05, 0.15, 0.25], 0.25, [0.55, 0.35, 0.20]),
    ];
    for (c, r, col) in spheres {
        primitives.push(Primitive {
            shape: Shape::Sphere { center: c, radius: r },
            color: col,
            density: SIGMA,
        });
    }
    SceneSpec {
        bbox_min: [-1.6, -1.6, -0.2],
        bbox_max: [1.6, 1.6, 3.0],
        primitives,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty(lo: f32, hi: f32) -> SceneSpec {
        SceneSpec {
            bbox_min: [lo; 3],
            bbox_max: [hi; 3],
            primitives: vec![],
        }
    }

    fn non_vacuum(f: &RadianceField) -> usize {
        f.density().iter().filter(|d| **d > 0.0).count()
    }

    #[test]
    fn empty_scene_is_vacuum() {
        let f = voxelize_scene(&empty(-1.0, 1.0), [8, 8, 8], None).unwrap();
        assert_eq!(non_vacuum(&f), 0);
        assert!(matches!(voxelize_scene(&empty(1.0, 1.0), [8, 8, 8], None), Err(SynthError::EmptyScene)));
        assert!(voxelize_scene(&empty(-1.0, 1.0), [8, 4, 8], None).is_err());
    }

    #[test]
    fn half_box_fills_half_the_voxels() {
        let mut s = empty(-1.0, 1.0);
        s.primitives.push(Primitive {
            shape: Shape::Box { center: [-0.5, 0.0, 0.0], half_extent: [0.5, 1.0, 1.0] },
            color: [1.0, 0.0, 0.0],
            density: 3.0,
        });
        let f = voxelize_scene(&s, [16, 10, 12], None).unwrap();
        assert_eq!(non_vacuum(&f), 16 * 10 * 12 / 2);
    }

    #[test]
    fn sphere_volume_matches() {
        let r = 0.6;
        let mut s = empty(-1.0, 1.0);
        s.primitives.push(Primitive {
            shape: Shape::Sphere { center: [0.0; 3], radius: r },
            color: [0.0, 1.0, 0.0],
            density: 1.0,
        });
        let f = voxelize_scene(&s, [64, 64, 64], None).unwrap();
        let voxel = (2.0f64 / 64.0).powi(3);
        let want = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3) / voxel;
        let got = non_vacuum(&f) as f64;
        assert!((got - want).abs() / want < 0.05, "{got} vs {want}");
    }

    #[test]
    fn innermost_primitive_wins_and_voxelizing_is_idempotent() {
        let mut s = empty(-1.0, 1.0);
        s.primitives.push(Primitive {
            shape: Shape::Sphere { center: [0.0; 3], radius: 0.2 },
            color: [0.0, 0.0, 1.0],
            density: 9.0,
        });
        s.primitives.push(Primitive {
            shape: Shape::Box { center: [0.0; 3], half_extent: [0.8; 3] },
            color: [1.0, 0.0, 0.0],
            density: 1.0,
        });
        let f = voxelize_scene(&s, [16, 16, 16], None).unwrap();
        assert_eq!(f.density()[f.index(8, 8, 8)], 9.0);
        assert_eq!(f.density()[f.index(2, 2, 2)], 1.0);
        assert_eq!(f, voxelize_scene(&s, [16, 16, 16], None).unwrap());
    }

    #[test]
    fn rejects_primitives_outside_bounds() {
        let mut s = empty(-1.0, 1.0);
        s.primitives.push(Primitive {
            shape: Shape::Sphere { center: [0.9, 0.0, 0.0], radius: 0.2 },
            color: [0.0; 3],
            density: 1.0,
        });
        assert!(matches!(s.validate(), Err(SynthError::InvalidScene(_))));
    }

    #[test]
    fn default_scene_is_valid() {
        default_scene().validate().unwrap();
    }
}
