use crate::geom::{rigid_fit, Pose, Vec3};

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[i] += x;
    }
    out
}

fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

fn eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Real roots of a polynomial of degree ≤ 4 (coefficients lowest first),
/// from companion-matrix eigenvalues polished by Newton steps.
pub(crate) fn real_roots(p: &[f64]) -> Vec<f64> {
    let mut p = p.to_vec();
    let top = p.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if top == 0.0 {
        return Vec::new();
    }
    while p.len() > 1 && p.last().unwrap().abs() <= 1e-14 * top {
        p.pop();
    }
    let deg = p.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = p[deg];
    let mut comp = nalgebra::DMatrix::<f64>::zeros(deg, deg);
    for i in 0..deg {
        comp[(0, i)] = -p[deg - 1 - i] / lead;
        if i + 1 < deg {
            comp[(i + 1, i)] = 1.0;
        }
    }
    let dp: Vec<f64> = (1..=deg).map(|i| i as f64 * p[i]).collect();
    let mut roots = Vec::new();
    for z in comp.complex_eigenvalues().iter() {
        if z.im.abs() > 1e-4 * (1.0 + z.re.abs()) {
            continue;
        }
        let mut x = z.re;
        for _ in 0..8 {
            let d = eval(&dp, x);
            if d == 0.0 {
                break;
            }
            let step = eval(&p, x) / d;
            x -= step;
            if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        if x.is_finite() {
            roots.push(x);
        }
    }
    roots
}

/// Grunert's three-point absolute pose. `bearings` are unit rays in the
/// camera frame toward `world` points. Returns up to four camera-to-world
/// poses.
pub fn p3p(world: &[Vec3; 3], bearings: &[Vec3; 3]) -> Vec<Pose> {
    let a2 = (world[1] - world[2]).norm_squared();
    let b2 = (world[0] - world[2]).norm_squared();
    let c2 = (world[0] - world[1]).norm_squared();
    if a2 < 1e-18 || b2 < 1e-18 || c2 < 1e-18 {
        return Vec::new();
    }
    let ca = bearings[1].dot(&bearings[2]);
    let cb = bearings[0].dot(&bearings[2]);
    let cg = bearings[0].dot(&bearings[1]);

    // with s2 = u·s1 and s3 = v·s1, the law of cosines gives u = N(v)/M(v)
    // and a quartic in v after substitution
    let d = [1.0, -2.0 * cb, 1.0];
    let n = [c2 - a2 - b2, -2.0 * (c2 - a2) * cb, b2 + c2 - a2];
    let m = [-2.0 * b2 * cg, 2.0 * b2 * ca];
    let quartic = add(
        &add(&scale(&mul(&n, &n), b2), &scale(&mul(&n, &m), -2.0 * b2 * cg)),
        &mul(&add(&[b2], &scale(&d, -c2)), &mul(&m, &m)),
    );

    let mut out = Vec::new();
    for v in real_roots(&quartic) {
        let mv = eval(&m, v);
        if v <= 0.0 || mv.abs() < 1e-12 * b2 {
            continue;
        }
        let u = eval(&n, v) / mv;
        let dv = eval(&d, v);
        if u <= 0.0 || dv <= 0.0 {
            continue;
        }
        let s1 = (b2 / dv).sqrt();
        let cam = [bearings[0] * s1, bearings[1] * (u * s1), bearings[2] * (v * s1)];
        if let Ok(sim) = rigid_fit(world, &cam, false) {
            let world_to_cam = Pose::from_rotation_matrix(&sim.rotation, sim.translation);
            out.push(world_to_cam.inverse());
        }
    }
    out
}
