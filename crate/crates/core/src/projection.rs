//! Screen-space projection of Gaussians using the local-affine (EWA) approximation.

use std::cmp::Ordering;

use nalgebra::{Matrix2x3, Matrix3, Vector2};

use crate::scene::{CameraPose, Gaussian3D};

/// Camera-frame depth below which a Gaussian is culled.
pub const NEAR_PLANE: f64 = 0.01;

/// Isotropic low-pass dilation added to every screen covariance, in pixels squared.
pub const LOW_PASS: f64 = 0.3;

/// Screen-space footprint of one Gaussian in one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected2D {
    pub gaussian_id: usize,
    /// Projected mean in pixels.
    pub mu2d: Vector2<f64>,
    /// Symmetric screen covariance `[[a, b], [b, c]]` stored as `(a, b, c)`.
    pub cov2d: [f64; 3],
    pub depth: f64,
    pub visible: bool,
}

impl Projected2D {
    pub fn det(&self) -> f64 {
        let [a, b, c] = self.cov2d;
        a * c - b * b
    }

    /// Inverse covariance as `(a, b, c)`, `None` when singular.
    pub fn conic(&self) -> Option<[f64; 3]> {
        let det = self.det();
        if !(det >= 1e-12) {
            return None;
        }
        let [a, b, c] = self.cov2d;
        Some([c / det, -b / det, a / det])
    }

    /// Half-widths of the axis-aligned box around the 3-sigma ellipse.
    pub fn extent(&self) -> Vector2<f64> {
        Vector2::new(3.0 * self.cov2d[0].sqrt(), 3.0 * self.cov2d[2].sqrt())
    }
}

/// Projects one Gaussian into `cam`.
pub fn project_gaussian(g: &Gaussian3D, cam: &CameraPose) -> Projected2D {
    let pc = cam.to_camera(&g.mean);
    let (x, y, z) = (pc.x, pc.y, pc.z);
    let k = cam.intrinsics;
    if !(z > NEAR_PLANE) {
        return Projected2D {
            gaussian_id: g.id,
            mu2d: Vector2::new(f64::NAN, f64::NAN),
            cov2d: [0.0; 3],
            depth: z,
            visible: false,
        };
    }
    let mu2d = Vector2::new(k.fx * x / z + k.cx, k.fy * y / z + k.cy);

    let z2 = z * z;
    let jac = Matrix2x3::new(
        k.fx / z, 0.0, -k.fx * x / z2,
        0.0, k.fy / z, -k.fy * y / z2,
    );
    let t: Matrix2x3<f64> = jac * cam.rotation;
    let sigma: Matrix3<f64> = g.covariance();
    let cov = t * sigma * t.transpose();
    let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    Projected2D {
        gaussian_id: g.id,
        mu2d,
        cov2d: [cov[(0, 0)] + LOW_PASS, off, cov[(1, 1)] + LOW_PASS],
        depth: z,
        visible: true,
    }
}

/// Front-to-back order: ascending depth, ties by Gaussian id.
pub fn depth_order(a: &Projected2D, b: &Projected2D) -> Ordering {
    a.depth
        .total_cmp(&b.depth)
        .then(a.gaussian_id.cmp(&b.gaussian_id))
}

/// Sorts visible projections front to back.
pub fn depth_sort(mut projected: Vec<Projected2D>) -> Vec<Projected2D> {
    projected.sort_unstable_by(depth_order);
    projected
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Intrinsics;
    use nalgebra::{Quaternion, UnitQuaternion, Vector3};

    fn cam() -> CameraPose {
        CameraPose {
            image_id: 0,
            intrinsics: Intrinsics { fx: 100.0, fy: 100.0, cx: 64.0, cy: 64.0 },
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            width: 128,
            height: 128,
        }
    }

    fn gauss(mean: Vector3<f64>, scale: f64) -> Gaussian3D {
        Gaussian3D {
            id: 0,
            mean,
            scale: Vector3::repeat(scale),
            rotation: Quaternion::identity(),
            opacity: 1.0,
            color: Vector3::zeros(),
        }
    }

    #[test]
    fn on_axis_point() {
        let p = project_gaussian(&gauss(Vector3::new(0.0, 0.0, 2.0), 0.1), &cam());
        assert!(p.visible);
        assert_eq!(p.mu2d, Vector2::new(64.0, 64.0));
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn behind_camera_is_invisible() {
        let p = project_gaussian(&gauss(Vector3::new(0.0, 0.0, -1.0), 0.1), &cam());
        assert!(!p.visible);
        let p = project_gaussian(&gauss(Vector3::new(0.0, 0.0, 0.005), 0.1), &cam());
        assert!(!p.visible);
    }

    #[test]
    fn isotropic_on_axis_covariance() {
        let (s, z) = (0.05, 2.0);
        let p = project_gaussian(&gauss(Vector3::new(0.0, 0.0, z), s), &cam());
        let expect = (100.0 * s / z).powi(2) + LOW_PASS;
        assert!((p.cov2d[0] - expect).abs() / expect < 1e-12);
        assert!((p.cov2d[2] - expect).abs() / expect < 1e-12);
        assert_eq!(p.cov2d[1], 0.0);
    }

    /// Finite-difference Jacobian of the full world-to-pixel map.
    fn numeric_cov2d(g: &Gaussian3D, cam: &CameraPose) -> [f64; 3] {
        let f = |m: Vector3<f64>| {
            let pc = cam.to_camera(&m);
            let k = cam.intrinsics;
            Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy)
        };
        let h = 1e-6;
        let mut jac = Matrix2x3::zeros();
        for a in 0..3 {
            let mut d = Vector3::zeros();
            d[a] = h;
            let col = (f(g.mean + d) - f(g.mean - d)) / (2.0 * h);
            jac.set_column(a, &col);
        }
        let cov = jac * g.covariance() * jac.transpose();
        [cov[(0, 0)] + LOW_PASS, cov[(0, 1)], cov[(1, 1)] + LOW_PASS]
    }

    #[test]
    fn matches_numeric_jacobian() {
        let mut g = gauss(Vector3::new(0.4, -0.3, 3.0), 0.1);
        g.scale = Vector3::new(0.2, 0.05, 0.1);
        g.rotation = UnitQuaternion::from_euler_angles(0.3, -0.7, 1.1).into_inner();
        let mut c = cam();
        c.rotation = UnitQuaternion::from_euler_angles(0.05, 0.1, -0.2)
            .to_rotation_matrix()
            .into_inner();
        c.translation = Vector3::new(0.1, 0.2, 0.3);
        let p = project_gaussian(&g, &c);
        let n = numeric_cov2d(&g, &c);
        for i in 0..3 {
            let scale = p.cov2d[0].max(p.cov2d[2]);
            assert!((p.cov2d[i] - n[i]).abs() / scale < 1e-4, "{i}: {:?} vs {:?}", p.cov2d, n);
        }
    }

    #[test]
    fn sort_breaks_ties_by_id() {
        let mk = |id, depth| Projected2D {
            gaussian_id: id,
            mu2d: Vector2::zeros(),
            cov2d: [1.0, 0.0, 1.0],
            depth,
            visible: true,
        };
        let sorted = depth_sort(vec![mk(0, 3.0), mk(1, 1.0), mk(2, 2.0)]);
        assert_eq!(sorted.iter().map(|p| p.depth).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        let sorted = depth_sort(vec![mk(5, 1.0), mk(2, 1.0), mk(9, 1.0)]);
        assert_eq!(sorted.iter().map(|p| p.gaussian_id).collect::<Vec<_>>(), vec![2, 5, 9]);
    }
}
