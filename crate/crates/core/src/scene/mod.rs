//! Gaussian primitives, cameras and images, plus their on-disk formats.

mod camera;
pub(crate) mod rgb;
mod ply;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub use camera::{load_cameras, parse_cameras, save_cameras, CameraPose, Intrinsics};
pub use rgb::ImageRGB;
pub use ply::{load_scene, read_scene, save_scene, write_scene, LOGIT_CLAMP, SH_C0};

/// One anisotropic 3D Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    pub id: usize,
    pub mean: Vector3<f64>,
    /// Per-axis standard deviations in world units.
    pub scale: Vector3<f64>,
    /// Unit quaternion, `w` is the scalar part.
    pub rotation: Quaternion<f64>,
    pub opacity: f64,
    /// DC colour in `[0, 1]`.
    pub color: Vector3<f64>,
}

impl Gaussian3D {
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        UnitQuaternion::new_unchecked(self.rotation).to_rotation_matrix().into_inner()
    }

    /// World-space covariance `R diag(scale^2) R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let s2 = Matrix3::from_diagonal(&self.scale.component_mul(&self.scale));
        let cov = r * s2 * r.transpose();
        // symmetrise away rounding so downstream code can rely on exact symmetry
        (cov + cov.transpose()) * 0.5
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.mean.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
            && self.color.iter().all(|v| v.is_finite())
            && self.opacity.is_finite();
        if !finite {
            return Err(Error::Data(format!("gaussian {}: non-finite field", self.id)));
        }
        if (self.rotation.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Data(format!(
                "gaussian {}: quaternion norm {} is not 1",
                self.id,
                self.rotation.norm()
            )));
        }
        if self.scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::Data(format!("gaussian {}: non-positive scale", self.id)));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::Data(format!(
                "gaussian {}: opacity {} outside [0, 1]",
                self.id, self.opacity
            )));
        }
        Ok(())
    }
}

/// Axis-aligned bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut bb = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            bb.min = bb.min.inf(p);
            bb.max = bb.max.sup(p);
        }
        Some(bb)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

/// The full set of Gaussians. Ids are dense and equal to list position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianScene {
    gaussians: Vec<Gaussian3D>,
    bbox: Option<Aabb>,
}

impl GaussianScene {
    /// Builds a scene, re-assigning ids by position.
    pub fn new(mut gaussians: Vec<Gaussian3D>) -> Result<Self> {
        for (i, g) in gaussians.iter_mut().enumerate() {
            g.id = i;
            g.validate()?;
        }
        let bbox = Aabb::from_points(gaussians.iter().map(|g| &g.mean));
        Ok(GaussianScene { gaussians, bbox })
    }

    pub fn gaussians(&self) -> &[Gaussian3D] {
        &self.gaussians
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Bounds of all means; `None` for an empty scene.
    pub fn bbox(&self) -> Option<Aabb> {
        self.bbox
    }

    /// Sub-scene holding only the listed Gaussians, in the given order.
    /// Ids are re-assigned; the returned vector maps new id to original id.
    pub fn subset(&self, ids: &[usize]) -> Result<(GaussianScene, Vec<usize>)> {
        let mut picked = Vec::with_capacity(ids.len());
        for &id in ids {
            let g = self
                .gaussians
                .get(id)
                .ok_or_else(|| Error::Contract(format!("gaussian id {id} not in scene")))?;
            picked.push(g.clone());
        }
        Ok((GaussianScene::new(picked)?, ids.to_vec()))
    }
}
