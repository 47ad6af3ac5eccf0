//! Pinhole cameras (OpenCV convention: world-to-camera extrinsics, +z forward,
//! image origin top-left) and the line-oriented camera file.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub image_id: u32,
    pub intrinsics: Intrinsics,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: u32,
    pub height: u32,
}

const ORTHO_TOL: f64 = 1e-4;

impl CameraPose {
    pub fn validate(&self) -> Result<()> {
        let id = self.image_id;
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        if !(err <= ORTHO_TOL) {
            return Err(Error::Data(format!(
                "camera {id}: rotation is not orthonormal (|R^T R - I| = {err:.3e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::Data(format!("camera {id}: rotation determinant {det:.6} != 1")));
        }
        let k = self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::Data(format!("camera {id}: focal lengths must be positive")));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Data(format!("camera {id}: zero resolution")));
        }
        if !(k.cx > 0.0 && k.cx < self.width as f64 && k.cy > 0.0 && k.cy < self.height as f64) {
            return Err(Error::Data(format!("camera {id}: principal point outside image")));
        }
        if !self.translation.iter().all(|t| t.is_finite()) {
            return Err(Error::Data(format!("camera {id}: non-finite translation")));
        }
        Ok(())
    }

    /// Same pose with intrinsics scaled to a different image resolution.
    pub fn rescaled(&self, width: u32, height: u32) -> CameraPose {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let k = self.intrinsics;
        CameraPose {
            intrinsics: Intrinsics {
                fx: k.fx * sx,
                fy: k.fy * sy,
                cx: k.cx * sx,
                cy: k.cy * sy,
            },
            width,
            height,
            ..self.clone()
        }
    }

    /// Camera at `eye` looking at `target`, with image-up roughly along `up`.
    pub fn look_at(
        image_id: u32,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        intrinsics: Intrinsics,
        width: u32,
        height: u32,
    ) -> CameraPose {
        let forward = (target - eye).normalize();
        // image y points down, so camera "down" is -up projected
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        CameraPose {
            image_id,
            intrinsics,
            rotation,
            translation: -(rotation * eye),
            width,
            height,
        }
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Parses the camera text format:
/// `image_id fx fy cx cy r00 .. r22 tx ty tz width height`, `#` starts a comment.
pub fn parse_cameras(text: &str) -> Result<Vec<CameraPose>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 19 {
            return Err(Error::Format(format!(
                "camera line {}: expected 19 fields, found {}",
                lineno + 1,
                toks.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            toks[i].parse::<f64>().map_err(|_| {
                Error::Format(format!("camera line {}: bad number {:?}", lineno + 1, toks[i]))
            })
        };
        let int = |i: usize| -> Result<u32> {
            toks[i].parse::<u32>().map_err(|_| {
                Error::Format(format!("camera line {}: bad integer {:?}", lineno + 1, toks[i]))
            })
        };
        let mut r = [0.0; 9];
        for (a, v) in r.iter_mut().enumerate() {
            *v = num(5 + a)?;
        }
        let cam = CameraPose {
            image_id: int(0)?,
            intrinsics: Intrinsics {
                fx: num(1)?,
                fy: num(2)?,
                cx: num(3)?,
                cy: num(4)?,
            },
            rotation: Matrix3::from_row_slice(&r),
            translation: Vector3::new(num(14)?, num(15)?, num(16)?),
            width: int(17)?,
            height: int(18)?,
        };
        cam.validate()?;
        out.push(cam);
    }
    Ok(out)
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraPose>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(&text)
}

pub fn save_cameras(cams: &[CameraPose], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("# image_id fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz width height\n");
    for c in cams {
        let k = c.intrinsics;
        write!(s, "{} {:?} {:?} {:?} {:?}", c.image_id, k.fx, k.fy, k.cx, k.cy).unwrap();
        for r in 0..3 {
            for col in 0..3 {
                write!(s, " {:?}", c.rotation[(r, col)]).unwrap();
            }
        }
        for t in c.translation.iter() {
            write!(s, " {t:?}").unwrap();
        }
        writeln!(s, " {} {}", c.width, c.height).unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_record() {
        let cams = parse_cameras("# header\n7 100 100 64 64 1 0 0 0 1 0 0 0 1 0 0 0 128 128\n").unwrap();
        assert_eq!(cams.len(), 1);
        assert_eq!(cams[0].image_id, 7);
        assert_eq!(cams[0].rotation, Matrix3::identity());
        assert_eq!(cams[0].translation, Vector3::zeros());
    }

    #[test]
    fn reflection_rejected() {
        let err = parse_cameras("0 100 100 64 64 -1 0 0 0 1 0 0 0 1 0 0 0 128 128").unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn skewed_rotation_rejected() {
        let err = parse_cameras("0 100 100 64 64 1 0.01 0 0 1 0 0 0 1 0 0 0 128 128").unwrap_err();
        assert!(matches!(err, Error::Data(m) if m.contains("orthonormal")));
    }

    #[test]
    fn wrong_field_count() {
        assert!(matches!(parse_cameras("0 1 2 3"), Err(Error::Format(_))));
    }

    #[test]
    fn look_at_puts_target_on_axis() {
        let k = Intrinsics { fx: 100.0, fy: 100.0, cx: 64.0, cy: 64.0 };
        let cam = CameraPose::look_at(
            0,
            Vector3::new(3.0, -2.0, 5.0),
            Vector3::new(0.5, 0.5, 0.0),
            Vector3::z(),
            k,
            128,
            128,
        );
        cam.validate().unwrap();
        let pc = cam.to_camera(&Vector3::new(0.5, 0.5, 0.0));
        assert!(pc.x.abs() < 1e-12 && pc.y.abs() < 1e-12 && pc.z > 0.0);
    }

    #[test]
    fn rescale_halves_intrinsics() {
        let cams = parse_cameras("0 100 80 64 32 1 0 0 0 1 0 0 0 1 0 0 0 128 64").unwrap();
        let c = cams[0].rescaled(64, 32);
        assert_eq!(c.intrinsics, Intrinsics { fx: 50.0, fy: 40.0, cx: 32.0, cy: 16.0 });
    }
}
