use std::path::Path;

use crate::error::{Error, Result};

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f32; 3]>,
}

impl ImageRGB {
    pub fn new(image_id: u32, width: u32, height: u32) -> Self {
        ImageRGB {
            image_id,
            width,
            height,
            pixels: vec![[0.0; 3]; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let mut out = image::RgbImage::new(self.width, self.height);
        for (dst, src) in out.pixels_mut().zip(&self.pixels) {
            *dst = image::Rgb(src.map(to_u8));
        }
        out
    }

    pub fn from_rgb8(image_id: u32, img: &image::RgbImage) -> Self {
        ImageRGB {
            image_id,
            width: img.width(),
            height: img.height(),
            pixels: img.pixels().map(|p| p.0.map(|c| c as f32 / 255.0)).collect(),
        }
    }

    pub fn load_png(image_id: u32, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .to_rgb8();
        Ok(Self::from_rgb8(image_id, &img))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8()
            .save(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
