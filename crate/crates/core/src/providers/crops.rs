use std::path::{Path, PathBuf};

use super::MaskSet;
use crate::error::{Error, Result};
use crate::scene::ImageRGB;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CropReport {
    pub written: Vec<PathBuf>,
    /// Ids of masks with no set pixel.
    pub skipped: Vec<u32>,
}

/// Writes one PNG per mask: the mask's bounding box cut from `image`, with
/// every pixel outside the mask painted white. Files are named
/// `{image_id}_{mask_id}.png`.
pub fn prepare_crops(image: &ImageRGB, masks: &MaskSet, out_dir: impl AsRef<Path>) -> Result<CropReport> {
    let out_dir = out_dir.as_ref();
    if (image.width, image.height) != (masks.width, masks.height) {
        return Err(Error::Contract(format!(
            "image is {}x{} but masks are {}x{}",
            image.width, image.height, masks.width, masks.height
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut report = CropReport::default();
    for m in &masks.masks {
        let Some(r) = m.bbox else {
            log::warn!("image {}: mask {} is empty, no crop written", masks.image_id, m.mask_id);
            report.skipped.push(m.mask_id);
            continue;
        };
        let mut crop = ImageRGB::new(image.image_id, r.width(), r.height());
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                let px = if m.bitmap.get(x, y) { image.get(x, y) } else { [1.0; 3] };
                crop.pixels[((y - r.y0) * r.width() + (x - r.x0)) as usize] = px;
            }
        }
        let path = out_dir.join(format!("{}_{}.png", masks.image_id, m.mask_id));
        crop.save_png(&path)?;
        report.written.push(path);
    }
    Ok(report)
}
