//! Inputs that stand in for the segmentation and image-embedding models:
//! per-image binary masks, per-mask embedding vectors, the dataset manifest,
//! crop preparation for an external embedder and a deterministic synthetic
//! embedding generator.

mod crops;
mod embeddings;
mod manifest;
mod rle;
mod synth;

pub use crops::{prepare_crops, CropReport};
pub use embeddings::{load_mask_embeddings, read_embeddings, save_embeddings, write_embeddings};
pub use manifest::{DatasetManifest, ImageEntry};
pub use rle::{decode_masks, encode_masks, load_maskset, read_maskset_file, save_maskset};
pub use synth::{fnv1a64, synth_embedding};

/// Dense binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Self {
        Bitmap {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn filled(width: u32, height: u32) -> Self {
        Bitmap {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Tight bounding box of set pixels, `None` if no pixel is set.
    pub fn bbox(&self) -> Option<PixelRect> {
        let mut r: Option<PixelRect> = None;
        for y in 0..self.height {
            let row = &self.bits[(y * self.width) as usize..((y + 1) * self.width) as usize];
            let (Some(first), Some(last)) = (row.iter().position(|&b| b), row.iter().rposition(|&b| b))
            else {
                continue;
            };
            let (first, last) = (first as u32, last as u32);
            r = Some(match r {
                None => PixelRect { x0: first, y0: y, x1: last + 1, y1: y + 1 },
                Some(r) => PixelRect {
                    x0: r.x0.min(first),
                    y0: r.y0,
                    x1: r.x1.max(last + 1),
                    y1: y + 1,
                },
            });
        }
        r
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub mask_id: u32,
    pub bitmap: Bitmap,
    /// `None` for an empty mask.
    pub bbox: Option<PixelRect>,
}

impl Mask {
    pub fn new(mask_id: u32, bitmap: Bitmap) -> Self {
        let bbox = bitmap.bbox();
        Mask { mask_id, bitmap, bbox }
    }

    pub fn is_empty(&self) -> bool {
        self.bbox.is_none()
    }
}

/// All masks produced for one image. Masks may overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    pub masks: Vec<Mask>,
}

impl MaskSet {
    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// One mask's embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEmbedding {
    pub image_id: u32,
    pub mask_id: u32,
    pub vector: Vec<f32>,
}

/// Nearest-neighbour resampling of a binary mask, sampling at pixel centres.
pub fn resample_mask(mask: &Bitmap, width: u32, height: u32) -> Bitmap {
    if mask.width == width && mask.height == height {
        return mask.clone();
    }
    let (sw, sh) = (mask.width as u64, mask.height as u64);
    let src_x: Vec<u32> = (0..width as u64)
        .map(|x| (((2 * x + 1) * sw) / (2 * width as u64)).min(sw - 1) as u32)
        .collect();
    let mut out = Bitmap::new(width, height);
    for y in 0..height {
        let sy = (((2 * y as u64 + 1) * sh) / (2 * height as u64)).min(sh - 1) as u32;
        for (x, &sx) in src_x.iter().enumerate() {
            out.bits[(y * width) as usize + x] = mask.get(sx, sy);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bbox_is_tight() {
        let mut b = Bitmap::new(10, 8);
        assert_eq!(b.bbox(), None);
        b.set(3, 2, true);
        b.set(7, 5, true);
        b.set(1, 4, true);
        assert_eq!(b.bbox(), Some(PixelRect { x0: 1, y0: 2, x1: 8, y1: 6 }));
    }

    #[test]
    fn resample_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = Bitmap::new(13, 7);
        b.bits.iter_mut().for_each(|v| *v = rng.gen());
        assert_eq!(resample_mask(&b, 13, 7), b);
    }

    #[test]
    fn downsample_solid() {
        assert_eq!(resample_mask(&Bitmap::filled(64, 32), 32, 16), Bitmap::filled(32, 16));
    }

    #[test]
    fn upsample_then_downsample_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut b = Bitmap::new(20, 12);
        b.bits.iter_mut().for_each(|v| *v = rng.gen());
        let up = resample_mask(&b, 40, 24);
        assert_eq!(resample_mask(&up, 20, 12), b);
    }

    /// A target pixel is set when more than half of its source footprint is set.
    fn area_oracle(src: &Bitmap, w: u32, h: u32) -> Bitmap {
        let mut out = Bitmap::new(w, h);
        let (fx, fy) = (src.width as f64 / w as f64, src.height as f64 / h as f64);
        for y in 0..h {
            for x in 0..w {
                let (x0, x1) = (x as f64 * fx, (x + 1) as f64 * fx);
                let (y0, y1) = (y as f64 * fy, (y + 1) as f64 * fy);
                let mut covered = 0.0;
                for sy in y0.floor() as u32..(y1.ceil() as u32).min(src.height) {
                    for sx in x0.floor() as u32..(x1.ceil() as u32).min(src.width) {
                        let ox = (x1.min(sx as f64 + 1.0) - x0.max(sx as f64)).max(0.0);
                        let oy = (y1.min(sy as f64 + 1.0) - y0.max(sy as f64)).max(0.0);
                        if src.get(sx, sy) {
                            covered += ox * oy;
                        }
                    }
                }
                out.set(x, y, covered > 0.5 * fx * fy);
            }
        }
        out
    }

    #[test]
    fn nearest_agrees_with_area_oracle_on_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let (sw, sh) = (240, 180);
            let mut src = Bitmap::new(sw, sh);
            for _ in 0..4 {
                let (cx, cy, r) = (rng.gen_range(0.0..240.0), rng.gen_range(0.0..180.0), rng.gen_range(10.0..50.0f64));
                for y in 0..sh {
                    for x in 0..sw {
                        if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) < r * r {
                            src.set(x, y, true);
                        }
                    }
                }
            }
            let (tw, th) = (96, 72);
            let a = resample_mask(&src, tw, th);
            let b = area_oracle(&src, tw, th);
            let agree = a.bits.iter().zip(&b.bits).filter(|(p, q)| p == q).count();
            assert!(agree as f64 >= 0.99 * (tw * th) as f64, "agreement {agree}");
        }
    }
}
