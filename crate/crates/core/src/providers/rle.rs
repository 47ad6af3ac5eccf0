//! Mask file: run-length encoded row-major bitmaps, one stream per mask.
//!
//! ```text
//! b"SLMR"  u32 version=1  u32 width  u32 height  u32 mask_count
//! per mask: u32 mask_id  u32 run_count  u32 runs[run_count]
//! ```
//! All integers little-endian. Runs alternate unset/set starting with an
//! unset run (possibly of length 0) and must sum to `width * height`.

use std::path::Path;

use super::{Bitmap, DatasetManifest, Mask, MaskSet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SLMR";
const VERSION: u32 = 1;

fn runs_of(bits: &[bool]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &b in bits {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    if len > 0 || runs.is_empty() {
        runs.push(len);
    }
    runs
}

pub fn encode_masks(set: &MaskSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [VERSION, set.width, set.height, set.masks.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for m in &set.masks {
        let runs = runs_of(&m.bitmap.bits);
        out.extend_from_slice(&m.mask_id.to_le_bytes());
        out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
        for r in runs {
            out.extend_from_slice(&r.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u32(&mut self) -> Result<u32> {
        let b = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| Error::Format("mask file truncated".into()))?;
        self.pos += 4;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_masks(image_id: u32, bytes: &[u8]) -> Result<MaskSet> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::Format("bad mask file magic".into()));
    }
    let mut c = Cursor { bytes, pos: 4 };
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported mask file version {version}")));
    }
    let (width, height, count) = (c.u32()?, c.u32()?, c.u32()?);
    let n = width as usize * height as usize;
    let mut masks = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mask_id = c.u32()?;
        let nruns = c.u32()? as usize;
        let mut bits = Vec::with_capacity(n);
        let mut value = false;
        for _ in 0..nruns {
            let run = c.u32()? as usize;
            if bits.len() + run > n {
                return Err(Error::Format(format!(
                    "RLE length mismatch in mask {mask_id}: runs exceed {n} pixels"
                )));
            }
            bits.resize(bits.len() + run, value);
            value = !value;
        }
        if bits.len() != n {
            return Err(Error::Format(format!(
                "RLE length mismatch in mask {mask_id}: runs cover {} of {n} pixels",
                bits.len()
            )));
        }
        masks.push(Mask::new(mask_id, Bitmap { width, height, bits }));
    }
    if c.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after last mask".into()));
    }
    Ok(MaskSet {
        image_id,
        width,
        height,
        masks,
    })
}

pub fn read_maskset_file(image_id: u32, path: impl AsRef<Path>) -> Result<MaskSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_masks(image_id, &bytes)
}

pub fn save_maskset(set: &MaskSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_masks(set)).map_err(|e| Error::io(path, e))
}

/// Loads and validates the masks of one manifest image.
pub fn load_maskset(manifest: &DatasetManifest, image_id: u32) -> Result<MaskSet> {
    let entry = manifest.entry(image_id)?;
    let set = read_maskset_file(image_id, manifest.resolve(&entry.masks))?;
    let (w, h) = manifest.mask_resolution;
    if (set.width, set.height) != (w, h) {
        return Err(Error::Data(format!(
            "image {image_id}: mask resolution {}x{} differs from manifest {w}x{h}",
            set.width, set.height
        )));
    }
    Ok(set)
}
