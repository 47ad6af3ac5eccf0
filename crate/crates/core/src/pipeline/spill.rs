//! Worker-private spill file for masked weights.
//!
//! Records are appended as
//! `[u32 image_id][u32 mask_id][u32 dim][u32 n][dim x f32 embedding][n x ([u32 gaussian_id][f64 weight])]`,
//! little-endian, after a `b"SLSP"` magic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{MaskRecord, MaskedWeights};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SLSP";

pub(crate) struct SpillWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl SpillWriter {
    pub fn create(dir: &Path, rank: usize) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("worker-{rank}-{}.spill", std::process::id()));
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(f);
        out.write_all(MAGIC).map_err(|e| Error::io(&path, e))?;
        Ok(SpillWriter { path, out })
    }

    pub fn push(&mut self, r: &MaskRecord) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + r.embedding.len() * 4 + r.weights.entries.len() * 12);
        for v in [
            r.weights.image_id,
            r.weights.mask_id,
            r.embedding.len() as u32,
            r.weights.entries.len() as u32,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for x in &r.embedding {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for &(k, w) in &r.weights.entries {
            buf.extend_from_slice(&k.to_le_bytes());
            buf.extend_from_slice(&w.to_le_bytes());
        }
        self.out.write_all(&buf).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<SpillFile> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(SpillFile { path: self.path })
    }
}

pub(crate) struct SpillFile {
    path: PathBuf,
}

impl SpillFile {
    /// Reads every record back, keeping only Gaussian ids in `[lo, hi)`.
    pub fn read_range(&self, lo: usize, hi: usize) -> Result<Vec<MaskRecord>> {
        let path = &self.path;
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.get(..4) != Some(MAGIC.as_slice()) {
            return Err(Error::Format(format!("{}: bad spill magic", path.display())));
        }
        let corrupt = || Error::Format(format!("{}: truncated spill record", path.display()));
        let mut pos = 4;
        let mut out = Vec::new();
        while pos < bytes.len() {
            let mut take = |n: usize| -> Result<&[u8]> {
                let s = bytes.get(pos..pos + n).ok_or_else(corrupt)?;
                pos += n;
                Ok(s)
            };
            let head = take(16)?;
            let u = |i: usize| u32::from_le_bytes(head[i * 4..i * 4 + 4].try_into().unwrap());
            let (image_id, mask_id, dim, n) = (u(0), u(1), u(2) as usize, u(3) as usize);
            let embedding: Vec<f32> = take(dim * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let entries: Vec<(u32, f64)> = take(n * 12)?
                .chunks_exact(12)
                .map(|c| {
                    (
                        u32::from_le_bytes(c[..4].try_into().unwrap()),
                        f64::from_le_bytes(c[4..].try_into().unwrap()),
                    )
                })
                .filter(|&(k, _)| (k as usize) >= lo && (k as usize) < hi)
                .collect();
            if !entries.is_empty() {
                out.push(MaskRecord {
                    weights: MaskedWeights {
                        image_id,
                        mask_id,
                        entries,
                    },
                    embedding,
                });
            }
        }
        Ok(out)
    }

    pub fn remove(&self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
