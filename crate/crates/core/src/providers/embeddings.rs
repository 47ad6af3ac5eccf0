//! Embedding file: `b"SLEV"`, `u32 dim`, `u32 count`, then `count * dim`
//! little-endian `f32` values, one record per mask in mask order.

use std::path::Path;

use super::{DatasetManifest, MaskEmbedding, MaskSet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SLEV";

pub fn write_embeddings(dim: usize, vectors: &[Vec<f32>]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + vectors.len() * dim * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::Data(format!(
                "embedding {i} has dimension {}, expected {dim}",
                v.len()
            )));
        }
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_embeddings(dim: usize, vectors: &[Vec<f32>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_embeddings(dim, vectors)?).map_err(|e| Error::io(path, e))
}

/// Decodes an embedding file, checking its dimension against `expected_dim`.
pub fn read_embeddings(bytes: &[u8], expected_dim: usize) -> Result<Vec<Vec<f32>>> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad embedding file header".into()));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if dim != expected_dim {
        return Err(Error::Data(format!(
            "embedding dimension {dim} in file, expected {expected_dim}"
        )));
    }
    let body = &bytes[12..];
    if body.len() != count * dim * 4 {
        return Err(Error::Format(format!(
            "embedding body holds {} bytes, header promises {count} x {dim} floats",
            body.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    for (i, rec) in body.chunks_exact(dim * 4).enumerate() {
        let v: Vec<f32> = rec
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("embedding {i} has non-finite entries")));
        }
        out.push(v);
    }
    Ok(out)
}

/// Loads the embeddings of one image and pairs them with its masks.
pub fn load_mask_embeddings(
    manifest: &DatasetManifest,
    image_id: u32,
    masks: &MaskSet,
) -> Result<Vec<MaskEmbedding>> {
    let entry = manifest.entry(image_id)?;
    let path = manifest.resolve(&entry.embeddings);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let vectors = read_embeddings(&bytes, manifest.embedding_dim)?;
    if vectors.len() != masks.masks.len() {
        return Err(Error::Data(format!(
            "image {image_id}: {} embeddings for {} masks",
            vectors.len(),
            masks.masks.len()
        )));
    }
    Ok(masks
        .masks
        .iter()
        .zip(vectors)
        .map(|(m, vector)| MaskEmbedding {
            image_id,
            mask_id: m.mask_id,
            vector,
        })
        .collect())
}
