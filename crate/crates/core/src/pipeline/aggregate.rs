//! Masking captured weights and accumulating the weighted embedding average
//! `E_k = sum(w * E_j) / sum(w)` over every (image, mask, pixel) that Gaussian `k`
//! contributed to.

use super::{EmbeddingTable, COVERAGE_EPS};
use crate::error::{Error, Result};
use crate::providers::{Bitmap, MaskEmbedding};
use crate::rasterizer::WeightMap;

/// Per-Gaussian weight sums over the pixels of one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedWeights {
    pub image_id: u32,
    pub mask_id: u32,
    /// `(gaussian_id, summed weight)`, ascending id, weights > 0.
    pub entries: Vec<(u32, f64)>,
}

impl MaskedWeights {
    /// Entries whose Gaussian id lies in `[lo, hi)`.
    pub fn range(&self, lo: usize, hi: usize) -> &[(u32, f64)] {
        let a = self.entries.partition_point(|&(k, _)| (k as usize) < lo);
        let b = self.entries.partition_point(|&(k, _)| (k as usize) < hi);
        &self.entries[a..b]
    }
}

/// Gates `wm` by a mask at raster resolution and sums each Gaussian's weight
/// over the masked pixels, in pixel order.
pub fn mask_weights(wm: &WeightMap, mask: &Bitmap, image_id: u32, mask_id: u32) -> Result<MaskedWeights> {
    if (mask.width, mask.height) != (wm.width, wm.height) {
        return Err(Error::Contract(format!(
            "mask {mask_id} of image {image_id} is {}x{}, weight map is {}x{}",
            mask.width, mask.height, wm.width, wm.height
        )));
    }
    let mut hits: Vec<(u32, f64)> = wm
        .entries
        .iter()
        .filter(|e| mask.bits[e.pixel as usize])
        .map(|e| (e.gaussian_id, e.weight))
        .collect();
    // stable: keeps pixel order within each Gaussian
    hits.sort_by_key(|&(k, _)| k);
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for (k, w) in hits {
        match entries.last_mut() {
            Some((last, sum)) if *last == k => *sum += w,
            _ => entries.push((k, w)),
        }
    }
    entries.retain(|&(_, w)| w > 0.0);
    Ok(MaskedWeights {
        image_id,
        mask_id,
        entries,
    })
}

/// Numerator and denominator of the weighted average for Gaussian ids `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialAccumulator {
    pub lo: usize,
    pub hi: usize,
    pub dim: usize,
    /// Row-major `(hi - lo) x dim`.
    pub weighted_sum: Vec<f64>,
    pub weight_total: Vec<f64>,
}

impl PartialAccumulator {
    pub fn new(lo: usize, hi: usize, dim: usize) -> Self {
        assert!(lo <= hi);
        PartialAccumulator {
            lo,
            hi,
            dim,
            weighted_sum: vec![0.0; (hi - lo) * dim],
            weight_total: vec![0.0; hi - lo],
        }
    }

    /// Adds one mask's contribution. Gaussians outside `[lo, hi)` are skipped.
    pub fn accumulate(&mut self, mw: &MaskedWeights, e: &MaskEmbedding) -> Result<()> {
        if (mw.image_id, mw.mask_id) != (e.image_id, e.mask_id) {
            return Err(Error::Contract(format!(
                "weights for image {} mask {} paired with embedding for image {} mask {}",
                mw.image_id, mw.mask_id, e.image_id, e.mask_id
            )));
        }
        self.add(mw.range(self.lo, self.hi), &e.vector)
    }

    pub(crate) fn add(&mut self, entries: &[(u32, f64)], vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Data(format!(
                "embedding dimension {} does not match accumulator dimension {}",
                vector.len(),
                self.dim
            )));
        }
        for &(k, w) in entries {
            let k = k as usize;
            if k < self.lo || k >= self.hi {
                continue;
            }
            let r = k - self.lo;
            let row = &mut self.weighted_sum[r * self.dim..(r + 1) * self.dim];
            for (acc, &x) in row.iter_mut().zip(vector) {
                *acc += w * x as f64;
            }
            self.weight_total[r] += w;
        }
        Ok(())
    }

    fn add_assign(&mut self, other: &PartialAccumulator) -> Result<()> {
        if (self.lo, self.hi, self.dim) != (other.lo, other.hi, other.dim) {
            return Err(Error::Contract(format!(
                "cannot combine partials over [{}, {}) x {} and [{}, {}) x {}",
                self.lo, self.hi, self.dim, other.lo, other.hi, other.dim
            )));
        }
        for (a, b) in self.weighted_sum.iter_mut().zip(&other.weighted_sum) {
            *a += b;
        }
        for (a, b) in self.weight_total.iter_mut().zip(&other.weight_total) {
            *a += b;
        }
        Ok(())
    }

    /// Normalises every covered row; uncovered rows stay zero.
    pub fn finalize(self) -> EmbeddingTable {
        let n = self.hi - self.lo;
        let mut table = EmbeddingTable::zeros(n, self.dim);
        for r in 0..n {
            let total = self.weight_total[r];
            table.coverage[r] = total as f32;
            if total > COVERAGE_EPS {
                let src = &self.weighted_sum[r * self.dim..(r + 1) * self.dim];
                let dst = &mut table.embeddings[r * self.dim..(r + 1) * self.dim];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = (s / total) as f32;
                }
            } else {
                table.coverage[r] = 0.0;
            }
        }
        table
    }
}

/// Sums partials over the same id range in list order.
pub fn combine_partials(parts: Vec<PartialAccumulator>) -> Result<PartialAccumulator> {
    let mut it = parts.into_iter();
    let mut acc = it
        .next()
        .ok_or_else(|| Error::Contract("no partial accumulators to combine".into()))?;
    for p in it {
        acc.add_assign(&p)?;
    }
    Ok(acc)
}
