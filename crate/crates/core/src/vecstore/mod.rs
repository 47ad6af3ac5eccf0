//! Exact cosine-similarity store over per-Gaussian embeddings, with spatial
//! partitioning into self-contained snapshot files.

mod partition;
mod snapshot;

use std::cmp::Ordering;

use nalgebra::{Quaternion, Vector3};
use rayon::prelude::*;

pub use partition::{
    load_partition_manifest, partition_store, select_partitions, write_partitions, PartitionEntry,
    PartitionManifest, PartitionSnapshot,
};
pub use snapshot::{load_snapshot, read_snapshot, save_snapshot, write_snapshot, SNAPSHOT_VERSION};

use crate::error::{Error, Result};
use crate::pipeline::EmbeddingTable;
use crate::scene::{Gaussian3D, GaussianScene};

/// Gaussian parameters stored alongside each vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payload {
    pub mean: [f32; 3],
    pub scale: [f32; 3],
    /// `(w, x, y, z)`.
    pub rotation: [f32; 4],
    pub opacity: f32,
    pub color: [f32; 3],
}

impl Payload {
    pub fn from_gaussian(g: &Gaussian3D) -> Self {
        let r = g.rotation;
        Payload {
            mean: g.mean.map(|v| v as f32).into(),
            scale: g.scale.map(|v| v as f32).into(),
            rotation: [r.w as f32, r.i as f32, r.j as f32, r.k as f32],
            opacity: g.opacity as f32,
            color: g.color.map(|v| v as f32).into(),
        }
    }

    pub fn mean_f64(&self) -> Vector3<f64> {
        Vector3::new(self.mean[0] as f64, self.mean[1] as f64, self.mean[2] as f64)
    }

    /// Back to a Gaussian; the quaternion is re-normalised in `f64`.
    pub fn to_gaussian(&self, id: usize) -> Gaussian3D {
        let [w, x, y, z] = self.rotation.map(|v| v as f64);
        let q = Quaternion::new(w, x, y, z);
        Gaussian3D {
            id,
            mean: self.mean_f64(),
            scale: Vector3::from(self.scale.map(|v| v as f64)),
            rotation: q / q.norm(),
            opacity: (self.opacity as f64).clamp(0.0, 1.0),
            color: Vector3::from(self.color.map(|v| v as f64)),
        }
    }
}

/// A query hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub gaussian_id: u32,
    pub similarity: f64,
}

/// Descending similarity, ties by ascending id.
fn rank_order(a: &Match, b: &Match) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then(a.gaussian_id.cmp(&b.gaussian_id))
}

/// Flat store of L2-normalised vectors with their Gaussian payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    ids: Vec<u32>,
    /// Row-major `len x dim`, each row unit length.
    vectors: Vec<f32>,
    payloads: Vec<Payload>,
}

const PAR_THRESHOLD: usize = 4096;

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        VectorStore {
            dim,
            ids: Vec::new(),
            vectors: Vec::new(),
            payloads: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn payload(&self, i: usize) -> &Payload {
        &self.payloads[i]
    }

    /// Position of a Gaussian id in the store.
    pub fn position(&self, gaussian_id: u32) -> Option<usize> {
        self.ids.iter().position(|&id| id == gaussian_id)
    }

    /// Appends a record, normalising `vector`.
    pub fn push(&mut self, gaussian_id: u32, vector: &[f32], payload: Payload) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Data(format!(
                "vector for gaussian {gaussian_id} has dimension {}, store has {}",
                vector.len(),
                self.dim
            )));
        }
        let norm = vector.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Data(format!("vector for gaussian {gaussian_id} has zero norm")));
        }
        self.ids.push(gaussian_id);
        self.vectors.extend(vector.iter().map(|&x| (x as f64 / norm) as f32));
        self.payloads.push(payload);
        Ok(())
    }

    /// Appends an already-normalised record verbatim.
    pub(crate) fn push_raw(&mut self, gaussian_id: u32, vector: &[f32], payload: Payload) {
        debug_assert_eq!(vector.len(), self.dim);
        self.ids.push(gaussian_id);
        self.vectors.extend_from_slice(vector);
        self.payloads.push(payload);
    }

    /// Appends every record of `other`.
    pub fn merge(&mut self, other: &VectorStore) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::Data(format!(
                "cannot merge stores of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        self.ids.extend_from_slice(&other.ids);
        self.vectors.extend_from_slice(&other.vectors);
        self.payloads.extend_from_slice(&other.payloads);
        Ok(())
    }

    fn normalized_query(&self, q: &[f32]) -> Result<Vec<f64>> {
        if q.len() != self.dim {
            return Err(Error::Data(format!(
                "query has dimension {}, store has {}",
                q.len(),
                self.dim
            )));
        }
        let norm = q.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Contract("query vector has zero norm".into()));
        }
        Ok(q.iter().map(|&x| x as f64 / norm).collect())
    }

    fn scan(&self, q: &[f64]) -> Vec<Match> {
        let score = |(i, row): (usize, &[f32])| Match {
            gaussian_id: self.ids[i],
            similarity: dot(q, row),
        };
        if self.len() >= PAR_THRESHOLD {
            self.vectors
                .par_chunks_exact(self.dim)
                .enumerate()
                .map(score)
                .collect()
        } else {
            self.vectors.chunks_exact(self.dim).enumerate().map(score).collect()
        }
    }

    /// Exact top-`k` by cosine similarity.
    pub fn query_topk(&self, q: &[f32], k: usize) -> Result<Vec<Match>> {
        let q = self.normalized_query(q)?;
        if k == 0 || self.is_empty() {
            return Ok(Vec::new());
        }
        let mut all = self.scan(&q);
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, rank_order);
            all.truncate(k);
        }
        all.sort_unstable_by(rank_order);
        Ok(all)
    }

    /// Every record with cosine similarity `>= tau`, best first.
    pub fn query_threshold(&self, q: &[f32], tau: f64) -> Result<Vec<Match>> {
        if !(-1.0..=1.0).contains(&tau) {
            return Err(Error::Contract(format!("threshold {tau} outside [-1, 1]")));
        }
        let q = self.normalized_query(q)?;
        let mut hits: Vec<Match> = self
            .scan(&q)
            .into_iter()
            .filter(|m| m.similarity >= tau)
            .collect();
        hits.sort_unstable_by(rank_order);
        Ok(hits)
    }
}

/// `sum(q[i] * v[i])` with eight independent accumulators.
fn dot(q: &[f64], v: &[f32]) -> f64 {
    let mut acc = [0.0f64; 8];
    let qc = q.chunks_exact(8);
    let vc = v.chunks_exact(8);
    let (qr, vr) = (qc.remainder(), vc.remainder());
    for (a, b) in qc.zip(vc) {
        for l in 0..8 {
            acc[l] += a[l] * b[l] as f64;
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (a, b) in qr.iter().zip(vr) {
        s += a * *b as f64;
    }
    s
}

/// Normalises every covered row of `table` and pairs it with its Gaussian.
pub fn build_store(table: &EmbeddingTable, scene: &GaussianScene) -> Result<VectorStore> {
    if table.rows != scene.len() {
        return Err(Error::Data(format!(
            "embedding table has {} rows but the scene has {} gaussians",
            table.rows,
            scene.len()
        )));
    }
    let mut store = VectorStore::new(table.dim);
    for (k, g) in scene.gaussians().iter().enumerate() {
        if !table.is_covered(k) {
            continue;
        }
        store
            .push(k as u32, table.row(k), Payload::from_gaussian(g))
            .map_err(|e| Error::Invariant(format!("covered row {k}: {e}")))?;
    }
    Ok(store)
}
