//! Synthetic workloads for throughput and latency measurements.

use std::time::{Duration, Instant};

use nalgebra::{Quaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pipeline::{encode_scene, EmbeddingTable, EncodeConfig, InMemoryViews, ViewInput};
use crate::providers::{fnv1a64, synth_embedding, Bitmap, Mask, MaskEmbedding, MaskSet};
use crate::scene::{CameraPose, Gaussian3D, GaussianScene, Intrinsics};
use crate::vecstore::{Payload, VectorStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub gaussians: usize,
    pub images: usize,
    pub width: u32,
    pub height: u32,
    pub embedding_dim: usize,
    /// Each image is cut into `mask_grid x mask_grid` square masks.
    pub mask_grid: u32,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            gaussians: 100_000,
            images: 200,
            width: 128,
            height: 128,
            embedding_dim: 512,
            mask_grid: 4,
            seed: 1,
        }
    }
}

/// A flat field of Gaussians seen by downward cameras scattered above it.
///
/// The field is sized for about 1000 Gaussians per unit area and every camera
/// sees a patch of roughly 2.2 x 2.2 units.
pub fn encode_workload(spec: &WorkloadSpec) -> Result<(GaussianScene, InMemoryViews)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let side = (spec.gaussians as f64 / 1000.0).sqrt().max(1.0);
    let gaussians: Vec<Gaussian3D> = (0..spec.gaussians)
        .map(|_| {
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let q = Quaternion::new(q[0], q[1], q[2], q[3]);
            Gaussian3D {
                id: 0,
                mean: Vector3::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side), rng.gen_range(-0.1..0.1)),
                scale: Vector3::from_fn(|_, _| rng.gen_range(0.01..0.04)),
                rotation: q / q.norm(),
                opacity: rng.gen_range(0.2..0.9),
                color: Vector3::from_fn(|_, _| rng.gen_range(0.0..1.0)),
            }
        })
        .collect();
    let scene = GaussianScene::new(gaussians)?;

    let (w, h) = (spec.width, spec.height);
    let f = w.min(h) as f64;
    let k = Intrinsics { fx: f, fy: f, cx: w as f64 / 2.0, cy: h as f64 / 2.0 };
    let height = 2.2;
    let g = spec.mask_grid.max(1);
    let views = (0..spec.images)
        .map(|i| {
            let target = Vector3::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side), 0.0);
            let offset = Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), height);
            let cam = CameraPose::look_at(i as u32, target + offset, target, Vector3::y(), k, w, h);
            let mut masks = Vec::new();
            let mut embeddings = Vec::new();
            for m in 0..g * g {
                let (mx, my) = (m % g, m / g);
                let mut b = Bitmap::new(w, h);
                for y in my * h / g..(my + 1) * h / g {
                    for x in mx * w / g..(mx + 1) * w / g {
                        b.set(x, y, true);
                    }
                }
                masks.push(Mask::new(m, b));
                embeddings.push(MaskEmbedding {
                    image_id: i as u32,
                    mask_id: m,
                    vector: synth_embedding(&format!("region-{i}-{m}"), spec.embedding_dim),
                });
            }
            ViewInput {
                image_id: i as u32,
                camera: cam,
                masks: MaskSet { image_id: i as u32, width: w, height: h, masks },
                embeddings,
            }
        })
        .collect();
    Ok((
        scene,
        InMemoryViews { raster_resolution: (w, h), embedding_dim: spec.embedding_dim, views },
    ))
}

/// Store of `n` random unit vectors with random payloads, built in parallel.
pub fn random_store(n: usize, dim: usize, seed: u64) -> Result<VectorStore> {
    const BLOCK: usize = 8192;
    let blocks: Vec<(Vec<f32>, Vec<Payload>)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (b as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let rows = BLOCK.min(n - b * BLOCK);
            let vectors: Vec<f32> = (0..rows * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let payloads = (0..rows)
                .map(|_| Payload {
                    mean: std::array::from_fn(|_| rng.gen_range(-50.0..50.0)),
                    scale: [0.05; 3],
                    rotation: [1.0, 0.0, 0.0, 0.0],
                    opacity: 0.5,
                    color: [0.5; 3],
                })
                .collect();
            (vectors, payloads)
        })
        .collect();
    let mut store = VectorStore::new(dim);
    let mut id = 0u32;
    for (vectors, payloads) in blocks {
        for (v, p) in vectors.chunks_exact(dim).zip(payloads) {
            store.push(id, v, p)?;
            id += 1;
        }
    }
    Ok(store)
}

/// FNV-1a over the table's bytes; equal hashes mean bitwise-equal tables.
pub fn table_hash(table: &EmbeddingTable) -> u64 {
    let mut bytes = Vec::with_capacity(16 + 4 * (table.embeddings.len() + table.coverage.len()));
    bytes.extend_from_slice(&(table.rows as u64).to_le_bytes());
    bytes.extend_from_slice(&(table.dim as u64).to_le_bytes());
    for v in table.embeddings.iter().chain(&table.coverage) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fnv1a64(&bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeRow {
    pub workers: usize,
    pub time: Duration,
    pub speedup: f64,
    pub covered: usize,
    pub hash: u64,
}

/// Encodes the workload once per worker count.
pub fn bench_encode(
    scene: &GaussianScene,
    views: &InMemoryViews,
    worker_counts: &[usize],
) -> Result<Vec<EncodeRow>> {
    let mut rows: Vec<EncodeRow> = Vec::new();
    for &workers in worker_counts {
        let t = Instant::now();
        let (table, _) = encode_scene(scene, views, &EncodeConfig::with_workers(workers))?;
        let time = t.elapsed();
        let base = rows.first().map_or(time, |r| r.time);
        rows.push(EncodeRow {
            workers,
            time,
            speedup: base.as_secs_f64() / time.as_secs_f64().max(1e-12),
            covered: table.covered_count(),
            hash: table_hash(&table),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRow {
    pub size: usize,
    pub build: Duration,
    /// Median over the queries.
    pub topk: Duration,
    pub threshold: Duration,
    pub k: usize,
    pub threshold_hits: usize,
}

/// Median top-`k` and threshold latency on a random store of each size.
pub fn bench_query(sizes: &[usize], dim: usize, k: usize, queries: usize, seed: u64) -> Result<Vec<QueryRow>> {
    let mut rows = Vec::new();
    for &size in sizes {
        let t = Instant::now();
        let store = random_store(size, dim, seed)?;
        let build = t.elapsed();
        let mut topk = Vec::new();
        let mut thr = Vec::new();
        let mut hits = 0;
        for q in 0..queries.max(1) {
            let v = synth_embedding(&format!("query-{q}"), dim);
            let t = Instant::now();
            store.query_topk(&v, k)?;
            topk.push(t.elapsed());
            let t = Instant::now();
            hits = store.query_threshold(&v, 0.1)?.len();
            thr.push(t.elapsed());
        }
        topk.sort();
        thr.sort();
        rows.push(QueryRow {
            size,
            build,
            topk: topk[topk.len() / 2],
            threshold: thr[thr.len() / 2],
            k,
            threshold_hits: hits,
        });
    }
    Ok(rows)
}
