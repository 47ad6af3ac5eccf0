//! Multi-worker embedding of a Gaussian scene.
//!
//! Phase 1 runs per image on `workers` threads: rasterize the view, gate the
//! captured weights with each mask and keep only the non-zero per-Gaussian
//! sums. Phase 2 walks the Gaussian id space in chunks of `chunk_rows`; inside a
//! chunk every worker's contributions are accumulated into a private partial,
//! the partials are summed in worker-rank order and each row is normalised.
//!
//! Per-row arithmetic never depends on how rows are chunked, so tables are
//! bitwise identical for any `chunk_rows` at a fixed worker count.

mod aggregate;
mod spill;
mod table;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use aggregate::{combine_partials, mask_weights, MaskedWeights, PartialAccumulator};
pub use table::EmbeddingTable;

use crate::error::{Error, Result, WorkerStatus};
use crate::providers::{
    load_mask_embeddings, load_maskset, resample_mask, DatasetManifest, MaskEmbedding, MaskSet,
};
use crate::rasterizer::{rasterize_weights_only_with, RasterConfig};
use crate::scene::{CameraPose, GaussianScene};
use spill::SpillWriter;

/// Gaussians whose accumulated weight is at or below this are uncovered.
pub const COVERAGE_EPS: f64 = 1e-8;

/// Everything phase 1 needs for one image.
#[derive(Debug, Clone)]
pub struct ViewInput {
    pub image_id: u32,
    /// Pose at rasterization resolution.
    pub camera: CameraPose,
    pub masks: MaskSet,
    /// One per mask, in mask order.
    pub embeddings: Vec<MaskEmbedding>,
}

/// A source of per-image inputs.
pub trait ViewSource: Sync {
    fn raster_resolution(&self) -> (u32, u32);
    fn embedding_dim(&self) -> usize;
    /// Image ids in processing order.
    fn image_ids(&self) -> Vec<u32>;
    fn load_view(&self, image_id: u32) -> Result<ViewInput>;
}

impl ViewSource for DatasetManifest {
    fn raster_resolution(&self) -> (u32, u32) {
        self.raster_resolution
    }

    fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    fn image_ids(&self) -> Vec<u32> {
        self.images.iter().map(|e| e.id).collect()
    }

    fn load_view(&self, image_id: u32) -> Result<ViewInput> {
        let camera = self.raster_camera(image_id)?;
        let masks = load_maskset(self, image_id)?;
        let embeddings = load_mask_embeddings(self, image_id, &masks)?;
        Ok(ViewInput {
            image_id,
            camera,
            masks,
            embeddings,
        })
    }
}

/// Views held in memory.
#[derive(Debug, Clone)]
pub struct InMemoryViews {
    pub raster_resolution: (u32, u32),
    pub embedding_dim: usize,
    pub views: Vec<ViewInput>,
}

impl ViewSource for InMemoryViews {
    fn raster_resolution(&self) -> (u32, u32) {
        self.raster_resolution
    }

    fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    fn image_ids(&self) -> Vec<u32> {
        self.views.iter().map(|v| v.image_id).collect()
    }

    fn load_view(&self, image_id: u32) -> Result<ViewInput> {
        self.views
            .iter()
            .find(|v| v.image_id == image_id)
            .cloned()
            .ok_or_else(|| Error::Data(format!("image {image_id}: no such view")))
    }
}

/// How images are dealt to workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Batching {
    /// Image `i` goes to worker `i % workers`.
    #[default]
    RoundRobin,
    /// Worker `r` takes the `r`-th contiguous block.
    Contiguous,
}

#[derive(Debug, Clone)]
pub struct SpillConfig {
    pub dir: PathBuf,
    /// Masked-weight entries a worker keeps in memory before spilling to disk.
    pub max_entries_in_memory: usize,
}

#[derive(Debug, Clone)]
pub struct EncodeConfig {
    pub workers: usize,
    /// Rows aggregated per pass; `None` aggregates all rows at once.
    pub chunk_rows: Option<usize>,
    pub batching: Batching,
    pub raster: RasterConfig,
    pub spill: Option<SpillConfig>,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            workers: 1,
            chunk_rows: None,
            batching: Batching::RoundRobin,
            raster: RasterConfig::default(),
            spill: None,
        }
    }
}

impl EncodeConfig {
    pub fn with_workers(workers: usize) -> Self {
        EncodeConfig {
            workers,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct WorkerReport {
    pub rank: usize,
    pub images: usize,
    pub masks: usize,
    pub masked_entries: usize,
    pub spilled_entries: usize,
    pub load_time: Duration,
    pub raster_time: Duration,
    pub mask_time: Duration,
}

impl WorkerReport {
    pub fn busy_time(&self) -> Duration {
        self.load_time + self.raster_time + self.mask_time
    }
}

#[derive(Debug, Clone, Default)]
pub struct EncodeReport {
    pub phase1: Duration,
    pub phase2: Duration,
    pub chunks: usize,
    pub workers: Vec<WorkerReport>,
}

impl EncodeReport {
    pub fn total(&self) -> Duration {
        self.phase1 + self.phase2
    }
}

/// One mask's surviving weights plus its embedding.
#[derive(Debug, Clone)]
pub(crate) struct MaskRecord {
    pub weights: MaskedWeights,
    pub embedding: Vec<f32>,
}

struct WorkerOutput {
    records: Vec<MaskRecord>,
    spill: Option<spill::SpillFile>,
    report: WorkerReport,
}

/// Image ids assigned to each worker rank.
pub fn assign_images(ids: &[u32], workers: usize, batching: Batching) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); workers];
    match batching {
        Batching::RoundRobin => {
            for (i, &id) in ids.iter().enumerate() {
                out[i % workers].push(id);
            }
        }
        Batching::Contiguous => {
            let per = ids.len().div_ceil(workers).max(1);
            for (i, &id) in ids.iter().enumerate() {
                out[i / per].push(id);
            }
        }
    }
    out
}

/// Rasterizes one view and masks its weights, one record per non-empty mask.
pub(crate) fn process_view(
    scene: &GaussianScene,
    view: &ViewInput,
    raster: RasterConfig,
    dim: usize,
    report: &mut WorkerReport,
) -> Result<Vec<MaskRecord>> {
    let id = view.image_id;
    if view.embeddings.len() != view.masks.masks.len() {
        return Err(Error::Data(format!(
            "image {id}: {} embeddings for {} masks",
            view.embeddings.len(),
            view.masks.masks.len()
        )));
    }
    let t = Instant::now();
    let wm = rasterize_weights_only_with(scene, &view.camera, raster)?;
    report.raster_time += t.elapsed();

    let t = Instant::now();
    let (w, h) = (wm.width, wm.height);
    let mut out = Vec::new();
    for (mask, emb) in view.masks.masks.iter().zip(&view.embeddings) {
        if emb.mask_id != mask.mask_id {
            return Err(Error::Data(format!(
                "image {id}: embedding for mask {} paired with mask {}",
                emb.mask_id, mask.mask_id
            )));
        }
        if emb.vector.len() != dim {
            return Err(Error::Data(format!(
                "image {id}: embedding dimension {} but expected {dim}",
                emb.vector.len()
            )));
        }
        if mask.is_empty() {
            continue;
        }
        let bits = resample_mask(&mask.bitmap, w, h);
        let mw = mask_weights(&wm, &bits, id, mask.mask_id)?;
        if mw.entries.is_empty() {
            continue;
        }
        out.push(MaskRecord {
            weights: mw,
            embedding: emb.vector.clone(),
        });
    }
    report.mask_time += t.elapsed();
    Ok(out)
}

fn run_worker(
    rank: usize,
    images: &[u32],
    scene: &GaussianScene,
    source: &dyn ViewSource,
    config: &EncodeConfig,
    cancel: &AtomicBool,
) -> Result<WorkerOutput> {
    let dim = source.embedding_dim();
    let mut report = WorkerReport {
        rank,
        ..Default::default()
    };
    let mut records = Vec::new();
    let mut in_memory = 0usize;
    let mut spill: Option<SpillWriter> = None;
    for &id in images {
        if cancel.load(Ordering::Relaxed) {
            break;
        }
        let t = Instant::now();
        let view = source
            .load_view(id)
            .map_err(|e| Error::Data(format!("image {id}: {e}")))?;
        report.load_time += t.elapsed();
        let recs = process_view(scene, &view, config.raster, dim, &mut report)?;
        report.images += 1;
        for r in recs {
            report.masks += 1;
            report.masked_entries += r.weights.entries.len();
            match (&config.spill, spill.as_mut()) {
                (_, Some(w)) => {
                    report.spilled_entries += r.weights.entries.len();
                    w.push(&r)?;
                }
                (Some(sc), None) if in_memory + r.weights.entries.len() > sc.max_entries_in_memory => {
                    let mut w = SpillWriter::create(&sc.dir, rank)?;
                    report.spilled_entries += r.weights.entries.len();
                    w.push(&r)?;
                    spill = Some(w);
                }
                _ => {
                    in_memory += r.weights.entries.len();
                    records.push(r);
                }
            }
        }
    }
    let spill = spill.map(SpillWriter::finish).transpose()?;
    Ok(WorkerOutput {
        records,
        spill,
        report,
    })
}

fn phase_one(
    scene: &GaussianScene,
    source: &dyn ViewSource,
    config: &EncodeConfig,
) -> Result<Vec<WorkerOutput>> {
    let ids = source.image_ids();
    let batches = assign_images(&ids, config.workers, config.batching);
    let cancel = AtomicBool::new(false);
    let results: Vec<std::thread::Result<Result<WorkerOutput>>> = std::thread::scope(|s| {
        let handles: Vec<_> = batches
            .iter()
            .enumerate()
            .map(|(rank, images)| {
                let cancel = &cancel;
                s.spawn(move || {
                    let r = run_worker(rank, images, scene, source, config, cancel);
                    if r.is_err() {
                        cancel.store(true, Ordering::Relaxed);
                    }
                    r
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join()).collect()
    });

    let mut outputs = Vec::with_capacity(results.len());
    let mut status = Vec::with_capacity(results.len());
    let mut first_error = None;
    for (rank, r) in results.into_iter().enumerate() {
        match r {
            Ok(Ok(out)) => {
                status.push(WorkerStatus::Ok {
                    rank,
                    images: out.report.images,
                });
                outputs.push(out);
            }
            Ok(Err(e)) => {
                let message = e.to_string();
                first_error.get_or_insert_with(|| format!("worker {rank}: {message}"));
                status.push(WorkerStatus::Failed { rank, message });
            }
            Err(_) => {
                first_error.get_or_insert_with(|| format!("worker {rank} panicked"));
                status.push(WorkerStatus::Panicked { rank });
            }
        }
    }
    if let Some(summary) = first_error {
        return Err(Error::Pipeline {
            summary,
            worker_status: status,
        });
    }
    Ok(outputs)
}

/// Contributions of one worker restricted to a chunk of rows.
struct ChunkView<'a> {
    items: Vec<(&'a [(u32, f64)], &'a [f32])>,
}

fn chunk_views<'a>(
    outputs: &'a [WorkerOutput],
    spilled: &'a [Vec<MaskRecord>],
    lo: usize,
    hi: usize,
) -> Vec<ChunkView<'a>> {
    outputs
        .iter()
        .zip(spilled)
        .map(|(out, sp)| {
            let items = out
                .records
                .iter()
                .chain(sp.iter())
                .map(|r| (r.weights.range(lo, hi), r.embedding.as_slice()))
                .filter(|(e, _)| !e.is_empty())
                .collect();
            ChunkView { items }
        })
        .collect()
}

fn aggregate_rows(views: &[ChunkView<'_>], lo: usize, hi: usize, dim: usize) -> Result<EmbeddingTable> {
    let mut parts = Vec::with_capacity(views.len());
    for v in views {
        let mut acc = PartialAccumulator::new(lo, hi, dim);
        for (entries, vector) in &v.items {
            let a = entries.partition_point(|&(k, _)| (k as usize) < lo);
            let b = entries.partition_point(|&(k, _)| (k as usize) < hi);
            acc.add(&entries[a..b], vector)?;
        }
        parts.push(acc);
    }
    Ok(combine_partials(parts)?.finalize())
}

/// Computes the per-Gaussian embedding table for `scene`.
pub fn encode_scene(
    scene: &GaussianScene,
    source: &dyn ViewSource,
    config: &EncodeConfig,
) -> Result<(EmbeddingTable, EncodeReport)> {
    if config.workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    if config.chunk_rows == Some(0) {
        return Err(Error::Config("chunk_rows must be positive".into()));
    }
    let dim = source.embedding_dim();
    let n = scene.len();
    let mut report = EncodeReport::default();

    let t = Instant::now();
    let outputs = phase_one(scene, source, config)?;
    report.phase1 = t.elapsed();
    report.workers = outputs.iter().map(|o| o.report.clone()).collect();

    let t = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    let chunk = config.chunk_rows.unwrap_or(n).max(1);
    let mut table = EmbeddingTable::zeros(0, dim);
    let mut lo = 0;
    while lo < n {
        let hi = (lo + chunk).min(n);
        let spilled: Vec<Vec<MaskRecord>> = outputs
            .iter()
            .map(|o| match &o.spill {
                Some(f) => f.read_range(lo, hi),
                None => Ok(Vec::new()),
            })
            .collect::<Result<_>>()?;
        let views = chunk_views(&outputs, &spilled, lo, hi);
        // finer row split for parallelism; per-row arithmetic is unaffected
        let tasks = (config.workers * 4).max(1);
        let step = (hi - lo).div_ceil(tasks).max(64);
        let bounds: Vec<(usize, usize)> = (lo..hi)
            .step_by(step)
            .map(|a| (a, (a + step).min(hi)))
            .collect();
        let pieces: Vec<Result<EmbeddingTable>> = pool.install(|| {
            bounds
                .par_iter()
                .map(|&(a, b)| aggregate_rows(&views, a, b, dim))
                .collect()
        });
        for p in pieces {
            table.extend(p?)?;
        }
        report.chunks += 1;
        lo = hi;
    }
    report.phase2 = t.elapsed();
    for o in &outputs {
        if let Some(f) = &o.spill {
            f.remove();
        }
    }
    Ok((table, report))
}
