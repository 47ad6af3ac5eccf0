use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;

use super::{config_path_for, required, save_config, AccuracyKind, BenchArgs, EncodeArgs, EvalArgs, FixtureArgs,
    PartitionArgs, Protocol, QueryArgs};
use crate::bench::{bench_encode, bench_query, encode_workload, WorkloadSpec};
use crate::error::{Error, Result};
use crate::eval::{
    assign_classes, binary_protocol, generate_fixture, load_class_list, load_point_cloud, load_segments,
    map_to_points, multiclass_metrics, prediction_filter, BinaryQuery, FixtureSpec, MulticlassScore,
    DEFAULT_ALPHA_THRESHOLD,
};
use crate::pipeline::{encode_scene, Batching, EmbeddingTable, EncodeConfig, SpillConfig};
use crate::providers::{read_maskset_file, Bitmap, DatasetManifest};
use crate::query::{export_matches_ply, run_query, LookupTableEncoder, QueryMode, TextEncoder, UnknownLabel,
    DEFAULT_THRESHOLD};
use crate::rasterizer::{RasterConfig, WeightMode};
use crate::scene::{load_scene, GaussianScene};
use crate::vecstore::{
    build_store, load_partition_manifest, partition_store, select_partitions, write_partitions, VectorStore,
};

const MAX_WORKERS: usize = 1024;

/// Machine-readable `key = value` summary printed after each command.
#[derive(Default)]
struct Summary(Vec<(String, String)>);

impl Summary {
    fn add(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    fn text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn emit(&self, out: Option<&Path>) -> Result<()> {
        print!("{}", self.text());
        if let Some(p) = out {
            std::fs::write(p, self.text()).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}

fn existing(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    let p = required(path, flag)?;
    if !p.is_file() {
        return Err(Error::Config(format!("--{flag}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn check_workers(w: usize) -> Result<usize> {
    if !(1..=MAX_WORKERS).contains(&w) {
        return Err(Error::Config(format!("workers must be in 1..={MAX_WORKERS}, got {w}")));
    }
    Ok(w)
}

fn secs(d: std::time::Duration) -> String {
    format!("{:.3}", d.as_secs_f64())
}

fn load_table_for(scene: &GaussianScene, path: &Path) -> Result<EmbeddingTable> {
    let table = EmbeddingTable::load(path)?;
    if table.rows != scene.len() {
        return Err(Error::Data(format!(
            "{}: {} rows but the scene has {} gaussians",
            path.display(),
            table.rows,
            scene.len()
        )));
    }
    Ok(table)
}

fn encoder_for(lookup: &Option<PathBuf>, strict: bool, dim: usize) -> Result<LookupTableEncoder> {
    let unknown = if strict { UnknownLabel::Reject } else { UnknownLabel::Synthesize };
    match lookup {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::Config(format!("--lookup: {} does not exist", p.display())));
            }
            LookupTableEncoder::load(p, unknown)
        }
        None if strict => Err(Error::Config("--strict needs a --lookup table".into())),
        None => Ok(LookupTableEncoder::synthetic(dim)),
    }
}

pub(super) fn encode(a: EncodeArgs, name: &str) -> Result<()> {
    let scene_path = existing(&a.scene, "scene")?;
    let manifest_path = existing(&a.manifest, "manifest")?;
    let out = required(&a.out, "out")?;
    let workers = check_workers(a.workers.unwrap_or(1))?;
    if a.chunk_rows == Some(0) {
        return Err(Error::Config("--chunk-rows must be positive".into()));
    }
    let config = EncodeConfig {
        workers,
        chunk_rows: a.chunk_rows,
        batching: if a.contiguous.unwrap_or(false) { Batching::Contiguous } else { Batching::RoundRobin },
        raster: RasterConfig {
            mode: if a.literal_weights.unwrap_or(false) { WeightMode::LiteralFalloff } else { WeightMode::Composited },
            parallel_tiles: false,
        },
        spill: a.spill_dir.clone().map(|dir| SpillConfig {
            dir,
            max_entries_in_memory: a.spill_threshold.unwrap_or(0),
        }),
    };

    let t = Instant::now();
    let scene = load_scene(&scene_path)?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let load = t.elapsed();
    log::info!("loaded {} gaussians and {} images", scene.len(), manifest.images.len());
    let (table, report) = encode_scene(&scene, &manifest, &config)?;
    let t = Instant::now();
    table.save(&out)?;
    let save = t.elapsed();
    save_config(&a, name, &config_path_for(&out))?;

    println!("{:<12} {:>10}", "phase", "seconds");
    for (p, d) in [("load", load), ("rasterize", report.phase1), ("aggregate", report.phase2), ("save", save)] {
        println!("{p:<12} {:>10}", secs(d));
    }
    println!();
    println!(
        "{:>4} {:>7} {:>7} {:>10} {:>9} {:>9} {:>9} {:>9}",
        "rank", "images", "masks", "entries", "load_s", "raster_s", "mask_s", "busy_s"
    );
    for w in &report.workers {
        println!(
            "{:>4} {:>7} {:>7} {:>10} {:>9} {:>9} {:>9} {:>9}",
            w.rank,
            w.images,
            w.masks,
            w.masked_entries,
            secs(w.load_time),
            secs(w.raster_time),
            secs(w.mask_time),
            secs(w.busy_time())
        );
    }
    let busy: Vec<f64> = report.workers.iter().map(|w| w.busy_time().as_secs_f64()).collect();
    let mean = busy.iter().sum::<f64>() / busy.len().max(1) as f64;
    let var = busy.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / busy.len().max(1) as f64;
    println!();
    let mut s = Summary::default();
    s.add("rows", table.rows);
    s.add("dim", table.dim);
    s.add("covered", table.covered_count());
    s.add("workers", workers);
    s.add("chunks", report.chunks);
    s.add("phase1_s", secs(report.phase1));
    s.add("phase2_s", secs(report.phase2));
    s.add("total_s", secs(report.total()));
    s.add("worker_busy_mean_s", format!("{mean:.3}"));
    s.add("worker_busy_std_s", format!("{:.3}", var.sqrt()));
    s.emit(None)
}

pub(super) fn partition(a: PartitionArgs, name: &str) -> Result<()> {
    let cell = required(&a.cell_size, "cell-size")?;
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(Error::Config(format!("--cell-size must be positive, got {cell}")));
    }
    let scene_path = existing(&a.scene, "scene")?;
    let table_path = existing(&a.table, "table")?;
    let out_dir = required(&a.out_dir, "out-dir")?;

    let t = Instant::now();
    let scene = load_scene(&scene_path)?;
    let table = load_table_for(&scene, &table_path)?;
    let store = build_store(&table, &scene)?;
    let parts = partition_store(&store, cell)?;
    let manifest = write_partitions(&out_dir, &parts, cell, store.dim())?;
    save_config(&a, name, &out_dir.join(format!("{name}.config.toml")))?;

    println!("{:>16} {:>9}", "cell", "records");
    for p in &parts {
        let [x, y, z] = p.cell;
        println!("{:>16} {:>9}", format!("{x},{y},{z}"), p.store.len());
    }
    println!();
    let mut s = Summary::default();
    s.add("records", store.len());
    s.add("partitions", parts.len());
    s.add("manifest", manifest.display());
    s.add("seconds", secs(t.elapsed()));
    s.emit(None)
}

fn query_store(a: &QueryArgs) -> Result<VectorStore> {
    let region = match (&a.center, a.radius) {
        (Some(c), Some(r)) => Some((Vector3::new(c[0], c[1], c[2]), r)),
        (None, None) => None,
        _ => return Err(Error::Config("--center and --radius go together".into())),
    };
    if let Some(p) = &a.partitions {
        if !p.is_file() {
            return Err(Error::Config(format!("--partitions: {} does not exist", p.display())));
        }
        let manifest = load_partition_manifest(p)?;
        let snaps = manifest.load_snapshots(p.parent().unwrap_or(Path::new("")))?;
        return match region {
            Some((c, r)) => select_partitions(&snaps, c, r),
            None => {
                let mut all = VectorStore::new(manifest.dim);
                for s in &snaps {
                    all.merge(&s.store)?;
                }
                Ok(all)
            }
        };
    }
    if region.is_some() {
        return Err(Error::Config("--center/--radius need --partitions".into()));
    }
    let scene = load_scene(existing(&a.scene, "scene")?)?;
    let table = load_table_for(&scene, &existing(&a.table, "table")?)?;
    build_store(&table, &scene)
}

pub(super) fn query(a: QueryArgs, name: &str) -> Result<()> {
    let text = required(&a.text, "text")?;
    let mode = match (a.top_k, a.threshold) {
        (Some(_), Some(_)) => return Err(Error::Config("give either --top-k or --threshold".into())),
        (Some(k), None) => QueryMode::TopK(k),
        (None, tau) => {
            let tau = tau.unwrap_or(DEFAULT_THRESHOLD);
            if !(-1.0..=1.0).contains(&tau) {
                return Err(Error::Config(format!("--threshold must be in [-1, 1], got {tau}")));
            }
            QueryMode::Threshold(tau)
        }
    };
    if matches!(a.radius, Some(r) if !(r >= 0.0)) {
        return Err(Error::Config("--radius must be non-negative".into()));
    }
    let t = Instant::now();
    let store = query_store(&a)?;
    let load = t.elapsed();
    let encoder = encoder_for(&a.lookup, a.strict.unwrap_or(false), store.dim())?;
    let t = Instant::now();
    let result = run_query(&store, &text, mode, &encoder)?;
    let search = t.elapsed();

    let mut table = String::new();
    writeln!(table, "rank\tgaussian_id\tsimilarity\tx\ty\tz").unwrap();
    for (i, m) in result.matches.iter().enumerate() {
        let [x, y, z] = m.payload.mean;
        writeln!(table, "{i}\t{}\t{:.6}\t{x}\t{y}\t{z}", m.gaussian_id, m.similarity).unwrap();
    }
    if let Some(out) = &a.out {
        std::fs::write(out, &table).map_err(|e| Error::io(out, e))?;
        save_config(&a, name, &config_path_for(out))?;
    }
    if let Some(ply) = &a.ply {
        export_matches_ply(&result, ply)?;
        save_config(&a, name, &config_path_for(ply))?;
    }
    if a.out.is_none() {
        for line in table.lines().take(21) {
            println!("{line}");
        }
        if result.matches.len() > 20 {
            println!("... {} more", result.matches.len() - 20);
        }
        println!();
    }
    let mut s = Summary::default();
    s.add("text", format!("{text:?}"));
    s.add("searched", store.len());
    s.add("matches", result.matches.len());
    s.add("load_s", secs(load));
    s.add("query_s", format!("{:.6}", search.as_secs_f64()));
    s.emit(None)
}

fn class_vectors(labels: &[String], encoder: &dyn TextEncoder) -> Result<Vec<(u32, Vec<f32>)>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| Ok((i as u32, encoder.encode(l)?)))
        .collect()
}

fn print_multiclass(tag: &str, score: &MulticlassScore, labels: &[String], s: &mut Summary) {
    println!("{tag}");
    println!("{:<20} {:>8} {:>8} {:>8}", "class", "points", "iou", "acc");
    for c in &score.classes {
        println!(
            "{:<20} {:>8} {:>8.4} {:>8.4}",
            labels[c.class as usize], c.support, c.iou, c.accuracy
        );
    }
    println!();
    s.add(&format!("{tag}_miou"), format!("{:.6}", score.miou));
    s.add(&format!("{tag}_macc"), format!("{:.6}", score.macc));
}

pub(super) fn eval(a: EvalArgs, name: &str) -> Result<()> {
    let protocol = required(&a.protocol, "protocol")?;
    let labels = load_class_list(existing(&a.labels, "labels")?)?;
    if labels.is_empty() {
        return Err(Error::Config("class list is empty".into()));
    }
    let strict = a.strict.unwrap_or(false);
    let mut s = Summary::default();
    match protocol {
        Protocol::Binary => {
            let tau = a.threshold.unwrap_or(DEFAULT_THRESHOLD);
            if !(-1.0..=1.0).contains(&tau) {
                return Err(Error::Config(format!("--threshold must be in [-1, 1], got {tau}")));
            }
            let alpha = a.alpha_threshold.unwrap_or(DEFAULT_ALPHA_THRESHOLD);
            if !(0.0..1.0).contains(&alpha) {
                return Err(Error::Config(format!("--alpha-threshold must be in [0, 1), got {alpha}")));
            }
            let gt_dir = required(&a.gt_dir, "gt-dir")?;
            let scene = load_scene(existing(&a.scene, "scene")?)?;
            let table = load_table_for(&scene, &existing(&a.table, "table")?)?;
            let manifest = DatasetManifest::load(existing(&a.manifest, "manifest")?)?;
            let store = build_store(&table, &scene)?;
            let encoder = encoder_for(&a.lookup, strict, table.dim)?;

            let mut per_class: Vec<BinaryQuery> = labels
                .iter()
                .map(|l| BinaryQuery { label: l.clone(), views: Vec::new() })
                .collect();
            for entry in &manifest.images {
                let cam = manifest.raster_camera(entry.id)?;
                let gt = read_maskset_file(entry.id, gt_dir.join(format!("{:04}.rle", entry.id)))?;
                if (gt.width, gt.height) != (cam.width, cam.height) {
                    return Err(Error::Contract(format!(
                        "image {}: ground truth is {}x{} but evaluation renders {}x{}",
                        entry.id, gt.width, gt.height, cam.width, cam.height
                    )));
                }
                for (c, q) in per_class.iter_mut().enumerate() {
                    let bits = gt
                        .masks
                        .iter()
                        .find(|m| m.mask_id as usize == c)
                        .map(|m| m.bitmap.clone())
                        .unwrap_or_else(|| Bitmap::new(cam.width, cam.height));
                    q.views.push((cam.clone(), bits));
                }
            }
            let report = binary_protocol(&scene, &store, &encoder, &per_class, tau, alpha)?;

            println!("{:<20} {:>6} {:>8} {:>8} {:>8}", "label", "views", "matches", "iou", "acc");
            for q in &per_class {
                let v: Vec<_> = report.views.iter().filter(|v| v.label == q.label).collect();
                let n = v.len().max(1) as f64;
                let acc = match a.accuracy.unwrap_or(AccuracyKind::Localization) {
                    AccuracyKind::Localization => v.iter().filter(|v| v.score.localized).count() as f64 / n,
                    AccuracyKind::Pixel => v.iter().map(|v| v.score.pixel_accuracy).sum::<f64>() / n,
                };
                println!(
                    "{:<20} {:>6} {:>8} {:>8.4} {:>8.4}",
                    q.label,
                    v.len(),
                    v.first().map_or(0, |v| v.matches),
                    v.iter().map(|v| v.score.iou).sum::<f64>() / n,
                    acc
                );
            }
            println!();
            let macc = match a.accuracy.unwrap_or(AccuracyKind::Localization) {
                AccuracyKind::Localization => report.mean_localization,
                AccuracyKind::Pixel => report.mean_pixel_accuracy,
            };
            let min_iou = report.views.iter().map(|v| v.score.iou).fold(1.0, f64::min);
            s.add("protocol", "binary");
            s.add("query_views", report.views.len());
            s.add("miou", format!("{:.6}", report.mean_iou));
            s.add("min_iou", format!("{min_iou:.6}"));
            s.add("macc", format!("{macc:.6}"));
            s.add("localization_acc", format!("{:.6}", report.mean_localization));
            s.add("pixel_acc", format!("{:.6}", report.mean_pixel_accuracy));
        }
        Protocol::Multiclass => {
            let cloud = load_point_cloud(existing(&a.points, "points")?)?;
            cloud.validate(labels.len())?;
            let pred = match &a.predictions {
                Some(p) => {
                    let pc = load_point_cloud(existing(&Some(p.clone()), "predictions")?)?;
                    if pc.len() != cloud.len() {
                        return Err(Error::Data(format!(
                            "{} predictions for {} points",
                            pc.len(),
                            cloud.len()
                        )));
                    }
                    pc.classes
                }
                None => {
                    let scene = load_scene(existing(&a.scene, "scene")?)?;
                    let table = load_table_for(&scene, &existing(&a.table, "table")?)?;
                    let encoder = encoder_for(&a.lookup, strict, table.dim)?;
                    let classes = assign_classes(&table, &class_vectors(&labels, &encoder)?)?;
                    map_to_points(&scene, &classes, &cloud.points)?
                }
            };
            let subset: Vec<u32> = a.subset.clone().unwrap_or_else(|| (0..labels.len() as u32).collect());
            s.add("protocol", "multiclass");
            s.add("points", cloud.len());
            s.add("classes", subset.len());
            let raw = multiclass_metrics(&pred, &cloud.classes, &subset, labels.len())?;
            print_multiclass("raw", &raw, &labels, &mut s);
            if let Some(seg) = &a.segments {
                let seg = load_segments(existing(&Some(seg.clone()), "segments")?)?;
                let filtered = prediction_filter(&pred, &seg)?;
                let f = multiclass_metrics(&filtered, &cloud.classes, &subset, labels.len())?;
                print_multiclass("filtered", &f, &labels, &mut s);
            }
        }
    }
    if let Some(out) = &a.out {
        save_config(&a, name, &config_path_for(out))?;
    }
    s.emit(a.out.as_deref())
}

pub(super) fn bench(a: BenchArgs, name: &str) -> Result<()> {
    let d = WorkloadSpec::default();
    let spec = WorkloadSpec {
        gaussians: a.gaussians.unwrap_or(d.gaussians),
        images: a.images.unwrap_or(d.images),
        width: a.width.unwrap_or(d.width),
        height: a.height.unwrap_or(d.height),
        embedding_dim: a.dim.unwrap_or(d.embedding_dim),
        seed: a.seed.unwrap_or(d.seed),
        ..d
    };
    if spec.gaussians == 0 || spec.images == 0 || spec.width == 0 || spec.height == 0 || spec.embedding_dim < 2 {
        return Err(Error::Config("bench sizes must be positive and dim at least 2".into()));
    }
    let workers = a.workers.clone().unwrap_or_else(|| vec![1, 2, 4, 8]);
    for &w in &workers {
        check_workers(w)?;
    }
    let sizes = a.store_sizes.clone().unwrap_or_else(|| vec![10_000, 100_000, 1_000_000]);
    let k = a.top_k.unwrap_or(10_000);
    let queries = a.queries.unwrap_or(5);

    let t = Instant::now();
    let (scene, views) = encode_workload(&spec)?;
    println!("workload: {} gaussians, {} images, built in {}s", scene.len(), spec.images, secs(t.elapsed()));
    let enc = bench_encode(&scene, &views, &workers)?;
    println!("{:>8} {:>10} {:>8} {:>9} {:>18}", "workers", "encode_s", "speedup", "covered", "table_hash");
    for r in &enc {
        println!("{:>8} {:>10} {:>8.2} {:>9} {:>18}", r.workers, secs(r.time), r.speedup, r.covered, format!("{:016x}", r.hash));
    }
    println!();
    let q = bench_query(&sizes, spec.embedding_dim, k, queries, spec.seed)?;
    println!("{:>10} {:>9} {:>10} {:>13} {:>10}", "records", "build_s", "topk_ms", "threshold_ms", "hits");
    for r in &q {
        println!(
            "{:>10} {:>9} {:>10.2} {:>13.2} {:>10}",
            r.size,
            secs(r.build),
            r.topk.as_secs_f64() * 1e3,
            r.threshold.as_secs_f64() * 1e3,
            r.threshold_hits
        );
    }
    println!();
    let mut s = Summary::default();
    s.add("cores", std::thread::available_parallelism().map_or(1, |n| n.get()));
    for r in &enc {
        s.add(&format!("encode_s.workers_{}", r.workers), secs(r.time));
        s.add(&format!("speedup.workers_{}", r.workers), format!("{:.3}", r.speedup));
        s.add(&format!("hash.workers_{}", r.workers), format!("{:016x}", r.hash));
    }
    for r in &q {
        s.add(&format!("topk_ms.records_{}", r.size), format!("{:.3}", r.topk.as_secs_f64() * 1e3));
        s.add(&format!("threshold_ms.records_{}", r.size), format!("{:.3}", r.threshold.as_secs_f64() * 1e3));
    }
    if let Some(out) = &a.out {
        save_config(&a, name, &config_path_for(out))?;
    }
    s.emit(a.out.as_deref())
}

pub(super) fn gen_fixture(a: FixtureArgs, name: &str) -> Result<()> {
    let out = required(&a.out_dir, "out-dir")?;
    let d = FixtureSpec::default();
    let spec = FixtureSpec {
        objects: a.objects.unwrap_or(d.objects),
        gaussians_per_object: a.gaussians_per_object.unwrap_or(d.gaussians_per_object),
        views: a.views.unwrap_or(d.views),
        width: a.width.unwrap_or(d.width),
        height: a.height.unwrap_or(d.height),
        seed: a.seed.unwrap_or(d.seed),
        embedding_dim: a.dim.unwrap_or(d.embedding_dim),
        mask_scale: a.mask_scale.unwrap_or(d.mask_scale),
        points_per_object: a.points_per_object.unwrap_or(d.points_per_object),
        segments_per_object: a.segments_per_object.unwrap_or(d.segments_per_object),
    };
    let fx = generate_fixture(&spec)?;
    let manifest = fx.write(&out)?;
    save_config(&a, name, &out.join(format!("{name}.config.toml")))?;
    let mut s = Summary::default();
    s.add("gaussians", fx.scene.len());
    s.add("objects", fx.labels.len());
    s.add("views", fx.views.len());
    s.add("manifest", manifest.display());
    s.emit(None)
}
