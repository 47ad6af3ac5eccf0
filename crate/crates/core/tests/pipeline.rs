mod common;

use common::*;
use slag::error::WorkerStatus;
use slag::pipeline::{encode_scene, Batching, EncodeConfig, InMemoryViews, SpillConfig};
use slag::rasterizer::{rasterize_weights_only, RasterConfig, WeightMode};
use slag::Error;

#[test]
fn rasterizer_matches_dense_weights() {
    let mut r = rng(11);
    let scene = random_scene(&mut r, 60, 1.5);
    for i in 0..3 {
        let cam = random_camera(&mut r, i, 5.0, 40, 30);
        let wm = rasterize_weights_only(&scene, &cam).unwrap();
        let dense = dense_weights(&scene, &cam);
        for (p, expect) in dense.iter().enumerate() {
            let got: Vec<(usize, f64)> = wm
                .pixel_entries(p)
                .iter()
                .map(|e| (e.gaussian_id as usize, e.weight))
                .collect();
            assert_eq!(got.len(), expect.len(), "pixel {p}");
            for (a, b) in got.iter().zip(expect) {
                assert_eq!(a.0, b.0);
                assert!((a.1 - b.1).abs() <= 1e-12, "pixel {p}: {} vs {}", a.1, b.1);
            }
        }
    }
}

#[test]
fn encode_matches_dense_triple_sum() {
    for seed in 0..3 {
        let mut r = rng(100 + seed);
        let scene = random_scene(&mut r, 40, 1.0);
        let views = random_views(&mut r, 4, (32, 24), 8, 3, 2);
        let (table, _) = encode_scene(&scene, &views, &EncodeConfig::with_workers(2)).unwrap();
        let (rows, den) = dense_encode(&scene, &views);
        for k in 0..scene.len() {
            match &rows[k] {
                Some(row) => {
                    assert!(table.is_covered(k), "row {k}");
                    assert!(row_rel_err(table.row(k), row) <= 1e-6);
                    assert!((table.coverage[k] as f64 - den[k]).abs() <= 1e-6 * den[k]);
                }
                None => {
                    assert!(!table.is_covered(k));
                    assert!(table.row(k).iter().all(|&x| x == 0.0));
                }
            }
        }
    }
}

fn reference() -> (slag::scene::GaussianScene, InMemoryViews) {
    let mut r = rng(7);
    let scene = random_scene(&mut r, 300, 1.5);
    let views = random_views(&mut r, 9, (48, 48), 16, 4, 1);
    (scene, views)
}

#[test]
fn workers_and_chunks_agree() {
    let (scene, views) = reference();
    let n = scene.len();
    let base = encode_scene(&scene, &views, &EncodeConfig::default()).unwrap().0;
    assert!(base.covered_count() > 0);
    for workers in [1, 2, 3, 8] {
        let mut first = None;
        for chunk in [None, Some(n), Some(n / 4), Some(7), Some(1)] {
            for batching in [Batching::RoundRobin, Batching::Contiguous] {
                let config = EncodeConfig { chunk_rows: chunk, batching, ..EncodeConfig::with_workers(workers) };
                let (t, report) = encode_scene(&scene, &views, &config).unwrap();
                assert_eq!(report.workers.len(), workers);
                if batching == Batching::RoundRobin {
                    match &first {
                        None => first = Some(t.clone()),
                        Some(f) => assert_eq!(&t, f, "workers {workers} chunk {chunk:?}"),
                    }
                }
                assert!(table_rel_diff(&t, &base) <= 1e-5);
            }
        }
    }
}

#[test]
fn spilling_is_invisible() {
    let (scene, views) = reference();
    let dir = tempfile::tempdir().unwrap();
    for workers in [1, 3] {
        let plain = encode_scene(&scene, &views, &EncodeConfig::with_workers(workers)).unwrap().0;
        for threshold in [0, 500] {
            let config = EncodeConfig {
                spill: Some(SpillConfig { dir: dir.path().to_path_buf(), max_entries_in_memory: threshold }),
                chunk_rows: Some(64),
                ..EncodeConfig::with_workers(workers)
            };
            let (t, report) = encode_scene(&scene, &views, &config).unwrap();
            assert_eq!(t, plain);
            assert!(report.workers.iter().any(|w| w.spilled_entries > 0));
        }
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0, "spill files left behind");
}

#[test]
fn more_workers_than_images() {
    let (scene, mut views) = reference();
    views.views.truncate(2);
    let a = encode_scene(&scene, &views, &EncodeConfig::with_workers(1)).unwrap().0;
    let b = encode_scene(&scene, &views, &EncodeConfig::with_workers(6)).unwrap().0;
    assert!(table_rel_diff(&a, &b) <= 1e-5);
}

#[test]
fn literal_falloff_mode_differs() {
    let (scene, views) = reference();
    let composited = encode_scene(&scene, &views, &EncodeConfig::default()).unwrap().0;
    let config = EncodeConfig {
        raster: RasterConfig { mode: WeightMode::LiteralFalloff, parallel_tiles: false },
        ..EncodeConfig::default()
    };
    let literal = encode_scene(&scene, &views, &config).unwrap().0;
    assert!(literal.covered_count() >= composited.covered_count());
    assert_ne!(literal, composited);
}

#[test]
fn empty_inputs() {
    let (scene, views) = reference();
    let none = InMemoryViews { views: Vec::new(), ..views.clone() };
    let (t, _) = encode_scene(&scene, &none, &EncodeConfig::with_workers(3)).unwrap();
    assert_eq!(t.rows, scene.len());
    assert_eq!(t.covered_count(), 0);

    let mut bare = views.clone();
    for v in &mut bare.views {
        v.masks.masks.clear();
        v.embeddings.clear();
    }
    assert_eq!(encode_scene(&scene, &bare, &EncodeConfig::default()).unwrap().0.covered_count(), 0);

    let empty = slag::scene::GaussianScene::new(Vec::new()).unwrap();
    assert_eq!(encode_scene(&empty, &views, &EncodeConfig::default()).unwrap().0.rows, 0);
}

#[test]
fn failing_view_reports_every_worker() {
    let (scene, mut views) = reference();
    views.views[4].embeddings.pop();
    let err = encode_scene(&scene, &views, &EncodeConfig::with_workers(3)).unwrap_err();
    let Error::Pipeline { summary, worker_status } = &err else { panic!("{err:?}") };
    assert!(summary.contains("image 4"), "{summary}");
    assert_eq!(worker_status.len(), 3);
    // round-robin puts image 4 on rank 1
    assert!(matches!(&worker_status[1], WorkerStatus::Failed { rank: 1, .. }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn bad_config() {
    let (scene, views) = reference();
    let zero = EncodeConfig { workers: 0, ..EncodeConfig::default() };
    assert!(matches!(encode_scene(&scene, &views, &zero), Err(Error::Config(_))));
    let chunk = EncodeConfig { chunk_rows: Some(0), ..EncodeConfig::default() };
    assert!(matches!(encode_scene(&scene, &views, &chunk), Err(Error::Config(_))));
}
