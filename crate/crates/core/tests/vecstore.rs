mod common;

use std::collections::BTreeSet;

use common::*;
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slag::pipeline::EmbeddingTable;
use slag::vecstore::{
    build_store, load_partition_manifest, partition_store, select_partitions, write_partitions, Payload,
    VectorStore,
};
use slag::Error;

fn random_store(r: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> VectorStore {
    let scene = random_scene(r, n, spread);
    let mut store = VectorStore::new(dim);
    for (i, g) in scene.gaussians().iter().enumerate() {
        // sparse ids so position and id differ
        store.push(3 * i as u32 + 1, &random_vector(r, dim), Payload::from_gaussian(g)).unwrap();
    }
    store
}

fn ids(m: &[slag::vecstore::Match]) -> Vec<u32> {
    m.iter().map(|m| m.gaussian_id).collect()
}

#[test]
fn topk_matches_brute_force() {
    let mut r = rng(1);
    for dim in [3, 17, 64] {
        let store = random_store(&mut r, 10_000, dim, 5.0);
        for _ in 0..3 {
            let q = random_vector(&mut r, dim);
            for k in [1, 10, 100, 10_000, 20_000] {
                let got = store.query_topk(&q, k).unwrap();
                assert_eq!(ids(&got), brute_topk(&store, &q, k), "dim {dim} k {k}");
                assert!(got.windows(2).all(|w| w[0].similarity >= w[1].similarity));
            }
        }
    }
}

#[test]
fn threshold_matches_brute_force() {
    let mut r = rng(2);
    for dim in [5, 32] {
        let store = random_store(&mut r, 10_000, dim, 5.0);
        let q = random_vector(&mut r, dim);
        for tau in [-1.0, -0.2, 0.0, 0.28, 0.5, 1.0] {
            let got = store.query_threshold(&q, tau).unwrap();
            assert_eq!(ids(&got), brute_threshold(&store, &q, tau), "dim {dim} tau {tau}");
            assert!(got.iter().all(|m| m.similarity >= tau));
        }
        assert_eq!(store.query_threshold(&q, -1.0).unwrap().len(), store.len());
    }
}

#[test]
fn scaling_query_or_rows_changes_nothing() {
    let mut r = rng(3);
    let store = random_store(&mut r, 2000, 24, 5.0);
    let q = random_vector(&mut r, 24);
    let scaled: Vec<f32> = q.iter().map(|x| x * 37.5).collect();
    assert_eq!(ids(&store.query_topk(&q, 50).unwrap()), ids(&store.query_topk(&scaled, 50).unwrap()));
    assert_eq!(
        ids(&store.query_threshold(&q, 0.2).unwrap()),
        ids(&store.query_threshold(&scaled, 0.2).unwrap())
    );

    let mut bigger = VectorStore::new(24);
    for i in 0..store.len() {
        let v: Vec<f32> = store.vector(i).iter().map(|x| x * 0.001).collect();
        bigger.push(store.ids()[i], &v, *store.payload(i)).unwrap();
    }
    assert_eq!(ids(&store.query_topk(&q, 50).unwrap()), ids(&bigger.query_topk(&q, 50).unwrap()));
}

#[test]
fn ties_break_by_id() {
    let mut store = VectorStore::new(2);
    let p = Payload::from_gaussian(&random_scene(&mut rng(4), 1, 1.0).gaussians()[0]);
    for id in [9, 2, 7, 4] {
        store.push(id, &[1.0, 1.0], p).unwrap();
    }
    store.push(1, &[1.0, 0.0], p).unwrap();
    assert_eq!(ids(&store.query_topk(&[1.0, 1.0], 3).unwrap()), vec![2, 4, 7]);
    assert_eq!(ids(&store.query_threshold(&[2.0, 2.0], 0.9).unwrap()), vec![2, 4, 7, 9]);
}

#[test]
fn store_from_table_skips_uncovered_rows() {
    let mut r = rng(5);
    let scene = random_scene(&mut r, 50, 1.0);
    let mut table = EmbeddingTable::zeros(50, 4);
    for k in (0..50).step_by(3) {
        table.embeddings[k * 4..k * 4 + 4].copy_from_slice(&random_vector(&mut r, 4));
        table.coverage[k] = 1.0;
    }
    let store = build_store(&table, &scene).unwrap();
    assert_eq!(store.ids(), (0..50).step_by(3).collect::<Vec<u32>>().as_slice());
    for (i, &id) in store.ids().iter().enumerate() {
        let norm: f64 = store.vector(i).iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        let m = scene.gaussians()[id as usize].mean;
        assert_eq!(store.payload(i).mean, [m.x as f32, m.y as f32, m.z as f32]);
    }
    assert!(matches!(build_store(&EmbeddingTable::zeros(49, 4), &scene), Err(Error::Data(_))));
}

#[test]
fn bad_queries() {
    let mut r = rng(6);
    let store = random_store(&mut r, 10, 4, 1.0);
    assert!(matches!(store.query_topk(&[0.0; 4], 3), Err(Error::Contract(_))));
    assert!(matches!(store.query_topk(&[1.0; 3], 3), Err(Error::Data(_))));
    assert!(matches!(store.query_threshold(&[1.0; 4], 1.5), Err(Error::Contract(_))));
    assert!(store.query_topk(&[1.0; 4], 0).unwrap().is_empty());
    assert!(matches!(partition_store(&store, 0.0), Err(Error::Config(_))));
    assert!(matches!(partition_store(&store, -1.0), Err(Error::Config(_))));
}

fn mean(store: &VectorStore, i: usize) -> Vector3<f64> {
    store.payload(i).mean_f64()
}

#[test]
fn partitions_are_sound() {
    let mut r = rng(7);
    let store = random_store(&mut r, 5000, 8, 10.0);
    for cell in [0.7, 2.5, 100.0] {
        let parts = partition_store(&store, cell).unwrap();
        let mut seen = BTreeSet::new();
        for p in &parts {
            assert!(!p.store.is_empty());
            for i in 0..p.store.len() {
                assert!(seen.insert(p.store.ids()[i]), "id in two cells");
                let m = mean(&p.store, i);
                for a in 0..3 {
                    assert!(p.lo[a] <= m[a] && m[a] < p.hi[a]);
                }
            }
        }
        assert_eq!(seen, store.ids().iter().copied().collect());

        for _ in 0..10 {
            let center = Vector3::from_fn(|_, _| r.gen_range(-12.0..12.0));
            let radius = r.gen_range(0.0..6.0);
            let selected = select_partitions(&parts, center, radius).unwrap();
            let chosen: BTreeSet<u32> = selected.ids().iter().copied().collect();
            for i in 0..store.len() {
                if (mean(&store, i) - center).norm() <= radius {
                    assert!(chosen.contains(&store.ids()[i]), "ball member missed");
                }
            }

            let mut restricted = VectorStore::new(store.dim());
            for i in 0..store.len() {
                if chosen.contains(&store.ids()[i]) {
                    restricted.push(store.ids()[i], store.vector(i), *store.payload(i)).unwrap();
                }
            }
            let q = random_vector(&mut r, store.dim());
            assert_eq!(ids(&selected.query_topk(&q, 25).unwrap()), brute_topk(&restricted, &q, 25));
            assert_eq!(ids(&selected.query_threshold(&q, 0.3).unwrap()), brute_threshold(&restricted, &q, 0.3));
        }
    }
}

#[test]
fn partitions_round_trip_through_files() {
    let mut r = rng(8);
    let store = random_store(&mut r, 3000, 16, 4.0);
    let parts = partition_store(&store, 1.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = write_partitions(dir.path(), &parts, 1.5, 16).unwrap();
    let manifest = load_partition_manifest(&path).unwrap();
    assert_eq!((manifest.cell_size, manifest.dim), (1.5, 16));
    assert_eq!(manifest.snapshots.len(), parts.len());
    let back = manifest.load_snapshots(dir.path()).unwrap();
    assert_eq!(back, parts);

    let q = random_vector(&mut r, 16);
    let everything = select_partitions(&back, Vector3::zeros(), 1e9).unwrap();
    assert_eq!(ids(&everything.query_topk(&q, 100).unwrap()), ids(&store.query_topk(&q, 100).unwrap()));

    // a snapshot that disagrees with its manifest entry
    std::fs::copy(dir.path().join(&manifest.snapshots[0].path), dir.path().join(&manifest.snapshots[1].path)).unwrap();
    assert!(manifest.load_snapshots(dir.path()).is_err());
}
