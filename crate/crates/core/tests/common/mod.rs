#![allow(dead_code)]

use nalgebra::{Quaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use slag::pipeline::{EmbeddingTable, InMemoryViews, ViewInput};
use slag::projection::{depth_sort, project_gaussian};
use slag::providers::{resample_mask, Bitmap, Mask, MaskEmbedding, MaskSet};
use slag::scene::{CameraPose, Gaussian3D, GaussianScene, Intrinsics};
use slag::vecstore::{Match, VectorStore};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussians scattered in a box of half-width `spread` around the origin.
pub fn random_scene(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> GaussianScene {
    let gs = (0..n)
        .map(|_| {
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let q = Quaternion::new(q[0], q[1], q[2], q[3]);
            Gaussian3D {
                id: 0,
                mean: Vector3::from_fn(|_, _| rng.gen_range(-spread..spread)),
                scale: Vector3::from_fn(|_, _| rng.gen_range(0.05..0.3)),
                rotation: q / q.norm(),
                opacity: rng.gen_range(0.05..0.99),
                color: Vector3::from_fn(|_, _| rng.gen_range(0.0..1.0)),
            }
        })
        .collect();
    GaussianScene::new(gs).unwrap()
}

/// Camera on a sphere of radius `dist` looking at the origin.
pub fn random_camera(rng: &mut ChaCha8Rng, id: u32, dist: f64, w: u32, h: u32) -> CameraPose {
    let dir: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
    let eye = dir.normalize() * dist;
    let up = if dir.normalize().z.abs() > 0.9 { Vector3::x() } else { Vector3::z() };
    let f = w as f64 * rng.gen_range(0.8..1.2);
    let k = Intrinsics { fx: f, fy: f, cx: w as f64 / 2.0, cy: h as f64 / 2.0 };
    CameraPose::look_at(id, eye, Vector3::zeros(), up, k, w, h)
}

/// Random rectangles and disks, possibly overlapping.
pub fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Bitmap {
    let mut b = Bitmap::new(w, h);
    let disk = rng.gen_bool(0.5);
    let (cx, cy) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
    let (rx, ry) = (rng.gen_range(1.0..w as f64 / 2.0), rng.gen_range(1.0..h as f64 / 2.0));
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
            let inside = if disk { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
            b.set(x, y, inside);
        }
    }
    b
}

pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

/// Views with `masks` random masks each, stored at `mask_scale` times the raster size.
pub fn random_views(
    rng: &mut ChaCha8Rng,
    views: usize,
    (w, h): (u32, u32),
    dim: usize,
    masks: usize,
    mask_scale: u32,
) -> InMemoryViews {
    let views = (0..views)
        .map(|i| {
            let dist = rng.gen_range(4.0..7.0);
            let cam = random_camera(rng, i as u32, dist, w, h);
            let (mw, mh) = (w * mask_scale, h * mask_scale);
            let set = MaskSet {
                image_id: i as u32,
                width: mw,
                height: mh,
                masks: (0..masks).map(|m| Mask::new(m as u32, random_mask(rng, mw, mh))).collect(),
            };
            let embeddings = (0..masks)
                .map(|m| MaskEmbedding { image_id: i as u32, mask_id: m as u32, vector: random_vector(rng, dim) })
                .collect();
            ViewInput { image_id: i as u32, camera: cam, masks: set, embeddings }
        })
        .collect();
    InMemoryViews { raster_resolution: (w, h), embedding_dim: dim, views }
}

/// Contribution weights of every Gaussian at every pixel, computed pixel by
/// pixel over all Gaussians with no tiling or culling.
pub fn dense_weights(scene: &GaussianScene, cam: &CameraPose) -> Vec<Vec<(usize, f64)>> {
    let projected: Vec<_> = scene
        .gaussians()
        .iter()
        .map(|g| project_gaussian(g, cam))
        .filter(|p| p.visible)
        .collect();
    let projected = depth_sort(projected);
    let mut out = Vec::with_capacity((cam.width * cam.height) as usize);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0f64;
            let mut entries = Vec::new();
            for p in &projected {
                let [a, b, c] = p.cov2d;
                let det = a * c - b * b;
                let d = px - p.mu2d;
                let m2 = (c * d.x * d.x - 2.0 * b * d.x * d.y + a * d.y * d.y) / det;
                if m2 > 9.0 {
                    continue;
                }
                let opacity = scene.gaussians()[p.gaussian_id].opacity;
                let alpha = (opacity * (-0.5 * m2).exp()).min(0.99);
                let w = alpha * t;
                if w <= 1.0 / 255.0 {
                    continue;
                }
                entries.push((p.gaussian_id, w));
                t *= 1.0 - alpha;
                if t < 1e-4 {
                    break;
                }
            }
            out.push(entries);
        }
    }
    out
}

/// The normalised weighted average, as a literal sum over views, masks and pixels.
/// Returns per-row embeddings (None when uncovered) and total weights.
pub fn dense_encode(scene: &GaussianScene, views: &InMemoryViews) -> (Vec<Option<Vec<f64>>>, Vec<f64>) {
    let n = scene.len();
    let dim = views.embedding_dim;
    let mut num = vec![vec![0.0f64; dim]; n];
    let mut den = vec![0.0f64; n];
    for v in &views.views {
        let weights = dense_weights(scene, &v.camera);
        for (mask, emb) in v.masks.masks.iter().zip(&v.embeddings) {
            let bits = resample_mask(&mask.bitmap, v.camera.width, v.camera.height);
            for (p, entries) in weights.iter().enumerate() {
                if !bits.bits[p] {
                    continue;
                }
                for &(k, w) in entries {
                    for d in 0..dim {
                        num[k][d] += w * emb.vector[d] as f64;
                    }
                    den[k] += w;
                }
            }
        }
    }
    let rows = (0..n)
        .map(|k| (den[k] > 1e-8).then(|| num[k].iter().map(|x| x / den[k]).collect()))
        .collect();
    (rows, den)
}

/// `|a - b| / |b|` for one row.
pub fn row_rel_err(a: &[f32], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

pub fn table_rel_diff(a: &EmbeddingTable, b: &EmbeddingTable) -> f64 {
    assert_eq!((a.rows, a.dim), (b.rows, b.dim));
    let mut worst = 0.0f64;
    for k in 0..a.rows {
        assert_eq!(a.is_covered(k), b.is_covered(k), "coverage differs at row {k}");
        if !a.is_covered(k) {
            continue;
        }
        let bb: Vec<f64> = b.row(k).iter().map(|&x| x as f64).collect();
        worst = worst.max(row_rel_err(a.row(k), &bb));
    }
    worst
}

/// Cosine of `q` with every stored row, summed left to right.
fn brute_scores(store: &VectorStore, q: &[f32]) -> Vec<Match> {
    let qn = q.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    (0..store.len())
        .map(|i| {
            let mut s = 0.0f64;
            for (a, b) in q.iter().zip(store.vector(i)) {
                s += (*a as f64 / qn) * *b as f64;
            }
            Match { gaussian_id: store.ids()[i], similarity: s }
        })
        .collect()
}

fn brute_sort(v: &mut [Match]) {
    v.sort_by(|a, b| b.similarity.partial_cmp(&a.similarity).unwrap().then(a.gaussian_id.cmp(&b.gaussian_id)));
}

pub fn brute_topk(store: &VectorStore, q: &[f32], k: usize) -> Vec<u32> {
    let mut all = brute_scores(store, q);
    brute_sort(&mut all);
    all.into_iter().take(k).map(|m| m.gaussian_id).collect()
}

pub fn brute_threshold(store: &VectorStore, q: &[f32], tau: f64) -> Vec<u32> {
    let mut all: Vec<Match> = brute_scores(store, q).into_iter().filter(|m| m.similarity >= tau).collect();
    brute_sort(&mut all);
    all.into_iter().map(|m| m.gaussian_id).collect()
}
