//! Synthetic scene of well separated objects with exact masks and embeddings.
//!
//! Objects are flat clusters of Gaussians placed on a ring in the `z = 0`
//! plane and viewed from above by cameras tilted at most 30 degrees. Each
//! object's mask in a view is its alpha > 0.5 footprint when rendered alone,
//! minus every pixel where another object leaves a recorded weight in the full
//! render, so each mask only ever gates its own object's Gaussians.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{save_class_list, save_point_cloud, save_segments, LabeledPointCloud, SegmentMap};
use crate::error::{Error, Result};
use crate::pipeline::{InMemoryViews, ViewInput};
use crate::providers::{save_embeddings, save_maskset, synth_embedding, Bitmap, Mask, MaskEmbedding, MaskSet};
use crate::query::LookupTableEncoder;
use crate::rasterizer::rasterize_weights_only;
use crate::scene::{save_cameras, save_scene, CameraPose, Gaussian3D, GaussianScene, Intrinsics};

/// Object labels used by the fixture, in class-id order.
pub const FIXTURE_LABELS: [&str; 12] = [
    "chair", "table", "lamp", "sofa", "plant", "monitor", "mug", "bookshelf", "bottle", "keyboard",
    "pillow", "backpack",
];

const CLUSTER_RADIUS: f64 = 0.5;
const CLUSTER_HALF_THICKNESS: f64 = 0.05;
const SCALE_RANGE: (f64, f64) = (0.03, 0.06);
const OPACITY_RANGE: (f64, f64) = (0.3, 0.7);
const MAX_TILT_DEG: f64 = 30.0;
const MIN_TILT_DEG: f64 = 10.0;

/// Label of object `i`; repeats the base list with a numeric suffix past its end.
pub fn fixture_label(i: usize) -> String {
    let n = FIXTURE_LABELS.len();
    if i < n {
        FIXTURE_LABELS[i].to_string()
    } else {
        format!("{}-{}", FIXTURE_LABELS[i % n], i / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub objects: usize,
    pub gaussians_per_object: usize,
    pub views: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub embedding_dim: usize,
    /// Masks are stored at this multiple of the raster resolution.
    pub mask_scale: u32,
    pub points_per_object: usize,
    pub segments_per_object: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            objects: 5,
            gaussians_per_object: 200,
            views: 8,
            width: 128,
            height: 128,
            seed: 7,
            embedding_dim: 512,
            mask_scale: 1,
            points_per_object: 100,
            segments_per_object: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub spec: FixtureSpec,
    pub scene: GaussianScene,
    pub labels: Vec<String>,
    /// Object index of every Gaussian.
    pub gaussian_object: Vec<u32>,
    /// Poses at raster resolution.
    pub cameras: Vec<CameraPose>,
    /// Masks at `mask_scale` times the raster resolution.
    pub views: Vec<ViewInput>,
    /// Per view, each object's footprint at raster resolution; mask id is the object index.
    pub gt_masks: Vec<MaskSet>,
    pub points: LabeledPointCloud,
    /// Segments never straddle objects.
    pub segments: SegmentMap,
}

impl SyntheticFixture {
    pub fn view_source(&self) -> InMemoryViews {
        InMemoryViews {
            raster_resolution: (self.spec.width, self.spec.height),
            embedding_dim: self.spec.embedding_dim,
            views: self.views.clone(),
        }
    }

    pub fn object_gaussians(&self, object: usize) -> Vec<usize> {
        (0..self.gaussian_object.len())
            .filter(|&k| self.gaussian_object[k] as usize == object)
            .collect()
    }

    pub fn label_vectors(&self) -> Vec<(u32, Vec<f32>)> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| (i as u32, synth_embedding(l, self.spec.embedding_dim)))
            .collect()
    }

    pub fn encoder(&self) -> LookupTableEncoder {
        let mut enc = LookupTableEncoder::synthetic(self.spec.embedding_dim);
        for (c, v) in self.label_vectors() {
            enc.insert(&self.labels[c as usize], v).expect("dimension matches");
        }
        enc
    }

    /// Ground truth of object `object` in every view, for the binary protocol.
    pub fn binary_queries(&self) -> Vec<super::BinaryQuery> {
        (0..self.labels.len())
            .map(|o| super::BinaryQuery {
                label: self.labels[o].clone(),
                views: self
                    .cameras
                    .iter()
                    .zip(&self.gt_masks)
                    .map(|(cam, gt)| (cam.clone(), gt.masks[o].bitmap.clone()))
                    .collect(),
            })
            .collect()
    }

    /// Writes the fixture as a dataset directory and returns the manifest path.
    ///
    /// Layout: `scene.ply`, `cameras.txt`, `manifest.toml`, `masks/`,
    /// `embeddings/`, `gt/` (ground-truth masks per view), `labels.txt`,
    /// `labels.tsv` (lookup table), `points.txt`, `segments.txt`,
    /// `gaussian_classes.txt` and `fixture.toml`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        for sub in ["masks", "embeddings", "gt"] {
            let d = dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        let s = self.spec.mask_scale;
        save_scene(&self.scene, dir.join("scene.ply"))?;
        let cams: Vec<CameraPose> = self
            .cameras
            .iter()
            .map(|c| c.rescaled(c.width * s, c.height * s))
            .collect();
        save_cameras(&cams, dir.join("cameras.txt"))?;

        let mut manifest = format!(
            "embedding_dim = {}\ncameras = \"cameras.txt\"\nmask_resolution = [{}, {}]\nraster_resolution = [{}, {}]\n",
            self.spec.embedding_dim,
            self.spec.width * s,
            self.spec.height * s,
            self.spec.width,
            self.spec.height
        );
        for (v, gt) in self.views.iter().zip(&self.gt_masks) {
            let id = v.image_id;
            save_maskset(&v.masks, dir.join(format!("masks/{id:04}.rle")))?;
            let vectors: Vec<Vec<f32>> = v.embeddings.iter().map(|e| e.vector.clone()).collect();
            save_embeddings(self.spec.embedding_dim, &vectors, dir.join(format!("embeddings/{id:04}.emb")))?;
            save_maskset(gt, dir.join(format!("gt/{id:04}.rle")))?;
            manifest.push_str(&format!(
                "\n[[image]]\nid = {id}\ncamera = {id}\nmasks = \"masks/{id:04}.rle\"\nembeddings = \"embeddings/{id:04}.emb\"\n"
            ));
        }
        let manifest_path = dir.join("manifest.toml");
        std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

        save_class_list(&self.labels, dir.join("labels.txt"))?;
        let tsv = dir.join("labels.tsv");
        std::fs::write(&tsv, self.encoder().to_text()).map_err(|e| Error::io(&tsv, e))?;
        save_point_cloud(&self.points, dir.join("points.txt"))?;
        save_segments(&self.segments, dir.join("segments.txt"))?;
        let classes: String = self.gaussian_object.iter().map(|o| format!("{o}\n")).collect();
        let p = dir.join("gaussian_classes.txt");
        std::fs::write(&p, classes).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("fixture.toml");
        let text = toml::to_string(&self.spec).map_err(|e| Error::Invariant(e.to_string()))?;
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(manifest_path)
    }
}

fn upsample(b: &Bitmap, s: u32) -> Bitmap {
    let mut out = Bitmap::new(b.width * s, b.height * s);
    for y in 0..out.height {
        for x in 0..out.width {
            out.set(x, y, b.get(x / s, y / s));
        }
    }
    out
}

fn ring_radius(objects: usize) -> f64 {
    if objects <= 1 {
        return 0.0;
    }
    // neighbours end up at least 1.6 apart, well beyond two cluster bounds
    (0.8 / (PI / objects as f64).sin()).max(1.0)
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<SyntheticFixture> {
    if spec.objects == 0
        || spec.gaussians_per_object == 0
        || spec.views == 0
        || spec.width == 0
        || spec.height == 0
        || spec.mask_scale == 0
        || spec.segments_per_object == 0
        || spec.embedding_dim < 2
    {
        return Err(Error::Config("fixture spec fields must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ring = ring_radius(spec.objects);
    let centers: Vec<Vector3<f64>> = (0..spec.objects)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / spec.objects as f64;
            Vector3::new(ring * a.cos(), ring * a.sin(), 0.0)
        })
        .collect();
    let labels: Vec<String> = (0..spec.objects).map(fixture_label).collect();

    let mut gaussians = Vec::new();
    let mut gaussian_object = Vec::new();
    for (o, c) in centers.iter().enumerate() {
        let base = Vector3::new(rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9));
        for _ in 0..spec.gaussians_per_object {
            let r = CLUSTER_RADIUS * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..2.0 * PI);
            let z = rng.gen_range(-CLUSTER_HALF_THICKNESS..=CLUSTER_HALF_THICKNESS);
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let q = Quaternion::new(q[0], q[1], q[2], q[3]);
            let jitter = Vector3::from_fn(|_, _| rng.gen_range(-0.05..0.05));
            gaussians.push(Gaussian3D {
                id: 0,
                mean: c + Vector3::new(r * a.cos(), r * a.sin(), z),
                scale: Vector3::from_fn(|_, _| rng.gen_range(SCALE_RANGE.0..SCALE_RANGE.1)),
                rotation: q / q.norm(),
                opacity: rng.gen_range(OPACITY_RANGE.0..OPACITY_RANGE.1),
                color: (base + jitter).map(|v: f64| v.clamp(0.0, 1.0)),
            });
            gaussian_object.push(o as u32);
        }
    }
    let scene = GaussianScene::new(gaussians)?;

    // every cluster bound fits inside this radius around the origin
    let reach = ring + CLUSTER_RADIUS + 3.0 * SCALE_RANGE.1 + CLUSTER_HALF_THICKNESS;
    let distance = 2.4 * reach;
    let (w, h) = (spec.width, spec.height);
    let f = w.min(h) as f64;
    let k = Intrinsics {
        fx: f,
        fy: f,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
    };
    let cameras: Vec<CameraPose> = (0..spec.views)
        .map(|v| {
            let step = 2.0 * PI / spec.views as f64;
            let az = v as f64 * step + rng.gen_range(0.0..step);
            let tilt = rng.gen_range(MIN_TILT_DEG..MAX_TILT_DEG).to_radians();
            let eye = distance * Vector3::new(tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos());
            CameraPose::look_at(v as u32, eye, Vector3::zeros(), Vector3::z(), k, w, h)
        })
        .collect();

    let object_scenes: Vec<GaussianScene> = (0..spec.objects)
        .map(|o| {
            let ids: Vec<usize> = (0..scene.len()).filter(|&g| gaussian_object[g] as usize == o).collect();
            scene.subset(&ids).map(|(s, _)| s)
        })
        .collect::<Result<_>>()?;

    let mut views = Vec::new();
    let mut gt_masks = Vec::new();
    let mut seen = vec![false; spec.objects];
    for cam in &cameras {
        let full = rasterize_weights_only(&scene, cam)?;
        let npix = full.num_pixels();
        // owner of every pixel whose recorded entries all come from one object
        let owner: Vec<Option<u32>> = (0..npix)
            .map(|p| {
                let mut objs = full.pixel_entries(p).iter().map(|e| gaussian_object[e.gaussian_id as usize]);
                let first = objs.next()?;
                objs.all(|o| o == first).then_some(first)
            })
            .collect();

        let mut gt = MaskSet { image_id: cam.image_id, width: w, height: h, masks: Vec::new() };
        let mut input = MaskSet {
            image_id: cam.image_id,
            width: w * spec.mask_scale,
            height: h * spec.mask_scale,
            masks: Vec::new(),
        };
        let mut embeddings = Vec::new();
        for (o, sub) in object_scenes.iter().enumerate() {
            let alone = rasterize_weights_only(sub, cam)?;
            let footprint = Bitmap {
                width: w,
                height: h,
                bits: alone.per_pixel_total.iter().map(|&a| a > 0.5).collect(),
            };
            let pure = Bitmap {
                width: w,
                height: h,
                bits: (0..npix).map(|p| footprint.bits[p] && owner[p] == Some(o as u32)).collect(),
            };
            gt.masks.push(Mask::new(o as u32, footprint));
            if pure.count() == 0 {
                continue;
            }
            seen[o] = true;
            input.masks.push(Mask::new(o as u32, upsample(&pure, spec.mask_scale)));
            embeddings.push(MaskEmbedding {
                image_id: cam.image_id,
                mask_id: o as u32,
                vector: synth_embedding(&labels[o], spec.embedding_dim),
            });
        }
        gt_masks.push(gt);
        views.push(ViewInput { image_id: cam.image_id, camera: cam.clone(), masks: input, embeddings });
    }
    if let Some(o) = seen.iter().position(|s| !s) {
        return Err(Error::Invariant(format!("fixture object {o} is not visible in any view")));
    }

    let noise = Normal::new(0.0, 0.1 * CLUSTER_RADIUS).expect("positive sigma");
    let mut points = LabeledPointCloud::default();
    let mut segments = SegmentMap::default();
    let per = spec.gaussians_per_object;
    for o in 0..spec.objects {
        for _ in 0..spec.points_per_object {
            let g = &scene.gaussians()[o * per + rng.gen_range(0..per)];
            let p = g.mean + Vector3::from_fn(|_, _| noise.sample(&mut rng));
            let d = p - centers[o];
            let sector = ((d.y.atan2(d.x) + PI) / (2.0 * PI) * spec.segments_per_object as f64) as usize;
            let sector = sector.min(spec.segments_per_object - 1);
            points.points.push(p);
            points.classes.push(Some(o as u32));
            segments.segments.push((o * spec.segments_per_object + sector) as u32);
        }
    }

    Ok(SyntheticFixture {
        spec: spec.clone(),
        scene,
        labels,
        gaussian_object,
        cameras,
        views,
        gt_masks,
        points,
        segments,
    })
}
