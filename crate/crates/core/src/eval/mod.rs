//! Evaluation protocols: 2D projection of query results scored against
//! ground-truth masks, and per-point multi-class scoring with optional
//! segment-majority filtering. Also home of the synthetic fixture.

mod files;
mod fixture;

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;

pub use files::{
    load_class_list, load_point_cloud, load_segments, parse_point_cloud, parse_segments,
    save_class_list, save_point_cloud, save_segments,
};
pub use fixture::{fixture_label, generate_fixture, FixtureSpec, SyntheticFixture, FIXTURE_LABELS};

use crate::error::{Error, Result};
use crate::pipeline::EmbeddingTable;
use crate::providers::Bitmap;
use crate::query::{run_query, QueryMode, TextEncoder};
use crate::rasterizer::rasterize_weights_only;
use crate::scene::{CameraPose, GaussianScene};
use crate::vecstore::VectorStore;

/// Accumulated alpha above which a projected pixel counts as foreground.
pub const DEFAULT_ALPHA_THRESHOLD: f64 = 0.5;

/// Points with optional ground-truth class ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<Vector3<f64>>,
    /// `None` marks an unlabeled point.
    pub classes: Vec<Option<u32>>,
}

impl LabeledPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.points.len() != self.classes.len() {
            return Err(Error::Data(format!(
                "{} points but {} class labels",
                self.points.len(),
                self.classes.len()
            )));
        }
        check_classes(&self.classes, num_classes)
    }
}

/// Segment id per point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentMap {
    pub segments: Vec<u32>,
}

fn check_classes(classes: &[Option<u32>], num_classes: usize) -> Result<()> {
    match classes.iter().flatten().find(|&&c| c as usize >= num_classes) {
        Some(c) => Err(Error::Contract(format!(
            "class id {c} outside the {num_classes}-class list"
        ))),
        None => Ok(()),
    }
}

/// Pixels where the listed Gaussians, rendered alone, reach accumulated alpha
/// above `alpha_threshold`.
pub fn project_result_to_mask(
    ids: &[u32],
    scene: &GaussianScene,
    cam: &CameraPose,
    alpha_threshold: f64,
) -> Result<Bitmap> {
    let mut sorted: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let (sub, _) = scene.subset(&sorted)?;
    let wm = rasterize_weights_only(&sub, cam)?;
    Ok(Bitmap {
        width: cam.width,
        height: cam.height,
        bits: wm.per_pixel_total.iter().map(|&a| a > alpha_threshold).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryScore {
    pub iou: f64,
    /// `iou > 0.5`.
    pub localized: bool,
    /// Fraction of pixels where prediction and ground truth agree.
    pub pixel_accuracy: f64,
}

/// IoU of two masks; 1 when both are empty.
pub fn binary_metrics(pred: &Bitmap, gt: &Bitmap) -> Result<BinaryScore> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::Contract(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.bits.iter().zip(&gt.bits) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    let iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    let total = pred.bits.len().max(1);
    Ok(BinaryScore {
        iou,
        localized: iou > 0.5,
        pixel_accuracy: (total - (union - inter)) as f64 / total as f64,
    })
}

/// One text query with its ground truth in several views.
#[derive(Debug, Clone)]
pub struct BinaryQuery {
    pub label: String,
    pub views: Vec<(CameraPose, Bitmap)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewScore {
    pub label: String,
    pub image_id: u32,
    pub matches: usize,
    pub score: BinaryScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryReport {
    pub views: Vec<ViewScore>,
    pub mean_iou: f64,
    /// Mean of per-view localization accuracy.
    pub mean_localization: f64,
    pub mean_pixel_accuracy: f64,
}

/// Queries every label at threshold `tau`, projects the matches into each
/// view and scores them.
pub fn binary_protocol(
    scene: &GaussianScene,
    store: &VectorStore,
    encoder: &dyn TextEncoder,
    queries: &[BinaryQuery],
    tau: f64,
    alpha_threshold: f64,
) -> Result<BinaryReport> {
    let mut views = Vec::new();
    for q in queries {
        let result = run_query(store, &q.label, QueryMode::Threshold(tau), encoder)?;
        let ids = result.ids();
        let scored: Result<Vec<ViewScore>> = q
            .views
            .par_iter()
            .map(|(cam, gt)| {
                let pred = project_result_to_mask(&ids, scene, cam, alpha_threshold)?;
                Ok(ViewScore {
                    label: q.label.clone(),
                    image_id: cam.image_id,
                    matches: ids.len(),
                    score: binary_metrics(&pred, gt)?,
                })
            })
            .collect();
        views.extend(scored?);
    }
    let n = views.len().max(1) as f64;
    let mean = |f: &dyn Fn(&ViewScore) -> f64| views.iter().map(f).sum::<f64>() / n;
    Ok(BinaryReport {
        mean_iou: mean(&|v| v.score.iou),
        mean_localization: mean(&|v| v.score.localized as u8 as f64),
        mean_pixel_accuracy: mean(&|v| v.score.pixel_accuracy),
        views,
    })
}

/// Argmax-cosine class per Gaussian; uncovered rows get `None`, ties go to
/// the lowest class id.
pub fn assign_classes(table: &EmbeddingTable, labels: &[(u32, Vec<f32>)]) -> Result<Vec<Option<u32>>> {
    if labels.is_empty() {
        return Err(Error::Contract("no class labels given".into()));
    }
    let mut normalized: Vec<(u32, Vec<f64>)> = Vec::with_capacity(labels.len());
    for (c, v) in labels {
        if v.len() != table.dim {
            return Err(Error::Data(format!(
                "class {c} vector has dimension {}, table has {}",
                v.len(),
                table.dim
            )));
        }
        let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Data(format!("class {c} vector has zero norm")));
        }
        normalized.push((*c, v.iter().map(|&x| x as f64 / norm).collect()));
    }
    normalized.sort_by_key(|(c, _)| *c);

    Ok((0..table.rows)
        .into_par_iter()
        .map(|k| {
            if !table.is_covered(k) {
                return None;
            }
            let row = table.row(k);
            let mut best: Option<(u32, f64)> = None;
            for (c, v) in &normalized {
                let s: f64 = v.iter().zip(row).map(|(a, &b)| a * b as f64).sum();
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((*c, s));
                }
            }
            best.map(|(c, _)| c)
        })
        .collect())
}

/// Uniform grid over Gaussian means for exact nearest-mean lookups.
struct MeanGrid<'a> {
    means: Vec<&'a Vector3<f64>>,
    origin: Vector3<f64>,
    cell: f64,
    dims: [i64; 3],
    /// Gaussian ids per cell, ascending.
    cells: Vec<Vec<u32>>,
}

impl<'a> MeanGrid<'a> {
    fn new(scene: &'a GaussianScene) -> Self {
        let means: Vec<&Vector3<f64>> = scene.gaussians().iter().map(|g| &g.mean).collect();
        let bbox = scene.bbox().expect("non-empty scene");
        let ext = bbox.extent();
        // about two means per cell for an evenly filled box
        let volume = ext.iter().map(|e| e.max(1e-9)).product::<f64>();
        let mut cell = (2.0 * volume / means.len() as f64).cbrt();
        let longest = ext.max().max(1e-9);
        cell = cell.max(longest / 256.0);
        let dims = [0, 1, 2].map(|a| ((ext[a] / cell).floor() as i64 + 1).max(1));
        let mut cells = vec![Vec::new(); (dims[0] * dims[1] * dims[2]) as usize];
        let mut grid = MeanGrid {
            means,
            origin: bbox.min,
            cell,
            dims,
            cells: Vec::new(),
        };
        for (i, m) in grid.means.iter().enumerate() {
            let c = grid.cell_of(m);
            cells[grid.index(c)].push(i as u32);
        }
        grid.cells = cells;
        grid
    }

    fn cell_of(&self, p: &Vector3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|a| {
            (((p[a] - self.origin[a]) / self.cell).floor() as i64).clamp(0, self.dims[a] - 1)
        })
    }

    fn index(&self, c: [i64; 3]) -> usize {
        ((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize
    }

    fn nearest(&self, p: &Vector3<f64>) -> u32 {
        let home = self.cell_of(p);
        let mut best: Option<(f64, u32)> = None;
        let mut r = 0i64;
        loop {
            let lo = home.map(|c| c - r);
            let hi = home.map(|c| c + r);
            for z in lo[2].max(0)..=hi[2].min(self.dims[2] - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] - 1) {
                    for x in lo[0].max(0)..=hi[0].min(self.dims[0] - 1) {
                        let on_shell = [x, y, z]
                            .iter()
                            .zip(lo.iter().zip(&hi))
                            .any(|(&c, (&l, &h))| c == l || c == h);
                        if !on_shell {
                            continue;
                        }
                        for &id in &self.cells[self.index([x, y, z])] {
                            let d2 = (p - self.means[id as usize]).norm_squared();
                            if best.is_none_or(|(bd, bid)| d2 < bd || (d2 == bd && id < bid)) {
                                best = Some((d2, id));
                            }
                        }
                    }
                }
            }
            let covers_all = (0..3).all(|a| lo[a] <= 0 && hi[a] >= self.dims[a] - 1);
            if covers_all {
                break;
            }
            // distance from p to the outside of the searched box
            let margin = (0..3)
                .filter(|&a| !(lo[a] <= 0 && hi[a] >= self.dims[a] - 1))
                .map(|a| {
                    let box_lo = self.origin[a] + lo[a] as f64 * self.cell;
                    let box_hi = self.origin[a] + (hi[a] + 1) as f64 * self.cell;
                    let below = if lo[a] <= 0 { f64::INFINITY } else { p[a] - box_lo };
                    let above = if hi[a] >= self.dims[a] - 1 { f64::INFINITY } else { box_hi - p[a] };
                    below.min(above)
                })
                .fold(f64::INFINITY, f64::min);
            if let Some((bd, _)) = best {
                if margin > 0.0 && bd < margin * margin {
                    break;
                }
            }
            r += 1;
        }
        best.expect("grid holds at least one mean").1
    }
}

/// Class of the nearest Gaussian mean for every point; ties go to the lower id.
pub fn map_to_points(
    scene: &GaussianScene,
    gaussian_classes: &[Option<u32>],
    points: &[Vector3<f64>],
) -> Result<Vec<Option<u32>>> {
    if scene.is_empty() {
        return Err(Error::Contract("cannot map classes from an empty scene".into()));
    }
    if gaussian_classes.len() != scene.len() {
        return Err(Error::Data(format!(
            "{} gaussian classes for {} gaussians",
            gaussian_classes.len(),
            scene.len()
        )));
    }
    let grid = MeanGrid::new(scene);
    Ok(points
        .par_iter()
        .map(|p| gaussian_classes[grid.nearest(p) as usize])
        .collect())
}

/// Replaces every point's class by the majority class of its segment.
pub fn prediction_filter(classes: &[Option<u32>], segments: &SegmentMap) -> Result<Vec<Option<u32>>> {
    if classes.len() != segments.segments.len() {
        return Err(Error::Data(format!(
            "{} point classes but {} segment ids",
            classes.len(),
            segments.segments.len()
        )));
    }
    let mut hist: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (c, &s) in classes.iter().zip(&segments.segments) {
        let h = hist.entry(s).or_default();
        if let Some(c) = c {
            *h.entry(*c).or_default() += 1;
        }
    }
    let winner: BTreeMap<u32, Option<u32>> = hist
        .into_iter()
        .map(|(s, h)| {
            // BTreeMap iterates classes ascending, so strict > keeps the lowest on ties
            let mut best: Option<(u32, usize)> = None;
            for (c, n) in h {
                if best.is_none_or(|(_, bn)| n > bn) {
                    best = Some((c, n));
                }
            }
            (s, best.map(|(c, _)| c))
        })
        .collect();
    Ok(segments.segments.iter().map(|s| winner[s]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScore {
    pub class: u32,
    pub iou: f64,
    pub accuracy: f64,
    /// Ground-truth points of this class.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassScore {
    pub miou: f64,
    pub macc: f64,
    /// Classes present in the ground truth, ascending.
    pub classes: Vec<ClassScore>,
}

/// Per-class IoU and recall over points whose ground truth lies in `subset`,
/// averaged over the classes that occur. Unlabeled predictions count as wrong.
pub fn multiclass_metrics(
    pred: &[Option<u32>],
    gt: &[Option<u32>],
    subset: &[u32],
    num_classes: usize,
) -> Result<MulticlassScore> {
    if pred.len() != gt.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} ground-truth points",
            pred.len(),
            gt.len()
        )));
    }
    check_classes(pred, num_classes)?;
    check_classes(gt, num_classes)?;
    let subset_opts: Vec<Option<u32>> = subset.iter().map(|&c| Some(c)).collect();
    check_classes(&subset_opts, num_classes)?;

    let mut in_subset = vec![false; num_classes];
    for &c in subset {
        in_subset[c as usize] = true;
    }
    let (mut tp, mut fp, mut fn_) = (vec![0usize; num_classes], vec![0usize; num_classes], vec![0usize; num_classes]);
    for (p, g) in pred.iter().zip(gt) {
        let Some(g) = *g else { continue };
        if !in_subset[g as usize] {
            continue;
        }
        match *p {
            Some(p) if p == g => tp[g as usize] += 1,
            Some(p) => {
                fn_[g as usize] += 1;
                fp[p as usize] += 1;
            }
            None => fn_[g as usize] += 1,
        }
    }
    let mut classes = Vec::new();
    for c in 0..num_classes {
        let support = tp[c] + fn_[c];
        if !in_subset[c] || support == 0 {
            continue;
        }
        classes.push(ClassScore {
            class: c as u32,
            iou: tp[c] as f64 / (tp[c] + fp[c] + fn_[c]) as f64,
            accuracy: tp[c] as f64 / support as f64,
            support,
        });
    }
    let n = classes.len().max(1) as f64;
    Ok(MulticlassScore {
        miou: classes.iter().map(|c| c.iou).sum::<f64>() / n,
        macc: classes.iter().map(|c| c.accuracy).sum::<f64>() / n,
        classes,
    })
}
