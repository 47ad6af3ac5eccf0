//! Tile-based forward rasterizer that records, for every pixel, which Gaussians
//! contributed and with what weight.
//!
//! The weight of Gaussian `k` at pixel `p` is its alpha-compositing
//! contribution `w = alpha * T`, where `alpha = min(0.99, opacity * g)`, `g` is
//! the screen-space Gaussian falloff and `T` the transmittance left in front of
//! it. The rendered colour is the normalised blend `sum(w * c) / sum(w)`, so
//! the captured weights reproduce the image exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::projection::{depth_sort, project_gaussian, Projected2D};
use crate::scene::{CameraPose, GaussianScene, ImageRGB};

/// Contributions at or below this weight are dropped.
pub const WEIGHT_CUTOFF: f64 = 1.0 / 255.0;
/// Upper clamp on per-Gaussian alpha.
pub const ALPHA_MAX: f64 = 0.99;
/// Compositing stops once transmittance falls below this value.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Pixels whose total weight is at or below this are rendered as background.
pub const NORMALIZE_EPS: f64 = 1e-6;
pub const TILE_SIZE: u32 = 16;
/// Squared Mahalanobis radius beyond which a Gaussian does not touch a pixel (3 sigma).
const CUTOFF_MAHALANOBIS2: f64 = 9.0;

/// How per-pixel weights are formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum WeightMode {
    /// `alpha * T` front-to-back compositing contributions.
    #[default]
    Composited,
    /// The bare Gaussian falloff `g`, ignoring opacity and occlusion. Kept for comparison.
    LiteralFalloff,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RasterConfig {
    pub mode: WeightMode,
    /// Shade tiles on the rayon pool. Output is identical either way.
    pub parallel_tiles: bool,
}

/// One captured contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightEntry {
    pub pixel: u32,
    pub gaussian_id: u32,
    pub weight: f64,
}

/// Sparse per-pixel contribution weights for one view.
///
/// Entries are sorted by pixel and, within a pixel, front to back.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    pub entries: Vec<WeightEntry>,
    /// `offsets[p]..offsets[p + 1]` indexes the entries of pixel `p`.
    pub offsets: Vec<u32>,
    pub per_pixel_total: Vec<f64>,
}

impl WeightMap {
    pub fn empty(image_id: u32, width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        WeightMap {
            image_id,
            width,
            height,
            entries: Vec::new(),
            offsets: vec![0; n + 1],
            per_pixel_total: vec![0.0; n],
        }
    }

    pub fn num_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel_entries(&self, pixel: usize) -> &[WeightEntry] {
        &self.entries[self.offsets[pixel] as usize..self.offsets[pixel + 1] as usize]
    }

    /// Writes the debug dump: a header followed by
    /// `[u32 pixel][u32 gaussian_id][f32 weight]` little-endian records.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&self.image_id.to_le_bytes())?;
        w.write_all(&self.width.to_le_bytes())?;
        w.write_all(&self.height.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&e.pixel.to_le_bytes())?;
            w.write_all(&e.gaussian_id.to_le_bytes())?;
            w.write_all(&(e.weight as f32).to_le_bytes())?;
        }
        w.flush()
    }

    pub fn save_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_dump(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    /// Reads a dump back. Weights come back at `f32` precision.
    pub fn read_dump<R: Read>(mut r: R) -> Result<WeightMap> {
        let mut head = [0u8; 28];
        r.read_exact(&mut head)
            .map_err(|_| Error::Format("truncated weight-map header".into()))?;
        if &head[..4] != DUMP_MAGIC {
            return Err(Error::Format("bad weight-map magic".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
        if u32_at(4) != DUMP_VERSION {
            return Err(Error::Format(format!("unsupported weight-map version {}", u32_at(4))));
        }
        let (image_id, width, height) = (u32_at(8), u32_at(12), u32_at(16));
        let count = u64::from_le_bytes(head[20..28].try_into().unwrap()) as usize;
        let mut body = Vec::new();
        r.read_to_end(&mut body).map_err(|e| Error::io("<weight-map>", e))?;
        if body.len() != count * 12 {
            return Err(Error::Format(format!(
                "weight-map body has {} bytes, header promises {count} records",
                body.len()
            )));
        }
        let entries: Vec<WeightEntry> = body
            .chunks_exact(12)
            .map(|c| WeightEntry {
                pixel: u32::from_le_bytes(c[0..4].try_into().unwrap()),
                gaussian_id: u32::from_le_bytes(c[4..8].try_into().unwrap()),
                weight: f32::from_le_bytes(c[8..12].try_into().unwrap()) as f64,
            })
            .collect();
        assemble(image_id, width, height, entries)
    }

    pub fn load_dump(path: impl AsRef<Path>) -> Result<WeightMap> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_dump(BufReader::new(f))
    }
}

const DUMP_MAGIC: &[u8; 4] = b"SLWM";
const DUMP_VERSION: u32 = 1;

/// Builds offsets and totals from pixel-sorted entries.
fn assemble(image_id: u32, width: u32, height: u32, entries: Vec<WeightEntry>) -> Result<WeightMap> {
    let n = width as usize * height as usize;
    let mut offsets = vec![0u32; n + 1];
    let mut per_pixel_total = vec![0.0; n];
    let mut prev = 0u32;
    for e in &entries {
        if e.pixel as usize >= n || e.pixel < prev {
            return Err(Error::Format(format!("entry for pixel {} out of order or range", e.pixel)));
        }
        prev = e.pixel;
        offsets[e.pixel as usize + 1] += 1;
        per_pixel_total[e.pixel as usize] += e.weight;
    }
    for p in 0..n {
        offsets[p + 1] += offsets[p];
    }
    Ok(WeightMap {
        image_id,
        width,
        height,
        entries,
        offsets,
        per_pixel_total,
    })
}

/// Alpha of a projected Gaussian at a pixel centre, zero outside its 3-sigma ellipse.
fn falloff(conic: &[f64; 3], mu: &Vector2<f64>, pixel: &Vector2<f64>) -> f64 {
    let dx = pixel.x - mu.x;
    let dy = pixel.y - mu.y;
    let m2 = conic[0] * dx * dx + 2.0 * conic[1] * dx * dy + conic[2] * dy * dy;
    if m2 > CUTOFF_MAHALANOBIS2 {
        0.0
    } else {
        (-0.5 * m2).exp()
    }
}

/// Weight of a single Gaussian at `pixel` given the transmittance in front of it.
///
/// Returns 0 when the contribution is at or below [`WEIGHT_CUTOFF`].
pub fn gaussian_weight_at(
    proj: &Projected2D,
    opacity: f64,
    pixel: Vector2<f64>,
    transmittance: f64,
) -> Result<f64> {
    let conic = proj.conic().ok_or_else(|| {
        Error::Numeric(format!(
            "gaussian {}: singular screen covariance (det {:e})",
            proj.gaussian_id,
            proj.det()
        ))
    })?;
    let alpha = (opacity * falloff(&conic, &proj.mu2d, &pixel)).min(ALPHA_MAX);
    let w = alpha * transmittance;
    Ok(if w > WEIGHT_CUTOFF { w } else { 0.0 })
}

/// A visible Gaussian prepared for shading.
#[derive(Debug, Clone)]
struct Splat {
    gaussian_id: u32,
    mu: Vector2<f64>,
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    /// Inclusive pixel bounds of the 3-sigma box, clamped to the image.
    x0: u32,
    x1: u32,
    y0: u32,
    y1: u32,
}

fn prepare_splats(scene: &GaussianScene, cam: &CameraPose) -> Result<Vec<Splat>> {
    let projected: Vec<Projected2D> = scene
        .gaussians()
        .iter()
        .map(|g| project_gaussian(g, cam))
        .filter(|p| p.visible)
        .collect();
    let sorted = depth_sort(projected);
    let (w, h) = (cam.width as f64, cam.height as f64);
    let mut splats = Vec::with_capacity(sorted.len());
    for p in sorted {
        let conic = p.conic().ok_or_else(|| {
            Error::Numeric(format!("gaussian {}: singular screen covariance", p.gaussian_id))
        })?;
        let ext = p.extent();
        // pixel centres sit at integer + 0.5
        let lo_x = (p.mu2d.x - ext.x - 0.5).ceil();
        let hi_x = (p.mu2d.x + ext.x - 0.5).floor();
        let lo_y = (p.mu2d.y - ext.y - 0.5).ceil();
        let hi_y = (p.mu2d.y + ext.y - 0.5).floor();
        if !(hi_x >= 0.0 && hi_y >= 0.0 && lo_x < w && lo_y < h) || hi_x < lo_x || hi_y < lo_y {
            continue;
        }
        let g = &scene.gaussians()[p.gaussian_id];
        splats.push(Splat {
            gaussian_id: p.gaussian_id as u32,
            mu: p.mu2d,
            conic,
            opacity: g.opacity,
            color: [g.color.x, g.color.y, g.color.z],
            x0: lo_x.max(0.0) as u32,
            x1: hi_x.min(w - 1.0) as u32,
            y0: lo_y.max(0.0) as u32,
            y1: hi_y.min(h - 1.0) as u32,
        });
    }
    Ok(splats)
}

/// Per-pixel compositing shared by every traversal strategy.
/// Appends `(gaussian_id, weight)` pairs and returns `(total, colour_sum)`.
fn shade_pixel<'a>(
    splats: impl Iterator<Item = &'a Splat>,
    x: u32,
    y: u32,
    mode: WeightMode,
    out: &mut Vec<(u32, f64)>,
) -> (f64, [f64; 3]) {
    let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
    let mut t = 1.0;
    let mut total = 0.0;
    let mut rgb = [0.0; 3];
    for s in splats {
        if x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1 {
            continue;
        }
        let g = falloff(&s.conic, &s.mu, &px);
        if g == 0.0 {
            continue;
        }
        let w = match mode {
            WeightMode::Composited => {
                let alpha = (s.opacity * g).min(ALPHA_MAX);
                let w = alpha * t;
                if w <= WEIGHT_CUTOFF {
                    continue;
                }
                t *= 1.0 - alpha;
                w
            }
            WeightMode::LiteralFalloff => {
                if g <= WEIGHT_CUTOFF {
                    continue;
                }
                g
            }
        };
        out.push((s.gaussian_id, w));
        total += w;
        for c in 0..3 {
            rgb[c] += w * s.color[c];
        }
        if mode == WeightMode::Composited && t < MIN_TRANSMITTANCE {
            break;
        }
    }
    (total, rgb)
}

struct TileOutput {
    /// `(pixel, gaussian_id, weight)` in pixel-major, front-to-back order.
    entries: Vec<WeightEntry>,
    shaded: Vec<(u32, f64, [f64; 3])>,
}

fn shade_tile(
    splats: &[Splat],
    list: &[u32],
    tx: u32,
    ty: u32,
    width: u32,
    height: u32,
    mode: WeightMode,
) -> TileOutput {
    let x_end = ((tx + 1) * TILE_SIZE).min(width);
    let y_end = ((ty + 1) * TILE_SIZE).min(height);
    let mut entries = Vec::new();
    let mut shaded = Vec::new();
    let mut scratch = Vec::new();
    for y in ty * TILE_SIZE..y_end {
        for x in tx * TILE_SIZE..x_end {
            scratch.clear();
            let (total, rgb) =
                shade_pixel(list.iter().map(|&i| &splats[i as usize]), x, y, mode, &mut scratch);
            let pixel = y * width + x;
            entries.extend(scratch.iter().map(|&(gaussian_id, weight)| WeightEntry {
                pixel,
                gaussian_id,
                weight,
            }));
            if total > 0.0 {
                shaded.push((pixel, total, rgb));
            }
        }
    }
    TileOutput { entries, shaded }
}

fn render(
    scene: &GaussianScene,
    cam: &CameraPose,
    config: RasterConfig,
    want_image: bool,
) -> Result<(Option<ImageRGB>, WeightMap)> {
    let (width, height) = (cam.width, cam.height);
    let mut image = want_image.then(|| ImageRGB::new(cam.image_id, width, height));
    if scene.is_empty() {
        return Ok((image, WeightMap::empty(cam.image_id, width, height)));
    }
    let splats = prepare_splats(scene, cam)?;

    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut tile_lists: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (i, s) in splats.iter().enumerate() {
        for ty in s.y0 / TILE_SIZE..=s.y1 / TILE_SIZE {
            for tx in s.x0 / TILE_SIZE..=s.x1 / TILE_SIZE {
                tile_lists[(ty * tiles_x + tx) as usize].push(i as u32);
            }
        }
    }

    let shade = |t: usize| {
        let (tx, ty) = (t as u32 % tiles_x, t as u32 / tiles_x);
        shade_tile(&splats, &tile_lists[t], tx, ty, width, height, config.mode)
    };
    let tiles: Vec<TileOutput> = if config.parallel_tiles {
        (0..tile_lists.len()).into_par_iter().map(shade).collect()
    } else {
        (0..tile_lists.len()).map(shade).collect()
    };

    // scatter tile outputs into global pixel order
    let n = width as usize * height as usize;
    let mut offsets = vec![0u32; n + 1];
    let mut per_pixel_total = vec![0.0; n];
    for tile in &tiles {
        for e in &tile.entries {
            offsets[e.pixel as usize + 1] += 1;
        }
        for &(p, total, rgb) in &tile.shaded {
            per_pixel_total[p as usize] = total;
            if let Some(img) = image.as_mut() {
                if total > NORMALIZE_EPS {
                    img.pixels[p as usize] = rgb.map(|c| (c / total) as f32);
                }
            }
        }
    }
    for p in 0..n {
        offsets[p + 1] += offsets[p];
    }
    let mut cursor: Vec<u32> = offsets[..n].to_vec();
    let placeholder = WeightEntry {
        pixel: 0,
        gaussian_id: 0,
        weight: 0.0,
    };
    let mut entries = vec![placeholder; offsets[n] as usize];
    for tile in tiles {
        for e in tile.entries {
            let slot = &mut cursor[e.pixel as usize];
            entries[*slot as usize] = e;
            *slot += 1;
        }
    }
    let wm = WeightMap {
        image_id: cam.image_id,
        width,
        height,
        entries,
        offsets,
        per_pixel_total,
    };
    Ok((image, wm))
}

/// Renders the view and captures the contribution weights.
pub fn rasterize(scene: &GaussianScene, cam: &CameraPose) -> Result<(ImageRGB, WeightMap)> {
    rasterize_with(scene, cam, RasterConfig::default())
}

pub fn rasterize_with(
    scene: &GaussianScene,
    cam: &CameraPose,
    config: RasterConfig,
) -> Result<(ImageRGB, WeightMap)> {
    let (img, wm) = render(scene, cam, config, true)?;
    Ok((img.expect("image requested"), wm))
}

/// Captures weights without producing colours.
pub fn rasterize_weights_only(scene: &GaussianScene, cam: &CameraPose) -> Result<WeightMap> {
    rasterize_weights_only_with(scene, cam, RasterConfig::default())
}

pub fn rasterize_weights_only_with(
    scene: &GaussianScene,
    cam: &CameraPose,
    config: RasterConfig,
) -> Result<WeightMap> {
    Ok(render(scene, cam, config, false)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Gaussian3D, Intrinsics};
    use nalgebra::{Matrix3, Quaternion, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam(w: u32, h: u32) -> CameraPose {
        CameraPose {
            image_id: 3,
            intrinsics: Intrinsics { fx: 40.0, fy: 40.0, cx: w as f64 / 2.0, cy: h as f64 / 2.0 },
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            width: w,
            height: h,
        }
    }

    fn g(mean: [f64; 3], scale: f64, opacity: f64, color: [f64; 3]) -> Gaussian3D {
        Gaussian3D {
            id: 0,
            mean: Vector3::from(mean),
            scale: Vector3::repeat(scale),
            rotation: Quaternion::identity(),
            opacity,
            color: Vector3::from(color),
        }
    }

    fn proj_at(mu: [f64; 2], cov: [f64; 3]) -> Projected2D {
        Projected2D {
            gaussian_id: 0,
            mu2d: Vector2::from(mu),
            cov2d: cov,
            depth: 1.0,
            visible: true,
        }
    }

    #[test]
    fn weight_at_centre_is_alpha_clamp() {
        let p = proj_at([10.0, 10.0], [4.0, 0.0, 4.0]);
        let w = gaussian_weight_at(&p, 1.0, Vector2::new(10.0, 10.0), 1.0).unwrap();
        assert_eq!(w, 0.99);
    }

    #[test]
    fn weight_at_one_sigma() {
        let p = proj_at([10.0, 10.0], [4.0, 0.0, 4.0]);
        let w = gaussian_weight_at(&p, 1.0, Vector2::new(12.0, 10.0), 1.0).unwrap();
        assert!((w - (-0.5f64).exp()).abs() < 1e-12);
        assert!((w - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn zero_opacity_has_no_weight() {
        let p = proj_at([10.0, 10.0], [4.0, 0.0, 4.0]);
        for x in [8.0, 10.0, 11.5] {
            assert_eq!(gaussian_weight_at(&p, 0.0, Vector2::new(x, 10.0), 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn singular_covariance_is_numeric_error() {
        let p = proj_at([0.0, 0.0], [1.0, 1.0, 1.0]);
        assert!(matches!(
            gaussian_weight_at(&p, 1.0, Vector2::zeros(), 1.0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn single_gaussian_colour_is_exact() {
        let scene = GaussianScene::new(vec![g([0.0, 0.0, 2.0], 0.1, 0.7, [1.0, 0.0, 0.0])]).unwrap();
        let (img, wm) = rasterize(&scene, &cam(32, 32)).unwrap();
        assert!(!wm.entries.is_empty());
        for e in &wm.entries {
            assert_eq!(img.pixels[e.pixel as usize], [1.0, 0.0, 0.0]);
        }
        // uncovered pixels stay black
        assert_eq!(img.pixels[0], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn equal_weights_blend_evenly() {
        // literal mode has no occlusion, so two coincident Gaussians weigh the same
        let scene = GaussianScene::new(vec![
            g([0.0, 0.0, 2.0], 0.1, 0.5, [1.0, 0.0, 0.0]),
            g([0.0, 0.0, 2.0], 0.1, 0.5, [0.0, 0.0, 1.0]),
        ])
        .unwrap();
        let cfg = RasterConfig { mode: WeightMode::LiteralFalloff, parallel_tiles: false };
        let (img, _) = rasterize_with(&scene, &cam(32, 32), cfg).unwrap();
        let c = img.get(16, 16);
        assert_eq!(c, [0.5, 0.0, 0.5]);
    }

    #[test]
    fn empty_scene_gives_empty_map() {
        let wm = rasterize_weights_only(&GaussianScene::default(), &cam(16, 16)).unwrap();
        assert!(wm.entries.is_empty());
        assert!(wm.per_pixel_total.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn fully_occluded_gaussian_is_absent() {
        let mut gs = Vec::new();
        for i in 0..4 {
            gs.push(g([0.0, 0.0, 1.0 + 0.1 * i as f64], 0.5, 1.0, [1.0, 1.0, 1.0]));
        }
        gs.push(g([0.0, 0.0, 3.0], 0.05, 1.0, [0.0, 1.0, 0.0]));
        let scene = GaussianScene::new(gs).unwrap();
        let wm = rasterize_weights_only(&scene, &cam(32, 32)).unwrap();
        let centre = (16 * 32 + 16) as usize;
        assert!(wm.pixel_entries(centre).iter().all(|e| e.gaussian_id != 4));
        assert!(wm.entries.iter().all(|e| e.gaussian_id != 4));
    }

    fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> GaussianScene {
        let gs = (0..n)
            .map(|_| Gaussian3D {
                id: 0,
                mean: Vector3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), rng.gen_range(1.5..4.0)),
                scale: Vector3::new(rng.gen_range(0.02..0.2), rng.gen_range(0.02..0.2), rng.gen_range(0.02..0.2)),
                rotation: nalgebra::UnitQuaternion::from_euler_angles(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                )
                .into_inner(),
                opacity: rng.gen_range(0.05..1.0),
                color: Vector3::new(rng.gen(), rng.gen(), rng.gen()),
            })
            .collect();
        GaussianScene::new(gs).unwrap()
    }

    /// Every pixel against every splat, no tile lists.
    fn naive(scene: &GaussianScene, cam: &CameraPose) -> Vec<WeightEntry> {
        let splats = prepare_splats(scene, cam).unwrap();
        let mut out = Vec::new();
        let mut scratch = Vec::new();
        for y in 0..cam.height {
            for x in 0..cam.width {
                scratch.clear();
                shade_pixel(splats.iter(), x, y, WeightMode::Composited, &mut scratch);
                out.extend(scratch.iter().map(|&(gaussian_id, weight)| WeightEntry {
                    pixel: y * cam.width + x,
                    gaussian_id,
                    weight,
                }));
            }
        }
        out
    }

    #[test]
    fn tiled_equals_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let scene = random_scene(&mut rng, 50);
            let c = cam(32, 32);
            let wm = rasterize_weights_only(&scene, &c).unwrap();
            assert_eq!(wm.entries, naive(&scene, &c));
        }
    }

    #[test]
    fn parallel_tiles_identical_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scene = random_scene(&mut rng, 100);
        let c = cam(64, 48);
        let a = rasterize_weights_only(&scene, &c).unwrap();
        let b = rasterize_weights_only(&scene, &c).unwrap();
        let cfg = RasterConfig { parallel_tiles: true, ..Default::default() };
        let p = rasterize_weights_only_with(&scene, &c, cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, p);
        let (_, full) = rasterize(&scene, &c).unwrap();
        assert_eq!(a, full);
    }

    #[test]
    fn weights_bounded_and_telescoping() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scene = random_scene(&mut rng, 100);
        let c = cam(48, 48);
        let wm = rasterize_weights_only(&scene, &c).unwrap();
        for p in 0..wm.num_pixels() {
            let es = wm.pixel_entries(p);
            let mut t = 1.0;
            let mut sum = 0.0;
            for e in es {
                assert!(e.weight > WEIGHT_CUTOFF && e.weight <= ALPHA_MAX);
                // recover alpha from the weight and the running transmittance
                let alpha = e.weight / t;
                t *= 1.0 - alpha;
                sum += e.weight;
            }
            assert!((sum - wm.per_pixel_total[p]).abs() < 1e-12);
            assert!((sum - (1.0 - t)).abs() < 1e-9, "pixel {p}: {sum} vs {}", 1.0 - t);
            assert!(sum <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn dump_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scene = random_scene(&mut rng, 30);
        let wm = rasterize_weights_only(&scene, &cam(32, 32)).unwrap();
        let mut buf = Vec::new();
        wm.write_dump(&mut buf).unwrap();
        let back = WeightMap::read_dump(buf.as_slice()).unwrap();
        assert_eq!(back.entries.len(), wm.entries.len());
        assert_eq!(back.offsets, wm.offsets);
        for (a, b) in back.entries.iter().zip(&wm.entries) {
            assert_eq!((a.pixel, a.gaussian_id), (b.pixel, b.gaussian_id));
            assert_eq!(a.weight, b.weight as f32 as f64);
        }
        buf.truncate(buf.len() - 3);
        assert!(WeightMap::read_dump(buf.as_slice()).is_err());
    }
}
