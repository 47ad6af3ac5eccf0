//! Render a handful of Gaussians, capture the per-pixel contribution weights
//! and rebuild the image from them.
//!
//!     cargo run --example render_weights -- /tmp/render.png

use nalgebra::{UnitQuaternion, Vector3};
use slag::rasterizer::rasterize;
use slag::scene::{CameraPose, Gaussian3D, GaussianScene, Intrinsics};

fn main() -> slag::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "render.png".into());
    let blob = |x: f64, y: f64, z: f64, color: [f64; 3]| Gaussian3D {
        id: 0,
        mean: Vector3::new(x, y, z),
        scale: Vector3::new(0.4, 0.25, 0.1),
        rotation: UnitQuaternion::from_euler_angles(0.0, 0.0, 0.6).into_inner(),
        opacity: 0.8,
        color: Vector3::from(color),
    };
    let scene = GaussianScene::new(vec![
        blob(-0.5, 0.0, 0.0, [0.9, 0.2, 0.2]),
        blob(0.4, 0.2, 0.5, [0.2, 0.8, 0.3]),
        blob(0.0, -0.4, -0.5, [0.2, 0.3, 0.9]),
    ])?;
    let k = Intrinsics { fx: 120.0, fy: 120.0, cx: 64.0, cy: 64.0 };
    let cam = CameraPose::look_at(0, Vector3::new(0.0, 0.0, 5.0), Vector3::zeros(), Vector3::y(), k, 128, 128);

    let (image, weights) = rasterize(&scene, &cam)?;
    println!("{} weight entries over {} pixels", weights.entries.len(), weights.num_pixels());

    // sum(w * c) / sum(w) per pixel must give back the rendered colour
    let mut worst = 0.0f64;
    for p in 0..weights.num_pixels() {
        let entries = weights.pixel_entries(p);
        let total: f64 = entries.iter().map(|e| e.weight).sum();
        if total <= 1e-6 {
            continue;
        }
        for ch in 0..3 {
            let c: f64 = entries
                .iter()
                .map(|e| e.weight * scene.gaussians()[e.gaussian_id as usize].color[ch])
                .sum::<f64>()
                / total;
            worst = worst.max((c - image.pixels[p][ch] as f64).abs());
        }
    }
    println!("max recombination error: {worst:.2e}");
    image.save_png(&out)?;
    println!("wrote {out}");
    Ok(())
}
