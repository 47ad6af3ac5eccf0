//! Write a dataset to disk, then embed it through the manifest exactly as the
//! `slag encode` command does and save the table.
//!
//!     cargo run --release --example dataset_files -- /tmp/fixture

use slag::eval::{generate_fixture, FixtureSpec};
use slag::pipeline::{encode_scene, EmbeddingTable, EncodeConfig};
use slag::providers::{load_maskset, DatasetManifest};
use slag::scene::load_scene;

fn main() -> slag::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixture".into());
    // masks at twice the raster resolution, as with full-size source photos
    let fx = generate_fixture(&FixtureSpec { mask_scale: 2, ..FixtureSpec::default() })?;
    let manifest_path = fx.write(&dir)?;

    let scene = load_scene(format!("{dir}/scene.ply"))?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let masks = load_maskset(&manifest, 0)?;
    println!(
        "{} gaussians, {} images, masks {}x{} rasterized at {}x{}, image 0 has {} masks",
        scene.len(),
        manifest.images.len(),
        masks.width,
        masks.height,
        manifest.raster_resolution.0,
        manifest.raster_resolution.1,
        masks.masks.len()
    );

    let (table, _) = encode_scene(&scene, &manifest, &EncodeConfig::with_workers(2))?;
    let path = format!("{dir}/table.bin");
    table.save(&path)?;
    let back = EmbeddingTable::load(&path)?;
    println!("saved {path}: {} rows x {} dims, reload identical: {}", back.rows, back.dim, back == table);
    Ok(())
}
