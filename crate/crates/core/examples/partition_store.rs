//! Build a vector store from an embedded scene, cut it into grid cells, save
//! the snapshots and load back only the cells around a point.
//!
//!     cargo run --release --example partition_store -- /tmp/parts

use nalgebra::Vector3;
use slag::eval::{generate_fixture, FixtureSpec};
use slag::pipeline::{encode_scene, EncodeConfig};
use slag::vecstore::{build_store, load_partition_manifest, partition_store, select_partitions, write_partitions};

fn main() -> slag::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "parts".into());
    let fx = generate_fixture(&FixtureSpec { embedding_dim: 64, ..FixtureSpec::default() })?;
    let (table, _) = encode_scene(&fx.scene, &fx.view_source(), &EncodeConfig::default())?;
    let store = build_store(&table, &fx.scene)?;

    let parts = partition_store(&store, 1.0)?;
    for p in &parts {
        println!("cell {:?}: {} records", p.cell, p.store.len());
    }
    let manifest_path = write_partitions(&dir, &parts, 1.0, store.dim())?;
    println!("wrote {}", manifest_path.display());

    // a device near the first object only needs the cells around it
    let manifest = load_partition_manifest(&manifest_path)?;
    let snaps = manifest.load_snapshots(manifest_path.parent().unwrap())?;
    let center = fx.scene.gaussians()[0].mean;
    let local = select_partitions(&snaps, center, 0.75)?;
    println!(
        "ball at ({:.2}, {:.2}, {:.2}) r=0.75 selects {} of {} records",
        center.x, center.y, center.z,
        local.len(),
        store.len()
    );
    let origin = select_partitions(&snaps, Vector3::zeros(), 0.1)?;
    println!("ball at the origin selects {} records", origin.len());
    Ok(())
}
