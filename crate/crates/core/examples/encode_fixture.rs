//! Generate the synthetic fixture, embed it with several workers and check
//! that every covered Gaussian carries its own object's embedding.
//!
//!     cargo run --release --example encode_fixture

use slag::eval::{generate_fixture, FixtureSpec};
use slag::pipeline::{encode_scene, EncodeConfig};
use slag::providers::synth_embedding;

fn main() -> slag::Result<()> {
    let fx = generate_fixture(&FixtureSpec::default())?;
    println!("{} gaussians, {} objects, {} views", fx.scene.len(), fx.labels.len(), fx.views.len());

    let config = EncodeConfig { chunk_rows: Some(256), ..EncodeConfig::with_workers(4) };
    let (table, report) = encode_scene(&fx.scene, &fx.view_source(), &config)?;
    println!(
        "covered {}/{} in {:.3}s ({} chunks)",
        table.covered_count(),
        table.rows,
        report.total().as_secs_f64(),
        report.chunks
    );
    for w in &report.workers {
        println!("  worker {}: {} images, {} masks, busy {:.3}s", w.rank, w.images, w.masks, w.busy_time().as_secs_f64());
    }

    let mut worst = 1.0f64;
    for k in (0..table.rows).filter(|&k| table.is_covered(k)) {
        let label = &fx.labels[fx.gaussian_object[k] as usize];
        let e = synth_embedding(label, table.dim);
        let row = table.row(k);
        let norm = row.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        let cos = row.iter().zip(&e).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() / norm;
        worst = worst.min(cos);
    }
    println!("lowest cosine to own object: {worst:.9}");
    Ok(())
}
