//! Query an embedded scene by label and export the matching Gaussians.
//!
//!     cargo run --release --example text_query -- lamp /tmp/lamp.ply

use slag::eval::{generate_fixture, FixtureSpec};
use slag::pipeline::{encode_scene, EncodeConfig};
use slag::query::{export_matches_ply, run_query, QueryMode, DEFAULT_THRESHOLD};
use slag::vecstore::build_store;

fn main() -> slag::Result<()> {
    let mut args = std::env::args().skip(1);
    let text = args.next().unwrap_or_else(|| "lamp".into());
    let out = args.next().unwrap_or_else(|| "matches.ply".into());

    let fx = generate_fixture(&FixtureSpec::default())?;
    let (table, _) = encode_scene(&fx.scene, &fx.view_source(), &EncodeConfig::default())?;
    let store = build_store(&table, &fx.scene)?;
    let encoder = fx.encoder();

    let hits = run_query(&store, &text, QueryMode::Threshold(DEFAULT_THRESHOLD), &encoder)?;
    let truth = fx.labels.iter().position(|l| *l == text);
    let correct = hits
        .matches
        .iter()
        .filter(|m| Some(fx.gaussian_object[m.gaussian_id as usize] as usize) == truth)
        .count();
    println!("{text:?}: {} matches at cosine >= {DEFAULT_THRESHOLD}, {correct} on the right object", hits.matches.len());

    let top = run_query(&store, &text, QueryMode::TopK(3), &encoder)?;
    for m in &top.matches {
        let [x, y, z] = m.payload.mean;
        println!("  #{:<5} cos {:.4} at ({x:.2}, {y:.2}, {z:.2})", m.gaussian_id, m.similarity);
    }
    export_matches_ply(&hits, &out)?;
    println!("wrote {out}");
    Ok(())
}
