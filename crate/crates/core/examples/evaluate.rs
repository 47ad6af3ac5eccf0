//! Run both evaluation protocols on the synthetic fixture.
//!
//!     cargo run --release --example evaluate

use slag::eval::{
    assign_classes, binary_protocol, generate_fixture, map_to_points, multiclass_metrics, prediction_filter,
    FixtureSpec, DEFAULT_ALPHA_THRESHOLD,
};
use slag::pipeline::{encode_scene, EncodeConfig};
use slag::query::DEFAULT_THRESHOLD;
use slag::vecstore::build_store;

fn main() -> slag::Result<()> {
    let fx = generate_fixture(&FixtureSpec::default())?;
    let (table, _) = encode_scene(&fx.scene, &fx.view_source(), &EncodeConfig::with_workers(2))?;
    let store = build_store(&table, &fx.scene)?;

    let binary = binary_protocol(
        &fx.scene,
        &store,
        &fx.encoder(),
        &fx.binary_queries(),
        DEFAULT_THRESHOLD,
        DEFAULT_ALPHA_THRESHOLD,
    )?;
    println!(
        "binary: {} query-views, mIoU {:.4}, localization {:.4}, pixel acc {:.4}",
        binary.views.len(),
        binary.mean_iou,
        binary.mean_localization,
        binary.mean_pixel_accuracy
    );

    let classes = assign_classes(&table, &fx.label_vectors())?;
    let points = map_to_points(&fx.scene, &classes, &fx.points.points)?;
    let all: Vec<u32> = (0..fx.labels.len() as u32).collect();
    let raw = multiclass_metrics(&points, &fx.points.classes, &all, fx.labels.len())?;
    let filtered = prediction_filter(&points, &fx.segments)?;
    let smooth = multiclass_metrics(&filtered, &fx.points.classes, &all, fx.labels.len())?;
    println!("multiclass: mIoU {:.4} mAcc {:.4}", raw.miou, raw.macc);
    println!("filtered:   mIoU {:.4} mAcc {:.4}", smooth.miou, smooth.macc);
    for c in &raw.classes {
        println!("  {:<10} {:>4} points  iou {:.3}", fx.labels[c.class as usize], c.support, c.iou);
    }
    Ok(())
}
