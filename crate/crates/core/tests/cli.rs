use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use slag::pipeline::EmbeddingTable;
use slag::providers::{save_maskset, Bitmap, Mask, MaskSet};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn keys(&self) -> BTreeMap<String, String> {
        self.stdout
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn num(&self, key: &str) -> f64 {
        let keys = self.keys();
        let v = keys.get(key).unwrap_or_else(|| panic!("no {key} in\n{}", self.stdout));
        v.parse().unwrap()
    }
}

fn slag<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_slag")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Run {
    let r = slag(args);
    assert_eq!(r.code, 0, "stdout:\n{}\nstderr:\n{}", r.stdout, r.stderr);
    r
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small fixture written to `dir/data`, encoded to `dir/table.bin`.
fn prepared(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    ok(&[
        "gen-fixture", "--out-dir", p(&data), "--objects", "3", "--gaussians-per-object", "60", "--views", "4",
        "--width", "48", "--height", "48", "--dim", "32", "--mask-scale", "2",
    ]);
    let table = dir.join("table.bin");
    ok(&[
        "encode", "--scene", p(&data.join("scene.ply")), "--manifest", p(&data.join("manifest.toml")), "--out",
        p(&table),
    ]);
    (data, table)
}

#[test]
fn full_flow() {
    let dir = tempfile::tempdir().unwrap();
    let (data, table) = prepared(dir.path());
    assert!(data.join("gen-fixture.config.toml").is_file());
    assert!(dir.path().join("table.bin.config.toml").is_file());

    let parts = dir.path().join("parts");
    let r = ok(&["partition", "--scene", p(&data.join("scene.ply")), "--table", p(&table), "--out-dir", p(&parts), "--cell-size", "0.5"]);
    assert!(r.num("partitions") >= 3.0);
    let records = r.num("records");

    let hits = dir.path().join("hits.tsv");
    let ply = dir.path().join("hits.ply");
    let r = ok(&[
        "query", "--text", "table", "--partitions", p(&parts.join("partitions.toml")), "--lookup",
        p(&data.join("labels.tsv")), "--strict", "--out", p(&hits), "--ply", p(&ply),
    ]);
    assert_eq!(r.num("searched"), records);
    let matches = r.num("matches") as usize;
    assert!(matches > 0);
    assert_eq!(std::fs::read_to_string(&hits).unwrap().lines().count(), matches + 1);
    assert_eq!(slag::scene::load_scene(&ply).unwrap().len(), matches);

    // the same query straight from the table
    let r = ok(&["query", "--text", "table", "--scene", p(&data.join("scene.ply")), "--table", p(&table)]);
    assert_eq!(r.num("matches") as usize, matches);

    let report = dir.path().join("binary.txt");
    let r = ok(&[
        "eval", "--protocol", "binary", "--scene", p(&data.join("scene.ply")), "--table", p(&table), "--labels",
        p(&data.join("labels.txt")), "--lookup", p(&data.join("labels.tsv")), "--manifest",
        p(&data.join("manifest.toml")), "--gt-dir", p(&data.join("gt")), "--out", p(&report),
    ]);
    assert_eq!(r.num("query_views"), 12.0);
    assert!(r.num("miou") > 0.95);
    assert_eq!(r.num("macc"), 1.0);
    assert!(std::fs::read_to_string(&report).unwrap().contains("miou = "));

    let r = ok(&[
        "eval", "--protocol", "multiclass", "--scene", p(&data.join("scene.ply")), "--table", p(&table), "--labels",
        p(&data.join("labels.txt")), "--points", p(&data.join("points.txt")), "--segments",
        p(&data.join("segments.txt")),
    ]);
    assert!(r.num("raw_miou") > 0.95);
    assert!(r.num("filtered_miou") >= r.num("raw_miou"));
}

#[test]
fn ground_truth_as_predictions_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-fixture", "--out-dir", p(&data), "--objects", "3", "--gaussians-per-object", "40", "--views", "3", "--width", "32", "--height", "32"]);
    let points = data.join("points.txt");
    let r = ok(&[
        "eval", "--protocol", "multiclass", "--labels", p(&data.join("labels.txt")), "--points", p(&points),
        "--predictions", p(&points), "--subset", "0,2",
    ]);
    assert_eq!(r.num("raw_miou"), 1.0);
    assert_eq!(r.num("raw_macc"), 1.0);
    assert_eq!(r.num("classes"), 2.0);
}

#[test]
fn worker_counts_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (data, one) = prepared(dir.path());
    let four = dir.path().join("four.bin");
    let r = ok(&[
        "encode", "--scene", p(&data.join("scene.ply")), "--manifest", p(&data.join("manifest.toml")), "--out",
        p(&four), "--workers", "4", "--chunk-rows", "17",
    ]);
    assert_eq!(r.num("workers"), 4.0);
    let a = EmbeddingTable::load(&one).unwrap();
    let b = EmbeddingTable::load(&four).unwrap();
    assert_eq!(a.coverage.iter().map(|&c| c > 0.0).collect::<Vec<_>>(), b.coverage.iter().map(|&c| c > 0.0).collect::<Vec<_>>());
    for (x, y) in a.embeddings.iter().zip(&b.embeddings) {
        assert!((x - y).abs() <= 1e-5);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, table) = prepared(dir.path());
    let scene = data.join("scene.ply");

    let r = slag(&["encode", "--scene", p(&scene), "--manifest", p(&dir.path().join("nope.toml")), "--out", p(&dir.path().join("x.bin"))]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("manifest"));

    let r = slag(&["partition", "--scene", p(&scene), "--table", p(&table), "--out-dir", p(&dir.path().join("p")), "--cell-size", "0"]);
    assert_eq!(r.code, 2);

    let r = slag(&["query", "--text", "spaceship", "--scene", p(&scene), "--table", p(&table), "--lookup", p(&data.join("labels.tsv")), "--strict"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("spaceship"));

    // unknown text without --strict is synthesised and simply matches nothing
    let r = ok(&["query", "--text", "spaceship", "--scene", p(&scene), "--table", p(&table), "--lookup", p(&data.join("labels.tsv"))]);
    assert_eq!(r.num("matches"), 0.0);

    let r = slag(&["query", "--text", "lamp", "--scene", p(&scene), "--table", p(&table), "--top-k", "5", "--threshold", "0.3"]);
    assert_eq!(r.code, 2);

    // a table from a different scene
    let wrong = dir.path().join("wrong.bin");
    EmbeddingTable::zeros(7, 32).save(&wrong).unwrap();
    let r = slag(&["query", "--text", "lamp", "--scene", p(&scene), "--table", p(&wrong)]);
    assert_eq!(r.code, 3);

    // ground truth at the wrong resolution
    let gt = dir.path().join("gt");
    std::fs::create_dir_all(&gt).unwrap();
    for i in 0..4 {
        let set = MaskSet { image_id: i, width: 10, height: 10, masks: vec![Mask::new(0, Bitmap::filled(10, 10))] };
        save_maskset(&set, gt.join(format!("{i:04}.rle"))).unwrap();
    }
    let r = slag(&[
        "eval", "--protocol", "binary", "--scene", p(&scene), "--table", p(&table), "--labels", p(&data.join("labels.txt")),
        "--manifest", p(&data.join("manifest.toml")), "--gt-dir", p(&gt),
    ]);
    assert_eq!(r.code, 2, "{}", r.stderr);

    // a truncated embedding file fails inside a worker
    let emb = data.join("embeddings/0001.emb");
    let bytes = std::fs::read(&emb).unwrap();
    std::fs::write(&emb, &bytes[..bytes.len() - 4]).unwrap();
    let r = slag(&[
        "encode", "--scene", p(&scene), "--manifest", p(&data.join("manifest.toml")), "--out",
        p(&dir.path().join("y.bin")), "--workers", "2",
    ]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("worker 1"), "{}", r.stderr);
    assert!(r.stderr.contains("worker 0: ok"), "{}", r.stderr);

    assert_eq!(slag(&["encode", "--bogus"]).code, 2);
}

#[test]
fn config_file_and_saved_config() {
    let dir = tempfile::tempdir().unwrap();
    let (data, table) = prepared(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[query]\nscene = \"data/scene.ply\"\ntable = \"table.bin\"\ntext = \"lamp\"\ntop_k = 3\nout = \"q.tsv\"\n",
    )
    .unwrap();
    let r = ok(&["--config", p(&cfg), "query"]);
    assert_eq!(r.num("matches"), 3.0);

    // flags win over the file
    let r = ok(&["--config", p(&cfg), "query", "--top-k", "5"]);
    assert_eq!(r.num("matches"), 5.0);

    // the saved config replays the run
    let saved = dir.path().join("q.tsv.config.toml");
    let text = std::fs::read_to_string(&saved).unwrap();
    assert!(text.contains("top_k = 5"), "{text}");
    let first = std::fs::read_to_string(dir.path().join("q.tsv")).unwrap();
    std::fs::remove_file(dir.path().join("q.tsv")).unwrap();
    ok(&["--config", p(&saved), "query"]);
    assert_eq!(std::fs::read_to_string(dir.path().join("q.tsv")).unwrap(), first);
    assert!(table.is_file() && data.is_dir());

    std::fs::write(&cfg, "[query]\ntopk = 3\n").unwrap();
    assert_eq!(slag(&["--config", p(&cfg), "query"]).code, 2);
}

#[test]
fn bench_runs_small() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.txt");
    let r = ok(&[
        "bench", "--gaussians", "2000", "--images", "6", "--width", "32", "--height", "32", "--dim", "16",
        "--workers", "1,2", "--store-sizes", "1000,5000", "--top-k", "50", "--queries", "2", "--out", p(&out),
    ]);
    let keys = r.keys();
    assert_eq!(keys["hash.workers_1"].len(), 16);
    assert!(keys.contains_key("topk_ms.records_5000"));
    assert!(std::fs::read_to_string(&out).unwrap().contains("encode_s.workers_2"));
}
