//! Encode throughput across worker counts and query latency across store
//! sizes, on synthetic data.
//!
//!     cargo run --release --example scaling_bench -- 20000 40

use slag::bench::{bench_encode, bench_query, encode_workload, WorkloadSpec};

fn main() -> slag::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let gaussians = args.next().unwrap_or(20_000);
    let images = args.next().unwrap_or(40);
    let spec = WorkloadSpec { gaussians, images, ..WorkloadSpec::default() };
    let (scene, views) = encode_workload(&spec)?;

    println!("workers  seconds  speedup  hash");
    for r in bench_encode(&scene, &views, &[1, 2, 4])? {
        println!("{:>7}  {:>7.3}  {:>7.2}  {:016x}", r.workers, r.time.as_secs_f64(), r.speedup, r.hash);
    }
    println!();
    println!("records  top-100 ms  threshold ms");
    for r in bench_query(&[1_000, 10_000, 100_000], spec.embedding_dim, 100, 5, 1)? {
        println!("{:>7}  {:>10.2}  {:>12.2}", r.size, r.topk.as_secs_f64() * 1e3, r.threshold.as_secs_f64() * 1e3);
    }
    Ok(())
}
