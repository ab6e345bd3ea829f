//! Scan throughput smoke check. Ignored by default because wall-clock
//! assertions are hardware dependent; run with
//! `cargo test --release -p dcovscan-core --test scaling -- --ignored --nocapture`.

use std::time::Instant;

use dcovscan_core::fdr::AlgorithmId;
use dcovscan_core::pipeline::{run_scan, PipelineConfig};
use dcovscan_core::sim::synthetic_scan_study;

/// The response-side distance matrix is shared across predictors, so a
/// 10⁴-SNP scan should complete quickly and speed up with added workers.
#[test]
#[ignore]
fn scan_scaling_smoke() {
    let (genotypes, phenotypes) = synthetic_scan_study(100, 10_000, 20, 30, 0.01, 42).unwrap();
    let workers_available = std::thread::available_parallelism().map_or(2, |n| n.get());

    let mut elapsed = Vec::new();
    for workers in [1, workers_available] {
        let config = PipelineConfig {
            algorithm: AlgorithmId::LocfdrT,
            workers,
            ..PipelineConfig::new("unused", "unused", "unused")
        };
        let start = Instant::now();
        let outcome = run_scan(&genotypes, &phenotypes, &config).unwrap();
        let wall = start.elapsed().as_secs_f64();
        println!("workers={workers}: {wall:.2}s for {} predictors", outcome.report.m);
        elapsed.push(wall);
    }
    let speedup = elapsed[0] / elapsed[1];
    println!("speedup with {workers_available} workers: {speedup:.2}x");
    if workers_available >= 4 {
        assert!(speedup >= 2.5, "expected >= 2.5x speedup, got {speedup:.2}x");
    } else if workers_available >= 2 {
        assert!(speedup >= 1.3, "expected >= 1.3x speedup, got {speedup:.2}x");
    }
}
