//! How much latency does the gateway itself add to an agent step?
//!
//! Upstream and correction backend answer instantly in-process and the time
//! spent inside them is subtracted, so the numbers cover only the gateway's
//! own work.
//!
//! ```not_rust
//! cargo run --release -p aligner-gate --example measure_overhead -- 1000
//! ```

use aligner_gate::gateway::measure_overhead;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let r = measure_overhead(n).await?;
    println!(
        "n={} p50={:.3}ms p95={:.3}ms max={:.3}ms mean={:.3}ms",
        r.n, r.p50_ms, r.p95_ms, r.max_ms, r.mean_ms
    );
    Ok(())
}
