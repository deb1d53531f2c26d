//! Exact fractional Gaussian noise and a check of its autocovariance.
//!
//! cargo run --release --example fgn_sampling -- 0.7

use fbm_mde::fbm::{autocovariance_report, sample_fbm_path, FgnSampler, HurstParameter};

fn main() -> fbm_mde::error::Result<()> {
    let h: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let hurst = HurstParameter::new(h)?;
    let n = 100_000;

    let sampler = FgnSampler::new(n, hurst)?;
    println!(
        "H = {h}: circulant embedding of size {} for {n} increments",
        sampler.embedding_size()
    );
    let fgn = sampler.sample(1.0, 1, 42)?;

    println!("{:>4} {:>12} {:>12} {:>8}", "lag", "empirical", "exact", "z");
    for row in autocovariance_report(&fgn, 8) {
        let z = (row.empirical - row.theoretical) / row.stderr;
        println!(
            "{:>4} {:>12.6} {:>12.6} {:>8.2}",
            row.lag, row.empirical, row.theoretical, z
        );
    }

    // same noise summed into a path on [0, 1]
    let path = sample_fbm_path(1000, hurst, 1e-3, 1, 42)?;
    println!("B(1) = {:.4}", path.row(path.len() - 1)[0]);
    Ok(())
}
