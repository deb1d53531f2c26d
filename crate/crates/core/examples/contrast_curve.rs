//! Contrast curve for the fractional OU model: simulate observations at
//! θ0 = 2 and scan the parameter grid with several distances.
//!
//! cargo run --release --example contrast_curve -- 0.3

use fbm_mde::distances::DistanceKind;
use fbm_mde::estimator::grid_estimate;
use fbm_mde::experiment::ExperimentConfig;
use fbm_mde::fbm::HurstParameter;

fn main() -> fbm_mde::error::Result<()> {
    let h: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let mut config = ExperimentConfig {
        hurst: HurstParameter::new(h)?,
        ..ExperimentConfig::default()
    };
    let obs = config.observations()?;
    println!("{} observations every {} time units", obs.len(), obs.kappa());

    for key in ["w1", "w2", "w4", "ds"] {
        config.distance = key.parse::<DistanceKind>()?;
        let result = grid_estimate(&obs, &config.contrast_config()?)?;
        println!(
            "{key:>4}: θ̂ = {:.2}, min contrast {:.4e}",
            result.theta_hat[0],
            result.min_contrast()
        );
        if key == "w2" {
            for (theta, value) in result.grid.iter().zip(&result.contrast_values).step_by(10) {
                println!("        θ = {:.2}  F = {value:.4e}", theta[0]);
            }
        }
    }
    Ok(())
}
