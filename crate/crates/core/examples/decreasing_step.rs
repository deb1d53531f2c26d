//! Grid estimate with a decreasing-step scheme `γ_k = γ k^{−ρ}` and a
//! step-weighted occupation measure.

use fbm_mde::distances::DistanceKind;
use fbm_mde::estimator::grid_estimate_decreasing;
use fbm_mde::experiment::ExperimentConfig;
use fbm_mde::simulate::check_hyp_gamma;

fn main() -> fbm_mde::error::Result<()> {
    let config = ExperimentConfig {
        decreasing: true,
        gamma: 0.2,
        rho: 1.0 / 3.0,
        n_scheme: 20_000,
        distance: DistanceKind::Wasserstein { p: 2.0 },
        ..ExperimentConfig::default()
    };
    let schedule = config.schedule()?;
    let report = check_hyp_gamma(&schedule, 2.0, config.hurst, 100_000);
    println!("step-sum condition holds: {}", report.converges);
    for (k, s) in &report.partial_sums {
        println!("  partial sum up to {k:>6}: {s:.5}");
    }
    println!("horizon s_N = {:.1}", schedule.times(config.n_scheme)[config.n_scheme]);

    let obs = config.observations()?;
    let result = grid_estimate_decreasing(&obs, &config.contrast_config()?)?;
    println!("θ̂ = {:.2} (true 2)", result.theta_hat[0]);
    Ok(())
}
