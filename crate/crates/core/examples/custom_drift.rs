//! Plugging in a drift family of your own: `b_θ(y) = −θ y − y³`, estimated
//! from synthetic data on a grid.

use std::sync::Arc;

use fbm_mde::distances::DistanceKind;
use fbm_mde::drift::{check_dissipativity, Coercivity, DriftFamily, DriftModel, ParameterBox};
use fbm_mde::estimator::grid_estimate_with_model;
use fbm_mde::experiment::ExperimentConfig;
use fbm_mde::simulate::synthesize_observations;

#[derive(Debug)]
struct Cubic;

impl DriftFamily for Cubic {
    fn name(&self) -> &str {
        "cubic"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn drift(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = -theta[0] * x[0] - x[0].powi(3);
    }
    fn dtheta(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = -x[0];
    }
    fn dx(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = -theta[0] - 3.0 * x[0] * x[0];
    }
}

fn main() -> fbm_mde::error::Result<()> {
    let model = DriftModel::new(Arc::new(Cubic), ParameterBox::interval(0.5, 4.0)?, Coercivity::Strong)?;
    let report = check_dissipativity(&model, 10_000, 3.0, 0);
    println!(
        "contraction rate ≈ {:.3}, violations {}",
        report.alpha_hat, report.violations
    );

    let config = ExperimentConfig {
        distance: DistanceKind::Wasserstein { p: 2.0 },
        ..ExperimentConfig::default()
    };
    let obs = synthesize_observations(&model, &[1.5], &[0.0], config.hurst, 1e-3, 30_000, 10, 5)?;
    let result = grid_estimate_with_model(model, &obs, &config.contrast_config()?)?;
    println!("θ̂ = {:.2} (true 1.5)", result.theta_hat[0]);
    Ok(())
}
