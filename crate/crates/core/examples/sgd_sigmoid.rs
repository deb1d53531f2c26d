//! Projected minibatch SGD on the two-dimensional sigmoid model, one trace
//! per step scale and scheme start.

use fbm_mde::drift::ModelSpec;
use fbm_mde::estimator::{sgd_run, SgdObjective};
use fbm_mde::experiment::ExperimentConfig;

fn main() -> fbm_mde::error::Result<()> {
    let config = ExperimentConfig {
        model: ModelSpec::Sigmoid2d { epsilon: 0.1 },
        theta0: vec![1.0],
        ..ExperimentConfig::default()
    };
    let obs = config.observations()?;
    let model = config.model.build()?;
    for z0 in config.sgd_starts()? {
        for &gamma0 in &config.sgd.gamma0 {
            let sc = config.sgd_config(gamma0, z0.clone());
            let objective = SgdObjective::new(model.clone(), &obs, &sc)?;
            let result = sgd_run(&objective, &sc, config.seeds().sgd_draws)?;
            let at = |i: usize| result.trace[i].theta[0];
            println!(
                "γ0={gamma0:>5} z0={z0:?}: θ after 0/10/50/100 steps = {:.3} {:.3} {:.3} {:.3}",
                at(0),
                at(10),
                at(50),
                at(100)
            );
        }
    }
    Ok(())
}
