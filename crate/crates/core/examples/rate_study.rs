//! A small Monte-Carlo convergence study: mean squared error of θ̂ as the
//! number of observations grows, with the scheme step and length coupled to n.

use fbm_mde::distances::DistanceKind;
use fbm_mde::estimator::rate_study;
use fbm_mde::experiment::{ExperimentConfig, RateSection};

fn main() -> fbm_mde::error::Result<()> {
    let config = ExperimentConfig {
        distance: DistanceKind::Wasserstein { p: 2.0 },
        rate: RateSection {
            n_values: vec![500, 1000, 2000, 4000],
            replications: 8,
            ..RateSection::default()
        },
        ..ExperimentConfig::default()
    };
    let table = rate_study(&config.rate_config()?)?;
    println!("{:>6} {:>10} {:>8} {:>10} {:>10}", "n", "gamma", "N", "mse", "stderr");
    for r in &table.rows {
        println!(
            "{:>6} {:>10.3e} {:>8} {:>10.4} {:>10.4}",
            r.n,
            r.gamma,
            r.n_scheme,
            r.mse.unwrap_or(f64::NAN),
            r.stderr.unwrap_or(f64::NAN)
        );
    }
    println!("log-log slope: {:.2}", table.slope.unwrap_or(f64::NAN));
    Ok(())
}
