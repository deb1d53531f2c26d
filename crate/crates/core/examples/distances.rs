//! Wasserstein, characteristic-function and weak-★ distances between two
//! empirical measures.

use fbm_mde::distances::{d_s, dcf, wasserstein_1d, DcfMode, DcfSpec, DsFamily, EmpiricalMeasure};
use fbm_mde::rng::rng_from_seed;
use rand_distr::{Distribution, Normal};

fn sample(mean: f64, sd: f64, n: usize, seed: u64) -> EmpiricalMeasure {
    let mut rng = rng_from_seed(seed);
    let law = Normal::new(mean, sd).unwrap();
    EmpiricalMeasure::uniform(1, (0..n).map(|_| law.sample(&mut rng)).collect()).unwrap()
}

fn main() -> fbm_mde::error::Result<()> {
    let base = sample(0.0, 1.0, 5000, 1);
    println!(
        "{:>10} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "shift", "W1", "W2", "W4", "dCF,2", "d_s"
    );
    for shift in [0.0, 0.1, 0.5, 1.0, 2.0] {
        let other = sample(shift, 1.0, 5000, 2);
        println!(
            "{shift:>10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            wasserstein_1d(&base, &other, 1.0)?,
            wasserstein_1d(&base, &other, 2.0)?,
            wasserstein_1d(&base, &other, 4.0)?,
            dcf(&base, &other, &DcfSpec::quadrature(2.0))?,
            d_s(&base, &other, &DsFamily::default())?.value,
        );
    }

    // in two dimensions the kernel integral is sampled instead
    let a = EmpiricalMeasure::uniform(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0])?;
    let b = EmpiricalMeasure::uniform(2, vec![0.5, 0.5, 1.5, 0.5])?;
    let spec = DcfSpec {
        p: 2.0,
        mode: DcfMode::MonteCarlo {
            m_draws: 100_000,
            seed: 3,
        },
    };
    println!("2-D dCF,2 (Monte Carlo): {:.4}", dcf(&a, &b, &spec)?);
    Ok(())
}
