//! The built-in drift families and an empirical dissipativity check.

use fbm_mde::drift::{check_dissipativity, ModelSpec};

fn main() -> fbm_mde::error::Result<()> {
    for key in ["ou", "cosine", "sigmoid2d", "perturbed_ou"] {
        let model = ModelSpec::from_key(key)?.build()?;
        let report = check_dissipativity(&model, 20_000, 5.0, 1);
        println!(
            "{key:>12}: d={} q={} box={:?}..{:?} claimed {:?}",
            model.state_dim(),
            model.param_dim(),
            model.param_box.lower,
            model.param_box.upper,
            model.claimed
        );
        println!(
            "{:>12}  alpha≈{:.3} beta≈{:.3} lipschitz≈{:.3} ({} of {} pairs violate)",
            "", report.alpha_hat, report.beta_hat, report.lipschitz_hat, report.violations, report.n_pairs
        );
    }

    let model = ModelSpec::from_key("cosine")?.build()?;
    let mut b = [0.0];
    model.drift(&[2.0], &[std::f64::consts::FRAC_PI_2], &mut b);
    println!("cosine drift at θ=2, y=π/2: {:.1e}", b[0].abs());
    Ok(())
}
