//! Euler scheme for the fractional Ornstein–Uhlenbeck process: the long-run
//! variance against the exact stationary one, plus `∂_θ Z` along the path.

use fbm_mde::drift::{builtin_ou, fou_stationary_variance, FouOracle};
use fbm_mde::fbm::{FgnSampler, HurstParameter};
use fbm_mde::simulate::{euler_constant, euler_with_sensitivity};

fn main() -> fbm_mde::error::Result<()> {
    let model = builtin_ou();
    let (theta, gamma, n) = (2.0, 1e-2, 200_000);

    for h in [0.3, 0.5, 0.7] {
        let hurst = HurstParameter::new(h)?;
        let noise = FgnSampler::new(n, hurst)?.sample(gamma, 1, 7)?;
        let path = euler_constant(&model, &[theta], &[0.0], gamma, n, &noise)?;
        let tail = &path.states[1000..];
        let var = tail.iter().map(|z| z * z).sum::<f64>() / tail.len() as f64;
        let oracle = FouOracle::new(theta, 1.0, hurst, (0.5, 4.0))?;
        let exact = fou_stationary_variance(&oracle, 20.0, 64)?;
        println!(
            "H={h}: scheme variance {var:.4}, stationary {exact:.4}, limit formula {:.4}",
            oracle.limit_variance()
        );
    }

    let hurst = HurstParameter::new(0.3)?;
    let noise = FgnSampler::new(1000, hurst)?.sample(gamma, 1, 8)?;
    let (path, sens) = euler_with_sensitivity(&model, &[theta], &[1.0], gamma, 1000, &noise)?;
    for k in [0, 10, 100, 1000] {
        println!("k={k:>4}  Z={:+.4}  dZ/dθ={:+.4}", path.state(k)[0], sens[k]);
    }
    Ok(())
}
