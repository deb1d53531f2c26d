//! Minimum-distance estimation of drift parameters in SDEs driven by fractional Brownian motion.
//!
//! A drift family `b(θ, ·)` is fitted to one long discretely observed stationary path by
//! simulating an Euler scheme for each candidate `θ` and comparing the two empirical
//! occupation measures. The pieces:
//!
//! * [`fbm`] samples fractional Gaussian noise by circulant embedding.
//! * [`drift`] holds the built-in drift families and the [`drift::DriftFamily`] trait for your own.
//! * [`simulate`] runs constant- and decreasing-step Euler schemes.
//! * [`distances`] has Wasserstein, the characteristic-function distance and the smooth `d_s` family.
//! * [`estimator`] does grid search, projected SGD and the convergence-rate study.
//! * [`experiment`] is the configuration and run layer behind the `fbm-mde` binary.
//!
//! ```no_run
//! use fbm_mde::experiment::ExperimentConfig;
//! use fbm_mde::estimator::grid_estimate;
//!
//! let cfg = ExperimentConfig::default();
//! let obs = cfg.observations().unwrap();
//! let est = grid_estimate(&obs, &cfg.contrast_config().unwrap()).unwrap();
//! println!("theta_hat = {:?}", est.theta_hat);
//! ```

// `!(x > 0.0)` is how NaN gets rejected along with the rest
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distances;
pub mod drift;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod fbm;
pub mod quadrature;
pub mod rng;
pub mod simulate;
