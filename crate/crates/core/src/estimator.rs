//! Minimum-distance estimation of the drift parameter.
//!
//! The contrast compares the empirical measure of the observations with the
//! occupation measure of an Euler scheme run at `θ` on one frozen noise path:
//! `F_d(θ) = d((1/n) Σ δ_{Y_{t_k}}, (1/N) Σ δ_{Z^θ_k})`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::{DistanceKind, DistanceSettings, EmpiricalMeasure, GpSampler1d, PreparedDistance};
use crate::drift::{DriftModel, ModelSpec};
use crate::error::{Error, Result};
use crate::fbm::{FgnSampler, FgnSequence, HurstParameter, NonuniformIncrements};
use crate::rng::{derive_seed, streams};
use crate::simulate::{
    check_hyp_gamma, euler_constant, euler_decreasing, euler_with_sensitivity, sample_schedule_noise,
    synthesize_observations, NoiseSource, ObservationSet, StepSchedule,
};

/// Candidate parameters: an explicit list, or a regular grid over the model
/// box (or a sub-box of it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Explicit {
        points: Vec<Vec<f64>>,
    },
    Spacing {
        spacing: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<Vec<f64>>,
    },
}

impl GridSpec {
    pub fn spacing(spacing: f64) -> Self {
        Self::Spacing {
            spacing,
            lower: None,
            upper: None,
        }
    }

    /// Grid points in lexicographic order (explicit lists keep their order).
    pub fn resolve(&self, model: &DriftModel) -> Result<Vec<Vec<f64>>> {
        let points = match self {
            Self::Explicit { points } => points.clone(),
            Self::Spacing { spacing, lower, upper } => {
                let mut sub = model.param_box.clone();
                if let Some(l) = lower {
                    sub.lower = l.clone();
                }
                if let Some(u) = upper {
                    sub.upper = u.clone();
                }
                let sub = crate::drift::ParameterBox::new(sub.lower, sub.upper)?;
                sub.grid(*spacing)?
            }
        };
        if points.is_empty() {
            return Err(Error::InvalidParameter("parameter grid is empty".into()));
        }
        for theta in &points {
            model.check_theta(theta)?;
        }
        Ok(points)
    }
}

fn default_noise_source() -> NoiseSource {
    NoiseSource::FineGrid { fine_step: 1e-4 }
}

/// Everything the contrast needs besides the observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastConfig {
    pub distance: DistanceKind,
    #[serde(default)]
    pub distance_settings: DistanceSettings,
    pub model: ModelSpec,
    pub hurst: HurstParameter,
    pub schedule: StepSchedule,
    /// Number of scheme states `N` entering the occupation measure.
    pub n_scheme: usize,
    /// Scheme start; defaults to the first observation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<f64>>,
    pub grid: GridSpec,
    /// Seed of the single scheme noise path shared by every `θ`.
    pub noise_seed: u64,
    /// How decreasing-step noise is produced; unused for constant steps.
    #[serde(default = "default_noise_source")]
    pub noise_source: NoiseSource,
}

#[derive(Debug, Clone)]
enum FrozenNoise {
    Uniform {
        gamma: f64,
        noise: FgnSequence,
    },
    Schedule {
        schedule: StepSchedule,
        noise: NonuniformIncrements,
    },
}

/// The contrast `θ ↦ F_d(θ)` with the observation side and the scheme noise
/// fixed once.
#[derive(Debug, Clone)]
pub struct Contrast {
    model: DriftModel,
    reference: PreparedDistance,
    noise: FrozenNoise,
    z0: Vec<f64>,
    n_scheme: usize,
}

fn observation_measure(observations: &ObservationSet) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::uniform(observations.dim, observations.values.clone())
}

impl Contrast {
    pub fn new(observations: &ObservationSet, config: &ContrastConfig) -> Result<Self> {
        Self::with_model(config.model.build()?, observations, config)
    }

    /// As [`Contrast::new`] for a model not reachable through a key.
    pub fn with_model(model: DriftModel, observations: &ObservationSet, config: &ContrastConfig) -> Result<Self> {
        let d = model.state_dim();
        if observations.dim != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: observations.dim,
            });
        }
        if config.n_scheme == 0 || observations.is_empty() {
            return Err(Error::InvalidParameter(
                "need at least one observation and one scheme state".into(),
            ));
        }
        let z0 = config.z0.clone().unwrap_or_else(|| observations.row(0).to_vec());
        let reference = PreparedDistance::new(
            config.distance,
            &config.distance_settings,
            &observation_measure(observations)?,
        )?;
        let n = config.n_scheme;
        let noise = match config.schedule.kind {
            crate::simulate::ScheduleKind::Constant { gamma } if config.schedule.quantum.is_none() => {
                FrozenNoise::Uniform {
                    gamma,
                    noise: FgnSampler::new(n, config.hurst)?.sample(gamma, d, config.noise_seed)?,
                }
            }
            _ => {
                let (schedule, noise) = sample_schedule_noise(
                    &config.schedule,
                    n,
                    config.hurst,
                    d,
                    config.noise_seed,
                    config.noise_source,
                )?;
                FrozenNoise::Schedule { schedule, noise }
            }
        };
        Ok(Self {
            model,
            reference,
            noise,
            z0,
            n_scheme: n,
        })
    }

    pub fn model(&self) -> &DriftModel {
        &self.model
    }

    /// The schedule actually simulated (decreasing steps may be quantized).
    pub fn schedule(&self) -> Result<StepSchedule> {
        match &self.noise {
            FrozenNoise::Uniform { gamma, .. } => StepSchedule::constant(*gamma),
            FrozenNoise::Schedule { schedule, .. } => Ok(*schedule),
        }
    }

    /// Occupation measure of `Z^θ_0, …, Z^θ_{N−1}`, weighted by `γ_{k+1}/s_N`
    /// for decreasing steps.
    pub fn scheme_measure(&self, theta: &[f64]) -> Result<EmpiricalMeasure> {
        let n = self.n_scheme;
        let d = self.model.state_dim();
        match &self.noise {
            FrozenNoise::Uniform { gamma, noise } => {
                let mut path = euler_constant(&self.model, theta, &self.z0, *gamma, n, noise)?;
                path.states.truncate(n * d);
                EmpiricalMeasure::uniform(d, path.states)
            }
            FrozenNoise::Schedule { schedule, noise } => {
                let dp = euler_decreasing(&self.model, theta, &self.z0, schedule, n, noise)?;
                let mut states = dp.path.states;
                states.truncate(n * d);
                EmpiricalMeasure::normalized(d, states, dp.weights)
            }
        }
    }

    pub fn eval(&self, theta: &[f64]) -> Result<f64> {
        self.reference.eval(&self.scheme_measure(theta)?)
    }

    /// Contrast over a grid, in parallel; values come back in grid order.
    pub fn values(&self, grid: &[Vec<f64>]) -> Result<Vec<f64>> {
        grid.par_iter().map(|theta| self.eval(theta)).collect()
    }
}

/// `F_d(θ)` for a single `θ`, sampling the frozen noise on the spot.
pub fn contrast(observations: &ObservationSet, theta: &[f64], config: &ContrastConfig) -> Result<f64> {
    Contrast::new(observations, config)?.eval(theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub runtime_secs: f64,
    pub noise_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_seed: Option<u64>,
    pub distance: DistanceKind,
    pub distance_settings: DistanceSettings,
    pub n_obs: usize,
    pub n_scheme: usize,
    pub schedule: StepSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub theta_hat: Vec<f64>,
    pub grid: Vec<Vec<f64>>,
    pub contrast_values: Vec<f64>,
    pub argmin_index: usize,
    pub diagnostics: Diagnostics,
}

/// Index of the smallest value; exact ties go to the lexicographically
/// smallest `θ`.
pub fn argmin_lexicographic(grid: &[Vec<f64>], values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        let better = values[i] < values[best] || (values[i] == values[best] && lex_less(&grid[i], &grid[best]));
        if better {
            best = i;
        }
    }
    best
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

impl EstimateResult {
    pub fn from_values(grid: Vec<Vec<f64>>, contrast_values: Vec<f64>, diagnostics: Diagnostics) -> Self {
        let argmin_index = argmin_lexicographic(&grid, &contrast_values);
        Self {
            theta_hat: grid[argmin_index].clone(),
            grid,
            contrast_values,
            argmin_index,
            diagnostics,
        }
    }

    pub fn min_contrast(&self) -> f64 {
        self.contrast_values[self.argmin_index]
    }

    /// Writes `theta_1..q,contrast`, one row per grid point.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let q = self.theta_hat.len();
        let header: Vec<String> = (1..=q)
            .map(|j| format!("theta_{j}"))
            .chain(["contrast".to_string()])
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (theta, v) in self.grid.iter().zip(&self.contrast_values) {
            let row: Vec<String> = theta.iter().chain([v]).map(|x| format!("{x:.16e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn run_grid(observations: &ObservationSet, config: &ContrastConfig, model: DriftModel) -> Result<EstimateResult> {
    let start = Instant::now();
    let grid = config.grid.resolve(&model)?;
    let contrast = Contrast::with_model(model, observations, config)?;
    let values = contrast.values(&grid)?;
    let diagnostics = Diagnostics {
        runtime_secs: start.elapsed().as_secs_f64(),
        noise_seed: config.noise_seed,
        observation_seed: observations.seed,
        distance: config.distance,
        distance_settings: config.distance_settings,
        n_obs: observations.len(),
        n_scheme: config.n_scheme,
        schedule: contrast.schedule()?,
    };
    Ok(EstimateResult::from_values(grid, values, diagnostics))
}

/// Constant-step minimum-distance estimator over the configured grid.
pub fn grid_estimate(observations: &ObservationSet, config: &ContrastConfig) -> Result<EstimateResult> {
    grid_estimate_with_model(config.model.build()?, observations, config)
}

pub fn grid_estimate_with_model(
    model: DriftModel,
    observations: &ObservationSet,
    config: &ContrastConfig,
) -> Result<EstimateResult> {
    if !config.schedule.is_constant() {
        return Err(Error::ScheduleInvalid(
            "decreasing schedules go through grid_estimate_decreasing".into(),
        ));
    }
    run_grid(observations, config, model)
}

/// Decreasing-step estimator, using the `γ_{k+1}/s_N`-weighted occupation
/// measure. A constant schedule reduces to [`grid_estimate`].
pub fn grid_estimate_decreasing(observations: &ObservationSet, config: &ContrastConfig) -> Result<EstimateResult> {
    if !config.schedule.is_constant() {
        let report = check_hyp_gamma(&config.schedule, 2.0, config.hurst, 0);
        if !report.converges {
            return Err(Error::ScheduleInvalid(
                "step-sum condition fails for this schedule".into(),
            ));
        }
    }
    run_grid(observations, config, config.model.build()?)
}

fn default_p() -> f64 {
    2.0
}

fn default_minibatch() -> usize {
    30
}

fn default_iterations() -> usize {
    100
}

/// Projected minibatch SGD on `θ ↦ d_CF,p(μ, μ_θ)²` with steps
/// `η_ℓ = γ0 (1 + ℓ)^{−1/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    #[serde(default = "default_p")]
    pub p: f64,
    pub gamma0: f64,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
    #[serde(default = "default_iterations")]
    pub n_iter: usize,
    pub theta_init: Vec<f64>,
    pub hurst: HurstParameter,
    /// Constant step `γ` of the scheme.
    pub scheme_step: f64,
    pub n_scheme: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<f64>>,
    pub noise_seed: u64,
}

impl SgdConfig {
    pub fn step_size(&self, iter: usize) -> f64 {
        self.gamma0 / (1.0 + iter as f64).sqrt()
    }

    fn validate(&self, model: &DriftModel) -> Result<()> {
        if !(self.gamma0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "γ0 must be positive, got {}",
                self.gamma0
            )));
        }
        if self.minibatch == 0 {
            return Err(Error::InvalidParameter("minibatch size must be at least 1".into()));
        }
        if self.n_scheme == 0 {
            return Err(Error::InvalidParameter("need at least one scheme state".into()));
        }
        let min_p = if model.state_dim() == 1 { 0.5 } else { 1.0 };
        if !(self.p > min_p) {
            return Err(Error::InvalidParameter(format!(
                "kernel exponent must exceed {min_p}, got {}",
                self.p
            )));
        }
        model.check_theta(&self.theta_init)
    }
}

/// `Λ(θ, ξ) = ∂_θ |μ(f_ξ) − μ_θ(f_ξ)|²` on frozen scheme noise.
#[derive(Debug, Clone)]
pub struct SgdObjective {
    model: DriftModel,
    observations: Vec<f64>,
    n_obs: usize,
    noise: FgnSequence,
    gamma: f64,
    z0: Vec<f64>,
    n_scheme: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SgdObjective {
    pub fn new(model: DriftModel, observations: &ObservationSet, config: &SgdConfig) -> Result<Self> {
        config.validate(&model)?;
        let d = model.state_dim();
        if observations.dim != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: observations.dim,
            });
        }
        let noise = FgnSampler::new(config.n_scheme, config.hurst)?.sample(config.scheme_step, d, config.noise_seed)?;
        Ok(Self {
            z0: config.z0.clone().unwrap_or_else(|| observations.row(0).to_vec()),
            model,
            observations: observations.values.clone(),
            n_obs: observations.len(),
            noise,
            gamma: config.scheme_step,
            n_scheme: config.n_scheme,
        })
    }

    pub fn model(&self) -> &DriftModel {
        &self.model
    }

    fn observation_cf(&self, xi: &[f64]) -> (f64, f64) {
        let (mut c, mut s) = (0.0, 0.0);
        for y in self.observations.chunks(xi.len()) {
            let (sn, cs) = dot(xi, y).sin_cos();
            c += cs;
            s += sn;
        }
        (c / self.n_obs as f64, s / self.n_obs as f64)
    }

    /// `|μ(f_ξ) − μ_θ(f_ξ)|²`
    pub fn objective(&self, theta: &[f64], xi: &[f64]) -> Result<f64> {
        let path = euler_constant(&self.model, theta, &self.z0, self.gamma, self.n_scheme, &self.noise)?;
        let d = self.model.state_dim();
        let (mut c, mut s) = (0.0, 0.0);
        for k in 0..self.n_scheme {
            let (sn, cs) = dot(xi, &path.states[k * d..(k + 1) * d]).sin_cos();
            c += cs;
            s += sn;
        }
        let n = self.n_scheme as f64;
        let (co, so) = self.observation_cf(xi);
        Ok((c / n - co).powi(2) + (s / n - so).powi(2))
    }

    /// Average of `Λ(θ, ξ_j)` over the rows of `xis` (each of length `d`).
    pub fn gradient(&self, theta: &[f64], xis: &[f64]) -> Result<Vec<f64>> {
        let d = self.model.state_dim();
        let q = self.model.param_dim();
        let (path, sens) =
            euler_with_sensitivity(&self.model, theta, &self.z0, self.gamma, self.n_scheme, &self.noise)?;
        let n = self.n_scheme as f64;
        let mut grad = vec![0.0; q];
        let mut rho_sin = vec![0.0; q];
        let mut rho_cos = vec![0.0; q];
        let draws = xis.len() / d;
        for xi in xis.chunks(d) {
            let (mut c, mut s) = (0.0, 0.0);
            rho_sin.iter_mut().for_each(|v| *v = 0.0);
            rho_cos.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..self.n_scheme {
                let z = &path.states[k * d..(k + 1) * d];
                let (sn, cs) = dot(xi, z).sin_cos();
                c += cs;
                s += sn;
                let dz = &sens[k * d * q..(k + 1) * d * q];
                for j in 0..q {
                    let mut proj = 0.0;
                    for i in 0..d {
                        proj += xi[i] * dz[i * q + j];
                    }
                    rho_sin[j] -= sn * proj;
                    rho_cos[j] += cs * proj;
                }
            }
            let (co, so) = self.observation_cf(xi);
            let (dc, ds) = (c / n - co, s / n - so);
            for j in 0..q {
                grad[j] += 2.0 * dc * rho_sin[j] / n + 2.0 * ds * rho_cos[j] / n;
            }
        }
        grad.iter_mut().for_each(|g| *g /= draws as f64);
        Ok(grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdIterate {
    pub iter: usize,
    pub theta: Vec<f64>,
    /// Step that produced this iterate (0 for the starting point).
    pub step_size: f64,
    /// Norm of the minibatch gradient that produced this iterate.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdResult {
    pub theta_hat: Vec<f64>,
    pub trace: Vec<SgdIterate>,
}

impl SgdResult {
    /// Writes `iter,theta_1..q,step_size,grad_norm`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let q = self.theta_hat.len();
        let mut header = vec!["iter".to_string()];
        header.extend((1..=q).map(|j| format!("theta_{j}")));
        header.extend(["step_size".to_string(), "grad_norm".to_string()]);
        writeln!(out, "{}", header.join(","))?;
        for it in &self.trace {
            let mut row = vec![it.iter.to_string()];
            row.extend(it.theta.iter().map(|x| format!("{x:.16e}")));
            row.push(format!("{:.16e}", it.step_size));
            row.push(format!("{:.16e}", it.grad_norm));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Draws `m` frequencies from `g_p` in dimension `d`.
fn frequency_draws(sampler: &Option<GpSampler1d>, p: f64, d: usize, m: usize, seed: u64) -> Result<Vec<f64>> {
    match sampler {
        Some(s) => Ok(s.sample(m, seed)),
        None => crate::distances::sample_gp(p, d, m, seed),
    }
}

/// Projected minibatch SGD; `seed` drives the frequency draws.
pub fn sgd_estimate(
    model: DriftModel,
    observations: &ObservationSet,
    config: &SgdConfig,
    seed: u64,
) -> Result<SgdResult> {
    let objective = SgdObjective::new(model, observations, config)?;
    sgd_run(&objective, config, seed)
}

/// As [`sgd_estimate`] on a prepared objective.
pub fn sgd_run(objective: &SgdObjective, config: &SgdConfig, seed: u64) -> Result<SgdResult> {
    let model = objective.model();
    config.validate(model)?;
    let d = model.state_dim();
    let sampler = if d == 1 {
        Some(GpSampler1d::new(config.p)?)
    } else {
        None
    };
    let mut theta = config.theta_init.clone();
    let mut trace = vec![SgdIterate {
        iter: 0,
        theta: theta.clone(),
        step_size: 0.0,
        grad_norm: 0.0,
    }];
    for ell in 0..config.n_iter {
        let xis = frequency_draws(&sampler, config.p, d, config.minibatch, derive_seed(seed, ell as u64))?;
        let grad = objective.gradient(&theta, &xis)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { step: ell + 1 });
        }
        let eta = config.step_size(ell);
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= eta * g;
        }
        model.param_box.project(&mut theta);
        trace.push(SgdIterate {
            iter: ell + 1,
            theta: theta.clone(),
            step_size: eta,
            grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        });
    }
    Ok(SgdResult {
        theta_hat: theta,
        trace,
    })
}

fn default_varsigma() -> f64 {
    1.0
}

/// Monte-Carlo study of `E|θ̂ − θ0|^q`, `q = 2/ς`, as `n` grows.
///
/// Scheme settings follow the coupling `γ ∝ n^{−(1−(H∨½))/H}` and
/// `N ∝ n^{(4+2d)/4} γ^{−1}`, anchored so that the smallest `n` runs with
/// `gamma_anchor` and `n_scheme_anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateStudyConfig {
    pub model: ModelSpec,
    pub theta0: Vec<f64>,
    pub hurst: HurstParameter,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub distance: DistanceKind,
    #[serde(default)]
    pub distance_settings: DistanceSettings,
    #[serde(default = "default_varsigma")]
    pub varsigma: f64,
    pub grid: GridSpec,
    /// Observation fine step `γ̲`.
    pub fine_step: f64,
    /// Observations keep every `k0`-th fine state.
    pub subsample: usize,
    pub y0: Vec<f64>,
    pub gamma_anchor: f64,
    pub n_scheme_anchor: usize,
    pub seed: u64,
}

impl RateStudyConfig {
    pub fn q(&self) -> f64 {
        2.0 / self.varsigma
    }

    /// `(γ, N)` for `n` observations.
    pub fn coupling(&self, n: usize, state_dim: usize) -> (f64, usize) {
        let n0 = self.n_values.first().copied().unwrap_or(n) as f64;
        let ratio = n as f64 / n0;
        let h = self.hurst.value();
        let gamma = self.gamma_anchor * ratio.powf(-(1.0 - h.max(0.5)) / h);
        let growth = ratio.powf((4.0 + 2.0 * state_dim as f64) / 4.0) * self.gamma_anchor / gamma;
        let n_scheme = (self.n_scheme_anchor as f64 * growth - 1e-9).ceil() as usize;
        (gamma, n_scheme.max(1))
    }

    fn validate(&self) -> Result<()> {
        if !(self.varsigma > 0.0 && self.varsigma <= 1.0) {
            return Err(Error::config(
                "varsigma",
                format!("must lie in (0, 1], got {}", self.varsigma),
            ));
        }
        if self.n_values.is_empty() || self.n_values.windows(2).any(|w| w[0] >= w[1]) || self.n_values[0] == 0 {
            return Err(Error::config(
                "n_values",
                "must be a nonempty increasing list of positive counts",
            ));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if !(self.fine_step > 0.0) || self.subsample == 0 {
            return Err(Error::config(
                "fine_step",
                "fine step must be positive and k0 at least 1",
            ));
        }
        if !(self.gamma_anchor > 0.0) || self.n_scheme_anchor == 0 {
            return Err(Error::config("gamma_anchor", "anchors must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one replication (`theta_hat` absent on failure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub n: usize,
    pub replication: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub gamma: f64,
    pub n_scheme: usize,
    /// Mean of `|θ̂ − θ0|^q` over successful replications.
    pub mse: Option<f64>,
    /// Monte-Carlo standard error of `mse`; absent with fewer than two replications.
    pub stderr: Option<f64>,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log mse` against `log n` over rows with positive error.
    pub slope: Option<f64>,
    /// False when the identifiability exponent is taken on trust (all models but OU).
    pub varsigma_known: bool,
}

impl RateTable {
    /// Writes `n,gamma,N,mse,stderr`, with `NA` for unavailable entries.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,gamma,N,mse,stderr")?;
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.16e}"));
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.16e},{},{},{}",
                r.n,
                r.gamma,
                r.n_scheme,
                fmt(r.mse),
                fmt(r.stderr)
            )?;
        }
        Ok(())
    }

    /// Whether `mse` is non-increasing in `n` apart from at most `allowed` inversions.
    pub fn non_increasing(&self, allowed: usize) -> bool {
        let mses: Vec<f64> = self.rows.iter().filter_map(|r| r.mse).collect();
        mses.windows(2).filter(|w| w[1] > w[0]).count() <= allowed && mses.len() == self.rows.len()
    }
}

pub fn least_squares_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Seeds of replication `r` at the `i`-th sample size: (observations, scheme noise).
pub fn replication_seeds(seed: u64, n_index: usize, replication: usize) -> (u64, u64) {
    let base = derive_seed(
        seed,
        streams::REPLICATION_BASE + ((n_index as u64) << 20) + replication as u64,
    );
    (
        derive_seed(base, streams::OBSERVATIONS),
        derive_seed(base, streams::SCHEME_NOISE),
    )
}

/// One replication: synthesize observations and run the grid estimator.
pub fn run_replication(config: &RateStudyConfig, n_index: usize, replication: usize) -> ReplicationRecord {
    let n = config.n_values[n_index];
    let attempt = || -> Result<Vec<f64>> {
        let model = config.model.build()?;
        let (gamma, n_scheme) = config.coupling(n, model.state_dim());
        let (obs_seed, noise_seed) = replication_seeds(config.seed, n_index, replication);
        let obs = synthesize_observations(
            &model,
            &config.theta0,
            &config.y0,
            config.hurst,
            config.fine_step,
            n,
            config.subsample,
            obs_seed,
        )?;
        let cc = ContrastConfig {
            distance: config.distance,
            distance_settings: config.distance_settings,
            model: config.model.clone(),
            hurst: config.hurst,
            schedule: StepSchedule::constant(gamma)?,
            n_scheme,
            z0: None,
            grid: config.grid.clone(),
            noise_seed,
            noise_source: default_noise_source(),
        };
        Ok(grid_estimate_with_model(model, &obs, &cc)?.theta_hat)
    };
    match attempt() {
        Ok(theta_hat) => ReplicationRecord {
            n,
            replication,
            theta_hat: Some(theta_hat),
            error: None,
        },
        Err(e) => ReplicationRecord {
            n,
            replication,
            theta_hat: None,
            error: Some(e.to_string()),
        },
    }
}

/// Aggregates replication records into the rate table.
pub fn rate_table(config: &RateStudyConfig, records: &[ReplicationRecord]) -> Result<RateTable> {
    config.validate()?;
    let d = config.model.build()?.state_dim();
    let q = config.q();
    let mut rows = Vec::new();
    for &n in &config.n_values {
        let (gamma, n_scheme) = config.coupling(n, d);
        let mut errs = Vec::new();
        let mut failures = 0;
        for r in records.iter().filter(|r| r.n == n) {
            match &r.theta_hat {
                Some(t) => {
                    let dist = t
                        .iter()
                        .zip(&config.theta0)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    errs.push(dist.powf(q));
                }
                None => failures += 1,
            }
        }
        let k = errs.len();
        let mse = (k > 0).then(|| errs.iter().sum::<f64>() / k as f64);
        let stderr = (k > 1).then(|| {
            let m = mse.unwrap();
            let var = errs.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        });
        rows.push(RateRow {
            n,
            gamma,
            n_scheme,
            mse,
            stderr,
            successes: k,
            failures,
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.mse.filter(|m| *m > 0.0).map(|m| ((r.n as f64).ln(), m.ln())))
        .unzip();
    Ok(RateTable {
        slope: least_squares_slope(&x, &y),
        rows,
        varsigma_known: matches!(config.model, ModelSpec::Ou),
    })
}

/// Runs every replication not already in `done`, reporting each new record
/// through `on_record` as soon as it finishes, and returns the table.
pub fn rate_study_resume(
    config: &RateStudyConfig,
    done: &[ReplicationRecord],
    on_record: impl Fn(&ReplicationRecord) + Sync,
) -> Result<(RateTable, Vec<ReplicationRecord>)> {
    config.validate()?;
    let mut records: Vec<ReplicationRecord> = Vec::new();
    for (i, &n) in config.n_values.iter().enumerate() {
        let todo: Vec<usize> = (0..config.replications)
            .filter(|r| !done.iter().any(|d| d.n == n && d.replication == *r))
            .collect();
        let fresh: Vec<ReplicationRecord> = todo
            .par_iter()
            .map(|&r| {
                let rec = run_replication(config, i, r);
                on_record(&rec);
                rec
            })
            .collect();
        records.extend(
            done.iter()
                .filter(|d| d.n == n && d.replication < config.replications)
                .cloned(),
        );
        records.extend(fresh);
    }
    records.sort_by_key(|r| (r.n, r.replication));
    Ok((rate_table(config, &records)?, records))
}

pub fn rate_study(config: &RateStudyConfig) -> Result<RateTable> {
    Ok(rate_study_resume(config, &[], |_| {})?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::builtin_ou;

    fn h(v: f64) -> HurstParameter {
        HurstParameter::new(v).unwrap()
    }

    fn ou_obs(n: usize, seed: u64) -> ObservationSet {
        synthesize_observations(&builtin_ou(), &[2.0], &[0.0], h(0.5), 0.01, n, 1, seed).unwrap()
    }

    fn config(distance: &str, n_scheme: usize, grid: GridSpec) -> ContrastConfig {
        ContrastConfig {
            distance: distance.parse().unwrap(),
            distance_settings: DistanceSettings::default(),
            model: ModelSpec::Ou,
            hurst: h(0.5),
            schedule: StepSchedule::constant(0.01).unwrap(),
            n_scheme,
            z0: None,
            grid,
            noise_seed: 11,
            noise_source: default_noise_source(),
        }
    }

    #[test]
    fn single_point_grid_returns_it() {
        let obs = ou_obs(500, 1);
        let cfg = config(
            "w2",
            500,
            GridSpec::Explicit {
                points: vec![vec![2.0]],
            },
        );
        let r = grid_estimate(&obs, &cfg).unwrap();
        assert_eq!(r.theta_hat, vec![2.0]);
        assert_eq!(r.contrast_values.len(), 1);
    }

    #[test]
    fn coupled_paths_give_zero_at_truth() {
        let obs = ou_obs(2000, 5);
        let mut cfg = config(
            "w1",
            2000,
            GridSpec::Explicit {
                points: vec![vec![1.0], vec![2.0], vec![3.0]],
            },
        );
        cfg.noise_seed = 5;
        let r = grid_estimate(&obs, &cfg).unwrap();
        assert_eq!(r.contrast_values[1], 0.0);
        assert!(r.contrast_values[0] > 0.0 && r.contrast_values[2] > 0.0);
        assert_eq!(r.theta_hat, vec![2.0]);
    }

    #[test]
    fn ties_prefer_smallest_theta() {
        let grid = vec![vec![3.0], vec![1.0], vec![2.0]];
        assert_eq!(argmin_lexicographic(&grid, &[0.5, 0.5, 0.7]), 1);
        let g2 = vec![vec![1.0, 2.0], vec![1.0, 1.0]];
        assert_eq!(argmin_lexicographic(&g2, &[0.0, 0.0]), 1);
    }

    #[test]
    fn grid_outside_box_rejected() {
        let obs = ou_obs(100, 1);
        let cfg = config(
            "w2",
            100,
            GridSpec::Explicit {
                points: vec![vec![9.0]],
            },
        );
        assert!(grid_estimate(&obs, &cfg).is_err());
    }

    #[test]
    fn decreasing_needs_its_own_entry_point() {
        let obs = ou_obs(100, 1);
        let mut cfg = config("w2", 100, GridSpec::spacing(0.5));
        cfg.schedule = StepSchedule::polynomial(0.1, 1.0 / 3.0).unwrap();
        assert!(matches!(grid_estimate(&obs, &cfg), Err(Error::ScheduleInvalid(_))));
        let r = grid_estimate_decreasing(&obs, &cfg).unwrap();
        assert_eq!(r.grid.len(), 8);
    }

    #[test]
    fn constant_schedule_decreasing_matches() {
        let obs = ou_obs(400, 2);
        let cfg = config("w2", 400, GridSpec::spacing(0.25));
        let a = grid_estimate(&obs, &cfg).unwrap();
        let b = grid_estimate_decreasing(&obs, &cfg).unwrap();
        assert_eq!(a.contrast_values, b.contrast_values);
        assert_eq!(a.theta_hat, b.theta_hat);
    }

    #[test]
    fn sgd_gradient_matches_finite_difference() {
        let obs = ou_obs(300, 3);
        let cfg = SgdConfig {
            p: 2.0,
            gamma0: 1.0,
            minibatch: 1,
            n_iter: 1,
            theta_init: vec![1.5],
            hurst: h(0.5),
            scheme_step: 0.01,
            n_scheme: 300,
            z0: None,
            noise_seed: 8,
        };
        let obj = SgdObjective::new(builtin_ou(), &obs, &cfg).unwrap();
        for xi in [0.7, -1.9, 3.0] {
            let g = obj.gradient(&[1.5], &[xi]).unwrap()[0];
            let e = 1e-5;
            let fd =
                (obj.objective(&[1.5 + e], &[xi]).unwrap() - obj.objective(&[1.5 - e], &[xi]).unwrap()) / (2.0 * e);
            assert!((g - fd).abs() <= 1e-4 * fd.abs().max(1e-12), "{g} vs {fd}");
        }
    }

    #[test]
    fn rate_table_single_replication() {
        let cfg = RateStudyConfig {
            model: ModelSpec::Ou,
            theta0: vec![2.0],
            hurst: h(0.5),
            n_values: vec![100, 200],
            replications: 1,
            distance: "w2".parse().unwrap(),
            distance_settings: DistanceSettings::default(),
            varsigma: 1.0,
            grid: GridSpec::spacing(0.5),
            fine_step: 0.01,
            subsample: 1,
            y0: vec![0.0],
            gamma_anchor: 0.01,
            n_scheme_anchor: 100,
            seed: 4,
        };
        let t = rate_study(&cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.stderr.is_none() && r.mse.is_some()));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",NA"));
        // at H = 1/2: γ ∝ n^{−1}, N ∝ n^{3/2} / γ
        let (g, n) = cfg.coupling(400, 1);
        assert!((g - 0.0025).abs() < 1e-15);
        assert_eq!(n, 3200);
    }
}
