//! Euler–Maruyama schemes for `dZ = b_θ(Z) dt + σ dB`.
//!
//! All schemes consume pre-sampled noise, so reusing one noise sample across
//! several `θ` yields coupled paths (the frozen-noise contract the contrast
//! functions depend on).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::drift::DriftModel;
use crate::error::{Error, Result};
use crate::fbm::{sample_fbm_nonuniform, FgnSampler, FgnSequence, HurstParameter, NonuniformIncrements};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant {
        gamma: f64,
    },
    /// `γ_k = γ k^{−ρ}`
    Polynomial {
        gamma: f64,
        rho: f64,
    },
}

/// Time steps `γ_1, γ_2, …` of a scheme; `s_k = γ_1 + … + γ_k`.
///
/// With a `quantum`, each step is rounded to the nearest positive multiple of
/// it so the grid sits on a uniform fine grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub kind: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum: Option<f64>,
}

impl StepSchedule {
    pub fn constant(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::ScheduleInvalid(format!("step must be positive, got {gamma}")));
        }
        Ok(Self {
            kind: ScheduleKind::Constant { gamma },
            quantum: None,
        })
    }

    pub fn polynomial(gamma: f64, rho: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::ScheduleInvalid(format!("step must be positive, got {gamma}")));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::ScheduleInvalid(format!(
                "decay exponent must lie in (0, 1], got {rho}"
            )));
        }
        Ok(Self {
            kind: ScheduleKind::Polynomial { gamma, rho },
            quantum: None,
        })
    }

    pub fn quantized(mut self, quantum: f64) -> Result<Self> {
        if !(quantum > 0.0) {
            return Err(Error::ScheduleInvalid(format!(
                "quantum must be positive, got {quantum}"
            )));
        }
        self.quantum = Some(quantum);
        Ok(self)
    }

    fn raw_step(&self, k: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant { gamma } => gamma,
            ScheduleKind::Polynomial { gamma, rho } => gamma * (k as f64).powf(-rho),
        }
    }

    /// Number of quanta in `γ_k` (`k ≥ 1`), if quantized.
    pub fn multiple(&self, k: usize) -> Option<usize> {
        self.quantum.map(|h| ((self.raw_step(k) / h).round() as usize).max(1))
    }

    /// `γ_k` for `k ≥ 1`.
    pub fn step(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        match (self.quantum, self.multiple(k)) {
            (Some(h), Some(m)) => m as f64 * h,
            _ => self.raw_step(k),
        }
    }

    /// `s_0 = 0, s_1, …, s_n`.
    pub fn times(&self, n: usize) -> Vec<f64> {
        let mut times = Vec::with_capacity(n + 1);
        times.push(0.0);
        match self.quantum {
            Some(h) => {
                let mut count = 0usize;
                for k in 1..=n {
                    count += self.multiple(k).unwrap();
                    times.push(count as f64 * h);
                }
            }
            None => {
                let mut s = 0.0;
                for k in 1..=n {
                    s += self.step(k);
                    times.push(s);
                }
            }
        }
        times
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, ScheduleKind::Constant { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypGammaReport {
    /// False for constant schedules, which are handled by the fixed-step theory.
    pub applicable: bool,
    pub converges: bool,
    /// `(k, Σ_{i=1}^{k} γ_{i+1}^{p′H+1} / s_i)` at powers of ten up to the probe length.
    pub partial_sums: Vec<(usize, f64)>,
}

/// Summability of `γ_{k+1}^{p′H+1} / s_k`, needed by the decreasing-step scheme.
///
/// For `γ_k = γ k^{−ρ}` the terms behave like `k^{−1−ρ p′ H}` (up to a log when
/// `ρ = 1`), so the series converges whenever `ρ p′ H > 0`.
pub fn check_hyp_gamma(schedule: &StepSchedule, p_prime: f64, hurst: HurstParameter, n_probe: usize) -> HypGammaReport {
    let (applicable, converges) = match schedule.kind {
        ScheduleKind::Constant { .. } => (false, false),
        ScheduleKind::Polynomial { rho, .. } => (true, rho * p_prime * hurst.value() > 0.0),
    };
    let exponent = p_prime * hurst.value() + 1.0;
    let mut partial_sums = Vec::new();
    let mut s = 0.0;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut next_report = 1usize;
    for k in 1..=n_probe {
        s += schedule.step(k);
        let term = schedule.step(k + 1).powf(exponent) / s;
        // Kahan summation
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if k == next_report || k == n_probe {
            partial_sums.push((k, sum));
            if k == next_report {
                next_report *= 10;
            }
        }
    }
    HypGammaReport {
        applicable,
        converges,
        partial_sums,
    }
}

/// Where the noise for a decreasing-step scheme comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum NoiseSource {
    /// Dense Cholesky on the exact grid, limited to `cap` points.
    Cholesky { cap: usize },
    /// Exact fGn on a uniform grid of step `fine_step`, summed over blocks; the
    /// schedule is quantized to that grid.
    FineGrid { fine_step: f64 },
}

/// Samples fBm increments on the first `n` intervals of `schedule`.
///
/// Returns the schedule actually simulated (quantized for [`NoiseSource::FineGrid`]).
pub fn sample_schedule_noise(
    schedule: &StepSchedule,
    n: usize,
    hurst: HurstParameter,
    dim: usize,
    seed: u64,
    source: NoiseSource,
) -> Result<(StepSchedule, NonuniformIncrements)> {
    match source {
        NoiseSource::Cholesky { cap } => {
            let times = schedule.times(n);
            Ok((*schedule, sample_fbm_nonuniform(&times, hurst, dim, seed, cap)?))
        }
        NoiseSource::FineGrid { fine_step } => {
            let quantized = schedule.quantized(fine_step)?;
            let multiples: Vec<usize> = (1..=n).map(|k| quantized.multiple(k).unwrap()).collect();
            let total: usize = multiples.iter().sum();
            let fine = FgnSampler::new(total, hurst)?.sample(fine_step, dim, seed)?;
            let mut increments = vec![0.0; n * dim];
            let mut i = 0;
            for (k, &m) in multiples.iter().enumerate() {
                let out = &mut increments[k * dim..(k + 1) * dim];
                for _ in 0..m {
                    for (o, v) in out.iter_mut().zip(fine.row(i)) {
                        *o += v;
                    }
                    i += 1;
                }
            }
            Ok((
                quantized,
                NonuniformIncrements {
                    hurst,
                    times: quantized.times(n),
                    dim,
                    increments,
                },
            ))
        }
    }
}

/// Euler path on the grid `s_0, …, s_N` (row-major `(N + 1) × d` states).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemePath {
    pub times: Vec<f64>,
    pub dim: usize,
    pub states: Vec<f64>,
    pub theta: Vec<f64>,
    pub schedule: StepSchedule,
    pub seed: Option<u64>,
}

impl SchemePath {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    /// The first `n` states, `Z_{s_0}, …, Z_{s_{n−1}}`.
    pub fn head(&self, n: usize) -> &[f64] {
        &self.states[..n * self.dim]
    }

    /// CSV `k,t,x_1,...,x_d`, optionally followed by `dtheta_1..q` columns
    /// holding the `d × q` sensitivity rows flattened.
    pub fn write_csv<W: Write>(&self, mut out: W, sensitivity: Option<(&[f64], usize)>) -> std::io::Result<()> {
        write!(out, "k,t")?;
        for j in 1..=self.dim {
            write!(out, ",x_{j}")?;
        }
        let width = sensitivity.map(|(_, q)| q * self.dim).unwrap_or(0);
        for j in 1..=width {
            write!(out, ",dtheta_{j}")?;
        }
        writeln!(out)?;
        for k in 0..self.len() {
            write!(out, "{k},{:.16e}", self.times[k])?;
            for v in self.state(k) {
                write!(out, ",{v:.16e}")?;
            }
            if let Some((s, _)) = sensitivity {
                for v in &s[k * width..(k + 1) * width] {
                    write!(out, ",{v:.16e}")?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn check_inputs(
    model: &DriftModel,
    theta: &[f64],
    z0: &[f64],
    noise_dim: usize,
    noise_len: usize,
    n: usize,
) -> Result<()> {
    model.check_theta(theta)?;
    let d = model.state_dim();
    if z0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: z0.len(),
        });
    }
    if noise_dim != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: noise_dim,
        });
    }
    if noise_len < n {
        return Err(Error::InvalidParameter(format!(
            "noise has {noise_len} increments, need {n}"
        )));
    }
    Ok(())
}

fn step_states(
    model: &DriftModel,
    theta: &[f64],
    z0: &[f64],
    n: usize,
    mut step: impl FnMut(usize) -> f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    let d = z0.len();
    let mut states = vec![0.0; (n + 1) * d];
    states[..d].copy_from_slice(z0);
    let mut b = vec![0.0; d];
    for k in 0..n {
        let (done, rest) = states.split_at_mut((k + 1) * d);
        let z = &done[k * d..];
        let next = &mut rest[..d];
        model.drift(theta, z, &mut b);
        let g = step(k + 1);
        for i in 0..d {
            next[i] = z[i] + g * b[i];
        }
        model.add_diffusion(&noise[k * d..(k + 1) * d], next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
    }
    Ok(states)
}

/// Constant-step scheme `Z_{k+1} = Z_k + γ b_θ(Z_k) + σ ΔB_k`.
pub fn euler_constant(
    model: &DriftModel,
    theta: &[f64],
    z0: &[f64],
    gamma: f64,
    n: usize,
    noise: &FgnSequence,
) -> Result<SchemePath> {
    check_inputs(model, theta, z0, noise.dim, noise.len(), n)?;
    if ((noise.step - gamma) / gamma).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "noise step {} does not match scheme step {gamma}",
            noise.step
        )));
    }
    let schedule = StepSchedule::constant(gamma)?;
    let d = noise.dim;
    let states = step_states(model, theta, z0, n, |_| gamma, &noise.increments)?;
    Ok(SchemePath {
        times: (0..=n).map(|k| k as f64 * gamma).collect(),
        dim: d,
        states,
        theta: theta.to_vec(),
        schedule,
        seed: None,
    })
}

/// Decreasing-step path together with its occupation weights `γ_{k+1} / s_N`
/// attached to `Z_{s_0}, …, Z_{s_{N−1}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecreasingPath {
    pub path: SchemePath,
    pub weights: Vec<f64>,
}

pub fn euler_decreasing(
    model: &DriftModel,
    theta: &[f64],
    z0: &[f64],
    schedule: &StepSchedule,
    n: usize,
    noise: &NonuniformIncrements,
) -> Result<DecreasingPath> {
    check_inputs(model, theta, z0, noise.dim, noise.len(), n)?;
    if !schedule.is_constant() {
        let report = check_hyp_gamma(schedule, 2.0, noise.hurst, 0);
        if !report.converges {
            return Err(Error::ScheduleInvalid("step-sum condition fails".into()));
        }
    }
    let times = schedule.times(n);
    let tol = 1e-9 * times[n].max(1.0);
    if times.iter().zip(&noise.times).any(|(a, b)| (a - b).abs() > tol) {
        return Err(Error::ScheduleInvalid("noise grid does not match the schedule".into()));
    }
    let d = noise.dim;
    let states = step_states(model, theta, z0, n, |k| schedule.step(k), &noise.increments)?;
    let total = times[n];
    let weights = (1..=n).map(|k| schedule.step(k) / total).collect();
    Ok(DecreasingPath {
        path: SchemePath {
            times,
            dim: d,
            states,
            theta: theta.to_vec(),
            schedule: *schedule,
            seed: None,
        },
        weights,
    })
}

/// Constant-step scheme together with `∂_θ Z`, stored row-major as
/// `(N + 1) × d × q`:
///
/// `∂_θZ_{k+1} = ∂_θZ_k + γ (∂_θ b_θ(Z_k) + ∇_z b_θ(Z_k) ∂_θZ_k)`, `∂_θZ_0 = 0`.
pub fn euler_with_sensitivity(
    model: &DriftModel,
    theta: &[f64],
    z0: &[f64],
    gamma: f64,
    n: usize,
    noise: &FgnSequence,
) -> Result<(SchemePath, Vec<f64>)> {
    let path = euler_constant(model, theta, z0, gamma, n, noise)?;
    let d = model.state_dim();
    let q = model.param_dim();
    let w = d * q;
    let mut sens = vec![0.0; (n + 1) * w];
    let mut jt = vec![0.0; w];
    let mut jx = vec![0.0; d * d];
    for k in 0..n {
        let z = path.state(k);
        model.dtheta(theta, z, &mut jt);
        model.dx(theta, z, &mut jx);
        let (done, rest) = sens.split_at_mut((k + 1) * w);
        let cur = &done[k * w..];
        let next = &mut rest[..w];
        for i in 0..d {
            for j in 0..q {
                let mut acc = jt[i * q + j];
                for l in 0..d {
                    acc += jx[i * d + l] * cur[l * q + j];
                }
                next[i * q + j] = cur[i * q + j] + gamma * acc;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
    }
    Ok((path, sens))
}

/// Discrete observations `Y_{t_k}`, `t_k = k κ`, `κ = k0 γ̲`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub dim: usize,
    pub values: Vec<f64>,
    pub fine_step: f64,
    pub subsample: usize,
    pub true_theta: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

impl ObservationSet {
    /// Wraps externally supplied observations (row-major `n × dim`) taken every `kappa`.
    pub fn from_values(dim: usize, values: Vec<f64>, kappa: f64) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter("observation matrix shape mismatch".into()));
        }
        Ok(Self {
            dim,
            values,
            fine_step: kappa,
            subsample: 1,
            true_theta: None,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn kappa(&self) -> f64 {
        self.fine_step * self.subsample as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.kappa()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "k,t")?;
        for j in 1..=self.dim {
            write!(out, ",x_{j}")?;
        }
        writeln!(out)?;
        for k in 0..self.len() {
            write!(out, "{k},{:.16e}", self.time(k))?;
            for v in self.row(k) {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Simulates `n_obs · k0` fine Euler steps of size `fine_step` under `theta0`
/// with fresh noise and keeps every `k0`-th state, starting from `y0`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_observations(
    model: &DriftModel,
    theta0: &[f64],
    y0: &[f64],
    hurst: HurstParameter,
    fine_step: f64,
    n_obs: usize,
    subsample: usize,
    seed: u64,
) -> Result<ObservationSet> {
    if !(fine_step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fine step must be positive, got {fine_step}"
        )));
    }
    if subsample == 0 || n_obs == 0 {
        return Err(Error::InvalidParameter(
            "need at least one observation and k0 ≥ 1".into(),
        ));
    }
    let d = model.state_dim();
    let steps = n_obs * subsample;
    let noise = FgnSampler::new(steps, hurst)?.sample(fine_step, d, seed)?;
    let fine = euler_constant(model, theta0, y0, fine_step, steps, &noise)?;
    let mut values = Vec::with_capacity(n_obs * d);
    for k in 0..n_obs {
        values.extend_from_slice(fine.state(k * subsample));
    }
    Ok(ObservationSet {
        dim: d,
        values,
        fine_step,
        subsample,
        true_theta: Some(theta0.to_vec()),
        seed: Some(seed),
    })
}
