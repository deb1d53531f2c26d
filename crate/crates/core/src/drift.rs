//! Parameterized drift families `b_θ(x)` with their Jacobians.
//!
//! A [`DriftModel`] bundles a [`DriftFamily`] with its parameter box, the
//! constant diffusion matrix `σ` and the coercivity condition the family is
//! expected to satisfy. The builtins cover the linear fractional
//! Ornstein–Uhlenbeck drift, a cosine-modulated one-dimensional drift, a
//! two-dimensional sigmoid drift with a rotational part, and a bounded
//! perturbation of the OU drift.

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::HurstParameter;
use crate::quadrature::gauss_legendre;
use crate::rng::rng_from_seed;

/// A family of drift coefficients indexed by a parameter vector.
///
/// Matrices are written row-major into `out`: `dtheta` is `d × q`, `dx` is `d × d`.
pub trait DriftFamily: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn drift(&self, theta: &[f64], x: &[f64], out: &mut [f64]);
    fn dtheta(&self, theta: &[f64], x: &[f64], out: &mut [f64]);
    fn dx(&self, theta: &[f64], x: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidParameter(
                "parameter box bounds must have equal nonzero length".into(),
            ));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "parameter box needs lower < upper componentwise, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *l <= *t && *t <= *u)
    }

    /// Coordinatewise clamping onto the box.
    pub fn project(&self, theta: &mut [f64]) {
        for (t, (l, u)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *t = t.clamp(*l, *u);
        }
    }

    /// Regular grid with the given spacing in every coordinate, lexicographic order.
    ///
    /// Each axis runs from `lower` upward in steps of `spacing` while staying at
    /// most `upper` (up to a relative slack of 1e-9 so that e.g. `0.5..=4` by
    /// `0.05` includes 4).
    pub fn grid(&self, spacing: f64) -> Result<Vec<Vec<f64>>> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        let axes: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| {
                let count = ((u - l) / spacing * (1.0 + 1e-9)).floor() as usize + 1;
                (0..count).map(|i| l + i as f64 * spacing).collect()
            })
            .collect();
        let mut grid = vec![Vec::new()];
        for axis in &axes {
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coercivity {
    /// `⟨b(x) − b(y), x − y⟩ ≤ −α|x − y|²`
    Strong,
    /// `⟨b(x) − b(y), x − y⟩ ≤ β − α|x − y|²`
    Weak,
    None,
}

#[derive(Debug, Clone)]
pub struct DriftModel {
    family: Arc<dyn DriftFamily>,
    pub param_box: ParameterBox,
    sigma: Vec<f64>,
    sigma_is_identity: bool,
    pub claimed: Coercivity,
}

fn determinant(m: &[f64], d: usize) -> f64 {
    let mut a = m.to_vec();
    let mut det = 1.0;
    for c in 0..d {
        let pivot = (c..d)
            .max_by(|&i, &j| a[i * d + c].abs().total_cmp(&a[j * d + c].abs()))
            .unwrap();
        if a[pivot * d + c] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            for k in 0..d {
                a.swap(pivot * d + k, c * d + k);
            }
            det = -det;
        }
        let p = a[c * d + c];
        det *= p;
        for r in c + 1..d {
            let f = a[r * d + c] / p;
            for k in c..d {
                a[r * d + k] -= f * a[c * d + k];
            }
        }
    }
    det
}

impl DriftModel {
    pub fn new(family: Arc<dyn DriftFamily>, param_box: ParameterBox, claimed: Coercivity) -> Result<Self> {
        let d = family.state_dim();
        let mut sigma = vec![0.0; d * d];
        for i in 0..d {
            sigma[i * d + i] = 1.0;
        }
        if param_box.dim() != family.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: family.param_dim(),
                got: param_box.dim(),
            });
        }
        Ok(Self {
            family,
            param_box,
            sigma,
            sigma_is_identity: true,
            claimed,
        })
    }

    /// Replaces the diffusion matrix (row-major `d × d`), rejecting singular ones.
    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        let d = self.state_dim();
        if sigma.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: sigma.len(),
            });
        }
        let scale = sigma.iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(d as i32);
        if determinant(&sigma, d).abs() < 1e-12 * scale || scale == 0.0 {
            return Err(Error::InvalidParameter("diffusion matrix is singular".into()));
        }
        self.sigma_is_identity = (0..d).all(|i| (0..d).all(|j| sigma[i * d + j] == if i == j { 1.0 } else { 0.0 }));
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_box(mut self, param_box: ParameterBox) -> Result<Self> {
        if param_box.dim() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: param_box.dim(),
            });
        }
        self.param_box = param_box;
        Ok(self)
    }

    pub fn family(&self) -> &Arc<dyn DriftFamily> {
        &self.family
    }

    pub fn name(&self) -> &str {
        self.family.name()
    }

    pub fn state_dim(&self) -> usize {
        self.family.state_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.family.param_dim()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn drift(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        self.family.drift(theta, x, out)
    }

    pub fn dtheta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        self.family.dtheta(theta, x, out)
    }

    pub fn dx(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        self.family.dx(theta, x, out)
    }

    /// `out += σ · noise`
    #[inline]
    pub fn add_diffusion(&self, noise: &[f64], out: &mut [f64]) {
        if self.sigma_is_identity {
            for (o, n) in out.iter_mut().zip(noise) {
                *o += n;
            }
        } else {
            let d = noise.len();
            for (i, o) in out.iter_mut().enumerate() {
                *o += (0..d).map(|j| self.sigma[i * d + j] * noise[j]).sum::<f64>();
            }
        }
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if self.param_box.contains(theta) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "θ = {theta:?} lies outside the parameter box {:?}..{:?}",
                self.param_box.lower, self.param_box.upper
            )))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OuDrift;

impl DriftFamily for OuDrift {
    fn name(&self) -> &str {
        "ou"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn drift(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = -theta[0] * x[0];
    }
    fn dtheta(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = -x[0];
    }
    fn dx(&self, theta: &[f64], _x: &[f64], out: &mut [f64]) {
        out[0] = -theta[0];
    }
}

/// `b_θ(y) = −y (1 + cos(θ y))`
#[derive(Debug, Clone, Copy)]
pub struct CosineDrift;

impl DriftFamily for CosineDrift {
    fn name(&self) -> &str {
        "cosine"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn drift(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = -x[0] * (1.0 + (theta[0] * x[0]).cos());
    }
    fn dtheta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * x[0] * (theta[0] * x[0]).sin();
    }
    fn dx(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let (t, y) = (theta[0], x[0]);
        out[0] = -(1.0 + (t * y).cos()) + t * y * (t * y).sin();
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `b_θ(z) = −θ z ψ(√(1 + |z|²)) + ε z⊥` on `R²`, with `ψ` the logistic sigmoid
/// and `z⊥ = (−z₂, z₁)`.
#[derive(Debug, Clone, Copy)]
pub struct Sigmoid2dDrift {
    pub epsilon: f64,
}

impl DriftFamily for Sigmoid2dDrift {
    fn name(&self) -> &str {
        "sigmoid2d"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn drift(&self, theta: &[f64], z: &[f64], out: &mut [f64]) {
        let r = (1.0 + z[0] * z[0] + z[1] * z[1]).sqrt();
        let s = theta[0] * sigmoid(r);
        out[0] = -s * z[0] - self.epsilon * z[1];
        out[1] = -s * z[1] + self.epsilon * z[0];
    }
    fn dtheta(&self, _theta: &[f64], z: &[f64], out: &mut [f64]) {
        let r = (1.0 + z[0] * z[0] + z[1] * z[1]).sqrt();
        let psi = sigmoid(r);
        out[0] = -z[0] * psi;
        out[1] = -z[1] * psi;
    }
    fn dx(&self, theta: &[f64], z: &[f64], out: &mut [f64]) {
        let r = (1.0 + z[0] * z[0] + z[1] * z[1]).sqrt();
        let psi = sigmoid(r);
        let dpsi = psi * (1.0 - psi) / r;
        let t = theta[0];
        out[0] = -t * (psi + dpsi * z[0] * z[0]);
        out[1] = -t * dpsi * z[0] * z[1] - self.epsilon;
        out[2] = -t * dpsi * z[1] * z[0] + self.epsilon;
        out[3] = -t * (psi + dpsi * z[1] * z[1]);
    }
}

/// Bounded inner term `b_θ(y) = tanh(θ y)` for the perturbed OU family.
#[derive(Debug, Clone, Copy)]
pub struct TanhBump;

impl DriftFamily for TanhBump {
    fn name(&self) -> &str {
        "tanh"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn drift(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = (theta[0] * x[0]).tanh();
    }
    fn dtheta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let c = (theta[0] * x[0]).cosh();
        out[0] = x[0] / (c * c);
    }
    fn dx(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let c = (theta[0] * x[0]).cosh();
        out[0] = theta[0] / (c * c);
    }
}

/// `−θ y + λ b_θ(y)` for a bounded scalar family `b_θ`.
#[derive(Debug, Clone)]
pub struct PerturbedOuDrift {
    pub lambda: f64,
    pub inner: Arc<dyn DriftFamily>,
}

impl DriftFamily for PerturbedOuDrift {
    fn name(&self) -> &str {
        "perturbed_ou"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn drift(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        self.inner.drift(theta, x, out);
        out[0] = -theta[0] * x[0] + self.lambda * out[0];
    }
    fn dtheta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        self.inner.dtheta(theta, x, out);
        out[0] = -x[0] + self.lambda * out[0];
    }
    fn dx(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        self.inner.dx(theta, x, out);
        out[0] = -theta[0] + self.lambda * out[0];
    }
}

pub fn builtin_ou() -> DriftModel {
    DriftModel::new(
        Arc::new(OuDrift),
        ParameterBox::interval(0.5, 4.0).unwrap(),
        Coercivity::Strong,
    )
    .unwrap()
}

/// Not globally contracting: `∂_y b` changes sign for large `|θ y|`.
pub fn builtin_cosine() -> DriftModel {
    DriftModel::new(
        Arc::new(CosineDrift),
        ParameterBox::interval(0.5, 4.0).unwrap(),
        Coercivity::None,
    )
    .unwrap()
}

pub fn builtin_sigmoid2d(epsilon: f64) -> DriftModel {
    DriftModel::new(
        Arc::new(Sigmoid2dDrift { epsilon }),
        ParameterBox::interval(0.5, 2.0).unwrap(),
        Coercivity::Strong,
    )
    .unwrap()
}

/// Strongly coercive with rate `m (1 − λ sup|∂_y b / θ|)` as long as `λ` stays
/// below the inverse of that supremum; for the default `tanh(θ y)` inner term
/// that means `λ < 1`.
pub fn builtin_perturbed_ou(lambda: f64, inner: Option<Arc<dyn DriftFamily>>) -> Result<DriftModel> {
    let inner = inner.unwrap_or_else(|| Arc::new(TanhBump));
    if inner.state_dim() != 1 || inner.param_dim() != 1 {
        return Err(Error::InvalidParameter(
            "perturbation must be a scalar family with scalar θ".into(),
        ));
    }
    let claimed = if lambda.abs() < 1.0 {
        Coercivity::Strong
    } else {
        Coercivity::None
    };
    DriftModel::new(
        Arc::new(PerturbedOuDrift { lambda, inner }),
        ParameterBox::interval(0.5, 4.0)?,
        claimed,
    )
}

/// Model selection by key, as used in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "key", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Ou,
    Cosine,
    Sigmoid2d {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    PerturbedOu {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_lambda() -> f64 {
    0.2
}

impl ModelSpec {
    pub fn from_key(key: &str) -> Result<Self> {
        match key {
            "ou" => Ok(Self::Ou),
            "cosine" => Ok(Self::Cosine),
            "sigmoid2d" => Ok(Self::Sigmoid2d {
                epsilon: default_epsilon(),
            }),
            "perturbed_ou" => Ok(Self::PerturbedOu {
                lambda: default_lambda(),
            }),
            other => Err(Error::config("model.key", format!("unknown model `{other}`"))),
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Self::Ou => "ou",
            Self::Cosine => "cosine",
            Self::Sigmoid2d { .. } => "sigmoid2d",
            Self::PerturbedOu { .. } => "perturbed_ou",
        }
    }

    pub fn build(&self) -> Result<DriftModel> {
        match *self {
            Self::Ou => Ok(builtin_ou()),
            Self::Cosine => Ok(builtin_cosine()),
            Self::Sigmoid2d { epsilon } => Ok(builtin_sigmoid2d(epsilon)),
            Self::PerturbedOu { lambda } => builtin_perturbed_ou(lambda, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativityReport {
    /// Contraction rate; with `beta_hat = 0` this is the strong constant.
    pub alpha_hat: f64,
    pub beta_hat: f64,
    /// Largest observed `|b(x) − b(y)| / |x − y|`.
    pub lipschitz_hat: f64,
    pub violations: usize,
    pub n_pairs: usize,
}

/// Falsification test of the coercivity condition claimed by `model`.
///
/// Draws `n_pairs` triples `(x, y, θ)` with `x, y` uniform in the ball of the
/// given radius and `θ` uniform in the box. When every pair contracts, the
/// strong form is reported (`beta_hat = 0`). Otherwise `alpha_hat` is the
/// contraction rate seen on pairs at least `radius / 2` apart and `beta_hat`
/// the smallest offset making the weak inequality hold on all pairs.
pub fn check_dissipativity(model: &DriftModel, n_pairs: usize, radius: f64, seed: u64) -> DissipativityReport {
    assert!(n_pairs >= 1);
    let d = model.state_dim();
    let q = model.param_dim();
    let mut rng = rng_from_seed(seed);
    let ball_point = |rng: &mut crate::rng::Rng| -> Vec<f64> {
        loop {
            let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-radius..=radius)).collect();
            if p.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
                return p;
            }
        }
    };
    let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
    let mut samples = Vec::with_capacity(n_pairs);
    let mut lipschitz: f64 = 0.0;
    for _ in 0..n_pairs {
        let x = ball_point(&mut rng);
        let y = ball_point(&mut rng);
        let theta: Vec<f64> = (0..q)
            .map(|i| rng.gen_range(model.param_box.lower[i]..=model.param_box.upper[i]))
            .collect();
        model.drift(&theta, &x, &mut bx);
        model.drift(&theta, &y, &mut by);
        let mut ip = 0.0;
        let mut dist2 = 0.0;
        let mut db2 = 0.0;
        for i in 0..d {
            let dz = x[i] - y[i];
            let db = bx[i] - by[i];
            ip += db * dz;
            dist2 += dz * dz;
            db2 += db * db;
        }
        if dist2 == 0.0 {
            continue;
        }
        lipschitz = lipschitz.max((db2 / dist2).sqrt());
        samples.push((ip, dist2));
    }

    let strong = samples.iter().map(|&(ip, d2)| -ip / d2).fold(f64::INFINITY, f64::min);
    let (alpha_hat, beta_hat) = if strong > 0.0 {
        (strong, 0.0)
    } else {
        let far = (radius / 2.0).powi(2);
        let alpha = samples
            .iter()
            .filter(|&&(_, d2)| d2 >= far)
            .map(|&(ip, d2)| -ip / d2)
            .fold(f64::INFINITY, f64::min);
        let alpha = if alpha.is_finite() { alpha } else { strong };
        let beta = samples.iter().map(|&(ip, d2)| ip + alpha * d2).fold(0.0, f64::max);
        (alpha, beta)
    };

    let violations = match model.claimed {
        Coercivity::Strong => samples.iter().filter(|&&(ip, d2)| ip >= -1e-12 * d2).count(),
        Coercivity::Weak if alpha_hat <= 0.0 => samples.iter().filter(|&&(ip, _)| ip > 0.0).count(),
        _ => 0,
    };

    DissipativityReport {
        alpha_hat,
        beta_hat,
        lipschitz_hat: lipschitz,
        violations,
        n_pairs,
    }
}

/// Scalar fractional Ornstein–Uhlenbeck process `dX = −θ X dt + σ dB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FouOracle {
    pub theta: f64,
    pub sigma: f64,
    pub hurst: HurstParameter,
}

impl FouOracle {
    /// `theta` must lie in `[range.0, range.1]` with `0 < range.0 < range.1`.
    pub fn new(theta: f64, sigma: f64, hurst: HurstParameter, range: (f64, f64)) -> Result<Self> {
        let (m, big_m) = range;
        if !(0.0 < m && m < big_m) {
            return Err(Error::InvalidParameter(format!("need 0 < m < M, got [{m}, {big_m}]")));
        }
        if !(m <= theta && theta <= big_m) {
            return Err(Error::InvalidParameter(format!("θ = {theta} outside [{m}, {big_m}]")));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("σ must be positive, got {sigma}")));
        }
        Ok(Self { theta, sigma, hurst })
    }

    /// Closed-form limit `H Γ(2H) σ² / θ^{2H}` of the variance.
    pub fn limit_variance(&self) -> f64 {
        let h = self.hurst.value();
        h * statrs::function::gamma::gamma(2.0 * h) * self.sigma * self.sigma / self.theta.powf(2.0 * h)
    }
}

/// Variance of the fOU process started at 0, evaluated at `t_large`:
///
/// `E[X_t²] = 2H σ² e^{−θt} ∫₀ᵗ s^{2H−1} cosh(θ(t−s)) ds`.
///
/// The substitution `u = s^{2H}` removes the endpoint singularity, leaving
/// `σ² ∫₀^{t^{2H}} ½(e^{−θ s} + e^{−θ(2t−s)}) du` with `s = u^{1/(2H)}`. The
/// integral is split into dyadic panels toward `u = 0` with a Gauss–Legendre
/// rule of `quadrature_n` nodes on each, then recomputed with twice the nodes.
pub fn fou_stationary_variance(oracle: &FouOracle, t_large: f64, quadrature_n: usize) -> Result<f64> {
    let theta = oracle.theta;
    if !((-theta * t_large).exp() < 1e-8) {
        return Err(Error::InvalidParameter(format!(
            "t_large = {t_large} too small: need exp(−θ t) < 1e-8"
        )));
    }
    if quadrature_n == 0 {
        return Err(Error::InvalidParameter("quadrature_n must be positive".into()));
    }
    let two_h = oracle.hurst.two_h();
    let upper = t_large.powf(two_h);
    let integrand = |u: f64| {
        let s = u.powf(1.0 / two_h);
        0.5 * ((-theta * s).exp() + (-theta * (2.0 * t_large - s)).exp())
    };
    let panels = 60;
    let evaluate = |nodes: usize| {
        let rule = gauss_legendre(nodes);
        let mut total = 0.0;
        let mut hi = upper;
        for _ in 0..panels {
            let lo = hi * 0.5;
            total += rule.integrate(lo, hi, integrand);
            hi = lo;
        }
        total + rule.integrate(0.0, hi, integrand)
    };
    let coarse = evaluate(quadrature_n);
    let fine = evaluate(2 * quadrature_n);
    let rel_change = ((fine - coarse) / fine).abs();
    if rel_change > 1e-8 {
        return Err(Error::QuadratureNotConverged { rel_change });
    }
    Ok(oracle.sigma * oracle.sigma * fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn ou_values() {
        let m = builtin_ou();
        let mut out = [0.0];
        m.drift(&[2.0], &[3.0], &mut out);
        assert_eq!(out[0], -6.0);
        m.dtheta(&[2.0], &[3.0], &mut out);
        assert_eq!(out[0], -3.0);
        m.dx(&[2.0], &[-7.0], &mut out);
        assert_eq!(out[0], -2.0);
    }

    #[test]
    fn cosine_values() {
        let m = builtin_cosine();
        let mut out = [0.0];
        for t in [0.5, 1.0, 3.3] {
            m.drift(&[t], &[0.0], &mut out);
            assert_eq!(out[0], 0.0);
        }
        m.drift(&[2.0], &[PI / 2.0], &mut out);
        assert!(out[0].abs() < 1e-15);
        m.dtheta(&[2.0], &[0.5], &mut out);
        let fd = central_diff(
            |t| {
                let mut o = [0.0];
                m.drift(&[t], &[0.5], &mut o);
                o[0]
            },
            2.0,
            1e-6,
        );
        assert!((out[0] - fd).abs() < 1e-8 * fd.abs().max(1.0));
        assert!((out[0] - 0.25 * 1.0f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn sigmoid2d_values() {
        let eps = 0.1;
        let m = builtin_sigmoid2d(eps);
        let mut out = [0.0; 2];
        m.drift(&[1.3], &[0.0, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
        let zero_eps = builtin_sigmoid2d(0.0);
        zero_eps.drift(&[1.0], &[1.0, 0.0], &mut out);
        let psi_sqrt2 = 1.0 / (1.0 + (-(2.0f64).sqrt()).exp());
        assert!((out[0] + psi_sqrt2).abs() < 1e-15);
        assert_eq!(out[1], 0.0);
        // rotational part at z = (1, 2) is ε·(−2, 1)
        let mut with = [0.0; 2];
        let mut without = [0.0; 2];
        m.drift(&[1.0], &[1.0, 2.0], &mut with);
        zero_eps.drift(&[1.0], &[1.0, 2.0], &mut without);
        assert!((with[0] - without[0] + 2.0 * eps).abs() < 1e-15);
        assert!((with[1] - without[1] - eps).abs() < 1e-15);
    }

    #[test]
    fn perturbed_ou_reduces_and_offsets() {
        let p0 = builtin_perturbed_ou(0.0, None).unwrap();
        let ou = builtin_ou();
        let (mut a, mut b) = ([0.0], [0.0]);
        for &(t, y) in &[(0.7, 1.3), (2.0, -4.0), (3.9, 0.01)] {
            p0.drift(&[t], &[y], &mut a);
            ou.drift(&[t], &[y], &mut b);
            assert_eq!(a, b);
        }
        let p = builtin_perturbed_ou(0.3, Some(Arc::new(TanhBump))).unwrap();
        p.drift(&[2.0], &[0.0], &mut a);
        assert_eq!(a[0], 0.3 * 0.0f64.tanh());
        let r = check_dissipativity(&p, 5_000, 10.0, 3);
        assert_eq!(r.violations, 0);
        assert!(r.alpha_hat >= 0.5 * (1.0 - 0.3) - 1e-12);
    }

    #[test]
    fn box_grid_and_projection() {
        let b = ParameterBox::interval(0.5, 4.0).unwrap();
        let g = b.grid(0.05).unwrap();
        assert_eq!(g.len(), 71);
        assert!((g[70][0] - 4.0).abs() < 1e-12);
        let mut t = [7.0];
        b.project(&mut t);
        assert_eq!(t, [4.0]);
        assert!(ParameterBox::interval(1.0, 1.0).is_err());
        let b2 = ParameterBox::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let g2 = b2.grid(1.0).unwrap();
        assert_eq!(
            g2,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 2.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
                vec![1.0, 2.0]
            ]
        );
    }

    #[test]
    fn singular_sigma_rejected() {
        let m = builtin_sigmoid2d(0.1);
        assert!(m.clone().with_sigma(vec![1.0, 2.0, 2.0, 4.0]).is_err());
        let m = m.with_sigma(vec![2.0, 0.0, 0.5, 1.0]).unwrap();
        let mut out = [0.0, 0.0];
        m.add_diffusion(&[1.0, 1.0], &mut out);
        assert_eq!(out, [2.0, 1.5]);
    }

    #[derive(Debug)]
    struct Expansive;
    impl DriftFamily for Expansive {
        fn name(&self) -> &str {
            "expansive"
        }
        fn state_dim(&self) -> usize {
            1
        }
        fn param_dim(&self) -> usize {
            1
        }
        fn drift(&self, _t: &[f64], x: &[f64], out: &mut [f64]) {
            out[0] = x[0];
        }
        fn dtheta(&self, _t: &[f64], _x: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn dx(&self, _t: &[f64], _x: &[f64], out: &mut [f64]) {
            out[0] = 1.0;
        }
    }

    #[test]
    fn dissipativity_reports() {
        let ou = builtin_ou()
            .with_box(ParameterBox::interval(1.0, 3.0).unwrap())
            .unwrap();
        let r = check_dissipativity(&ou, 2_000, 10.0, 1);
        assert!(r.alpha_hat >= 1.0 - 1e-9);
        assert_eq!(r.beta_hat, 0.0);
        assert_eq!(r.violations, 0);
        assert!(r.lipschitz_hat <= 3.0 + 1e-9);

        let sig = builtin_sigmoid2d(0.1);
        let r = check_dissipativity(&sig, 2_000, 10.0, 2);
        assert_eq!(r.violations, 0);
        assert!(r.alpha_hat >= 0.5 * 0.5);

        let bad = DriftModel::new(
            Arc::new(Expansive),
            ParameterBox::interval(0.5, 1.0).unwrap(),
            Coercivity::Strong,
        )
        .unwrap();
        let r = check_dissipativity(&bad, 500, 10.0, 3);
        assert!(r.violations > 0);
        assert!(r.alpha_hat < 0.0);
    }

    #[test]
    fn fou_variance_brownian_case() {
        let o = FouOracle::new(2.0, 1.0, HurstParameter::new(0.5).unwrap(), (0.5, 4.0)).unwrap();
        let v = fou_stationary_variance(&o, 20.0, 32).unwrap();
        assert!((v - 0.25).abs() < 1e-12, "{v}");
    }

    #[test]
    fn fou_variance_matches_gamma_limit() {
        for h in [0.2, 0.3, 0.7, 0.85] {
            for theta in [0.5, 2.0, 4.0] {
                let o = FouOracle::new(theta, 1.0, HurstParameter::new(h).unwrap(), (0.5, 4.0)).unwrap();
                let v = fou_stationary_variance(&o, 40.0 / theta, 32).unwrap();
                let lim = o.limit_variance();
                assert!(((v - lim) / lim).abs() < 1e-8, "H={h} θ={theta}: {v} vs {lim}");
            }
        }
    }

    #[test]
    fn fou_variance_scaling_and_stationarity() {
        let hh = HurstParameter::new(0.3).unwrap();
        let o1 = FouOracle::new(1.0, 1.0, hh, (0.5, 4.0)).unwrap();
        let o2 = FouOracle::new(1.0, 2.0, hh, (0.5, 4.0)).unwrap();
        let v1 = fou_stationary_variance(&o1, 20.0, 32).unwrap();
        let v2 = fou_stationary_variance(&o2, 20.0, 32).unwrap();
        assert!((v2 / v1 - 4.0).abs() < 1e-12);
        let v1b = fou_stationary_variance(&o1, 40.0, 32).unwrap();
        assert!(((v1b - v1) / v1).abs() < 1e-6);
        assert!(fou_stationary_variance(&o1, 5.0, 32).is_err());
    }

    #[test]
    fn fou_variance_decreasing_in_theta() {
        let hh = HurstParameter::new(0.7).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let theta = 0.5 + 0.175 * i as f64;
            let o = FouOracle::new(theta, 1.0, hh, (0.5, 4.0)).unwrap();
            let v = fou_stationary_variance(&o, 40.0 / theta, 32).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }
}
