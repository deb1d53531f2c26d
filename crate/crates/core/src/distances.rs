//! Distances between empirical measures.
//!
//! * Wasserstein-p in one dimension through quantile functions.
//! * A small exact transport solver (min-cost flow) used as a test oracle.
//! * The characteristic-function distance
//!   `d_CF,p(μ, ν)² = ∫ |φ_μ(ξ) − φ_ν(ξ)|² g_p(ξ) dξ` with the normalized
//!   kernel `g_p(ξ) = c_p (1 + |ξ|²)^{−p}`, by quadrature in 1-D and by
//!   sampling `ξ ~ g_p` otherwise.
//! * The weak-★ distance `d_s(μ, ν) = Σ_i 2^{−i} (|μ(f_i) − ν(f_i)| ∧ 1)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
enum Weights {
    Uniform,
    Explicit(Vec<f64>),
}

/// Weighted point cloud `Σ w_i δ_{x_i}` in `R^d`, points row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Weights,
}

impl EmpiricalMeasure {
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(
                "measure needs at least one point of matching dimension".into(),
            ));
        }
        Ok(Self {
            dim,
            points,
            weights: Weights::Uniform,
        })
    }

    /// Weights must be nonnegative and sum to 1 within 1e-12.
    pub fn weighted(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mut m = Self::uniform(dim, points)?;
        if weights.len() != m.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        m.weights = Weights::Explicit(weights);
        Ok(m)
    }

    /// Rescales nonnegative weights to unit mass.
    pub fn normalized(dim: usize, points: Vec<f64>, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("weights must have positive mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::weighted(dim, points, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Weights::Uniform => 1.0 / self.len() as f64,
            Weights::Explicit(w) => w[i],
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.weights, Weights::Uniform)
    }

    /// `∫ f dμ`
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        match &self.weights {
            Weights::Uniform => self.points.chunks(self.dim).map(&mut f).sum::<f64>() / self.len() as f64,
            Weights::Explicit(w) => self.points.chunks(self.dim).zip(w).map(|(x, w)| w * f(x)).sum(),
        }
    }

    /// Atoms sorted by position (1-D only), ties kept in input order.
    fn sorted_atoms(&self) -> Vec<(f64, f64)> {
        let mut atoms: Vec<(f64, f64)> = (0..self.len()).map(|i| (self.points[i], self.weight(i))).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    }
}

fn require_dim(m: &EmpiricalMeasure, d: usize) -> Result<()> {
    if m.dim != d {
        Err(Error::DimensionMismatch {
            expected: d,
            got: m.dim,
        })
    } else {
        Ok(())
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "Wasserstein order must be ≥ 1, got {p}"
        )))
    }
}

/// `∫₀¹ |F⁻(t) − G⁻(t)|^p dt` for sorted atoms, walking the common refinement
/// of the two cumulative-weight partitions.
fn quantile_cost(a: &[(f64, f64)], b: &[(f64, f64)], p: f64) -> f64 {
    let ends = |atoms: &[(f64, f64)]| -> Vec<f64> {
        let mut acc = 0.0;
        let mut v: Vec<f64> = atoms
            .iter()
            .map(|x| {
                acc += x.1;
                acc
            })
            .collect();
        *v.last_mut().unwrap() = 1.0;
        v
    };
    let (ea, eb) = (ends(a), ends(b));
    let (mut i, mut j) = (0, 0);
    let mut prev = 0.0;
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let next = ea[i].min(eb[j]);
        cost += (next - prev) * (a[i].0 - b[j].0).abs().powf(p);
        prev = next;
        if ea[i] <= next {
            i += 1;
        }
        if eb[j] <= next {
            j += 1;
        }
    }
    cost
}

fn sorted_uniform_cost(x: &[f64], y: &[f64], p: f64) -> f64 {
    let n = x.len() as f64;
    let sum: f64 = if p == 1.0 {
        x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
    } else if p == 2.0 {
        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
    } else {
        x.iter().zip(y).map(|(a, b)| (a - b).abs().powf(p)).sum()
    };
    sum / n
}

fn sorted_points(m: &EmpiricalMeasure) -> Vec<f64> {
    let mut v = m.points.clone();
    v.sort_by(f64::total_cmp);
    v
}

/// Wasserstein-p distance between two measures on the real line.
///
/// Equal-size uniform measures use `((1/n) Σ |x_(i) − y_(i)|^p)^{1/p}` on the
/// order statistics; anything else goes through the quantile functions.
pub fn wasserstein_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    require_dim(mu, 1)?;
    require_dim(nu, 1)?;
    check_p(p)?;
    let cost = if mu.is_uniform() && nu.is_uniform() && mu.len() == nu.len() {
        sorted_uniform_cost(&sorted_points(mu), &sorted_points(nu), p)
    } else {
        quantile_cost(&mu.sorted_atoms(), &nu.sorted_atoms(), p)
    };
    Ok(cost.powf(1.0 / p))
}

/// Largest `n_μ · n_ν` accepted by [`wasserstein_oracle_small`].
pub const ORACLE_CAP: usize = 64;

/// Exact optimal transport cost by successive shortest paths on the
/// bipartite transportation network, in any dimension (Euclidean ground cost).
pub fn wasserstein_oracle_small(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    require_dim(nu, mu.dim)?;
    check_p(p)?;
    let (n, m) = (mu.len(), nu.len());
    if n * m > ORACLE_CAP {
        return Err(Error::TooLarge {
            size: n * m,
            cap: ORACLE_CAP,
        });
    }
    // nodes: 0 source, 1..=n supplies, n+1..=n+m demands, n+m+1 sink
    let sink = n + m + 1;
    let nodes = sink + 1;
    let mut edges: Vec<(usize, usize, f64, f64)> = Vec::new(); // (from, to, cap, cost)
    for i in 0..n {
        edges.push((0, 1 + i, mu.weight(i), 0.0));
    }
    for i in 0..n {
        for j in 0..m {
            let d2: f64 = mu
                .point(i)
                .iter()
                .zip(nu.point(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            edges.push((1 + i, 1 + n + j, f64::INFINITY, d2.sqrt().powf(p)));
        }
    }
    for j in 0..m {
        edges.push((1 + n + j, sink, nu.weight(j), 0.0));
    }
    let mut flow = vec![0.0; edges.len()];
    let mut total_cost = 0.0;
    let mut shipped = 0.0;
    const EPS: f64 = 1e-13;
    let improves = |new: f64, old: f64| new.is_finite() && (old.is_infinite() || new < old - 1e-12 * (1.0 + old.abs()));
    loop {
        // Bellman–Ford over the residual graph; the source keeps distance 0
        let mut dist = vec![f64::INFINITY; nodes];
        let mut pred: Vec<Option<(usize, bool)>> = vec![None; nodes];
        dist[0] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for (e, &(u, v, cap, cost)) in edges.iter().enumerate() {
                if v != 0 && cap - flow[e] > EPS && improves(dist[u] + cost, dist[v]) {
                    dist[v] = dist[u] + cost;
                    pred[v] = Some((e, true));
                    changed = true;
                }
                if u != 0 && flow[e] > EPS && improves(dist[v] - cost, dist[u]) {
                    dist[u] = dist[v] - cost;
                    pred[u] = Some((e, false));
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        let mut path = Vec::new();
        let mut v = sink;
        while v != 0 {
            let (e, forward) = pred[v].expect("reachable nodes have a predecessor");
            path.push((e, forward));
            v = if forward { edges[e].0 } else { edges[e].1 };
            if path.len() > nodes {
                unreachable!("residual graph of a transport problem has no negative cycle");
            }
        }
        let bottleneck = path
            .iter()
            .map(|&(e, forward)| if forward { edges[e].2 - flow[e] } else { flow[e] })
            .fold(f64::INFINITY, f64::min);
        for &(e, forward) in &path {
            let sign = if forward { 1.0 } else { -1.0 };
            flow[e] += sign * bottleneck;
            total_cost += sign * bottleneck * edges[e].3;
        }
        shipped += bottleneck;
        if shipped >= 1.0 - 1e-12 {
            break;
        }
    }
    Ok(total_cost.max(0.0).powf(1.0 / p))
}

/// `c_p = Γ(p) / (√π Γ(p − ½))`, normalizing `(1 + ξ²)^{−p}` on the real line.
pub fn kernel_constant_1d(p: f64) -> f64 {
    (ln_gamma(p) - ln_gamma(p - 0.5)).exp() / PI.sqrt()
}

/// Draws from `g_p` in the plane: radius by inversion of
/// `P(R ≤ r) = 1 − (1 + r²)^{1−p}`, angle uniform. Returns `m × 2` row-major.
pub fn sample_gp_2d(p: f64, m_draws: usize, seed: u64) -> Result<Vec<f64>> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel exponent must exceed 1 in 2-D, got {p}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(2 * m_draws);
    for _ in 0..m_draws {
        let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        let r = (u.powf(1.0 / (1.0 - p)) - 1.0).max(0.0).sqrt();
        let angle = rng.gen_range(0.0..2.0 * PI);
        out.push(r * angle.cos());
        out.push(r * angle.sin());
    }
    Ok(out)
}

/// Inverse-CDF sampler for the one-dimensional `g_p`.
///
/// With `ξ = tan u`, `P(0 ≤ Ξ ≤ tan u) = c_p ∫₀ᵘ cos^{2p−2} v dv`. That CDF is
/// tabulated on a uniform `u` grid and inverted by linear interpolation in `u`,
/// which keeps the inverse monotone.
#[derive(Debug, Clone)]
pub struct GpSampler1d {
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

impl GpSampler1d {
    pub const KNOTS: usize = 4096;

    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.5) {
            return Err(Error::InvalidParameter(format!(
                "kernel exponent must exceed 1/2 in 1-D, got {p}"
            )));
        }
        let cp = kernel_constant_1d(p);
        let n = Self::KNOTS;
        let rule = gauss_legendre(8);
        let knots: Vec<f64> = (0..=n).map(|i| FRAC_PI_2 * i as f64 / n as f64).collect();
        let mut cdf = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in knots.windows(2) {
            acc += cp * rule.integrate(w[0], w[1], |v| v.cos().powf(2.0 * p - 2.0));
            cdf.push(acc);
        }
        // total mass on the half-line is exactly 1/2
        let total = *cdf.last().unwrap();
        cdf.iter_mut().for_each(|c| *c *= 0.5 / total);
        Ok(Self { knots, cdf })
    }

    /// Maps a uniform `(0, 1)` variate to a draw of `Ξ`.
    pub fn quantile(&self, u: f64) -> f64 {
        let (sign, target) = if u < 0.5 { (-1.0, 0.5 - u) } else { (1.0, u - 0.5) };
        let idx = self.cdf.partition_point(|&c| c < target).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let t = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        let angle = self.knots[idx - 1] + t * (self.knots[idx] - self.knots[idx - 1]);
        sign * angle.min(FRAC_PI_2 * (1.0 - 1e-12)).tan()
    }

    pub fn sample(&self, m_draws: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..m_draws).map(|_| self.quantile(rng.gen::<f64>())).collect()
    }
}

/// Draws of `Ξ ~ g_p` in dimension 1 or 2, row-major `m × d`.
pub fn sample_gp(p: f64, dim: usize, m_draws: usize, seed: u64) -> Result<Vec<f64>> {
    match dim {
        1 => Ok(GpSampler1d::new(p)?.sample(m_draws, seed)),
        2 => sample_gp_2d(p, m_draws, seed),
        d => Err(Error::InvalidParameter(format!("no g_p sampler for dimension {d}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DcfMode {
    /// 1-D only: `ξ = tan u` with `n_nodes` Gauss–Legendre nodes on
    /// `u ∈ (0, π/2)`, mirrored to the negative half-line by symmetry.
    Quadrature1d {
        n_nodes: usize,
    },
    MonteCarlo {
        m_draws: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcfSpec {
    pub p: f64,
    pub mode: DcfMode,
}

impl DcfSpec {
    pub const DEFAULT_NODES: usize = 512;

    pub fn quadrature(p: f64) -> Self {
        Self {
            p,
            mode: DcfMode::Quadrature1d {
                n_nodes: Self::DEFAULT_NODES,
            },
        }
    }
}

/// Empirical characteristic function `(Re, Im)` at each frequency.
pub type EcfTable = Vec<(f64, f64)>;

mod trig {
    //! Branch-free `sin_cos` for moderate arguments: Cody–Waite reduction by
    //! π/2 in three parts and the fdlibm kernel polynomials on `[−π/4, π/4]`.
    //! Written so the ECF loops vectorize.
    #![allow(clippy::excessive_precision)]

    const MAGIC: f64 = 6755399441055744.0;
    const INV_PIO2: f64 = std::f64::consts::FRAC_2_PI;
    const P1: f64 = 1.57079632673412561417e+00;
    const P2: f64 = 6.07710050630396597660e-11;
    const P3: f64 = 2.02226624871116645580e-21;
    const S1: f64 = -1.66666666666666324348e-01;
    const S2: f64 = 8.33333333332248946124e-03;
    const S3: f64 = -1.98412698298579493134e-04;
    const S4: f64 = 2.75573137070700676789e-06;
    const S5: f64 = -2.50507602534068634195e-08;
    const S6: f64 = 1.58969099521155010221e-10;
    const C1: f64 = 4.16666666666666019037e-02;
    const C2: f64 = -1.38888888888741095749e-03;
    const C3: f64 = 2.48015872894767294178e-05;
    const C4: f64 = -2.75573143513906633035e-07;
    const C5: f64 = 2.08757232129817482790e-09;
    const C6: f64 = -1.13596475577881948265e-11;

    /// `n · P1` stays exact while the quadrant count fits in 20 bits.
    pub const MAX_ARG: f64 = 8.0e5;

    #[inline(always)]
    pub fn sin_cos(x: f64) -> (f64, f64) {
        let t = x * INV_PIO2 + MAGIC;
        let q = t.to_bits();
        let n = t - MAGIC;
        let r = ((x - n * P1) - n * P2) - n * P3;
        let z = r * r;
        let s = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
        let c = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
        let (mut sv, mut cv) = if q & 1 == 1 { (c, -s) } else { (s, c) };
        if q & 2 == 2 {
            sv = -sv;
            cv = -cv;
        }
        (sv, cv)
    }

    /// `Σ_x (cos zx, sin zx)` over a slice.
    pub fn sum_uniform(z: f64, xs: &[f64], max_abs: f64) -> (f64, f64) {
        if (z * max_abs).abs() > MAX_ARG {
            return xs.iter().fold((0.0, 0.0), |(re, im), &x| {
                let (s, c) = (z * x).sin_cos();
                (re + c, im + s)
            });
        }
        let mut re = [0.0; 4];
        let mut im = [0.0; 4];
        let chunks = xs.chunks_exact(4);
        let rem = chunks.remainder();
        for c in chunks {
            for l in 0..4 {
                let (s, co) = sin_cos(z * c[l]);
                re[l] += co;
                im[l] += s;
            }
        }
        let (mut r, mut i) = (re[0] + re[1] + re[2] + re[3], im[0] + im[1] + im[2] + im[3]);
        for &x in rem {
            let (s, co) = sin_cos(z * x);
            r += co;
            i += s;
        }
        (r, i)
    }
}

fn ecf(measure: &EmpiricalMeasure, freqs: &[f64]) -> EcfTable {
    let d = measure.dim;
    if d == 1 && measure.is_uniform() {
        let max_abs = measure.points.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let n = measure.len() as f64;
        return freqs
            .iter()
            .map(|&z| {
                let (re, im) = trig::sum_uniform(z, &measure.points, max_abs);
                (re / n, im / n)
            })
            .collect();
    }
    freqs
        .chunks(d)
        .map(|xi| {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..measure.len() {
                let w = measure.weight(i);
                let arg: f64 = xi.iter().zip(measure.point(i)).map(|(a, b)| a * b).sum();
                let (s, c) = arg.sin_cos();
                re += w * c;
                im += w * s;
            }
            (re, im)
        })
        .collect()
}

/// Frequencies and weights for evaluating `d_CF,p` repeatedly.
///
/// In quadrature mode the rule is doubled until two successive levels agree
/// to [`DCF_STABILITY_TOL`], at most [`DCF_MAX_DOUBLINGS`] times; the finer
/// value is returned. Levels beyond the first doubling are built on demand.
#[derive(Debug, Clone)]
pub struct DcfEvaluator {
    dim: usize,
    spec: DcfSpec,
    rules: Vec<OnceLock<(Vec<f64>, Vec<f64>)>>,
}

/// Allowed relative change of `d_CF,p` between `n` and `2n` nodes.
pub const DCF_STABILITY_TOL: f64 = 1e-6;
/// Largest number of node doublings tried before giving up.
pub const DCF_MAX_DOUBLINGS: usize = 4;

/// Characteristic function of one measure on the evaluator's node sets,
/// filled level by level as they are needed.
#[derive(Debug, Clone)]
pub struct DcfTable {
    measure: EmpiricalMeasure,
    levels: Vec<OnceLock<EcfTable>>,
}

impl DcfEvaluator {
    pub fn new(spec: DcfSpec, dim: usize) -> Result<Self> {
        let levels = match spec.mode {
            DcfMode::Quadrature1d { n_nodes } => {
                if dim != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, got: dim });
                }
                if !(spec.p > 0.5) {
                    return Err(Error::InvalidParameter(format!(
                        "d_CF,p needs p > 1/2 in 1-D, got {}",
                        spec.p
                    )));
                }
                if n_nodes < 2 {
                    return Err(Error::InvalidParameter("need at least two quadrature nodes".into()));
                }
                DCF_MAX_DOUBLINGS + 1
            }
            DcfMode::MonteCarlo { m_draws, seed } => {
                if m_draws == 0 {
                    return Err(Error::InvalidParameter("need at least one Monte-Carlo draw".into()));
                }
                let freqs = sample_gp(spec.p, dim, m_draws, seed)?;
                let rule = OnceLock::new();
                let _ = rule.set((freqs, vec![1.0 / m_draws as f64; m_draws]));
                return Ok(Self {
                    dim,
                    spec,
                    rules: vec![rule],
                });
            }
        };
        Ok(Self {
            dim,
            spec,
            rules: (0..levels).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn spec(&self) -> &DcfSpec {
        &self.spec
    }

    fn rule(&self, level: usize) -> &(Vec<f64>, Vec<f64>) {
        self.rules[level].get_or_init(|| {
            let DcfMode::Quadrature1d { n_nodes } = self.spec.mode else {
                unreachable!("Monte-Carlo rules are set at construction")
            };
            let cp = kernel_constant_1d(self.spec.p);
            let (u, w) = gauss_legendre(n_nodes << level).mapped(0.0, FRAC_PI_2);
            let freqs = u.iter().map(|u| u.tan()).collect();
            // factor 2 for the mirrored half-line, cos^{2p} u · sec² u from the substitution
            let weights = u
                .iter()
                .zip(&w)
                .map(|(u, w)| 2.0 * cp * w * u.cos().powf(2.0 * self.spec.p - 2.0))
                .collect();
            (freqs, weights)
        })
    }

    /// Table for `measure`; the two coarsest levels are filled eagerly.
    pub fn table(&self, measure: &EmpiricalMeasure) -> Result<DcfTable> {
        require_dim(measure, self.dim)?;
        let table = DcfTable {
            measure: measure.clone(),
            levels: (0..self.rules.len()).map(|_| OnceLock::new()).collect(),
        };
        for level in 0..self.rules.len().min(2) {
            self.level(&table, level);
        }
        Ok(table)
    }

    fn level<'a>(&self, table: &'a DcfTable, level: usize) -> &'a EcfTable {
        table.levels[level].get_or_init(|| ecf(&table.measure, &self.rule(level).0))
    }

    fn at_level(&self, a: &DcfTable, b: &DcfTable, level: usize) -> f64 {
        self.level(a, level)
            .iter()
            .zip(self.level(b, level))
            .zip(&self.rule(level).1)
            .map(|((x, y), w)| w * ((x.0 - y.0).powi(2) + (x.1 - y.1).powi(2)))
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    pub fn distance_from_tables(&self, a: &DcfTable, b: &DcfTable) -> Result<f64> {
        let mut prev = self.at_level(a, b, 0);
        let mut rel_change = 0.0;
        for level in 1..self.rules.len() {
            let next = self.at_level(a, b, level);
            rel_change = (next - prev).abs() / next.max(1e-300);
            if next == 0.0 || rel_change <= DCF_STABILITY_TOL {
                return Ok(next);
            }
            prev = next;
        }
        if self.rules.len() == 1 {
            return Ok(prev);
        }
        Err(Error::QuadratureUnstable { rel_change })
    }

    pub fn distance(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
        self.distance_from_tables(&self.table(mu)?, &self.table(nu)?)
    }
}

/// `d_CF,p(μ, ν)`, reading the integrand as `|φ_μ(ξ) − φ_ν(ξ)|²`.
pub fn dcf(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, spec: &DcfSpec) -> Result<f64> {
    require_dim(nu, mu.dim)?;
    DcfEvaluator::new(*spec, mu.dim)?.distance(mu, nu)
}

/// `f(x) = exp(−|x|² / (2σ²)) · cos(⟨ω, x⟩ + φ)`
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub sigma: f64,
    pub omega: Vec<f64>,
    pub phase: f64,
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let arg: f64 = self.omega.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.phase;
        (-r2 / (2.0 * self.sigma * self.sigma)).exp() * arg.cos()
    }
}

/// Gaussian-windowed cosines and sines enumerated along diagonals of
/// (width level, frequency index), truncated to `truncation` members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsFamily {
    pub truncation: usize,
    /// Width of level `a` is `sigma_base · 2^a`.
    pub sigma_base: f64,
    /// Frequencies are `omega_step` times integer lattice vectors.
    pub omega_step: f64,
}

impl Default for DsFamily {
    fn default() -> Self {
        Self {
            truncation: 32,
            sigma_base: 0.5,
            omega_step: 0.5,
        }
    }
}

/// Integer vectors of `Z^d` ordered by sup-norm, then lexicographically.
fn lattice_vector(dim: usize, index: usize) -> Vec<i64> {
    let mut count = 0;
    let mut radius: i64 = 0;
    loop {
        let side = (2 * radius + 1) as usize;
        let total = side.pow(dim as u32);
        for flat in 0..total {
            let mut v = Vec::with_capacity(dim);
            let mut rem = flat;
            for _ in 0..dim {
                v.push((rem % side) as i64 - radius);
                rem /= side;
            }
            v.reverse();
            if v.iter().map(|c| c.abs()).max().unwrap_or(0) == radius {
                if count == index {
                    return v;
                }
                count += 1;
            }
        }
        radius += 1;
    }
}

impl DsFamily {
    /// The first `truncation` test functions in dimension `dim`.
    pub fn functions(&self, dim: usize) -> Vec<TestFunction> {
        let mut out = Vec::with_capacity(self.truncation);
        let mut diag = 0usize;
        'outer: loop {
            for level in 0..=diag {
                let freq_index = diag - level;
                let sigma = self.sigma_base * 2f64.powi(level as i32);
                let lattice = lattice_vector(dim, freq_index);
                let omega: Vec<f64> = lattice.iter().map(|&c| c as f64 * self.omega_step).collect();
                let zero = lattice.iter().all(|&c| c == 0);
                for phase in [0.0, -FRAC_PI_2] {
                    if zero && phase != 0.0 {
                        continue;
                    }
                    out.push(TestFunction {
                        sigma,
                        omega: omega.clone(),
                        phase,
                    });
                    if out.len() == self.truncation {
                        break 'outer;
                    }
                }
            }
            diag += 1;
        }
        out
    }

    pub fn tail_bound(&self) -> f64 {
        0.5f64.powi(self.truncation as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// Truncated weak-★ distance; member `i` (from 1) carries weight `2^{−i}`.
pub fn d_s(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, family: &DsFamily) -> Result<DsValue> {
    require_dim(nu, mu.dim)?;
    if family.truncation == 0 {
        return Err(Error::InvalidParameter("d_s truncation must be at least 1".into()));
    }
    let value = ds_from_means(&ds_means(mu, family), &ds_means(nu, family));
    Ok(DsValue {
        value,
        tail_bound: family.tail_bound(),
    })
}

fn ds_means(m: &EmpiricalMeasure, family: &DsFamily) -> Vec<f64> {
    family
        .functions(m.dim)
        .iter()
        .map(|f| m.integrate(|x| f.eval(x)))
        .collect()
}

fn ds_from_means(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| 0.5f64.powi(i as i32 + 1) * (x - y).abs().min(1.0))
        .sum()
}

/// Distance selection by key: `w1`, `w2`, `w4`, `wp:<p>`, `dcf:<p>`, `ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceKind {
    Wasserstein { p: f64 },
    Dcf { p: f64 },
    Ds,
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("distance", format!("unknown distance `{s}`"));
        let number = |t: &str| t.parse::<f64>().map_err(|_| bad());
        match s {
            "w1" => Ok(Self::Wasserstein { p: 1.0 }),
            "w2" => Ok(Self::Wasserstein { p: 2.0 }),
            "w4" => Ok(Self::Wasserstein { p: 4.0 }),
            "ds" => Ok(Self::Ds),
            _ => {
                if let Some(rest) = s.strip_prefix("wp:") {
                    let p = number(rest)?;
                    check_p(p).map_err(|_| bad())?;
                    Ok(Self::Wasserstein { p })
                } else if let Some(rest) = s.strip_prefix("dcf:") {
                    let p = number(rest)?;
                    if !(p > 0.5) {
                        return Err(bad());
                    }
                    Ok(Self::Dcf { p })
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Wasserstein { p } if *p == 1.0 => write!(f, "w1"),
            Self::Wasserstein { p } if *p == 2.0 => write!(f, "w2"),
            Self::Wasserstein { p } if *p == 4.0 => write!(f, "w4"),
            Self::Wasserstein { p } => write!(f, "wp:{p}"),
            Self::Dcf { p } => write!(f, "dcf:{p}"),
            Self::Ds => write!(f, "ds"),
        }
    }
}

impl Serialize for DistanceKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DistanceKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Numerical settings shared by all distance evaluations of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceSettings {
    /// Quadrature nodes for `d_CF,p` in 1-D (`dcf.nodes`).
    pub dcf_nodes: usize,
    /// Monte-Carlo frequencies for `d_CF,p` beyond 1-D (`dcf.mc_draws`).
    pub dcf_mc_draws: usize,
    pub dcf_seed: u64,
    pub ds: DsFamily,
}

impl Default for DistanceSettings {
    fn default() -> Self {
        Self {
            dcf_nodes: DcfSpec::DEFAULT_NODES,
            dcf_mc_draws: 4096,
            dcf_seed: 0,
            ds: DsFamily::default(),
        }
    }
}

/// A distance with one side fixed, caching what depends on that side only.
#[derive(Debug, Clone)]
pub enum PreparedDistance {
    Wasserstein {
        p: f64,
        /// Sorted atoms of the reference measure.
        atoms: Vec<(f64, f64)>,
        uniform: bool,
    },
    Dcf {
        evaluator: DcfEvaluator,
        table: DcfTable,
    },
    Ds {
        dim: usize,
        family: DsFamily,
        means: Vec<f64>,
    },
}

impl PreparedDistance {
    pub fn new(kind: DistanceKind, settings: &DistanceSettings, reference: &EmpiricalMeasure) -> Result<Self> {
        match kind {
            DistanceKind::Wasserstein { p } => {
                require_dim(reference, 1)?;
                check_p(p)?;
                Ok(Self::Wasserstein {
                    p,
                    atoms: reference.sorted_atoms(),
                    uniform: reference.is_uniform(),
                })
            }
            DistanceKind::Dcf { p } => {
                let mode = if reference.dim == 1 {
                    DcfMode::Quadrature1d {
                        n_nodes: settings.dcf_nodes,
                    }
                } else {
                    DcfMode::MonteCarlo {
                        m_draws: settings.dcf_mc_draws,
                        seed: settings.dcf_seed,
                    }
                };
                let evaluator = DcfEvaluator::new(DcfSpec { p, mode }, reference.dim)?;
                let table = evaluator.table(reference)?;
                Ok(Self::Dcf { evaluator, table })
            }
            DistanceKind::Ds => Ok(Self::Ds {
                dim: reference.dim,
                family: settings.ds,
                means: ds_means(reference, &settings.ds),
            }),
        }
    }

    /// Distance from the reference to `other`.
    pub fn eval(&self, other: &EmpiricalMeasure) -> Result<f64> {
        match self {
            Self::Wasserstein { p, atoms, uniform } => {
                require_dim(other, 1)?;
                let cost = if *uniform && other.is_uniform() && other.len() == atoms.len() {
                    let x: Vec<f64> = atoms.iter().map(|a| a.0).collect();
                    sorted_uniform_cost(&x, &sorted_points(other), *p)
                } else {
                    quantile_cost(atoms, &other.sorted_atoms(), *p)
                };
                Ok(cost.powf(1.0 / p))
            }
            Self::Dcf { evaluator, table } => evaluator.distance_from_tables(table, &evaluator.table(other)?),
            Self::Ds { dim, family, means } => {
                require_dim(other, *dim)?;
                Ok(ds_from_means(means, &ds_means(other, family)))
            }
        }
    }
}

/// One-shot distance between two measures.
pub fn distance(
    kind: DistanceKind,
    settings: &DistanceSettings,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
) -> Result<f64> {
    require_dim(nu, mu.dim)?;
    PreparedDistance::new(kind, settings, mu)?.eval(nu)
}
