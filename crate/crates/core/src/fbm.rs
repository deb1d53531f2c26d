//! Exact fractional Gaussian noise and fractional Brownian motion.
//!
//! Uniform grids use circulant embedding (Wood–Chan): the autocovariance of the
//! unit-step increments is embedded in a symmetric circulant matrix whose
//! spectrum comes from one FFT, and each sample costs one more FFT. One complex
//! transform yields two independent real columns, which is how multi-dimensional
//! noise is produced.
//!
//! Non-uniform grids use a dense Cholesky factor of the increment covariance.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Largest grid accepted by [`sample_fbm_nonuniform`] unless overridden.
pub const DEFAULT_CHOLESKY_CAP: usize = 20_000;

/// Eigenvalues below `-NEG_EIGEN_TOL * max` trigger a larger embedding.
pub const NEG_EIGEN_TOL: f64 = 1e-9;

const MAX_DOUBLINGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParameter(f64);

impl HurstParameter {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidParameter(format!(
                "Hurst index must lie in (0, 1), got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `2H`, the exponent of the variance function.
    pub fn two_h(self) -> f64 {
        2.0 * self.0
    }
}

impl TryFrom<f64> for HurstParameter {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<HurstParameter> for f64 {
    fn from(h: HurstParameter) -> f64 {
        h.0
    }
}

/// Increments of an fBm on a uniform grid, stored row-major (`n × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct FgnSequence {
    pub hurst: HurstParameter,
    pub step: f64,
    pub dim: usize,
    pub increments: Vec<f64>,
}

impl FgnSequence {
    pub fn len(&self) -> usize {
        self.increments.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.increments.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// Sums consecutive blocks of `factor` increments, giving the noise on the
    /// grid with step `factor * step`. A trailing partial block is dropped.
    pub fn aggregate(&self, factor: usize) -> FgnSequence {
        assert!(factor >= 1);
        let n = self.len() / factor;
        let mut increments = vec![0.0; n * self.dim];
        for (k, out) in increments.chunks_mut(self.dim).enumerate() {
            for i in k * factor..(k + 1) * factor {
                for (o, v) in out.iter_mut().zip(self.row(i)) {
                    *o += v;
                }
            }
        }
        FgnSequence {
            hurst: self.hurst,
            step: self.step * factor as f64,
            dim: self.dim,
            increments,
        }
    }
}

/// fBm values on a uniform grid, `(n + 1) × dim`, first row zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    pub hurst: HurstParameter,
    pub step: f64,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl FbmPath {
    pub fn from_increments(fgn: &FgnSequence) -> Self {
        let dim = fgn.dim;
        let mut values = vec![0.0; (fgn.len() + 1) * dim];
        for k in 0..fgn.len() {
            for j in 0..dim {
                values[(k + 1) * dim + j] = values[k * dim + j] + fgn.increments[k * dim + j];
            }
        }
        Self {
            hurst: fgn.hurst,
            step: fgn.step,
            dim,
            values,
        }
    }

    /// Number of grid points, `n + 1`.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// CSV with header `t,B_1,...,B_d`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t")?;
        for j in 1..=self.dim {
            write!(out, ",B_{j}")?;
        }
        writeln!(out)?;
        for k in 0..self.len() {
            write!(out, "{:.16e}", k as f64 * self.step)?;
            for v in self.row(k) {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Autocovariance of unit-step fractional Gaussian noise at `lag`.
pub fn fgn_covariance(lag: usize, hurst: HurstParameter) -> f64 {
    let k = lag as f64;
    let e = hurst.two_h();
    0.5 * ((k + 1.0).powf(e) + (k - 1.0).abs().powf(e) - 2.0 * k.powf(e))
}

/// Covariance of `B_t` and `B_s` for a standard one-dimensional fBm.
pub fn fbm_covariance(t: f64, s: f64, hurst: HurstParameter) -> f64 {
    let e = hurst.two_h();
    0.5 * (t.abs().powf(e) + s.abs().powf(e) - (t - s).abs().powf(e))
}

fn minimal_embedding_size(n: usize) -> usize {
    (2 * n.saturating_sub(1)).max(2).next_power_of_two()
}

fn embedding_spectrum(size: usize, hurst: HurstParameter) -> Vec<f64> {
    let half = size / 2;
    let mut row: Vec<Complex<f64>> = (0..size)
        .map(|j| {
            let lag = if j <= half { j } else { size - j };
            Complex::new(fgn_covariance(lag, hurst), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(size).process(&mut row);
    row.into_iter().map(|c| c.re).collect()
}

/// Spectrum of the minimal power-of-two circulant embedding for `n` increments.
pub fn circulant_eigenvalues(n: usize, hurst: HurstParameter) -> Vec<f64> {
    embedding_spectrum(minimal_embedding_size(n), hurst)
}

/// Reusable circulant-embedding sampler for a fixed length and Hurst index.
#[derive(Debug, Clone)]
pub struct FgnSampler {
    n: usize,
    hurst: HurstParameter,
    /// `sqrt(lambda_k / m)`, with tiny negative eigenvalues clamped to zero.
    scale: Vec<f64>,
}

impl FgnSampler {
    pub fn new(n: usize, hurst: HurstParameter) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("fGn length must be at least 1".into()));
        }
        let mut size = minimal_embedding_size(n);
        let mut doublings = 0;
        loop {
            let eig = embedding_spectrum(size, hurst);
            let max = eig.iter().cloned().fold(f64::MIN, f64::max);
            let min = eig.iter().cloned().fold(f64::MAX, f64::min);
            if min >= -NEG_EIGEN_TOL * max {
                let m = size as f64;
                let scale = eig.iter().map(|&l| (l.max(0.0) / m).sqrt()).collect();
                return Ok(Self { n, hurst, scale });
            }
            if doublings == MAX_DOUBLINGS {
                return Err(Error::EmbeddingFailure {
                    size,
                    doublings,
                    min_eigenvalue: min,
                });
            }
            size *= 2;
            doublings += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn embedding_size(&self) -> usize {
        self.scale.len()
    }

    pub fn sample(&self, step: f64, dim: usize, seed: u64) -> Result<FgnSequence> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        let m = self.scale.len();
        let n = self.n;
        let fft = FftPlanner::new().plan_fft_forward(m);
        let mut rng = rng_from_seed(seed);
        let mut buf = vec![Complex::new(0.0, 0.0); m];
        let mut increments = vec![0.0; n * dim];
        let step_scale = step.powf(self.hurst.value());

        for pair in 0..dim.div_ceil(2) {
            for (w, &s) in buf.iter_mut().zip(&self.scale) {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                *w = Complex::new(s * a, s * b);
            }
            fft.process(&mut buf);
            let (ja, jb) = (2 * pair, 2 * pair + 1);
            for k in 0..n {
                increments[k * dim + ja] = buf[k].re * step_scale;
                if jb < dim {
                    increments[k * dim + jb] = buf[k].im * step_scale;
                }
            }
        }
        Ok(FgnSequence {
            hurst: self.hurst,
            step,
            dim,
            increments,
        })
    }
}

/// `n` increments of a `dim`-dimensional fBm on the grid `k * step`.
pub fn sample_fgn(n: usize, hurst: HurstParameter, step: f64, dim: usize, seed: u64) -> Result<FgnSequence> {
    FgnSampler::new(n, hurst)?.sample(step, dim, seed)
}

pub fn sample_fbm_path(n: usize, hurst: HurstParameter, step: f64, dim: usize, seed: u64) -> Result<FbmPath> {
    if n == 0 {
        if !(step > 0.0) || dim == 0 {
            return Err(Error::InvalidParameter(
                "step must be positive and dim at least 1".into(),
            ));
        }
        return Ok(FbmPath {
            hurst,
            step,
            dim,
            values: vec![0.0; dim],
        });
    }
    Ok(FbmPath::from_increments(&sample_fgn(n, hurst, step, dim, seed)?))
}

/// Sample autocovariance of an fGn sample against the exact one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovarianceRow {
    pub lag: usize,
    pub empirical: f64,
    pub theoretical: f64,
    /// Exact standard deviation of `empirical` under the model.
    pub stderr: f64,
}

/// `ĉ_k = (1/(n−k)) Σ X_i X_{i+k}` for `k ≤ max_lag`, pooled over components.
///
/// For a stationary Gaussian sequence with autocovariance `c`,
/// `Var ĉ_k = (n−k)^{−2} Σ_{|j|<n−k} (n−k−|j|)(c_j² + c_{j+k} c_{j−k})`,
/// which is what `stderr` reports (divided by `√dim` for the pooling).
pub fn autocovariance_report(fgn: &FgnSequence, max_lag: usize) -> Vec<AutocovarianceRow> {
    let n = fgn.len();
    let d = fgn.dim;
    let scale = fgn.step.powf(fgn.hurst.two_h());
    let cov = |j: i64| scale * fgn_covariance(j.unsigned_abs() as usize, fgn.hurst);
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|k| {
            let m = n - k;
            let mut empirical = 0.0;
            for c in 0..d {
                let col = fgn.column(c);
                empirical += col[..m].iter().zip(&col[k..]).map(|(a, b)| a * b).sum::<f64>() / m as f64;
            }
            empirical /= d as f64;
            let kk = k as i64;
            let mut var = 0.0;
            for j in -(m as i64 - 1)..=(m as i64 - 1) {
                let w = (m as i64 - j.abs()) as f64;
                var += w * (cov(j) * cov(j) + cov(j + kk) * cov(j - kk));
            }
            var /= (m as f64) * (m as f64);
            AutocovarianceRow {
                lag: k,
                empirical,
                theoretical: cov(kk),
                stderr: (var / d as f64).sqrt(),
            }
        })
        .collect()
}

/// fBm increments over consecutive intervals of an arbitrary grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NonuniformIncrements {
    pub hurst: HurstParameter,
    pub times: Vec<f64>,
    pub dim: usize,
    /// `(times.len() - 1) × dim`, row-major.
    pub increments: Vec<f64>,
}

impl NonuniformIncrements {
    pub fn len(&self) -> usize {
        self.increments.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }
}

/// Lower-triangular Cholesky factor of a dense SPD matrix (row-major, in place).
fn cholesky_in_place(a: &mut [f64], n: usize) -> std::result::Result<(), (usize, f64)> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err((j, d));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Exact increments of a `dim`-dimensional fBm over the intervals of `times`.
///
/// `times` must start at 0 and be strictly increasing, with at most `cap` points.
pub fn sample_fbm_nonuniform(
    times: &[f64],
    hurst: HurstParameter,
    dim: usize,
    seed: u64,
    cap: usize,
) -> Result<NonuniformIncrements> {
    if times.len() > cap {
        return Err(Error::SizeCap { len: times.len(), cap });
    }
    if times.len() < 2 || times[0] != 0.0 {
        return Err(Error::InvalidParameter(
            "time grid must start at 0 and have at least two points".into(),
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    let n = times.len() - 1;
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (a, b) = (times[i], times[i + 1]);
            let (c, d) = (times[j], times[j + 1]);
            let e = hurst.two_h();
            let v =
                0.5 * ((b - c).abs().powf(e) + (a - d).abs().powf(e) - (a - c).abs().powf(e) - (b - d).abs().powf(e));
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    let mut factor = cov.clone();
    if cholesky_in_place(&mut factor, n).is_err() {
        let max_diag = (0..n).map(|i| cov[i * n + i]).fold(0.0, f64::max);
        let jitter = 1e-12 * max_diag;
        factor.copy_from_slice(&cov);
        for i in 0..n {
            factor[i * n + i] += jitter;
        }
        cholesky_in_place(&mut factor, n).map_err(|(pivot, value)| Error::NotPositiveDefinite { pivot, value })?;
    }

    let mut rng = rng_from_seed(seed);
    let mut increments = vec![0.0; n * dim];
    let mut xi = vec![0.0; n];
    for j in 0..dim {
        for x in xi.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        for i in 0..n {
            let row = &factor[i * n..i * n + i + 1];
            increments[i * dim + j] = row.iter().zip(&xi).map(|(l, x)| l * x).sum();
        }
    }
    Ok(NonuniformIncrements {
        hurst,
        times: times.to_vec(),
        dim,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autocovariance_report_white_noise() {
        let h = HurstParameter::new(0.5).unwrap();
        let fgn = sample_fgn(20_000, h, 0.25, 2, 3).unwrap();
        let rows = autocovariance_report(&fgn, 3);
        assert_eq!(rows.len(), 4);
        assert!((rows[0].theoretical - 0.25).abs() < 1e-15);
        assert_eq!(rows[1].theoretical, 0.0);
        // i.i.d. N(0, s²): Var ĉ_0 = 2s⁴/n, Var ĉ_k = s⁴/(n−k)
        assert!((rows[0].stderr - (2.0 * 0.0625 / 20_000.0 / 2.0f64).sqrt()).abs() < 1e-12);
        assert!((rows[2].stderr - (0.0625 / 19_998.0 / 2.0f64).sqrt()).abs() < 1e-12);
        for r in &rows {
            assert!((r.empirical - r.theoretical).abs() < 5.0 * r.stderr);
        }
    }

    fn h(v: f64) -> HurstParameter {
        HurstParameter::new(v).unwrap()
    }

    #[test]
    fn hurst_rejects_boundary() {
        assert!(HurstParameter::new(0.0).is_err());
        assert!(HurstParameter::new(1.0).is_err());
        assert!(HurstParameter::new(f64::NAN).is_err());
        assert!(HurstParameter::new(0.5).is_ok());
    }

    #[test]
    fn covariance_known_values() {
        for v in [0.1, 0.3, 0.5, 0.9] {
            assert_eq!(fgn_covariance(0, h(v)), 1.0);
        }
        assert!(fgn_covariance(1, h(0.5)).abs() < 1e-15);
        // ½(2^{1.4} − 2), 2^{1.4} from a 30-digit evaluation
        let expected = 0.5 * (2.639_015_821_545_788_5 - 2.0);
        assert!((fgn_covariance(1, h(0.7)) - expected).abs() < 1e-15);
    }

    #[test]
    fn same_seed_bit_identical() {
        let a = sample_fgn(1000, h(0.3), 0.5, 3, 99).unwrap();
        let b = sample_fgn(1000, h(0.3), 0.5, 3, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_fgn(1000, h(0.3), 0.5, 3, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn step_scaling_is_exact() {
        let unit = sample_fgn(257, h(0.7), 1.0, 2, 5).unwrap();
        let c: f64 = 0.01;
        let scaled = sample_fgn(257, h(0.7), c, 2, 5).unwrap();
        let factor = c.powf(0.7);
        for (u, s) in unit.increments.iter().zip(&scaled.increments) {
            assert_eq!(u * factor, *s);
        }
    }

    #[test]
    fn single_increment_and_empty_path() {
        let one = sample_fgn(1, h(0.3), 1.0, 1, 1).unwrap();
        assert_eq!(one.len(), 1);
        let path = sample_fbm_path(0, h(0.3), 1.0, 2, 1).unwrap();
        assert_eq!(path.values, vec![0.0, 0.0]);
        assert!(sample_fgn(0, h(0.3), 1.0, 1, 1).is_err());
        assert!(sample_fgn(4, h(0.3), -1.0, 1, 1).is_err());
    }

    #[test]
    fn path_is_cumulative_sum() {
        let fgn = sample_fgn(500, h(0.4), 0.1, 2, 3).unwrap();
        let path = sample_fbm_path(500, h(0.4), 0.1, 2, 3).unwrap();
        assert_eq!(path.row(0), &[0.0, 0.0]);
        let mut acc = [0.0, 0.0];
        for k in 0..fgn.len() {
            acc[0] += fgn.row(k)[0];
            acc[1] += fgn.row(k)[1];
            assert_eq!(path.row(k + 1), &acc);
        }
    }

    #[test]
    fn brownian_path_matches_random_walk_of_same_gaussians() {
        // For H = 1/2 the covariance is the identity, so the spectrum is flat and
        // the sample is an orthogonal transform of the Gaussians. Check the walk
        // property distributionally: increments uncorrelated with unit variance.
        let fgn = sample_fgn(50_000, h(0.5), 1.0, 1, 11).unwrap();
        let x = fgn.column(0);
        let n = x.len() as f64;
        let var = x.iter().map(|v| v * v).sum::<f64>() / n;
        let lag1 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n).sqrt());
        assert!(lag1.abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn spectrum_nonnegative() {
        for &v in &[0.05, 0.3, 0.5, 0.7, 0.95] {
            for &n in &[1, 2, 3, 10, 1000, 4097] {
                let eig = circulant_eigenvalues(n, h(v));
                let max = eig.iter().cloned().fold(0.0, f64::max);
                assert!(eig.iter().all(|&l| l >= -1e-9 * max), "H={v} n={n}");
            }
        }
    }

    #[test]
    fn aggregate_sums_blocks() {
        let fgn = sample_fgn(100, h(0.3), 0.1, 2, 4).unwrap();
        let agg = fgn.aggregate(10);
        assert_eq!(agg.len(), 10);
        assert!((agg.step - 1.0).abs() < 1e-15);
        let direct: f64 = (20..30).map(|k| fgn.row(k)[1]).sum();
        assert!((agg.row(2)[1] - direct).abs() < 1e-14);
    }

    #[test]
    fn nonuniform_rejects_bad_grids() {
        assert!(matches!(
            sample_fbm_nonuniform(&[0.0, 1.0, 2.0], h(0.3), 1, 0, 2),
            Err(Error::SizeCap { .. })
        ));
        assert!(sample_fbm_nonuniform(&[0.0, 1.0, 1.0], h(0.3), 1, 0, 10).is_err());
        assert!(sample_fbm_nonuniform(&[0.5, 1.0], h(0.3), 1, 0, 10).is_err());
    }

    #[test]
    fn nonuniform_single_interval_variance() {
        let t: f64 = 2.5;
        let reps = 20_000;
        let hh = h(0.3);
        let s2: f64 = (0..reps)
            .map(|s| sample_fbm_nonuniform(&[0.0, t], hh, 1, s, 10).unwrap().increments[0].powi(2))
            .sum::<f64>()
            / reps as f64;
        let expected = t.powf(0.6);
        let se = expected * (2.0 / reps as f64).sqrt();
        assert!((s2 - expected).abs() < 5.0 * se, "{s2} vs {expected}");
    }

    #[test]
    fn nonuniform_brownian_increments_independent() {
        let times = [0.0, 0.1, 0.5, 0.6, 2.0];
        let reps = 20_000;
        let mut second = [[0.0; 4]; 4];
        for s in 0..reps {
            let inc = sample_fbm_nonuniform(&times, h(0.5), 1, s, 10).unwrap().increments;
            for i in 0..4 {
                for j in 0..4 {
                    second[i][j] += inc[i] * inc[j] / reps as f64;
                }
            }
        }
        for i in 0..4 {
            let dt = times[i + 1] - times[i];
            assert!((second[i][i] - dt).abs() < 5.0 * dt * (2.0 / reps as f64).sqrt());
            for j in 0..i {
                let bound = 5.0 * ((times[i + 1] - times[i]) * (times[j + 1] - times[j]) / reps as f64).sqrt();
                assert!(second[i][j].abs() < bound);
            }
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let path = sample_fbm_path(3, h(0.3), 0.5, 2, 1).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,B_1,B_2");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0.0000000000000000e0,"));
    }
}
