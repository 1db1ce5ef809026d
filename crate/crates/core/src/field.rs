//! Fourier fields on the circle: the logarithm of the characteristic
//! polynomial, its real and imaginary parts `X_n`, `Y_n`, the limiting
//! Gaussian fields, and negative-order Sobolev norms.
//!
//! A field stores `f_k` for `|k| ≤ J`, the coefficient of `e^{ikθ}`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{exact_sample, Configuration, EnsembleParams, SampleBatch};
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::rng::{self, tag};
use crate::statistics::{power_sums, standard_complex_normal};
use crate::stats::{z_score, ComplexEstimate, Estimate};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierField {
    j_max: usize,
    coeffs: Vec<Complex64>,
}

/// One line of the `(index, re, im)` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub index: i64,
    pub re: f64,
    pub im: f64,
}

impl FourierField {
    pub fn zero(j_max: usize) -> Self {
        Self { j_max, coeffs: vec![ZERO; 2 * j_max + 1] }
    }

    /// From `f_{−J}, …, f_J`; the constant term must vanish.
    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len().is_multiple_of(2) {
            return Err(Error::SizeMismatch("coefficient vector must have odd length 2J+1".into()));
        }
        let j_max = coeffs.len() / 2;
        if coeffs[j_max] != ZERO {
            return Err(invalid("constant coefficient must be zero"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coefficients must be finite"));
        }
        Ok(Self { j_max, coeffs })
    }

    /// Real field with `f_{−j} = g(j)` and `f_j = conj(g(j))`.
    fn real_from(j_max: usize, g: impl Fn(usize) -> Complex64) -> Self {
        let mut f = Self::zero(j_max);
        for j in 1..=j_max {
            let c = g(j);
            f.set(-(j as i64), c);
            f.set(j as i64, c.conj());
        }
        f
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `f_k`, zero outside the truncation.
    pub fn coeff(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.j_max {
            return ZERO;
        }
        self.coeffs[(k + self.j_max as i64) as usize]
    }

    fn set(&mut self, k: i64, c: Complex64) {
        self.coeffs[(k + self.j_max as i64) as usize] = c;
    }

    /// `f_{−k} = conj(f_k)` exactly for every `k`.
    pub fn is_hermitian(&self) -> bool {
        (1..=self.j_max as i64).all(|k| self.coeff(-k) == self.coeff(k).conj())
    }

    /// `Σ_k f_k e^{ikθ}`.
    pub fn evaluate(&self, theta: f64) -> Complex64 {
        let j = self.j_max as i64;
        (-j..=j).map(|k| self.coeff(k) * Complex64::cis(k as f64 * theta)).sum()
    }

    /// Values at `θ_l = 2πl/points`.
    pub fn evaluate_grid(&self, points: usize) -> Vec<Complex64> {
        let step = std::f64::consts::TAU / points as f64;
        par::map_indexed(points, |l| self.evaluate(l as f64 * step))
    }

    pub fn rows(&self) -> Vec<CoefficientRow> {
        let j = self.j_max as i64;
        (-j..=j).map(|k| CoefficientRow { index: k, re: self.coeff(k).re, im: self.coeff(k).im }).collect()
    }
}

/// `Σ_{|k|≤J} (1+k²)^s |f_k|²`.
pub fn sobolev_norm_sq(field: &FourierField, s: f64) -> f64 {
    let j = field.j_max as i64;
    (-j..=j).map(|k| (1.0 + (k * k) as f64).powf(s) * field.coeff(k).norm_sqr()).sum()
}

fn check_j(j_max: usize) -> Result<()> {
    if j_max == 0 {
        return Err(invalid("truncation J must be at least 1"));
    }
    Ok(())
}

/// One-sided expansion `log P_n(θ) = −Σ_{j≥1} p_j e^{−ijθ}/j`, truncated at `J`.
pub fn log_char_poly_coeffs(config: &Configuration, j_max: usize) -> Result<FourierField> {
    check_j(j_max)?;
    let p = power_sums(config, j_max);
    let mut f = FourierField::zero(j_max);
    for (j, pj) in p.iter().enumerate().skip(1) {
        f.set(-(j as i64), -pj / j as f64);
    }
    Ok(f)
}

/// `(X_n, Y_n)` with `X_n + iY_n = log P_n` coefficientwise.
pub fn xn_yn_fields(config: &Configuration, j_max: usize) -> Result<(FourierField, FourierField)> {
    check_j(j_max)?;
    let p = power_sums(config, j_max);
    Ok(split_fields(&p, j_max))
}

fn split_fields(p: &[Complex64], j_max: usize) -> (FourierField, FourierField) {
    let x = FourierField::real_from(j_max, |j| -p[j] / (2 * j) as f64);
    let y = FourierField::real_from(j_max, |j| Complex64::i() * p[j] / (2 * j) as f64);
    (x, y)
}

/// Truncated `(√(2/β) X, √(2/β) Y)` from one shared draw of `(Z_j)`.
pub fn sample_limiting_field<R: Rng>(j_max: usize, beta: f64, rng: &mut R) -> Result<(FourierField, FourierField)> {
    check_j(j_max)?;
    if !(beta > 0.0) {
        return Err(invalid("beta must be positive"));
    }
    let z: Vec<Complex64> = (0..=j_max).map(|j| if j == 0 { ZERO } else { standard_complex_normal(rng) }).collect();
    let scale = (2.0 / beta).sqrt();
    let a = |j: usize| scale / (2.0 * (j as f64).sqrt());
    let x = FourierField::real_from(j_max, |j| z[j] * a(j));
    let y = FourierField::real_from(j_max, |j| -Complex64::i() * z[j] * a(j));
    Ok((x, y))
}

/// `m` independent limiting-field pairs on streams `(seed, FIELD, i)`.
pub fn sample_limiting_fields(j_max: usize, beta: f64, m: usize, seed: u64) -> Result<Vec<(FourierField, FourierField)>> {
    check_j(j_max)?;
    par::map_indexed(m, |i| sample_limiting_field(j_max, beta, &mut rng::stream(seed, &[tag::FIELD, i as u64])))
        .into_iter()
        .collect()
}

pub fn xn_yn_batch(batch: &SampleBatch, j_max: usize) -> Result<Vec<(FourierField, FourierField)>> {
    check_j(j_max)?;
    Ok(par::map_indexed(batch.len(), |i| split_fields(&power_sums(&batch.configs[i], j_max), j_max)))
}

/// Second-order structure of `c = (X_{−1..−K}, Y_{−1..−K})`, the coefficients
/// at `e^{−ijθ}`: `E[c_a conj(c_b)]` and `E[c_a c_b]` for `a ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientCovariance {
    pub k: usize,
    pub samples: usize,
    pub entries: Vec<CovarianceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEntry {
    pub a: usize,
    pub b: usize,
    /// `true` for `E[c_a c_b]`, `false` for `E[c_a conj(c_b)]`.
    pub pseudo: bool,
    pub value: ComplexEstimate,
}

pub fn coefficient_covariance(fields: &[(FourierField, FourierField)], k: usize) -> Result<CoefficientCovariance> {
    if k == 0 {
        return Err(invalid("need at least one coefficient"));
    }
    if fields.iter().any(|(x, y)| x.j_max < k || y.j_max < k) {
        return Err(Error::OutOfRange(format!("fields truncated below order {k}")));
    }
    let vectors: Vec<Vec<Complex64>> = fields
        .iter()
        .map(|(x, y)| {
            let idx = (1..=k as i64).map(|j| -j);
            idx.clone().map(|j| x.coeff(j)).chain(idx.map(|j| y.coeff(j))).collect()
        })
        .collect();
    let dim = 2 * k;
    let mut entries = Vec::with_capacity(dim * (dim + 1));
    for pseudo in [false, true] {
        for a in 0..dim {
            for b in a..dim {
                let prods: Vec<Complex64> = vectors
                    .iter()
                    .map(|c| if pseudo { c[a] * c[b] } else { c[a] * c[b].conj() })
                    .collect();
                entries.push(CovarianceEntry { a, b, pseudo, value: ComplexEstimate::from_samples(&prods) });
            }
        }
    }
    Ok(CoefficientCovariance { k, samples: fields.len(), entries })
}

/// Exact covariance of the truncated limiting fields, in the entry order of
/// [`coefficient_covariance`].
pub fn limiting_covariance(k: usize, beta: f64) -> Vec<Complex64> {
    let var = |j: usize| 2.0 / beta / (4.0 * j as f64);
    let dim = 2 * k;
    let mut out = Vec::with_capacity(dim * (dim + 1));
    for pseudo in [false, true] {
        for a in 0..dim {
            for b in a..dim {
                let v = if pseudo || a % k != b % k {
                    ZERO
                } else {
                    let j = a % k + 1;
                    match (a < k, b < k) {
                        (true, true) | (false, false) => Complex64::new(var(j), 0.0),
                        // E[X conj(Y)] with Y = −iX coefficientwise
                        _ => Complex64::new(0.0, var(j)),
                    }
                };
                out.push(v);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceComparison {
    pub k: usize,
    /// Per entry: larger of the real and imaginary |z|.
    pub z: Vec<f64>,
    pub max_abs_z: f64,
}

impl CovarianceComparison {
    pub fn within(&self, z: f64) -> bool {
        self.max_abs_z <= z
    }
}

/// Entrywise z-scores between two independent covariance estimates.
pub fn compare_covariances(a: &CoefficientCovariance, b: &CoefficientCovariance) -> Result<CovarianceComparison> {
    if a.k != b.k {
        return Err(Error::SizeMismatch("covariances of different orders".into()));
    }
    // entries that vanish identically in both laws carry only rounding noise
    let part = |x: &Estimate, y: &Estimate| {
        let diff = x.mean - y.mean;
        if diff.abs() <= 1e-12 {
            0.0
        } else {
            z_score(diff, x.se.hypot(y.se)).abs()
        }
    };
    let z: Vec<f64> = a
        .entries
        .iter()
        .zip(&b.entries)
        .map(|(p, q)| part(&p.value.re, &q.value.re).max(part(&p.value.im, &q.value.im)))
        .collect();
    let max_abs_z = z.iter().copied().fold(0.0, f64::max);
    Ok(CovarianceComparison { k: a.k, z, max_abs_z })
}

/// `½ Σ_{j=1}^{J} (1+j²)^{−s′} min(j,n)/j²`, the CUE value of `E‖X_n‖²_{−s′}`.
pub fn closed_surrogate(n: usize, s_prime: f64, j_max: usize) -> f64 {
    0.5 * (1..=j_max)
        .map(|j| {
            let jf = j as f64;
            (1.0 + jf * jf).powf(-s_prime) * j.min(n) as f64 / (jf * jf)
        })
        .sum::<f64>()
}

/// The closed surrogate with no truncation (summed until terms are negligible,
/// then an integral tail).
pub fn closed_surrogate_untruncated(n: usize, s_prime: f64) -> f64 {
    let cut = (1 << 20).max(4 * n);
    let head = closed_surrogate(n, s_prime, cut);
    // for j > cut ≥ n the summand is ≈ n j^{−2−2s′}
    let e = 1.0 + 2.0 * s_prime;
    head + 0.5 * n as f64 * (cut as f64 + 0.5).powf(-e) / e
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub n: usize,
    pub j_max: usize,
    pub m: usize,
    /// Monte Carlo mean of `‖X_n‖²_{−s′}`.
    pub estimate: f64,
    pub se: f64,
    /// `½ Σ (1+j²)^{−s′} j^{−2} Ê|p_j|²`.
    pub surrogate: f64,
    /// β = 2 only.
    pub closed: Option<f64>,
    pub closed_untruncated: Option<f64>,
    pub z_closed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub beta: f64,
    pub s_prime: f64,
    pub rows: Vec<TightnessRow>,
    pub undersampled: bool,
    /// Not a strictly increasing sequence rising by more than two combined SEs overall.
    pub bounded: bool,
    pub max_abs_z_closed: Option<f64>,
}

impl TightnessReport {
    pub fn from_rows(beta: f64, s_prime: f64, rows: Vec<TightnessRow>) -> Self {
        let undersampled = rows.iter().any(|r| r.m < 500);
        let monotone = rows.windows(2).all(|w| w[1].estimate > w[0].estimate);
        let growth = match (rows.first(), rows.last()) {
            (Some(a), Some(b)) if rows.len() > 1 => z_score(b.estimate - a.estimate, a.se.hypot(b.se)),
            _ => 0.0,
        };
        let bounded = !(monotone && growth > 2.0);
        let zs: Vec<f64> = rows.iter().filter_map(|r| r.z_closed).map(f64::abs).collect();
        let max_abs_z_closed = (!zs.is_empty()).then(|| zs.iter().copied().fold(0.0, f64::max));
        Self { beta, s_prime, rows, undersampled, bounded, max_abs_z_closed }
    }
}

fn check_s_prime(s_prime: f64) -> Result<()> {
    if !(s_prime > 0.5 && s_prime < 1.0) {
        return Err(invalid(format!("s' must lie in (1/2, 1), got {s_prime}")));
    }
    Ok(())
}

/// Tightness statistics of one batch with truncation `J`.
pub fn tightness_row(batch: &SampleBatch, s_prime: f64, j_max: usize) -> Result<TightnessRow> {
    check_s_prime(s_prime)?;
    let n = batch.params.n;
    if j_max < n {
        return Err(invalid(format!("truncation J = {j_max} is below n = {n}")));
    }
    let weight: Vec<f64> = (0..=j_max)
        .map(|j| if j == 0 { 0.0 } else { 0.5 * (1.0 + (j * j) as f64).powf(-s_prime) / (j * j) as f64 })
        .collect();
    let per_sample: Vec<Vec<f64>> =
        par::map_indexed(batch.len(), |i| power_sums(&batch.configs[i], j_max).iter().map(|p| p.norm_sqr()).collect());
    let norms: Vec<f64> =
        per_sample.iter().map(|sq| sq.iter().zip(&weight).map(|(s, w)| s * w).sum()).collect();
    let est = Estimate::from_samples(&norms);
    let m = batch.len() as f64;
    let surrogate = (1..=j_max).map(|j| weight[j] * per_sample.iter().map(|sq| sq[j]).sum::<f64>() / m).sum();
    let cue = batch.params.beta == 2.0;
    let closed = cue.then(|| closed_surrogate(n, s_prime, j_max));
    Ok(TightnessRow {
        n,
        j_max,
        m: batch.len(),
        estimate: est.mean,
        se: est.se,
        surrogate,
        closed,
        closed_untruncated: cue.then(|| closed_surrogate_untruncated(n, s_prime)),
        z_closed: closed.map(|c| z_score(est.mean - c, est.se)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessConfig {
    pub beta: f64,
    pub s_prime: f64,
    pub n_grid: Vec<usize>,
    pub m: usize,
    /// Truncation as a multiple of `n`, at least 1.
    pub j_factor: usize,
    pub seed: u64,
}

/// Exact-sampler batches over the `n` grid, one row each.
pub fn tightness_report(cfg: &TightnessConfig) -> Result<TightnessReport> {
    check_s_prime(cfg.s_prime)?;
    if cfg.j_factor == 0 {
        return Err(invalid("j_factor must be at least 1"));
    }
    let rows = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let params = EnsembleParams::new(n, cfg.beta, rng::derive_seed(cfg.seed, &[n as u64]))?;
            tightness_row(&exact_sample(&params, cfg.m)?, cfg.s_prime, cfg.j_factor * n)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TightnessReport::from_rows(cfg.beta, cfg.s_prime, rows))
}
