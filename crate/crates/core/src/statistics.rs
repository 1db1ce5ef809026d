//! Power sums `p_k(x) = Σ_j e^{ikx_j}`, the Gaussian comparison vector
//! `G_d`, and the Jiang–Matsumoto moment bounds.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Configuration, SampleBatch};
use crate::error::{invalid, Error, Result};
use crate::stats::{z_score, ComplexEstimate, Estimate};

pub fn power_sum(config: &Configuration, k: i64) -> Complex64 {
    let kf = k as f64;
    config.angles().iter().map(|&x| Complex64::cis(kf * x)).sum()
}

/// `[p_0, p_1, …, p_kmax]` in one pass of iterated multiplication.
pub fn power_sums(config: &Configuration, kmax: usize) -> Vec<Complex64> {
    power_sums_of(config.angles(), kmax)
}

/// As [`power_sums`], for any angle values (unwrapped or unordered).
pub fn power_sums_of(angles: &[f64], kmax: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); kmax + 1];
    out[0] = Complex64::new(angles.len() as f64, 0.0);
    for &x in angles {
        let z = Complex64::cis(x);
        let mut w = Complex64::new(1.0, 0.0);
        for (k, slot) in out.iter_mut().enumerate().skip(1) {
            w *= z;
            // bound rounding drift in long products
            if k % 64 == 0 {
                w /= w.norm();
            }
            *slot += w;
        }
    }
    out
}

/// Look up `p_k` for any integer `k` from a table of nonnegative orders.
#[inline]
pub fn lookup(table: &[Complex64], k: i64) -> Complex64 {
    if k >= 0 {
        table[k as usize]
    } else {
        table[(-k) as usize].conj()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSumVector {
    pub n: usize,
    /// `(p_1, …, p_d)`
    pub values: Vec<Complex64>,
}

impl PowerSumVector {
    pub fn d(&self) -> usize {
        self.values.len()
    }

    /// Real coordinates `(Re p_1, Im p_1, …, Re p_d, Im p_d)`.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|z| [z.re, z.im]).collect()
    }
}

pub fn power_sum_vector(config: &Configuration, d: usize) -> Result<PowerSumVector> {
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    let mut all = power_sums(config, d);
    all.remove(0);
    Ok(PowerSumVector { n: config.n(), values: all })
}

/// The limiting law `G_d = (√(2j/β) Z_j)_{j=1..d}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTarget {
    pub d: usize,
    pub beta: f64,
}

impl GaussianTarget {
    pub fn new(d: usize, beta: f64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d must be at least 1"));
        }
        if !(beta > 0.0) {
            return Err(invalid("beta must be positive"));
        }
        Ok(Self { d, beta })
    }

    /// `E|G_j|² = 2j/β`.
    pub fn variance(&self, j: usize) -> f64 {
        2.0 * j as f64 / self.beta
    }
}

/// Standard complex Gaussian: independent `N(0, 1/2)` parts, `E|Z|² = 1`, `EZ² = 0`.
pub fn standard_complex_normal<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn sample_gaussian_target<R: Rng>(target: &GaussianTarget, m: usize, rng: &mut R) -> Vec<Vec<Complex64>> {
    (0..m)
        .map(|_| {
            (1..=target.d)
                .map(|j| standard_complex_normal(rng) * target.variance(j).sqrt())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentBound {
    pub a: f64,
    pub b: f64,
    /// `B·(2/β)·m`
    pub bound: f64,
}

fn jm_factor(m: usize, n: usize, beta: f64) -> f64 {
    (2.0 / beta - 1.0).abs() / ((n - m) as f64 + 2.0 / beta)
}

/// The constants `A`, `B` and the bound on `E|p_m|²`, valid for `0 ≤ m ≤ n`.
pub fn jm_second_moment_bound(m: usize, n: usize, beta: f64) -> Result<SecondMomentBound> {
    if !(beta > 0.0) {
        return Err(invalid("beta must be positive"));
    }
    if m > n {
        return Err(Error::OutOfRange(format!("moment index m = {m} exceeds n = {n}")));
    }
    let f = jm_factor(m, n, beta);
    let a = if beta <= 2.0 { (1.0 - f).powi(m as i32) } else { 1.0 };
    let b = if beta > 2.0 { (1.0 + f).powi(m as i32) } else { 1.0 };
    Ok(SecondMomentBound { a, b, bound: b * 2.0 / beta * m as f64 })
}

/// Bound on `|E(p_j p_{m−j} p_{−k} p_{k−m})|` for `0 ≤ j, k ≤ m ≤ n`.
///
/// The moment is invariant under `k ↦ m − k`, so the "matching" case uses
/// `B(2/β)²·2j(m−j)` whenever `k ∈ {j, m−j}`; otherwise
/// `max{|A−1|, |B−1|}(2/β)²·2√(j(m−j)k(m−k))`.
pub fn jm_fourth_moment_bound(j: usize, k: usize, m: usize, n: usize, beta: f64) -> Result<f64> {
    if j > m || k > m {
        return Err(Error::OutOfRange(format!("need j, k ≤ m; got j={j}, k={k}, m={m}")));
    }
    let SecondMomentBound { a, b, .. } = jm_second_moment_bound(m, n, beta)?;
    let scale = (2.0 / beta).powi(2);
    let (jf, kf, mf) = (j as f64, k as f64, m as f64);
    if k == j || k == m - j {
        Ok(b * scale * 2.0 * jf * (mf - jf))
    } else {
        let c = (a - 1.0).abs().max((b - 1.0).abs());
        Ok(c * scale * 2.0 * (jf * (mf - jf) * kf * (mf - kf)).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    /// "second" for `E|p_m|²`, "fourth" for `E(p_j p_{m−j} p_{−k} p_{k−m})`.
    pub kind: String,
    pub m: usize,
    pub j: Option<usize>,
    pub k: Option<usize>,
    pub estimate_re: f64,
    pub estimate_im: f64,
    pub se: f64,
    pub a: f64,
    pub b: f64,
    pub bound: f64,
    /// `|estimate| > bound + 3·se`
    pub exceeds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: usize,
    pub beta: f64,
    pub d: usize,
    pub samples: usize,
    /// False below 500 samples.
    pub sufficient_samples: bool,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn all_within_bounds(&self) -> bool {
        self.rows.iter().all(|r| !r.exceeds)
    }

    pub fn second(&self, m: usize) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.kind == "second" && r.m == m)
    }
}

const MOMENT_BATCHES: usize = 20;

/// Monte Carlo second and fourth moments of the power sums against the
/// Jiang–Matsumoto bounds. Fourth moments cover `2 ≤ m ≤ d` with interior
/// indices `1 ≤ j, k ≤ m − 1`; orders above `n` are skipped.
pub fn moment_report(batch: &SampleBatch, d: usize) -> Result<MomentReport> {
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    let (n, beta) = (batch.params.n, batch.params.beta);
    let tables: Vec<Vec<Complex64>> = batch.configs.iter().map(|c| power_sums(c, d)).collect();
    let mut rows = Vec::new();
    for m in 1..=d.min(n) {
        let vals: Vec<f64> = tables.iter().map(|t| t[m].norm_sqr()).collect();
        let est = Estimate::from_samples(&vals);
        let b = jm_second_moment_bound(m, n, beta)?;
        rows.push(MomentRow {
            kind: "second".into(),
            m,
            j: None,
            k: None,
            estimate_re: est.mean,
            estimate_im: 0.0,
            se: est.se,
            a: b.a,
            b: b.b,
            bound: b.bound,
            exceeds: est.mean > b.bound + 3.0 * est.se,
        });
    }
    for m in 2..=d.min(n) {
        let consts = jm_second_moment_bound(m, n, beta)?;
        for j in 1..m {
            for k in 1..m {
                let vals: Vec<Complex64> = tables
                    .iter()
                    .map(|t| t[j] * t[m - j] * t[k].conj() * t[m - k].conj())
                    .collect();
                let est = ComplexEstimate::batch_means(&vals, MOMENT_BATCHES);
                let bound = jm_fourth_moment_bound(j, k, m, n, beta)?;
                let mean = est.mean();
                rows.push(MomentRow {
                    kind: "fourth".into(),
                    m,
                    j: Some(j),
                    k: Some(k),
                    estimate_re: mean.re,
                    estimate_im: mean.im,
                    se: est.se(),
                    a: consts.a,
                    b: consts.b,
                    bound,
                    exceeds: mean.norm() > bound + 3.0 * est.se(),
                });
            }
        }
    }
    Ok(MomentReport { n, beta, d, samples: batch.len(), sufficient_samples: batch.len() >= 500, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRow {
    pub j: usize,
    pub k: usize,
    pub estimate_re: f64,
    pub estimate_im: f64,
    pub se_re: f64,
    pub se_im: f64,
    /// `δ_jk · 2k/β`
    pub limit: f64,
    /// `δ_jk · min(k, n)`, β = 2 only.
    pub exact: Option<f64>,
    /// Relative error against `limit` on the diagonal.
    pub relative_error: Option<f64>,
    /// Larger of the real and imaginary |z| against `exact` (β = 2) or `limit`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub n: usize,
    pub beta: f64,
    pub d: usize,
    pub samples: usize,
    pub rows: Vec<CovarianceRow>,
}

impl CovarianceReport {
    pub fn max_diagonal_relative_error(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.relative_error).fold(0.0, f64::max)
    }

    pub fn max_abs_z(&self, diagonal: bool) -> f64 {
        self.rows.iter().filter(|r| (r.j == r.k) == diagonal).map(|r| r.z).fold(0.0, f64::max)
    }
}

/// `Ê(p_j p_{−k})` for `1 ≤ j, k ≤ d` against the limiting covariance
/// `diag(2k/β)` and, at β = 2, the exact CUE value.
pub fn covariance_report(batch: &SampleBatch, d: usize) -> Result<CovarianceReport> {
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    let (n, beta) = (batch.params.n, batch.params.beta);
    let tables: Vec<Vec<Complex64>> = batch.configs.iter().map(|c| power_sums(c, d)).collect();
    let mut rows = Vec::with_capacity(d * d);
    for j in 1..=d {
        for k in 1..=d {
            let vals: Vec<Complex64> = tables.iter().map(|t| t[j] * t[k].conj()).collect();
            let est = ComplexEstimate::from_samples(&vals);
            let diag = j == k;
            let limit = if diag { 2.0 * k as f64 / beta } else { 0.0 };
            let exact = (beta == 2.0).then(|| if diag { k.min(n) as f64 } else { 0.0 });
            let target = exact.unwrap_or(limit);
            // |p_j|² is real to rounding
            let z_im = if diag { 0.0 } else { z_score(est.im.mean, est.im.se).abs() };
            rows.push(CovarianceRow {
                j,
                k,
                estimate_re: est.re.mean,
                estimate_im: est.im.mean,
                se_re: est.re.se,
                se_im: est.im.se,
                limit,
                exact,
                relative_error: diag.then(|| (est.re.mean - limit).abs() / limit),
                z: z_score(est.re.mean - target, est.re.se).abs().max(z_im),
            });
        }
    }
    Ok(CovarianceReport { n, beta, d, samples: batch.len(), rows })
}
