//! Generator algebra on power sums and the Stein-method quantities built on
//! it: the matrices `Λ, Σ, R, S, T`, their small-time increment limits, and
//! the Monte Carlo Wasserstein-1 bound.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, relative_l1, IncrementOptions};
use crate::ensemble::{exact_sample, Configuration, EnsembleParams, SampleBatch};
use crate::error::{invalid, Error, Result};
use crate::fit::{log_log, LineFit};
use crate::par;
use crate::rng::{self, tag};
use crate::statistics::{lookup, power_sums};
use crate::stats::Estimate;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Closed form of `L_β p_k`:
/// `−n(β/2)|k|p_k − (1 − β/2)k²p_k − (β/2)|k| Σ_{l=1}^{|k|−1} p_{σl} p_{σ(|k|−l)}`
/// with `σ = sgn k`.
pub fn apply_generator_pk(config: &Configuration, k: i64, beta: f64) -> Complex64 {
    if k == 0 {
        return ZERO;
    }
    let a = k.unsigned_abs() as usize;
    let table = power_sums(config, a);
    let value = generator_from_table(&table, config.n(), a, beta);
    if k < 0 {
        value.conj()
    } else {
        value
    }
}

/// `L_β p_k` for `k ≥ 1` from `[p_0..p_k]`.
fn generator_from_table(table: &[Complex64], n: usize, k: usize, beta: f64) -> Complex64 {
    let kf = k as f64;
    let conv: Complex64 = (1..k).map(|l| table[l] * table[k - l]).sum();
    -(n as f64 * 0.5 * beta * kf) * table[k] - (1.0 - 0.5 * beta) * kf * kf * table[k] - 0.5 * beta * kf * conv
}

fn pairwise_cot(angles: &[f64], m: usize) -> Result<f64> {
    let mut s = 0.0;
    for (l, &xl) in angles.iter().enumerate() {
        if l == m {
            continue;
        }
        let t = ((angles[m] - xl) / 2.0).tan();
        if t == 0.0 || !t.is_finite() {
            return Err(Error::Collision(m.min(l), m.max(l)));
        }
        s += 1.0 / t;
    }
    Ok(s)
}

/// `L_β f` straight from the operator
/// `(β/2) Σ_m Σ_{l≠m} cot((x_m − x_l)/2) ∂_m + Σ_m ∂²_m`,
/// given the first and second partials of `f` per coordinate.
fn generator_numeric<F>(config: &Configuration, beta: f64, partials: F) -> Result<Complex64>
where
    F: Fn(usize) -> (Complex64, Complex64),
{
    let angles = config.angles();
    let mut total = ZERO;
    for m in 0..angles.len() {
        let (d1, d2) = partials(m);
        total += 0.5 * beta * pairwise_cot(angles, m)? * d1 + d2;
    }
    Ok(total)
}

/// Independent evaluation of `L_β p_k` by explicit differentiation and
/// explicit cotangent sums.
pub fn apply_generator_numeric(config: &Configuration, k: i64, beta: f64) -> Result<Complex64> {
    let kf = k as f64;
    let angles = config.angles();
    generator_numeric(config, beta, |m| {
        let e = Complex64::cis(kf * angles[m]);
        (Complex64::new(0.0, kf) * e, -kf * kf * e)
    })
}

/// `L_β(p_k p_l) = p_k L_β p_l + p_l L_β p_k − 2kl p_{k+l}`.
pub fn apply_generator_product(config: &Configuration, k: i64, l: i64, beta: f64) -> Complex64 {
    let pk = crate::statistics::power_sum(config, k);
    let pl = crate::statistics::power_sum(config, l);
    let pkl = crate::statistics::power_sum(config, k + l);
    pk * apply_generator_pk(config, l, beta) + pl * apply_generator_pk(config, k, beta) - 2.0 * (k * l) as f64 * pkl
}

/// Direct operator evaluation on the product `p_k p_l`.
pub fn apply_generator_product_numeric(config: &Configuration, k: i64, l: i64, beta: f64) -> Result<Complex64> {
    let (kf, lf) = (k as f64, l as f64);
    let angles = config.angles();
    let pk = crate::statistics::power_sum(config, k);
    let pl = crate::statistics::power_sum(config, l);
    generator_numeric(config, beta, |m| {
        let ek = Complex64::cis(kf * angles[m]);
        let el = Complex64::cis(lf * angles[m]);
        let ik = Complex64::new(0.0, kf);
        let il = Complex64::new(0.0, lf);
        let d1 = ik * ek * pl + il * el * pk;
        let d2 = -kf * kf * ek * pl - lf * lf * el * pk + 2.0 * ik * il * ek * el;
        (d1, d2)
    })
}

/// Stein matrices at one configuration. `Λ` and `Σ` are diagonal and stored
/// as their diagonals; `S` and `T` are row-major `d×d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinData {
    pub d: usize,
    pub beta: f64,
    pub n: usize,
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
    pub r: Vec<Complex64>,
    pub s: Vec<Complex64>,
    pub t: Vec<Complex64>,
}

impl SteinData {
    pub fn s_at(&self, j: usize, k: usize) -> Complex64 {
        self.s[(j - 1) * self.d + k - 1]
    }

    pub fn t_at(&self, j: usize, k: usize) -> Complex64 {
        self.t[(j - 1) * self.d + k - 1]
    }

    pub fn r_norm(&self) -> f64 {
        self.r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn s_hs(&self) -> f64 {
        self.s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn t_hs(&self) -> f64 {
        self.t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖Λ⁻¹‖_op = max_k 1/Λ_kk = (2/β)/n`.
    pub fn lambda_inv_op(&self) -> f64 {
        self.lambda.iter().map(|l| 1.0 / l).fold(0.0, f64::max)
    }

    /// `‖Σ^{−1/2}‖_op = max_k Σ_kk^{−1/2} = √(β/2)`.
    pub fn sigma_inv_sqrt_op(&self) -> f64 {
        self.sigma.iter().map(|s| 1.0 / s.sqrt()).fold(0.0, f64::max)
    }
}

fn stein_from_table(table: &[Complex64], n: usize, d: usize, beta: f64) -> SteinData {
    let half = 0.5 * beta;
    let lambda = (1..=d).map(|k| n as f64 * k as f64 * half).collect();
    let sigma = (1..=d).map(|k| 2.0 * k as f64 / beta).collect();
    let r = (1..=d)
        .map(|k| {
            let kf = k as f64;
            let conv: Complex64 = (1..k).map(|l| table[l] * table[k - l]).sum();
            // sign chosen so that −Λ_kk p_k + R_k = L_β p_k
            -kf * kf * (1.0 - half) * table[k] - kf * half * conv
        })
        .collect();
    let mut s = vec![ZERO; d * d];
    let mut t = vec![ZERO; d * d];
    for j in 1..=d {
        for k in 1..=d {
            let c = 2.0 * (j * k) as f64;
            if j != k {
                s[(j - 1) * d + k - 1] = c * lookup(table, j as i64 - k as i64);
            }
            t[(j - 1) * d + k - 1] = -c * table[j + k];
        }
    }
    SteinData { d, beta, n, lambda, sigma, r, s, t }
}

pub fn stein_data(config: &Configuration, d: usize, beta: f64) -> Result<SteinData> {
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    if !(beta > 0.0) {
        return Err(invalid("beta must be positive"));
    }
    Ok(stein_from_table(&power_sums(config, 2 * d), config.n(), d, beta))
}

/// Targets of the three small-time limits at one start `x`:
/// `−ΛW + R`, `2ΛΣ + S` and `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementLimits {
    pub d: usize,
    pub first: Vec<Complex64>,
    pub mixed: Vec<Complex64>,
    pub plain: Vec<Complex64>,
}

impl IncrementLimits {
    pub fn at(config: &Configuration, d: usize, beta: f64) -> Result<Self> {
        let sd = stein_data(config, d, beta)?;
        let p = power_sums(config, d);
        let first = (1..=d).map(|k| -sd.lambda[k - 1] * p[k] + sd.r[k - 1]).collect();
        let mut mixed = sd.s.clone();
        for k in 1..=d {
            mixed[(k - 1) * d + k - 1] += 2.0 * sd.lambda[k - 1] * sd.sigma[k - 1];
        }
        Ok(Self { d, first, mixed, plain: sd.t })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEntry {
    /// `first`, `mixed` or `plain`.
    pub kind: String,
    pub j: usize,
    /// Zero for first-order entries.
    pub k: usize,
    /// `Σ_starts |est − target| / Σ_starts |target|`
    pub relative_l1: f64,
    /// `Σ se / Σ|target|`
    pub relative_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    pub n: usize,
    pub beta: f64,
    pub d: usize,
    pub t_grid: Vec<f64>,
    pub starts: usize,
    pub noise_paths: usize,
    pub entries: Vec<LimitEntry>,
    pub inconclusive: bool,
}

impl IncrementReport {
    pub fn max_relative_l1(&self, kind: &str) -> f64 {
        self.entries.iter().filter(|e| e.kind == kind).map(|e| e.relative_l1).fold(0.0, f64::max)
    }
}

/// Small-time conditional moments of `W = (p_1..p_d)` from `m` exact CβE
/// starts, extrapolated to `t → 0` and compared entrywise with the targets
/// evaluated at each start.
pub fn verify_increment_limits(
    params: &EnsembleParams,
    d: usize,
    t_grid: &[f64],
    m: usize,
    opts: &IncrementOptions,
) -> Result<IncrementReport> {
    let batch = exact_sample(params, m)?;
    let opts = IncrementOptions { second_order: true, ..opts.clone() };
    let per_start = par::map_indexed(batch.len(), |i| -> Result<_> {
        let c = &batch.configs[i];
        let mom = dynamics::increment_moments(c, params.beta, d, t_grid, &opts, params.seed, i as u64)?;
        Ok((mom, IncrementLimits::at(c, d, params.beta)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::new();
    let mut push = |kind: &str, j: usize, k: usize, pick: &dyn Fn(&dynamics::IncrementMoments, &IncrementLimits) -> (Complex64, f64, Complex64)| {
        let rows: Vec<_> = per_start.iter().map(|(mom, lim)| pick(mom, lim)).collect();
        let est: Vec<Complex64> = rows.iter().map(|r| r.0).collect();
        let tgt: Vec<Complex64> = rows.iter().map(|r| r.2).collect();
        let den: f64 = tgt.iter().map(|t| t.norm()).sum();
        let se: f64 = rows.iter().map(|r| r.1).sum();
        entries.push(LimitEntry {
            kind: kind.into(),
            j,
            k,
            relative_l1: relative_l1(&est, &tgt),
            relative_noise: if den > 0.0 { se / den } else { 0.0 },
        });
    };
    for j in 1..=d {
        push("first", j, 0, &|mom, lim| (mom.first[j - 1].limit, mom.first[j - 1].se, lim.first[j - 1]));
    }
    for j in 1..=d {
        for k in 1..=d {
            let q = (j - 1) * d + k - 1;
            push("mixed", j, k, &|mom, lim| (mom.mixed[q].limit, mom.mixed[q].se, lim.mixed[q]));
            push("plain", j, k, &|mom, lim| (mom.plain[q].limit, mom.plain[q].se, lim.plain[q]));
        }
    }
    let inconclusive = entries.iter().any(|e| e.relative_noise >= 1.0);
    let mut t_sorted = t_grid.to_vec();
    t_sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(IncrementReport {
        n: params.n,
        beta: params.beta,
        d,
        t_grid: t_sorted,
        starts: m,
        noise_paths: opts.noise_paths,
        entries,
        inconclusive,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicScalingReport {
    pub t_grid: Vec<f64>,
    pub second: Vec<Estimate>,
    pub third: Vec<Estimate>,
    pub slope_second: LineFit,
    pub slope_third: LineFit,
}

/// Log-log exponents of `E|W_t − W|²` and `E|W_t − W|³` in `t` from `m`
/// stationary paths, each observed at every grid time.
pub fn cubic_increment_scaling(
    params: &EnsembleParams,
    d: usize,
    t_grid: &[f64],
    m: usize,
    cfg: &dynamics::DbmConfig,
) -> Result<CubicScalingReport> {
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < 2 || grid.iter().any(|t| !(*t > 0.0)) {
        return Err(invalid("need at least two positive times"));
    }
    if grid[grid.len() - 1] / grid[0] < 10.0 {
        return Err(invalid("the time grid must span at least one decade"));
    }
    let batch = exact_sample(params, m)?;
    let tmax = grid[grid.len() - 1];
    let paths = par::map_indexed(batch.len(), |i| -> Result<Vec<f64>> {
        let start = &batch.configs[i];
        let mut rng = rng::stream(params.seed, &[tag::DBM, i as u64]);
        let tr = dynamics::dbm_evolve(start, params.beta, tmax, cfg, &grid, &mut rng)?;
        let w0 = power_sums(start, d);
        Ok(tr.states[1..]
            .iter()
            .map(|s| {
                let w = power_sums(s, d);
                (1..=d).map(|k| (w[k] - w0[k]).norm_sqr()).sum::<f64>().sqrt()
            })
            .collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let col = |i: usize, p: i32| -> Estimate {
        Estimate::from_samples(&paths.iter().map(|r| r[i].powi(p)).collect::<Vec<_>>())
    };
    let second: Vec<Estimate> = (0..grid.len()).map(|i| col(i, 2)).collect();
    let third: Vec<Estimate> = (0..grid.len()).map(|i| col(i, 3)).collect();
    let fit = |e: &[Estimate]| {
        log_log(&grid, &e.iter().map(|x| x.mean).collect::<Vec<_>>())
            .ok_or_else(|| Error::OutOfRange("degenerate log-log fit".into()))
    };
    Ok(CubicScalingReport {
        slope_second: fit(&second)?,
        slope_third: fit(&third)?,
        t_grid: grid,
        second,
        third,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinBound {
    pub n: usize,
    pub d: usize,
    pub beta: f64,
    pub lambda_inv_op: f64,
    pub sigma_inv_sqrt_op: f64,
    pub r: Estimate,
    pub s_hs: Estimate,
    pub t_hs: Estimate,
    pub bound: f64,
    pub se: f64,
}

/// `‖Λ⁻¹‖(E|R| + (1/2π)‖Σ^{−1/2}‖ E(‖S‖_HS + ‖T‖_HS))` with sample means.
pub fn wasserstein_bound_mc(batch: &SampleBatch, d: usize) -> Result<WassersteinBound> {
    let (n, beta) = (batch.params.n, batch.params.beta);
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    let data: Vec<SteinData> =
        batch.configs.iter().map(|c| stein_from_table(&power_sums(c, 2 * d), n, d, beta)).collect();
    let li = data[0].lambda_inv_op();
    let si = data[0].sigma_inv_sqrt_op();
    let c = si / std::f64::consts::TAU;
    let rs: Vec<f64> = data.iter().map(|s| s.r_norm()).collect();
    let ss: Vec<f64> = data.iter().map(|s| s.s_hs()).collect();
    let ts: Vec<f64> = data.iter().map(|s| s.t_hs()).collect();
    let combined: Vec<f64> = (0..data.len()).map(|i| li * (rs[i] + c * (ss[i] + ts[i]))).collect();
    let total = Estimate::from_samples(&combined);
    Ok(WassersteinBound {
        n,
        d,
        beta,
        lambda_inv_op: li,
        sigma_inv_sqrt_op: si,
        r: Estimate::from_samples(&rs),
        s_hs: Estimate::from_samples(&ss),
        t_hs: Estimate::from_samples(&ts),
        bound: total.mean,
        se: total.se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingAuditConfig {
    pub beta: f64,
    /// Dimensions audited at `n_for_d`.
    pub d_grid: Vec<usize>,
    pub n_for_d: usize,
    /// Sizes audited at `d_for_n`.
    pub n_grid: Vec<usize>,
    pub d_for_n: usize,
    pub m: usize,
    pub seed: u64,
}

/// One CSV row of an audit: a quantity at `(d, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub quantity: String,
    pub d: usize,
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingAudit {
    pub config: ScalingAuditConfig,
    pub rows: Vec<ScalingRow>,
    /// Exponent of `E|R|` in `d`, over the `d` with `E|R| > 0`.
    pub r_slope: Option<LineFit>,
    pub s_slope: Option<LineFit>,
    pub t_slope: Option<LineFit>,
    /// Exponent of the bound in `n` at `d_for_n`.
    pub bound_n_slope: Option<LineFit>,
    /// `bound / (d^{7/2}/n)` across the `d` grid.
    pub rate_ratios: Vec<f64>,
}

fn positive_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = xs.iter().zip(ys).filter(|(_, y)| **y > 0.0).map(|(a, b)| (*a, *b)).unzip();
    if x.len() < 2 {
        return None;
    }
    log_log(&x, &y)
}

pub fn scaling_audit(cfg: &ScalingAuditConfig) -> Result<ScalingAudit> {
    if cfg.d_grid.is_empty() || cfg.n_grid.is_empty() || cfg.m < 2 {
        return Err(invalid("empty audit grid or too few samples"));
    }
    let mut rows = Vec::new();
    let mut cache: Vec<(usize, SampleBatch)> = Vec::new();
    let mut batch_for = |n: usize| -> Result<SampleBatch> {
        if let Some((_, b)) = cache.iter().find(|(k, _)| *k == n) {
            return Ok(b.clone());
        }
        let b = exact_sample(&EnsembleParams::new(n, cfg.beta, cfg.seed)?, cfg.m)?;
        cache.push((n, b.clone()));
        Ok(b)
    };

    let big = batch_for(cfg.n_for_d)?;
    let (mut r, mut s, mut t, mut ratios) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &d in &cfg.d_grid {
        let wb = wasserstein_bound_mc(&big, d)?;
        for (name, e) in [("r", wb.r), ("s_hs", wb.s_hs), ("t_hs", wb.t_hs)] {
            rows.push(ScalingRow { quantity: name.into(), d, n: cfg.n_for_d, estimate: e.mean, se: e.se });
        }
        rows.push(ScalingRow { quantity: "bound".into(), d, n: cfg.n_for_d, estimate: wb.bound, se: wb.se });
        r.push(wb.r.mean);
        s.push(wb.s_hs.mean);
        t.push(wb.t_hs.mean);
        ratios.push(wb.bound / ((d as f64).powf(3.5) / cfg.n_for_d as f64));
    }
    let ds: Vec<f64> = cfg.d_grid.iter().map(|&d| d as f64).collect();

    let mut bounds = Vec::new();
    for &n in &cfg.n_grid {
        let wb = wasserstein_bound_mc(&batch_for(n)?, cfg.d_for_n)?;
        if !cfg.d_grid.contains(&cfg.d_for_n) || n != cfg.n_for_d {
            rows.push(ScalingRow { quantity: "bound".into(), d: cfg.d_for_n, n, estimate: wb.bound, se: wb.se });
        }
        bounds.push(wb.bound);
    }
    let ns: Vec<f64> = cfg.n_grid.iter().map(|&n| n as f64).collect();
    Ok(ScalingAudit {
        config: cfg.clone(),
        rows,
        r_slope: positive_fit(&ds, &r),
        s_slope: positive_fit(&ds, &s),
        t_slope: positive_fit(&ds, &t),
        bound_n_slope: positive_fit(&ns, &bounds),
        rate_ratios: ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_config(n: usize, seed: u64) -> Configuration {
        let mut r = rng::stream(seed, &[99]);
        Configuration::from_unsorted((0..n).map(|_| r.random_range(0.0..std::f64::consts::TAU))).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn zeroth_and_first_orders() {
        let c = random_config(5, 1);
        assert_eq!(apply_generator_pk(&c, 0, 2.0), ZERO);
        let p1 = crate::statistics::power_sum(&c, 1);
        let beta = 1.5;
        let expect = -(5.0 * beta / 2.0 + 1.0 - beta / 2.0) * p1;
        assert!(close(apply_generator_pk(&c, 1, beta), expect, 1e-13));
    }

    #[test]
    fn single_particle_is_pure_diffusion() {
        let c = Configuration::new(vec![0.7]).unwrap();
        for k in -5i64..=5 {
            let pk = crate::statistics::power_sum(&c, k);
            let want = -((k * k) as f64) * pk;
            assert!(close(apply_generator_pk(&c, k, 3.0), want, 1e-13));
            assert!(close(apply_generator_numeric(&c, k, 3.0).unwrap(), want, 1e-13));
        }
    }

    #[test]
    fn closed_form_matches_operator() {
        for (i, &beta) in [0.5, 1.0, 2.0, 4.0].iter().enumerate() {
            let c = random_config(6, i as u64);
            for k in -6i64..=6 {
                let a = apply_generator_pk(&c, k, beta);
                let b = apply_generator_numeric(&c, k, beta).unwrap();
                assert!(close(a, b, 1e-9), "k={k} beta={beta}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn conjugation_symmetry() {
        let c = random_config(7, 11);
        for k in 1i64..=6 {
            assert!(close(apply_generator_pk(&c, -k, 2.5), apply_generator_pk(&c, k, 2.5).conj(), 1e-14));
        }
    }

    #[test]
    fn product_rule_cross_term() {
        let c = random_config(4, 3);
        let beta = 2.0;
        // k = 1, l = −1: cross term +2p_0 = 2n
        let p1 = crate::statistics::power_sum(&c, 1);
        let lp = apply_generator_pk(&c, 1, beta);
        let expect = p1 * lp.conj() + p1.conj() * lp + 8.0;
        assert!(close(apply_generator_product(&c, 1, -1, beta), expect, 1e-13));
        // l = 0 reduces to n·L p_k
        let nlk = 4.0 * apply_generator_pk(&c, 3, beta);
        assert!(close(apply_generator_product(&c, 3, 0, beta), nlk, 1e-13));
    }

    #[test]
    fn product_matches_operator() {
        let c = random_config(5, 8);
        for k in -4i64..=4 {
            for l in -4i64..=4 {
                let a = apply_generator_product(&c, k, l, 1.0);
                let b = apply_generator_product_numeric(&c, k, l, 1.0).unwrap();
                assert!(close(a, b, 1e-9), "({k},{l})");
            }
        }
    }

    #[test]
    fn coincident_angles_fail_the_operator() {
        let c = Configuration::new(vec![1.0, 1.0]).unwrap();
        assert!(apply_generator_numeric(&c, 1, 2.0).is_err());
    }

    #[test]
    fn stein_data_closed_forms() {
        let c = random_config(10, 4);
        let sd = stein_data(&c, 3, 2.0).unwrap();
        assert_eq!(sd.lambda, vec![10.0, 20.0, 30.0]);
        assert_eq!(sd.sigma, vec![1.0, 2.0, 3.0]);
        assert_eq!(sd.r[0], ZERO);
        for j in 1..=3 {
            assert_eq!(sd.s_at(j, j), ZERO);
            for k in 1..=3 {
                assert_eq!(sd.t_at(j, k), sd.t_at(k, j));
            }
        }
        assert!((sd.lambda_inv_op() - 0.1).abs() < 1e-15);
        assert!((sd.sigma_inv_sqrt_op() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decomposition_reproduces_generator() {
        for (i, &beta) in [0.5, 1.0, 2.0, 4.0].iter().enumerate() {
            let c = random_config(8, 20 + i as u64);
            let sd = stein_data(&c, 6, beta).unwrap();
            let p = power_sums(&c, 6);
            for k in 1..=6 {
                let lhs = -sd.lambda[k - 1] * p[k] + sd.r[k - 1];
                assert!(close(lhs, apply_generator_pk(&c, k as i64, beta), 1e-12));
            }
        }
    }

    #[test]
    fn mixed_diagonal_target_is_2k2n() {
        let c = random_config(9, 5);
        let lim = IncrementLimits::at(&c, 3, 1.3).unwrap();
        for k in 1..=3 {
            let v = lim.mixed[(k - 1) * 3 + k - 1];
            assert!((v.re - 2.0 * (k * k) as f64 * 9.0).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn bound_for_d1_at_beta2_is_t_only() {
        let params = EnsembleParams::new(12, 2.0, 3).unwrap();
        let batch = exact_sample(&params, 200).unwrap();
        let wb = wasserstein_bound_mc(&batch, 1).unwrap();
        assert_eq!(wb.r.mean, 0.0);
        assert_eq!(wb.s_hs.mean, 0.0);
        let t: f64 = batch.configs.iter().map(|c| 2.0 * power_sums(c, 2)[2].norm()).sum::<f64>() / 200.0;
        let expect = (1.0 / 12.0) * t / std::f64::consts::TAU;
        assert!((wb.bound - expect).abs() < 1e-12);
        assert!(wasserstein_bound_mc(&batch, 2).unwrap().bound > 0.0);
    }
}
