//! Empirical Wasserstein-1 distances between equally weighted point clouds.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::{exact_sample, EnsembleParams};
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::rng::{self, tag};
use crate::statistics::{power_sum_vector, sample_gaussian_target, GaussianTarget};
use crate::stats::Estimate;

/// Largest cloud the exact solver accepts.
pub const EXACT_CAP: usize = 2000;
/// Projection count of the sliced estimate.
pub const SLICED_PROJECTIONS: usize = 128;
const SLICED_SEED: u64 = 0x5eed_51ce;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points.first().ok_or_else(|| invalid("a point cloud needs at least one point"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(invalid("points need at least one coordinate"));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::SizeMismatch("points of different dimensions".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        Ok(Self { points })
    }

    /// Complex vectors as `(Re z_1, Im z_1, …)`.
    pub fn from_complex(vectors: &[Vec<num_complex::Complex64>]) -> Result<Self> {
        Self::new(vectors.iter().map(|v| v.iter().flat_map(|z| [z.re, z.im]).collect()).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn subset(&self, idx: impl Iterator<Item = usize>) -> Self {
        Self { points: idx.map(|i| self.points[i].clone()).collect() }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum W1Method {
    Exact,
    Sliced,
}

/// Minimum-cost perfect matching on a square cost matrix by shortest
/// augmenting paths with potentials. Returns `col[i]`, the column matched to row `i`.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let m = cost.len();
    if cost.iter().any(|r| r.len() != m) {
        return Err(Error::SizeMismatch("cost matrix must be square".into()));
    }
    // 1-based arrays, index 0 is the virtual source
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=m {
        row_of[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            if j1 == 0 {
                return Err(Error::OutOfRange("non-finite assignment cost".into()));
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0usize; m];
    for j in 1..=m {
        col[row_of[j] - 1] = j - 1;
    }
    Ok(col)
}

/// Pairwise Euclidean costs, rows in parallel.
pub fn cost_matrix(a: &PointCloud, b: &PointCloud) -> Vec<Vec<f64>> {
    par::map_indexed(a.len(), |i| b.points.iter().map(|q| euclidean(&a.points[i], q)).collect())
}

/// Exact W1: mean matched distance of an optimal assignment, summed in row order.
pub fn exact_w1(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(format!("clouds of sizes {} and {}", a.len(), b.len())));
    }
    if a.dim() != b.dim() {
        return Err(Error::SizeMismatch("clouds of different dimensions".into()));
    }
    if a.len() > EXACT_CAP {
        return Err(Error::OutOfRange(format!("exact solver is capped at {EXACT_CAP} points")));
    }
    let cost = cost_matrix(a, b);
    let col = solve_assignment(&cost)?;
    let total: f64 = col.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(total / a.len() as f64)
}

/// One-dimensional W1 `∫|F − G|` between empirical laws of any sizes.
pub fn w1_1d(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut prev = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    total
}

/// Mean 1-d W1 over `projections` random unit directions drawn from `seed`.
pub fn sliced_w1(a: &PointCloud, b: &PointCloud, projections: usize, seed: u64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::SizeMismatch("clouds of different dimensions".into()));
    }
    if projections == 0 {
        return Err(invalid("need at least one projection"));
    }
    let mut rng = rng::stream(seed, &[tag::SLICE]);
    let dim = a.dim();
    let mut total = 0.0;
    for _ in 0..projections {
        let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x /= norm);
        let proj = |c: &PointCloud| -> Vec<f64> {
            c.points.iter().map(|p| p.iter().zip(&dir).map(|(x, y)| x * y).sum()).collect()
        };
        total += w1_1d(&mut proj(a), &mut proj(b));
    }
    Ok(total / projections as f64)
}

pub fn empirical_w1(a: &PointCloud, b: &PointCloud, method: W1Method) -> Result<f64> {
    match method {
        W1Method::Exact => exact_w1(a, b),
        W1Method::Sliced => sliced_w1(a, b, SLICED_PROJECTIONS, SLICED_SEED),
    }
}

/// Point estimate with a spread from `k` disjoint subsamples, rescaled to
/// the full size as `sd/√k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W1Estimate {
    pub w1: f64,
    pub se: f64,
}

pub fn w1_with_se(a: &PointCloud, b: &PointCloud, method: W1Method, k: usize) -> Result<W1Estimate> {
    let w1 = empirical_w1(a, b, method)?;
    let m = a.len().min(b.len());
    if k < 2 || m < 2 * k {
        return Ok(W1Estimate { w1, se: f64::NAN });
    }
    let size = m / k;
    let subs = (0..k)
        .map(|s| {
            let range = s * size..(s + 1) * size;
            empirical_w1(&a.subset(range.clone()), &b.subset(range), method)
        })
        .collect::<Result<Vec<f64>>>()?;
    let spread = Estimate::from_samples(&subs);
    Ok(W1Estimate { w1, se: spread.se })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W1Row {
    pub n: usize,
    pub d: usize,
    pub beta: f64,
    pub w1: f64,
    pub se: f64,
    pub floor: f64,
    pub floor_se: f64,
    pub method: W1Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W1Experiment {
    pub m: usize,
    pub subsamples: usize,
    pub rows: Vec<W1Row>,
}

impl W1Experiment {
    /// Each step down the `n` grid rises by at most `z` combined SEs.
    pub fn nonincreasing_within(&self, z: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].w1 <= w[0].w1 + z * w[0].se.hypot(w[1].se))
    }

    /// The last row is within `z` combined SEs of the same-law floor.
    pub fn reaches_floor_within(&self, z: f64) -> bool {
        self.rows.last().is_some_and(|r| (r.w1 - r.floor).abs() <= z * r.se.hypot(r.floor_se))
    }
}

/// For each `n`, Ŵ1 between `m` draws of `T_d` and `m` draws of `G_d`, with
/// the same-law floor (two independent `G_d` batches) alongside.
pub fn w1_convergence_experiment(
    beta: f64,
    d: usize,
    n_grid: &[usize],
    m: usize,
    method: W1Method,
    seed: u64,
) -> Result<W1Experiment> {
    const K: usize = 5;
    if method == W1Method::Exact && m > EXACT_CAP {
        return Err(Error::OutOfRange(format!("m = {m} exceeds the exact solver cap {EXACT_CAP}")));
    }
    let target = GaussianTarget::new(d, beta)?;
    let gauss = |tags: &[u64]| PointCloud::from_complex(&sample_gaussian_target(&target, m, &mut rng::stream(seed, tags)));
    let floor = w1_with_se(&gauss(&[tag::GAUSS, u64::MAX, 0])?, &gauss(&[tag::GAUSS, u64::MAX, 1])?, method, K)?;
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let batch = exact_sample(&EnsembleParams::new(n, beta, rng::derive_seed(seed, &[n as u64]))?, m)?;
        let t: Vec<Vec<f64>> =
            batch.configs.iter().map(|c| power_sum_vector(c, d).map(|v| v.flatten())).collect::<Result<_>>()?;
        let est = w1_with_se(&PointCloud::new(t)?, &gauss(&[tag::GAUSS, n as u64, 0])?, method, K)?;
        rows.push(W1Row { n, d, beta, w1: est.w1, se: est.se, floor: floor.w1, floor_se: floor.se, method });
    }
    Ok(W1Experiment { m, subsamples: K, rows })
}
