//! The sixteen acceptance criteria. Each test writes one `PASS`/`FAIL` line to
//! stderr (bypassing output capture) and fails on `FAIL`. Batches shared
//! between criteria are sampled once.

mod common;

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use cbe_core::dynamics::{
    estimate_drift_limit, exchangeability_report, stationary_pairs, stationarity_report, DbmConfig, IncrementOptions,
    PathPairs,
};
use cbe_core::ensemble::exact_sample;
use cbe_core::field::{
    coefficient_covariance, compare_covariances, sample_limiting_fields, tightness_row, xn_yn_batch, TightnessReport,
};
use cbe_core::fit::log_log;
use cbe_core::rng::derive_seed;
use cbe_core::statistics::{moment_report, power_sums};
use cbe_core::stats::{ComplexEstimate, Estimate};
use cbe_core::stein::{
    apply_generator_numeric, apply_generator_pk, apply_generator_product, apply_generator_product_numeric,
    cubic_increment_scaling, stein_data, verify_increment_limits, wasserstein_bound_mc,
};
use cbe_core::transport::{exact_w1, w1_convergence_experiment, PointCloud, W1Method};
use cbe_core::{Complex64, Configuration, EnsembleParams, SampleBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_917;

fn report(id: u32, pass: bool, detail: String) {
    let line = format!("criterion {id:>2}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

/// Exact CβE batch keyed by `(n, β, m)`, sampled once per test binary.
fn batch(n: usize, beta: f64, m: usize) -> Arc<SampleBatch> {
    type Cache = Mutex<HashMap<(usize, u64, usize), Arc<SampleBatch>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let mut cache = CACHE.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    cache
        .entry((n, beta.to_bits(), m))
        .or_insert_with(|| {
            let params = EnsembleParams::new(n, beta, derive_seed(SEED, &[n as u64, beta.to_bits(), m as u64])).unwrap();
            Arc::new(exact_sample(&params, m).unwrap())
        })
        .clone()
}

fn random_configs(count: usize, seed: u64) -> Vec<Configuration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=8);
            Configuration::from_unsorted((0..n).map(|_| rng.random_range(0.0..TAU))).unwrap()
        })
        .collect()
}

const BETAS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

fn rel_gap(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

#[test]
fn criterion_01_generator_identity() {
    let mut worst = 0.0f64;
    for c in random_configs(200, 1) {
        for beta in BETAS {
            for k in -6i64..=6 {
                let closed = apply_generator_pk(&c, k, beta);
                let numeric = apply_generator_numeric(&c, k, beta).unwrap();
                worst = worst.max(rel_gap(closed, numeric));
            }
        }
    }
    report(1, worst <= 1e-9, format!("max |closed − numeric|/(1+|v|) = {worst:.2e} (tol 1e-9)"));
}

#[test]
fn criterion_02_product_identity() {
    let mut worst = 0.0f64;
    for c in random_configs(200, 2) {
        for beta in BETAS {
            for k in -6i64..=6 {
                for l in -6i64..=6 {
                    let closed = apply_generator_product(&c, k, l, beta);
                    let numeric = apply_generator_product_numeric(&c, k, l, beta).unwrap();
                    worst = worst.max(rel_gap(closed, numeric));
                }
            }
        }
    }
    report(2, worst <= 1e-9, format!("max |closed − numeric|/(1+|v|) = {worst:.2e} (tol 1e-9)"));
}

#[test]
fn criterion_03_stein_decomposition() {
    let mut worst = 0.0f64;
    for c in random_configs(200, 3) {
        let p = power_sums(&c, 6);
        for beta in BETAS {
            let sd = stein_data(&c, 6, beta).unwrap();
            for k in -6i64..=6 {
                if k == 0 {
                    continue;
                }
                let i = k.unsigned_abs() as usize;
                let mut lhs = -sd.lambda[i - 1] * p[i] + sd.r[i - 1];
                if k < 0 {
                    lhs = lhs.conj();
                }
                worst = worst.max(rel_gap(lhs, apply_generator_pk(&c, k, beta)));
            }
        }
    }
    report(3, worst <= 1e-12, format!("max |−Λp + R − L p|/(1+|v|) = {worst:.2e} (tol 1e-12)"));
}

fn second_moments(b: &SampleBatch, kmax: usize) -> Vec<Estimate> {
    let tables: Vec<Vec<Complex64>> = b.configs.iter().map(|c| power_sums(c, kmax)).collect();
    (1..=kmax)
        .map(|k| Estimate::from_samples(&tables.iter().map(|t| t[k].norm_sqr()).collect::<Vec<_>>()))
        .collect()
}

#[test]
fn criterion_04_sampler_oracle() {
    let mut pass = true;
    let mut worst = 0.0f64;
    for n in [50, 200] {
        for (i, e) in second_moments(&batch(n, 2.0, 20000), 5).iter().enumerate() {
            let z = (e.mean - (i + 1) as f64) / e.se;
            worst = worst.max(z.abs());
            pass &= z.abs() <= 4.0;
        }
    }
    report(4, pass, format!("β=2, n∈{{50,200}}, m=20000: max |Ê|p_k|² − k|/SE = {worst:.2} (≤ 4)"));
}

#[test]
fn criterion_05_limiting_variance() {
    let mut pass = true;
    let (mut worst_rel, mut worst_z) = (0.0f64, 0.0f64);
    for beta in [1.0, 4.0] {
        let b = batch(200, beta, 20000);
        for (i, e) in second_moments(&b, 3).iter().enumerate() {
            let target = 2.0 / beta * (i + 1) as f64;
            let rel = (e.mean - target).abs() / target;
            worst_rel = worst_rel.max(rel);
            pass &= rel <= 0.05;
        }
        let tables: Vec<Vec<Complex64>> = b.configs.iter().map(|c| power_sums(c, 3)).collect();
        for j in 1..=3 {
            for k in 1..=3 {
                if j == k {
                    continue;
                }
                let vals: Vec<Complex64> = tables.iter().map(|t| t[j] * t[k].conj()).collect();
                let e = ComplexEstimate::from_samples(&vals);
                let z = (e.re.mean / e.re.se).abs().max((e.im.mean / e.im.se).abs());
                worst_z = worst_z.max(z);
                pass &= z <= 4.0;
            }
        }
    }
    report(
        5,
        pass,
        format!("β∈{{1,4}}, n=200: max rel. error of Ê|p_k|² = {:.2}% (≤ 5%), max cross-cov |z| = {worst_z:.2} (≤ 4)", 100.0 * worst_rel),
    );
}

#[test]
fn criterion_06_fourth_moment_bounds() {
    let mut pass = true;
    let mut rows = 0;
    let mut worst_margin = f64::INFINITY;
    for beta in [1.0, 2.0, 4.0] {
        let r = moment_report(&batch(100, beta, 10000), 4).unwrap();
        for row in r.rows.iter().filter(|r| r.kind == "fourth") {
            rows += 1;
            let est = row.estimate_re.hypot(row.estimate_im);
            worst_margin = worst_margin.min((row.bound + 3.0 * row.se - est) / row.se.max(1e-300));
            pass &= !row.exceeds;
        }
    }
    report(
        6,
        pass,
        format!("β∈{{1,2,4}}, n=100, m≤4: {rows} fourth moments, min (bound + 3SE − |Ê|)/SE = {worst_margin:.2} (≥ 0)"),
    );
}

fn dbm_pairs() -> &'static PathPairs {
    static PAIRS: OnceLock<PathPairs> = OnceLock::new();
    PAIRS.get_or_init(|| {
        let n = 20;
        let params = EnsembleParams::new(n, 2.0, derive_seed(SEED, &[7])).unwrap();
        stationary_pairs(&params, 0.1 / n as f64, 5000, &DbmConfig::default_for(n)).unwrap()
    })
}

#[test]
fn criterion_07_stationarity() {
    let r = stationarity_report(dbm_pairs(), 3);
    let zs: Vec<String> = r.moments.iter().map(|m| format!("{:.2}", m.z)).collect();
    report(7, r.within(3.0) && r.sufficient_samples, format!("n=20, t=0.1/n, 5000 paths: z(E|p_k|²), k=1..3 = [{}] (|z| ≤ 3)", zs.join(", ")));
}

#[test]
fn criterion_08_exchangeability() {
    let r = exchangeability_report(dbm_pairs());
    report(8, r.z.abs() <= 3.0, format!("n=20, t=0.1/n, 5000 paths: max symmetry |z| = {:.2} (≤ 3)", r.z));
}

const INCREMENT_GRID: [f64; 3] = [4e-4, 2e-4, 1e-4];

#[test]
fn criterion_09_drift_limit() {
    let params = EnsembleParams::new(10, 2.0, derive_seed(SEED, &[9])).unwrap();
    let opts = IncrementOptions::default_for(10);
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 1..=3 {
        let r = estimate_drift_limit(&params, k, &INCREMENT_GRID, 200, &opts).unwrap();
        pass &= r.relative_l1 <= 0.05 && !r.inconclusive;
        parts.push(format!("k={k}: {:.4}%", 100.0 * r.relative_l1));
    }
    report(9, pass, format!("n=10, 200 starts × 64 paths, relative L¹ {} (≤ 5%)", parts.join(", ")));
}

#[test]
fn criterion_10_second_order_limits() {
    let params = EnsembleParams::new(10, 2.0, derive_seed(SEED, &[10])).unwrap();
    let r = verify_increment_limits(&params, 2, &INCREMENT_GRID, 200, &IncrementOptions::default_for(10)).unwrap();
    let worst = r.max_relative_l1("mixed").max(r.max_relative_l1("plain"));
    report(
        10,
        worst <= 0.05 && !r.inconclusive,
        format!("n=10, d=2: max relative L¹ over 2ΛΣ+S and T entries = {:.3}% (≤ 5%)", 100.0 * worst),
    );
}

#[test]
fn criterion_11_cubic_scaling() {
    let params = EnsembleParams::new(20, 2.0, derive_seed(SEED, &[11])).unwrap();
    let grid = [1e-5, 3e-5, 1e-4, 3e-4, 1e-3];
    let r = cubic_increment_scaling(&params, 2, &grid, 2000, &DbmConfig::default_for(20)).unwrap();
    let (s2, s3) = (r.slope_second.slope, r.slope_third.slope);
    report(
        11,
        (1.35..=1.65).contains(&s3) && (0.9..=1.1).contains(&s2),
        format!("slope of E|ΔW|³ = {s3:.3} (in [1.35,1.65]), of E|ΔW|² = {s2:.3} (in [0.9,1.1])"),
    );
}

#[test]
fn criterion_12_bound_scaling() {
    let big = batch(400, 2.0, 2000);
    let ds: Vec<f64> = (2..=8).map(|d| d as f64).collect();
    let bounds: Vec<_> = (2..=8).map(|d| wasserstein_bound_mc(&big, d).unwrap()).collect();
    let slope = |ys: Vec<f64>| log_log(&ds, &ys).unwrap().slope;
    let r = slope(bounds.iter().map(|b| b.r.mean).collect());
    let s = slope(bounds.iter().map(|b| b.s_hs.mean).collect());
    let t = slope(bounds.iter().map(|b| b.t_hs.mean).collect());
    let ns = [50usize, 100, 200, 400];
    let by_n: Vec<f64> = ns.iter().map(|&n| wasserstein_bound_mc(&batch(n, 2.0, 2000), 2).unwrap().bound).collect();
    let nb = log_log(&ns.map(|n| n as f64), &by_n).unwrap().slope;
    report(
        12,
        r <= 3.3 && s <= 3.8 && t <= 3.8 && (-1.15..=-0.85).contains(&nb),
        format!("d-exponents: E|R| {r:.3} (≤ 3.3), E‖S‖ {s:.3}, E‖T‖ {t:.3} (≤ 3.8); n-exponent of bound {nb:.3} (in [−1.15,−0.85])"),
    );
}

#[test]
fn criterion_13_empirical_w1_trend() {
    let e = w1_convergence_experiment(2.0, 2, &[25, 50, 100, 200], 1000, W1Method::Exact, derive_seed(SEED, &[13])).unwrap();
    let w: Vec<String> = e.rows.iter().map(|r| format!("{:.4}±{:.4}", r.w1, r.se)).collect();
    let floor = e.rows[0].floor;
    report(
        13,
        e.nonincreasing_within(2.0) && e.reaches_floor_within(2.0),
        format!("Ŵ1 at n=25..200: [{}], floor {floor:.4}±{:.4}", w.join(", "), e.rows[0].floor_se),
    );
}

#[test]
fn criterion_14_transport_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut mismatches = 0;
    for _ in 0..100 {
        let m = rng.random_range(1..=6);
        let dim = 2 * rng.random_range(1..=3);
        let mut draw = || -> Vec<Vec<f64>> { (0..m).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect() };
        let (a, b) = (draw(), draw());
        let exact = exact_w1(&PointCloud::new(a.clone()).unwrap(), &PointCloud::new(b.clone()).unwrap()).unwrap();
        if exact != common::brute_force_w1(&a, &b) {
            mismatches += 1;
        }
    }
    report(14, mismatches == 0, format!("100 random instances, m ≤ 6, 2d ≤ 6: {mismatches} differ from the permutation minimum"));
}

#[test]
fn criterion_15_sobolev_tightness() {
    let rows = [50, 100, 200, 400].map(|n| tightness_row(&batch(n, 2.0, 2000), 0.6, n).unwrap());
    let r = TightnessReport::from_rows(2.0, 0.6, rows.to_vec());
    let z = r.max_abs_z_closed.unwrap();
    let est: Vec<String> = r.rows.iter().map(|row| format!("{:.4}", row.estimate)).collect();
    report(
        15,
        z <= 4.0 && r.bounded && !r.undersampled,
        format!("s′=0.6, n=50..400: E‖X_n‖² = [{}], max |z| vs closed surrogate = {z:.2} (≤ 4), bounded = {}", est.join(", "), r.bounded),
    );
}

#[test]
fn criterion_16_limiting_field_covariance() {
    let fields = xn_yn_batch(&batch(400, 2.0, 2000), 5).unwrap();
    let limit = sample_limiting_fields(5, 2.0, 2000, derive_seed(SEED, &[16])).unwrap();
    let a = coefficient_covariance(&fields, 5).unwrap();
    let b = coefficient_covariance(&limit, 5).unwrap();
    let c = compare_covariances(&a, &b).unwrap();
    report(
        16,
        c.within(4.0),
        format!("n=400, first 5 coefficients of (X_n, Y_n): {} entries, max |z| = {:.2} (≤ 4)", c.z.len(), c.max_abs_z),
    );
}
