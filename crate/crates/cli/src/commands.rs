use std::path::{Path, PathBuf};

use cbe_core::dynamics::{
    dbm_evolve, estimate_drift_limit, exchangeability_report, stationary_pairs, stationarity_report, DbmConfig,
    IncrementOptions,
};
use cbe_core::ensemble::{exact_sample, mcmc_diagnostics};
use cbe_core::field::{
    coefficient_covariance, compare_covariances, sample_limiting_fields, tightness_row, xn_yn_batch, xn_yn_fields,
    TightnessReport,
};
use cbe_core::io;
use cbe_core::rng::{self, derive_seed, tag};
use cbe_core::statistics::{covariance_report, moment_report, power_sums};
use cbe_core::stats::Estimate;
use cbe_core::stein::{
    apply_generator_numeric, apply_generator_pk, apply_generator_product, apply_generator_product_numeric,
    cubic_increment_scaling, scaling_audit, stein_data, verify_increment_limits, wasserstein_bound_mc,
    ScalingAuditConfig,
};
use cbe_core::transport::w1_convergence_experiment;
use cbe_core::{Complex64, Configuration, EnsembleParams, McmcConfig, Sampler};
use rand::Rng;
use serde::Serialize;

use crate::config::{Config, SamplerKind};
use crate::{Check, CliError, Command, Outcome};

const GENERATOR_TAG: u64 = 0x6765_6e65;
const CUBIC_TAG: u64 = 0x6375_6269;

pub fn dispatch(cmd: Command, cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    match cmd {
        Command::Sample => sample(cfg, out, &mut o)?,
        Command::Dbm => dbm(cfg, out, &mut o)?,
        Command::VerifyGenerator => verify_generator(cfg, out, &mut o)?,
        Command::Moments => moments(cfg, out, &mut o)?,
        Command::Increments => increments(cfg, out, &mut o)?,
        Command::SteinBound => stein_bound(cfg, out, &mut o)?,
        Command::W1 => w1(cfg, out, &mut o)?,
        Command::Field => field(cfg, out, &mut o)?,
    }
    Ok(o)
}

fn relative(out: &Path, files: Vec<PathBuf>) -> Vec<PathBuf> {
    files.into_iter().map(|f| f.strip_prefix(out).map(Path::to_path_buf).unwrap_or(f)).collect()
}

impl Outcome {
    fn json<T: Serialize>(&mut self, out: &Path, name: &str, value: &T) -> Result<(), CliError> {
        io::write_json(&out.join(name), value)?;
        self.files.push(name.into());
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, out: &Path, name: &str, rows: &[T]) -> Result<(), CliError> {
        io::write_csv(&out.join(name), rows)?;
        self.files.push(name.into());
        Ok(())
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }
}

fn second_moments(configs: &[Configuration], kmax: usize) -> Vec<Estimate> {
    let tables: Vec<Vec<Complex64>> = configs.iter().map(|c| power_sums(c, kmax)).collect();
    (1..=kmax)
        .map(|k| Estimate::from_samples(&tables.iter().map(|t| t[k].norm_sqr()).collect::<Vec<_>>()))
        .collect()
}

fn sample(cfg: &Config, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let c = &cfg.sample;
    let params = EnsembleParams::new(c.n, c.beta, cfg.seed)?;
    let sampler = match c.sampler {
        SamplerKind::Exact => Sampler::Exact,
        SamplerKind::Mcmc => {
            let d = McmcConfig::default_for(c.n);
            Sampler::Mcmc(McmcConfig {
                proposal_scale: c.proposal_scale.unwrap_or(d.proposal_scale),
                burn_in: c.burn_in.unwrap_or(d.burn_in),
                thinning: c.thinning.unwrap_or(d.thinning),
                chains: c.chains,
            })
        }
    };
    let batch = sampler.sample(&params, c.m)?;
    let files = io::write_batch(&out.join("batch"), &batch)?;
    o.files.extend(relative(out, files));

    #[derive(Serialize)]
    struct Summary {
        n: usize,
        beta: f64,
        m: usize,
        sampler: Sampler,
        /// `Ê|p_k|²`, `k = 1..=kmax`
        second_moments: Vec<Estimate>,
        mcmc: Option<cbe_core::ensemble::McmcDiagnostics>,
    }
    let summary = Summary {
        n: c.n,
        beta: c.beta,
        m: batch.len(),
        sampler,
        second_moments: second_moments(&batch.configs, c.kmax),
        mcmc: matches!(sampler, Sampler::Mcmc(_)).then(|| mcmc_diagnostics(&batch)),
    };
    o.json(out, "sample.json", &summary)
}

fn dbm_config(n: usize, dt: Option<f64>, drift_cap: Option<f64>, policy: cbe_core::dynamics::CollisionPolicy) -> DbmConfig {
    let d = DbmConfig::default_for(n);
    DbmConfig { dt: dt.unwrap_or(d.dt), collision_policy: policy, drift_cap: drift_cap.unwrap_or(d.drift_cap) }
}

fn dbm(cfg: &Config, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let c = &cfg.dbm;
    let params = EnsembleParams::new(c.n, c.beta, cfg.seed)?;
    let t = c.t.unwrap_or(0.1 / c.n as f64);
    let dbm = dbm_config(c.n, c.dt, c.drift_cap, c.collision_policy);
    let pairs = stationary_pairs(&params, t, c.paths, &dbm)?;
    let stat = stationarity_report(&pairs, c.kmax);
    let exch = exchangeability_report(&pairs);

    let marks: Vec<f64> = (1..c.checkpoints).map(|i| t * i as f64 / c.checkpoints as f64).collect();
    let mut stream = rng::stream(cfg.seed, &[tag::DBM, u64::MAX]);
    let traj = dbm_evolve(&pairs.starts[0], c.beta, t, &dbm, &marks, &mut stream)?;
    let files = io::write_trajectory(&out.join("trajectory"), &traj, c.beta, &dbm)?;
    o.files.extend(relative(out, files));

    #[derive(Serialize)]
    struct Report<'a> {
        t: f64,
        dbm: &'a DbmConfig,
        stationarity: &'a cbe_core::dynamics::StationarityReport,
        exchangeability: &'a cbe_core::dynamics::ExchangeabilityReport,
    }
    o.json(out, "dbm.json", &Report { t, dbm: &dbm, stationarity: &stat, exchangeability: &exch })?;
    o.check(
        "stationarity",
        stat.within(c.z_max) && stat.sufficient_samples,
        format!("max |z| of E|p_k|² drift = {:.3} over {} paths", stat.max_abs_z, stat.paths),
    );
    o.check("exchangeability", exch.z.abs() <= c.z_max, format!("max symmetry |z| = {:.3}", exch.z.abs()));
    Ok(())
}

#[derive(Debug, Serialize)]
struct IdentityRow {
    identity: &'static str,
    beta: f64,
    cases: usize,
    max_error: f64,
    tolerance: f64,
    passed: bool,
}

fn verify_generator(cfg: &Config, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let c = &cfg.verify_generator;
    if c.n_min == 0 || c.n_min > c.n_max || c.configs == 0 || c.kmax < 1 || c.betas.is_empty() {
        return Err(CliError::Config("verify-generator needs 1 ≤ n_min ≤ n_max, configs ≥ 1, kmax ≥ 1 and some betas".into()));
    }
    if c.betas.iter().any(|b| !(*b > 0.0)) {
        return Err(CliError::Config("verify-generator.betas must be positive".into()));
    }
    let mut r = rng::stream(cfg.seed, &[GENERATOR_TAG]);
    let configs: Vec<Configuration> = (0..c.configs)
        .map(|_| {
            let n = r.random_range(c.n_min..=c.n_max);
            Configuration::from_unsorted((0..n).map(|_| r.random_range(0.0..std::f64::consts::TAU)))
        })
        .collect::<Result<_, _>>()?;
    let gap = |a: Complex64, b: Complex64| (a - b).norm() / (1.0 + b.norm());
    let mut rows = Vec::new();
    for &beta in &c.betas {
        let (mut single, mut product, mut decomp) = (0.0f64, 0.0f64, 0.0f64);
        let (mut n1, mut n2, mut n3) = (0, 0, 0);
        for x in &configs {
            let p = power_sums(x, c.kmax as usize);
            let sd = stein_data(x, c.kmax as usize, beta)?;
            for k in -c.kmax..=c.kmax {
                let closed = apply_generator_pk(x, k, beta);
                single = single.max(gap(closed, apply_generator_numeric(x, k, beta)?));
                n1 += 1;
                for l in -c.kmax..=c.kmax {
                    let prod = apply_generator_product(x, k, l, beta);
                    product = product.max(gap(prod, apply_generator_product_numeric(x, k, l, beta)?));
                    n2 += 1;
                }
                if k != 0 {
                    let i = k.unsigned_abs() as usize;
                    let lhs = -sd.lambda[i - 1] * p[i] + sd.r[i - 1];
                    let lhs = if k < 0 { lhs.conj() } else { lhs };
                    decomp = decomp.max(gap(lhs, closed));
                    n3 += 1;
                }
            }
        }
        for (identity, cases, max_error, tolerance) in [
            ("generator", n1, single, c.tolerance),
            ("product", n2, product, c.tolerance),
            ("decomposition", n3, decomp, c.decomposition_tolerance),
        ] {
            rows.push(IdentityRow { identity, beta, cases, max_error, tolerance, passed: max_error <= tolerance });
        }
    }
    o.csv(out, "verify_generator.csv", &rows)?;
    o.json(out, "verify_generator.json", &rows)?;
    for id in ["generator", "product", "decomposition"] {
        let sel: Vec<&IdentityRow> = rows.iter().filter(|r| r.identity == id).collect();
        let worst = sel.iter().map(|r| r.max_error).fold(0.0, f64::max);
        o.check(id, sel.iter().all(|r| r.passed), format!("max relative error {worst:.3e} (tolerance {:.0e})", sel[0].tolerance));
    }
    Ok(())
}

fn moments(cfg: &Config, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let c = &cfg.moments;
    let batch = exact_sample(&EnsembleParams::new(c.n, c.beta, cfg.seed)?, c.m)?;
    let mr = moment_report(&batch, c.d)?;
    let cov = covariance_report(&batch, c.d)?;
    o.csv(out, "moments.csv", &mr.rows)?;
    o.csv(out, "covariance.csv", &cov.rows)?;

    #[derive(Serialize)]
    struct Report<'a> {
        moments: &'a cbe_core::statistics::MomentReport,
        covariance: &'a cbe_core::statistics::CovarianceReport,
    }
    o.json(out, "moments.json", &Report { moments: &mr, covariance: &cov })?;

    let exceeding = mr.rows.iter().filter(|r| r.exceeds).count();
    o.check("moment-bounds", mr.all_within_bounds(), format!("{exceeding} of {} estimates above bound + 3 SE", mr.rows.len()));
    if c.beta == 2.0 {
        o.check(
            "exact-second-moments",
            cov.max_abs_z(true) <= c.z_max,
            format!("max |Ê|p_k|² − min(k,n)|/SE = {:.3}", cov.max_abs_z(true)),
        );
    }
    let rel = cov
        .rows
        .iter()
        .filter(|r| r.j == r.k && r.k <= c.limit_orders)
        .filter_map(|r| r.relative_error)
        .fold(0.0, f64::max);
    o.check("limiting-variance", rel <= c.limit_tolerance, format!("max relative error against 2k/β = {:.3}%", 100.0 * rel));
    o.check(
        "cross-covariance",
        cov.max_abs_z(false) <= c.z_max,
        format!("max |z| of Ê(p_j p_{{−k}}), j ≠ k = {:.3}", cov.max_abs_z(false)),
    );
    if !mr.sufficient_samples {
        o.check("sample-size", false, format!("{} samples is below 500", mr.samples));
    }
    Ok(())
}

#[derive(Serialize)]
struct DriftRow {
    k: i64,
    relative_l1: f64,
    relative_noise: f64,
    inconclusive: bool,
    recommended_noise_paths: Option<usize>,
}

#[derive(Serialize)]
struct CubicRow {
    t: f64,
    second: f64,
    second_se: f64,
    third: f64,
    third_se: f64,
}

fn increments(cfg: &Config, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let c = &cfg.increments;
    let params = EnsembleParams::new(c.n, c.beta, cfg.seed)?;
    let defaults = DbmConfig::default_for(c.n);
    let opts = IncrementOptions {
        noise_paths: c.noise_paths,
        estimator: c.estimator,
        antithetic: c.antithetic,
        second_order: true,
        dbm: DbmConfig { dt: c.dt.unwrap_or(defaults.dt), ..defaults },
    };
    let drift = (1..=c.drift_orders)
        .map(|k| estimate_drift_limit(&params, k, &c.t_grid, c.starts, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let limits = verify_increment_limits(&params, c.d, &c.t_grid, c.starts, &opts)?;
    let cubic = if c.cubic.enabled {
        let p = EnsembleParams::new(c.cubic.n, c.beta, derive_seed(cfg.seed, &[CUBIC_TAG]))?;
        Some(cubic_increment_scaling(&p, c.cubic.d, &c.cubic.t_grid, c.cubic.paths, &DbmConfig::default_for(c.cubic.n))?)
    } else {
        None
    };

    let drift_rows: Vec<DriftRow> = drift
        .iter()
        .map(|r| DriftRow {
            k: r.k,
            relative_l1: r.relative_l1,
            relative_noise: r.relative_noise,
            inconclusive: r.inconclusive,
            recommended_noise_paths: r.recommended_noise_paths,
        })
        .collect();
    o.csv(out, "drift.csv", &drift_rows)?;
    o.csv(out, "second_order.csv", &limits.entries)?;
    if let Some(cu) = &cubic {
        let rows: Vec<CubicRow> = (0..cu.t_grid.len())
            .map(|i| CubicRow {
                t: cu.t_grid[i],
                second: cu.second[i].mean,
                second_se: cu.second[i].se,
                third: cu.third[i].mean,
                third_se: cu.third[i].se,
            })
            .collect();
        o.csv(out, "cubic.csv", &rows)?;
    }

    #[derive(Serialize)]
    struct Report<'a> {
        drift: &'a [cbe_core::dynamics::DriftLimitReport],
        second_order: &'a cbe_core::stein::IncrementReport,
        cubic: &'a Option<cbe_core::stein::CubicScalingReport>,
    }
    o.json(out, "increments.json", &Report { drift: &drift, second_order: &limits, cubic: &cubic })?;

    for r in &drift {
        o.check(
            &format!("drift-limit-k{}", r.k),
            r.relative_l1 <= c.tolerance && !r.inconclusive,
            format!("relative L1 {:.4}% (noise {:.4}%)", 100.0 * r.relative_l1, 100.0 * r.relative_noise),
        );
    }
    let worst = limits.max_relative_l1("mixed").max(limits.max_relative_l1("plain"));
    o.check(
        "second-order-limits",
        worst <= c.tolerance && !limits.inconclusive,
        format!("max relative L1 over 2ΛΣ+S and T = {:.4}%", 100.0 * worst),
    );
    if let Some(cu) = &cubic {
        let (s2, s3) = (cu.slope_second.slope, cu.slope_third.slope);
        let [a2, b2] = c.cubic.second_window;
        let [a3, b3] = c.cubic.third_window;
        o.check("second-moment-slope", (a2..=b2).contains(&s2), format!("slope {s2:.4} (window [{a2}, {b2}])"));
        o.check("third-moment-slope", (a3..=b3).contains(&s3), format!("slope {s3:.4} (window [{a3}, {b3}])"));
    }
    Ok(())
}

fn stein_bound(cfg: &Config, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let c = &cfg.stein_bound;
    let batch = exact_sample(&EnsembleParams::new(c.n, c.beta, cfg.seed)?, c.m)?;
    let bound = wasserstein_bound_mc(&batch, c.d)?;
    let audit = if c.audit {
        Some(scaling_audit(&ScalingAuditConfig {
            beta: c.beta,
            d_grid: c.d_grid.clone(),
            n_for_d: c.n_for_d,
            n_grid: c.n_grid.clone(),
            d_for_n: c.d_for_n,
            m: c.m,
            seed: cfg.seed,
        })?)
    } else {
        None
    };
    if let Some(a) = &audit {
        o.csv(out, "scaling.csv", &a.rows)?;
    }

    #[derive(Serialize)]
    struct Report<'a> {
        bound: &'a cbe_core::stein::WassersteinBound,
        audit: &'a Option<cbe_core::stein::ScalingAudit>,
    }
    o.json(out, "stein_bound.json", &Report { bound: &bound, audit: &audit })?;

    if let Some(a) = &audit {
        let slope = |f: &Option<cbe_core::fit::LineFit>| f.as_ref().map_or(f64::NAN, |f| f.slope);
        let (r, s, t, nb) = (slope(&a.r_slope), slope(&a.s_slope), slope(&a.t_slope), slope(&a.bound_n_slope));
        o.check("r-exponent", r <= c.r_exponent_max, format!("E|R| ~ d^{r:.3} (max {})", c.r_exponent_max));
        o.check(
            "hs-exponents",
            s <= c.hs_exponent_max && t <= c.hs_exponent_max,
            format!("E‖S‖ ~ d^{s:.3}, E‖T‖ ~ d^{t:.3} (max {})", c.hs_exponent_max),
        );
        let [lo, hi] = c.n_exponent_window;
        o.check("n-exponent", (lo..=hi).contains(&nb), format!("bound ~ n^{nb:.3} (window [{lo}, {hi}])"));
    }
    Ok(())
}

fn w1(cfg: &Config, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let c = &cfg.w1;
    let exp = w1_convergence_experiment(c.beta, c.d, &c.n_grid, c.m, c.method, cfg.seed)?;
    o.csv(out, "w1.csv", &exp.rows)?;
    o.json(out, "w1.json", &exp)?;
    let trend: Vec<String> = exp.rows.iter().map(|r| format!("{:.4}", r.w1)).collect();
    o.check("nonincreasing", exp.nonincreasing_within(c.z), format!("Ŵ1 over the n grid: [{}]", trend.join(", ")));
    if let Some(last) = exp.rows.last() {
        o.check(
            "reaches-floor",
            exp.reaches_floor_within(c.z),
            format!("Ŵ1 {:.4} ± {:.4} against floor {:.4} ± {:.4}", last.w1, last.se, last.floor, last.floor_se),
        );
    }
    Ok(())
}

fn field(cfg: &Config, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let c = &cfg.field;
    if c.n_grid.is_empty() || c.coefficients == 0 {
        return Err(CliError::Config("field needs a nonempty n_grid and coefficients ≥ 1".into()));
    }
    let mut rows = Vec::new();
    let mut last = None;
    for &n in &c.n_grid {
        let batch = exact_sample(&EnsembleParams::new(n, c.beta, derive_seed(cfg.seed, &[n as u64]))?, c.m)?;
        rows.push(tightness_row(&batch, c.s_prime, c.j_factor * n)?);
        last = Some(batch);
    }
    let batch = last.expect("n_grid is nonempty");
    let tightness = TightnessReport::from_rows(c.beta, c.s_prime, rows);
    let empirical = coefficient_covariance(&xn_yn_batch(&batch, c.coefficients)?, c.coefficients)?;
    let limit = coefficient_covariance(
        &sample_limiting_fields(c.coefficients, c.beta, c.limit_samples, derive_seed(cfg.seed, &[tag::FIELD]))?,
        c.coefficients,
    )?;
    let comparison = compare_covariances(&empirical, &limit)?;

    let (x, y) = xn_yn_fields(&batch.configs[0], c.j_factor * batch.params.n)?;
    o.csv(out, "xn.csv", &x.rows())?;
    o.csv(out, "yn.csv", &y.rows())?;
    o.csv(out, "tightness.csv", &tightness.rows)?;

    #[derive(Serialize)]
    struct Report<'a> {
        tightness: &'a TightnessReport,
        covariance_n: usize,
        covariance: &'a cbe_core::field::CovarianceComparison,
    }
    o.json(out, "field.json", &Report { tightness: &tightness, covariance_n: batch.params.n, covariance: &comparison })?;

    o.check("bounded-in-n", tightness.bounded && !tightness.undersampled, format!("bounded = {}, undersampled = {}", tightness.bounded, tightness.undersampled));
    if let Some(z) = tightness.max_abs_z_closed {
        o.check("closed-surrogate", z <= c.z_max, format!("max |z| against the closed surrogate = {z:.3}"));
    }
    o.check(
        "limiting-covariance",
        comparison.within(c.z_max),
        format!("max |z| over {} covariance entries = {:.3}", comparison.z.len(), comparison.max_abs_z),
    );
    Ok(())
}
