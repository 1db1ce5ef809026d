//! Circular Dyson Brownian motion
//! `dx_j = (β/2) Σ_{i≠j} cot((x_j − x_i)/2) dt + √2 db_j`
//! by Euler–Maruyama, with stationarity, exchangeability and small-time
//! increment estimators.

use std::cell::RefCell;
use std::f64::consts::{SQRT_2, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::{exact_sample, wrap_angle, Configuration, EnsembleParams};
use crate::error::{invalid, Error, Result};
use crate::fit::intercept_weights;
use crate::par;
use crate::rng::{self, tag, Stream};
use crate::statistics::{lookup, power_sums, power_sums_of};
use crate::stats::{z_score, Estimate};
use crate::stein::apply_generator_pk;

/// Halvings allowed for one step under reject-and-halve.
pub const MAX_HALVINGS: u32 = 40;
/// Smallest sub-step before the integrator gives up.
pub const MIN_DT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionPolicy {
    /// Retry an order-violating step on a refined Brownian path.
    RejectAndHalve,
    /// Clamp each `|drift_j|·dt` to `drift_cap`; still refines on crossings.
    DriftCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbmConfig {
    pub dt: f64,
    pub collision_policy: CollisionPolicy,
    pub drift_cap: f64,
}

impl DbmConfig {
    /// `dt = 10⁻³/n²`, reject-and-halve, cap of a tenth of the mean spacing.
    pub fn default_for(n: usize) -> Self {
        let n = n.max(1) as f64;
        Self { dt: 1e-3 / (n * n), collision_policy: CollisionPolicy::RejectAndHalve, drift_cap: 0.1 * TAU / n }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.drift_cap > 0.0) {
            return Err(invalid("drift_cap must be positive"));
        }
        Ok(())
    }
}

/// States at increasing times, starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Configuration>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Configuration>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::SizeMismatch(format!("{} times for {} states", times.len(), states.len())));
        }
        if times[0] != 0.0 {
            return Err(invalid("trajectories start at t = 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times must be strictly increasing"));
        }
        let n = states[0].n();
        if states.iter().any(|s| s.n() != n) {
            return Err(Error::SizeMismatch("states of different sizes".into()));
        }
        Ok(Self { times, states })
    }

    pub fn n(&self) -> usize {
        self.states[0].n()
    }

    pub fn end(&self) -> &Configuration {
        self.states.last().expect("nonempty")
    }
}

/// Drift into `out`; the angles may be unwrapped. Errors on coincidences.
fn drift_into(angles: &[f64], beta: f64, out: &mut [f64]) -> Result<()> {
    let n = angles.len();
    let z: Vec<Complex64> = angles.iter().map(|&x| Complex64::cis(x)).collect();
    out.iter_mut().for_each(|o| *o = 0.0);
    let half = 0.5 * beta;
    for j in 0..n {
        for i in 0..j {
            // cot((x_j − x_i)/2) = −Im(u·conj(v))/|v|², u = z_j + z_i, v = z_j − z_i
            let u = z[j] + z[i];
            let v = z[j] - z[i];
            let den = v.norm_sqr();
            let c = -(u * v.conj()).im / den;
            if den == 0.0 || !c.is_finite() {
                return Err(Error::Collision(i, j));
            }
            out[j] += half * c;
            out[i] -= half * c;
        }
    }
    Ok(())
}

/// `(β/2) Σ_{i≠j} cot((x_j − x_i)/2)` for every `j`.
pub fn drift(config: &Configuration, beta: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; config.n()];
    drift_into(config.angles(), beta, &mut out)?;
    Ok(out)
}

/// True when `y` is still in cyclic order with no coincidences.
fn keeps_order(y: &[f64]) -> bool {
    let n = y.len();
    if y.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if n < 2 {
        return true;
    }
    y.windows(2).all(|w| w[1] > w[0]) && y[n - 1] - y[0] < TAU
}

fn propose(x: &[f64], b: &[f64], h: f64, noise: &[f64], cap: Option<f64>, y: &mut [f64]) {
    for j in 0..x.len() {
        let mut step = b[j] * h;
        if let Some(c) = cap {
            step = step.clamp(-c, c);
        }
        y[j] = x[j] + step + SQRT_2 * noise[j];
    }
}

fn configuration_of(x: &[f64]) -> Configuration {
    Configuration::from_unsorted(x.iter().map(|&v| wrap_angle(v))).expect("finite angles")
}

/// Unwrapped cyclic representation of a configuration.
fn unwrapped(config: &Configuration) -> Vec<f64> {
    config.angles().to_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub config: Configuration,
    /// Step actually taken after any halvings.
    pub dt: f64,
}

/// One Euler–Maruyama step with standard normal `noise`. A step that would
/// break the cyclic order is retried with `dt/2` and the same normals
/// (`√(2·dt)` rescaled), up to [`MAX_HALVINGS`] times.
pub fn dbm_step(config: &Configuration, beta: f64, dt: f64, noise: &[f64], cfg: &DbmConfig) -> Result<StepOutcome> {
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    let n = config.n();
    if noise.len() != n {
        return Err(Error::SizeMismatch(format!("{} noise values for n = {n}", noise.len())));
    }
    let x = unwrapped(config);
    let mut b = vec![0.0; n];
    drift_into(&x, beta, &mut b)?;
    let cap = (cfg.collision_policy == CollisionPolicy::DriftCap).then_some(cfg.drift_cap);
    let mut y = vec![0.0; n];
    let mut h = dt;
    for _ in 0..=MAX_HALVINGS {
        let scaled: Vec<f64> = noise.iter().map(|e| e * h.sqrt()).collect();
        propose(&x, &b, h, &scaled, cap, &mut y);
        if keeps_order(&y) {
            return Ok(StepOutcome { config: configuration_of(&y), dt: h });
        }
        h *= 0.5;
        if h < MIN_DT {
            break;
        }
    }
    Err(Error::StepUnderflow { time: 0.0, min_dt: MIN_DT })
}

/// Integrator state shared by the path drivers.
struct Integrator<'a> {
    beta: f64,
    cfg: &'a DbmConfig,
    /// Multiplies every normal drawn; −1 gives the antithetic path.
    sign: f64,
    b: Vec<f64>,
    y: Vec<f64>,
    time: f64,
}

impl<'a> Integrator<'a> {
    fn new(n: usize, beta: f64, cfg: &'a DbmConfig, sign: f64) -> Self {
        Self { beta, cfg, sign, b: vec![0.0; n], y: vec![0.0; n], time: 0.0 }
    }

    fn normals(&self, rng: &mut Stream, sd: f64, out: &mut [f64]) {
        for v in out.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v = self.sign * sd * e;
        }
    }

    /// Advances `x` by `h` along Brownian increment `db` (variance `h`).
    /// Rejected steps are split with a Brownian bridge draw.
    fn advance<O>(&mut self, x: &mut Vec<f64>, h: f64, db: &[f64], depth: u32, rng: &mut Stream, obs: &mut O) -> Result<()>
    where
        O: FnMut(&[f64], f64, &[f64]),
    {
        drift_into(x, self.beta, &mut self.b)?;
        let cap = (self.cfg.collision_policy == CollisionPolicy::DriftCap).then_some(self.cfg.drift_cap);
        propose(x, &self.b, h, db, cap, &mut self.y);
        if keeps_order(&self.y) {
            obs(x, h, db);
            std::mem::swap(x, &mut self.y);
            self.time += h;
            let shift = (x[0] / TAU).floor();
            if shift != 0.0 {
                x.iter_mut().for_each(|v| *v -= shift * TAU);
            }
            return Ok(());
        }
        let half = 0.5 * h;
        if depth >= MAX_HALVINGS || half < MIN_DT {
            return Err(Error::StepUnderflow { time: self.time, min_dt: MIN_DT });
        }
        let mut first = vec![0.0; db.len()];
        self.normals(rng, (0.25 * h).sqrt(), &mut first);
        for (f, d) in first.iter_mut().zip(db) {
            *f += 0.5 * d;
        }
        let second: Vec<f64> = db.iter().zip(&first).map(|(d, f)| d - f).collect();
        self.advance(x, half, &first, depth + 1, rng, obs)?;
        self.advance(x, half, &second, depth + 1, rng, obs)
    }

    /// Runs to each mark in turn (ascending), calling `at_mark` on arrival.
    fn run<O, M>(&mut self, x: &mut Vec<f64>, marks: &[f64], rng: &mut Stream, obs: &mut O, mut at_mark: M) -> Result<()>
    where
        O: FnMut(&[f64], f64, &[f64]),
        M: FnMut(usize, &[f64]),
    {
        let mut db = vec![0.0; x.len()];
        for (i, &mark) in marks.iter().enumerate() {
            loop {
                let left = mark - self.time;
                // absorb a sliver left over by rounding
                if left <= 1e-9 * self.cfg.dt {
                    break;
                }
                let h = if left <= self.cfg.dt * (1.0 + 1e-9) { left } else { self.cfg.dt };
                self.normals(rng, h.sqrt(), &mut db);
                self.advance(x, h, &db, 0, rng, obs)?;
            }
            self.time = mark;
            at_mark(i, x);
        }
        Ok(())
    }
}

fn check_marks(marks: &[f64]) -> Result<()> {
    if marks.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(invalid("checkpoint times must be positive"));
    }
    if marks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("checkpoint times must be strictly increasing"));
    }
    Ok(())
}

/// Evolves to time `t`, recording the start, every checkpoint in `(0, t)`
/// and the endpoint.
pub fn dbm_evolve(
    config: &Configuration,
    beta: f64,
    t: f64,
    cfg: &DbmConfig,
    checkpoints: &[f64],
    rng: &mut Stream,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("t must be positive"));
    }
    let mut marks: Vec<f64> = checkpoints.iter().copied().filter(|&c| c > 0.0 && c < t).collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    marks.push(t);
    let mut x = unwrapped(config);
    let mut states = vec![config.clone()];
    let mut integ = Integrator::new(config.n(), beta, cfg, 1.0);
    integ.run(&mut x, &marks, rng, &mut |_, _, _| {}, |_, xs| states.push(configuration_of(xs)))?;
    let mut times = vec![0.0];
    times.extend(&marks);
    Trajectory::new(times, states)
}

/// Start and end configurations of independent stationary paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPairs {
    pub t: f64,
    pub starts: Vec<Configuration>,
    pub ends: Vec<Configuration>,
}

/// Runs one path of length `t` from each start; path `i` uses stream `(seed, DBM, i)`.
pub fn evolve_pairs(starts: Vec<Configuration>, beta: f64, t: f64, cfg: &DbmConfig, seed: u64) -> Result<PathPairs> {
    cfg.validate()?;
    let ends = par::map_indexed(starts.len(), |i| {
        let mut rng = rng::stream(seed, &[tag::DBM, i as u64]);
        dbm_evolve(&starts[i], beta, t, cfg, &[], &mut rng).map(|tr| tr.end().clone())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(PathPairs { t, starts, ends })
}

/// Paths from `m` independent exact CβE starts.
pub fn stationary_pairs(params: &EnsembleParams, t: f64, m: usize, cfg: &DbmConfig) -> Result<PathPairs> {
    let batch = exact_sample(params, m)?;
    evolve_pairs(batch.configs, params.beta, t, cfg, params.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDrift {
    pub k: usize,
    pub at_start: Estimate,
    pub at_end: Estimate,
    /// Paired z-score of `|p_k(x_t)|² − |p_k(x_0)|²`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub t: f64,
    pub paths: usize,
    pub sufficient_samples: bool,
    pub moments: Vec<MomentDrift>,
    pub max_abs_z: f64,
}

impl StationarityReport {
    pub fn within(&self, z: f64) -> bool {
        self.max_abs_z <= z
    }
}

/// Compares `E|p_k|²`, `k = 1..=kmax`, at the two ends of each path.
pub fn stationarity_report(pairs: &PathPairs, kmax: usize) -> StationarityReport {
    let mut moments = Vec::with_capacity(kmax);
    let table = |c: &Configuration| power_sums(c, kmax);
    let p0: Vec<_> = pairs.starts.iter().map(table).collect();
    let pt: Vec<_> = pairs.ends.iter().map(table).collect();
    for k in 1..=kmax {
        let a: Vec<f64> = p0.iter().map(|p| p[k].norm_sqr()).collect();
        let b: Vec<f64> = pt.iter().map(|p| p[k].norm_sqr()).collect();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(a, b)| b - a).collect();
        let de = Estimate::from_samples(&diff);
        moments.push(MomentDrift {
            k,
            at_start: Estimate::from_samples(&a),
            at_end: Estimate::from_samples(&b),
            z: z_score(de.mean, de.se),
        });
    }
    let max_abs_z = moments.iter().map(|m| m.z.abs()).fold(0.0, f64::max);
    StationarityReport { t: pairs.t, paths: pairs.starts.len(), sufficient_samples: pairs.starts.len() >= 500, moments, max_abs_z }
}

/// Stationary-start drift of `E|p_k|²` for `k ≤ 3`.
pub fn stationarity_test(params: &EnsembleParams, t: f64, m: usize, cfg: &DbmConfig) -> Result<StationarityReport> {
    Ok(stationarity_report(&stationary_pairs(params, t, m, cfg)?, 3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryFeature {
    pub name: String,
    pub mean: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeabilityReport {
    pub t: f64,
    pub paths: usize,
    pub features: Vec<SymmetryFeature>,
    /// Largest `|z|` over the antisymmetric features.
    pub z: f64,
}

/// Symmetry of `(u, v) = (Re p_1(x_0), Re p_1(x_t))` against its swap, via
/// the means of antisymmetric functions `g(u,v) − g(v,u)`.
pub fn exchangeability_report(pairs: &PathPairs) -> ExchangeabilityReport {
    let uv: Vec<(f64, f64)> = pairs
        .starts
        .iter()
        .zip(&pairs.ends)
        .map(|(a, b)| (power_sums(a, 1)[1].re, power_sums(b, 1)[1].re))
        .collect();
    type Feature = fn(f64, f64) -> f64;
    let defs: [(&str, Feature); 4] = [
        ("u-v", |u, v| u - v),
        ("u2-v2", |u, v| u * u - v * v),
        ("u3-v3", |u, v| u.powi(3) - v.powi(3)),
        ("uv2-u2v", |u, v| u * v * v - u * u * v),
    ];
    let features: Vec<SymmetryFeature> = defs
        .iter()
        .map(|(name, g)| {
            let xs: Vec<f64> = uv.iter().map(|&(u, v)| g(u, v)).collect();
            let e = Estimate::from_samples(&xs);
            SymmetryFeature { name: (*name).into(), mean: e.mean, se: e.se, z: z_score(e.mean, e.se) }
        })
        .collect();
    let z = features.iter().map(|f| f.z.abs()).fold(0.0, f64::max);
    ExchangeabilityReport { t: pairs.t, paths: uv.len(), features, z }
}

pub fn exchangeability_test(params: &EnsembleParams, t: f64, m: usize, cfg: &DbmConfig) -> Result<ExchangeabilityReport> {
    Ok(exchangeability_report(&stationary_pairs(params, t, m, cfg)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Raw increments.
    Plain,
    /// First-order increments minus their mean-zero Itô terms (linear and
    /// quadratic in the noise); products minus the product of the linear
    /// martingales plus its compensator. Same expectation, far lower
    /// variance at small `t`.
    ControlVariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementOptions {
    pub noise_paths: usize,
    pub estimator: Estimator,
    /// Pair each noise path with its mirror image.
    pub antithetic: bool,
    pub second_order: bool,
    pub dbm: DbmConfig,
}

impl IncrementOptions {
    pub fn default_for(n: usize) -> Self {
        Self {
            noise_paths: 64,
            estimator: Estimator::ControlVariate,
            antithetic: true,
            second_order: true,
            dbm: DbmConfig::default_for(n),
        }
    }
}

/// A conditional small-time moment: values `(1/t)E[·|x]` on the grid, the
/// `t → 0` intercept and its standard error over noise paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub per_t: Vec<Complex64>,
    pub limit: Complex64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementMoments {
    pub t_grid: Vec<f64>,
    /// `E[p_k(x_t) − p_k(x)]/t`, `k = 1..=d`
    pub first: Vec<LimitEstimate>,
    /// `E[ΔP_j conj(ΔP_k)]/t`, row-major `d×d`; empty without second order.
    pub mixed: Vec<LimitEstimate>,
    /// `E[ΔP_j ΔP_k]/t`, row-major `d×d`; empty without second order.
    pub plain: Vec<LimitEstimate>,
}

fn check_grid(t_grid: &[f64]) -> Result<Vec<f64>> {
    if t_grid.len() < 2 {
        return Err(invalid("need at least two times for extrapolation"));
    }
    let mut asc = t_grid.to_vec();
    asc.sort_by(f64::total_cmp);
    check_marks(&asc)?;
    Ok(asc)
}

/// Conditional increment moments of `(p_1..p_d)` from `start`, estimated on
/// the grid with every noise path sampled at all grid times. Stream
/// `(seed, NOISE, start_index, pair)`.
pub fn increment_moments(
    start: &Configuration,
    beta: f64,
    d: usize,
    t_grid: &[f64],
    opts: &IncrementOptions,
    seed: u64,
    start_index: u64,
) -> Result<IncrementMoments> {
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    if opts.noise_paths == 0 {
        return Err(invalid("need at least one noise path"));
    }
    opts.dbm.validate()?;
    let marks = check_grid(t_grid)?;
    let g = marks.len();
    let second = opts.second_order;
    let quantities = d + if second { 2 * d * d } else { 0 };
    let n = start.n();
    let p_start = power_sums(start, d);
    let control = opts.estimator == Estimator::ControlVariate;

    // values[path][mark][quantity], already divided by t
    let mut values = Vec::with_capacity(opts.noise_paths);
    for r in 0..opts.noise_paths {
        let (stream_id, sign) = if opts.antithetic { (r / 2, if r % 2 == 1 { -1.0 } else { 1.0 }) } else { (r, 1.0) };
        let mut rng = rng::stream(seed, &[tag::NOISE, start_index, stream_id as u64]);
        let mut integ = Integrator::new(n, beta, &opts.dbm, sign);
        let mut x = unwrapped(start);
        let acc = RefCell::new(Martingale::new(n, d, second));
        let mut obs = |xs: &[f64], h: f64, db: &[f64]| {
            if control {
                acc.borrow_mut().observe(xs, h, db);
            }
        };
        let mut row = vec![vec![Complex64::new(0.0, 0.0); quantities]; g];
        let mut snapshots = Vec::with_capacity(g);
        integ.run(&mut x, &marks, &mut rng, &mut obs, |i, xs| {
            let a = acc.borrow();
            snapshots.push((i, power_sums_of(xs, d), a.dm.clone(), a.dq.clone(), a.q_mixed.clone(), a.q_plain.clone()));
        })?;
        for (i, p, dm_i, dq_i, qm, qp) in snapshots {
            let t = marks[i];
            let dp: Vec<Complex64> = (1..=d).map(|k| p[k] - p_start[k]).collect();
            let dres: Vec<Complex64> =
                if control { (0..d).map(|k| dp[k] - dm_i[k] - dq_i[k]).collect() } else { dp.clone() };
            for k in 0..d {
                row[i][k] = dres[k] / t;
            }
            if second {
                for j in 0..d {
                    for k in 0..d {
                        let (mut mix, mut pl) = (dp[j] * dp[k].conj(), dp[j] * dp[k]);
                        if control {
                            mix += qm[j * d + k] - dm_i[j] * dm_i[k].conj();
                            pl += qp[j * d + k] - dm_i[j] * dm_i[k];
                        }
                        row[i][d + j * d + k] = mix / t;
                        row[i][d + d * d + j * d + k] = pl / t;
                    }
                }
            }
        }
        values.push(row);
    }

    let w = intercept_weights(&marks).expect("distinct grid");
    let estimate = |q: usize| {
        let per_t: Vec<Complex64> = (0..g)
            .map(|i| values.iter().map(|v| v[i][q]).sum::<Complex64>() / opts.noise_paths as f64)
            .collect();
        let per_path: Vec<Complex64> =
            values.iter().map(|v| (0..g).map(|i| v[i][q] * w[i]).sum::<Complex64>()).collect();
        // antithetic partners are dependent: average them before the SE
        let units: Vec<Complex64> = if opts.antithetic {
            per_path.chunks(2).map(|c| c.iter().sum::<Complex64>() / c.len() as f64).collect()
        } else {
            per_path
        };
        let re: Vec<f64> = units.iter().map(|z| z.re).collect();
        let im: Vec<f64> = units.iter().map(|z| z.im).collect();
        let (er, ei) = (Estimate::from_samples(&re), Estimate::from_samples(&im));
        LimitEstimate { per_t, limit: Complex64::new(er.mean, ei.mean), se: er.se.hypot(ei.se) }
    };
    let first = (0..d).map(estimate).collect();
    let (mixed, plain) = if second {
        ((d..d + d * d).map(estimate).collect(), (d + d * d..quantities).map(estimate).collect())
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(IncrementMoments { t_grid: marks, first, mixed, plain })
}

/// Running Itô martingale parts `ΔM_k = Σ ∇p_k·√2 db` of the power sums and
/// the compensators of their products.
struct Martingale {
    d: usize,
    second: bool,
    dm: Vec<Complex64>,
    /// `Σ ½∂²p_k·2(db² − h)`, the mean-zero quadratic fluctuation.
    dq: Vec<Complex64>,
    q_mixed: Vec<Complex64>,
    q_plain: Vec<Complex64>,
    z: Vec<Complex64>,
    e: Vec<Complex64>,
}

impl Martingale {
    fn new(n: usize, d: usize, second: bool) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            d,
            second,
            dm: vec![zero; d],
            dq: vec![zero; d],
            q_mixed: vec![zero; d * d],
            q_plain: vec![zero; d * d],
            z: vec![zero; n],
            e: vec![zero; n],
        }
    }

    fn observe(&mut self, xs: &[f64], h: f64, db: &[f64]) {
        let d = self.d;
        for (m, &xm) in xs.iter().enumerate() {
            self.z[m] = Complex64::cis(xm);
            self.e[m] = Complex64::new(1.0, 0.0);
        }
        for k in 1..=d {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut quad = Complex64::new(0.0, 0.0);
            for m in 0..xs.len() {
                self.e[m] *= self.z[m];
                acc += self.e[m] * db[m];
                quad += self.e[m] * (db[m] * db[m] - h);
            }
            let kf = k as f64;
            // ∂_m p_k = ik e^{ikx_m}, ∂²_m p_k = −k² e^{ikx_m}
            self.dm[k - 1] += Complex64::new(0.0, kf * SQRT_2) * acc;
            self.dq[k - 1] -= kf * kf * quad;
        }
        if self.second {
            let table = power_sums_of(xs, 2 * d);
            for j in 1..=d {
                for k in 1..=d {
                    let c = 2.0 * h * (j * k) as f64;
                    self.q_mixed[(j - 1) * d + k - 1] += c * lookup(&table, j as i64 - k as i64);
                    self.q_plain[(j - 1) * d + k - 1] -= c * table[j + k];
                }
            }
        }
    }
}

/// Relative L¹ error `Σ|est − target| / Σ|target|` (0 when both vanish).
pub fn relative_l1(estimates: &[Complex64], targets: &[Complex64]) -> f64 {
    let num: f64 = estimates.iter().zip(targets).map(|(e, t)| (e - t).norm()).sum();
    let den: f64 = targets.iter().map(|t| t.norm()).sum();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftLimitReport {
    pub k: i64,
    pub n: usize,
    pub beta: f64,
    pub t_grid: Vec<f64>,
    pub starts: usize,
    pub noise_paths: usize,
    pub relative_l1: f64,
    /// `Σ se / Σ|target|`, the statistical resolution of `relative_l1`.
    pub relative_noise: f64,
    pub inconclusive: bool,
    pub recommended_noise_paths: Option<usize>,
    pub estimates: Vec<Complex64>,
    pub targets: Vec<Complex64>,
}

/// `(1/t)E[p_k(x_t) − p_k(x) | x]` extrapolated to `t → 0` over `m` exact
/// CβE starts, against the closed form `L_β p_k(x)`.
pub fn estimate_drift_limit(
    params: &EnsembleParams,
    k: i64,
    t_grid: &[f64],
    m: usize,
    opts: &IncrementOptions,
) -> Result<DriftLimitReport> {
    check_grid(t_grid)?;
    let batch = exact_sample(params, m)?;
    let kk = k.unsigned_abs() as usize;
    let opts = IncrementOptions { second_order: false, ..opts.clone() };
    let rows = par::map_indexed(batch.len(), |i| -> Result<(Complex64, f64, Complex64)> {
        let target = apply_generator_pk(&batch.configs[i], k, params.beta);
        if kk == 0 {
            return Ok((Complex64::new(0.0, 0.0), 0.0, target));
        }
        let mom = increment_moments(&batch.configs[i], params.beta, kk, t_grid, &opts, params.seed, i as u64)?;
        let est = &mom.first[kk - 1];
        let limit = if k < 0 { est.limit.conj() } else { est.limit };
        Ok((limit, est.se, target))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<Complex64> = rows.iter().map(|r| r.0).collect();
    let targets: Vec<Complex64> = rows.iter().map(|r| r.2).collect();
    let den: f64 = targets.iter().map(|t| t.norm()).sum();
    let se_sum: f64 = rows.iter().map(|r| r.1).sum();
    let relative_noise = if den > 0.0 { se_sum / den } else { 0.0 };
    let inconclusive = relative_noise >= 1.0;
    let recommended_noise_paths =
        inconclusive.then(|| (opts.noise_paths as f64 * (relative_noise / 0.5).powi(2)).ceil() as usize);
    let mut t_sorted = t_grid.to_vec();
    t_sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(DriftLimitReport {
        k,
        n: params.n,
        beta: params.beta,
        t_grid: t_sorted,
        starts: m,
        noise_paths: opts.noise_paths,
        relative_l1: relative_l1(&estimates, &targets),
        relative_noise,
        inconclusive,
        recommended_noise_paths,
        estimates,
        targets,
    })
}
