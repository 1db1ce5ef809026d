//! The circular β-ensemble: its law, normalization and samplers.
//!
//! The density of `n` ordered angles is proportional to
//! `Π_{j<k} |e^{ix_j} − e^{ix_k}|^β`, normalized by the Selberg constant
//! `Γ(1 + nβ/2) / Γ(1 + β/2)^n`.

mod mcmc;
mod verblunsky;

pub use mcmc::{
    integrated_autocorrelation_time, log_acceptance_ratio, mcmc_diagnostics, mcmc_sample,
    McmcDiagnostics,
};
pub use verblunsky::{cmv_eigenangles, exact_sample, szego_polynomial, verblunsky_coefficients};

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub n: usize,
    pub beta: f64,
    pub seed: u64,
}

impl EnsembleParams {
    pub fn new(n: usize, beta: f64, seed: u64) -> Result<Self> {
        let p = Self { n, beta, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(invalid(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Reduce an angle into `[0, 2π)`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid rounds tiny negatives up to exactly 2π
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// A point of the ordered simplex: `n` angles in `[0, 2π)`, nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Configuration {
    angles: Vec<f64>,
}

impl Configuration {
    /// Checks membership without modifying the angles.
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(invalid("configuration needs at least one angle"));
        }
        if let Some(x) = angles.iter().find(|x| !(**x >= 0.0 && **x < TAU)) {
            return Err(invalid(format!("angle {x} outside [0, 2π)")));
        }
        if angles.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("angles must be sorted ascending"));
        }
        Ok(Self { angles })
    }

    /// Wraps every angle into `[0, 2π)` and sorts.
    pub fn from_unsorted(angles: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut angles: Vec<f64> = angles.into_iter().map(wrap_angle).collect();
        if angles.iter().any(|x| x.is_nan()) {
            return Err(invalid("NaN angle"));
        }
        angles.sort_by(f64::total_cmp);
        Self::new(angles)
    }

    /// `n` equally spaced angles `offset + 2πj/n`.
    pub fn equally_spaced(n: usize, offset: f64) -> Result<Self> {
        Self::from_unsorted((0..n).map(|j| offset + TAU * j as f64 / n as f64))
    }

    pub fn n(&self) -> usize {
        self.angles.len()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn into_angles(self) -> Vec<f64> {
        self.angles
    }

    /// Global rotation by `theta`, re-sorted.
    pub fn rotated(&self, theta: f64) -> Self {
        Self::from_unsorted(self.angles.iter().map(|x| x + theta))
            .expect("rotation of a valid configuration is valid")
    }

    /// Reflection `x ↦ −x`, re-sorted.
    pub fn reflected(&self) -> Self {
        Self::from_unsorted(self.angles.iter().map(|x| -x))
            .expect("reflection of a valid configuration is valid")
    }

    /// Smallest circular distance between two distinct particles, `2π` for n = 1.
    pub fn min_gap(&self) -> f64 {
        let a = &self.angles;
        if a.len() < 2 {
            return TAU;
        }
        let inner = a.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        inner.min(a[0] + TAU - a[a.len() - 1])
    }
}

impl TryFrom<Vec<f64>> for Configuration {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Configuration> for Vec<f64> {
    fn from(c: Configuration) -> Self {
        c.angles
    }
}

/// Single-site Metropolis–Hastings settings. Sweeps are `n` proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub proposal_scale: f64,
    pub burn_in: usize,
    pub thinning: usize,
    #[serde(default = "one")]
    pub chains: usize,
}

fn one() -> usize {
    1
}

impl McmcConfig {
    /// Proposal scale `2π/n`, `200·n` burn-in sweeps, `n` sweeps between samples.
    pub fn default_for(n: usize) -> Self {
        let n = n.max(1);
        Self { proposal_scale: TAU / n as f64, burn_in: 200 * n, thinning: n, chains: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.proposal_scale > 0.0) || !self.proposal_scale.is_finite() {
            return Err(invalid("proposal_scale must be positive"));
        }
        if self.thinning == 0 {
            return Err(invalid("thinning must be at least 1 sweep"));
        }
        if self.chains == 0 {
            return Err(invalid("need at least one chain"));
        }
        Ok(())
    }
}

/// How configurations are drawn. `Exact` uses independent Verblunsky
/// coefficients and needs no burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sampler {
    Exact,
    Mcmc(McmcConfig),
}

impl Sampler {
    pub fn sample(&self, params: &EnsembleParams, m: usize) -> Result<SampleBatch> {
        match self {
            Sampler::Exact => exact_sample(params, m),
            Sampler::Mcmc(cfg) => mcmc_sample(params, m, cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub retained: usize,
    pub accepted: u64,
    pub proposed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sampler: String,
    pub seed: u64,
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
    pub proposal_scale: Option<f64>,
    /// Configurations are stored chain after chain in this order.
    pub chains: Vec<ChainRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub configs: Vec<Configuration>,
    pub params: EnsembleParams,
    pub provenance: Provenance,
}

impl SampleBatch {
    pub fn new(
        configs: Vec<Configuration>,
        params: EnsembleParams,
        provenance: Provenance,
    ) -> Result<Self> {
        if configs.is_empty() {
            return Err(invalid("a batch holds at least one configuration"));
        }
        if let Some(c) = configs.iter().find(|c| c.n() != params.n) {
            return Err(Error::SizeMismatch(format!(
                "configuration of size {} in a batch with n = {}",
                c.n(),
                params.n
            )));
        }
        Ok(Self { configs, params, provenance })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

/// `log Z_{n,β} = lnΓ(1 + nβ/2) − n·lnΓ(1 + β/2)`.
pub fn log_selberg_constant(n: usize, beta: f64) -> Result<f64> {
    EnsembleParams::new(n, beta, 0)?;
    let half = beta / 2.0;
    Ok(libm::lgamma(1.0 + n as f64 * half) - n as f64 * libm::lgamma(1.0 + half))
}

/// `Z_{n,β}`; errors with `OutOfRange` when the value overflows a double.
pub fn selberg_constant(n: usize, beta: f64) -> Result<f64> {
    let log_z = log_selberg_constant(n, beta)?;
    let z = log_z.exp();
    if z.is_finite() {
        Ok(z)
    } else {
        Err(Error::OutOfRange(format!(
            "Z_(n={n}, beta={beta}) = exp({log_z}) overflows; use log_selberg_constant"
        )))
    }
}

/// `β Σ_{j<k} log|e^{ix_j} − e^{ix_k}|`, `−∞` when two angles coincide.
pub fn log_density_unnormalized(config: &Configuration, beta: f64) -> f64 {
    log_interaction(config.angles(), beta)
}

pub(crate) fn log_interaction(angles: &[f64], beta: f64) -> f64 {
    let mut acc = 0.0;
    for (j, &xj) in angles.iter().enumerate() {
        for &xk in &angles[j + 1..] {
            // |e^{ia} − e^{ib}| = 2|sin((a − b)/2)|
            let dist = 2.0 * ((xj - xk) / 2.0).sin().abs();
            if dist == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += dist.ln();
        }
    }
    beta * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn selberg_small_cases() {
        for beta in [0.5, 1.0, 2.0, 7.5] {
            assert!((selberg_constant(1, beta).unwrap() - 1.0).abs() < 1e-14);
        }
        assert!((selberg_constant(2, 2.0).unwrap() - 2.0).abs() < 1e-13);
        assert!((selberg_constant(3, 2.0).unwrap() - 6.0).abs() < 1e-12);
        // β = 2 is n!
        assert!((selberg_constant(10, 2.0).unwrap() - 3_628_800.0).abs() < 1e-6);
    }

    #[test]
    fn selberg_overflow_is_reported() {
        assert!(matches!(selberg_constant(1000, 2.0), Err(Error::OutOfRange(_))));
        let log_z = log_selberg_constant(1000, 2.0).unwrap();
        assert!((log_z - libm::lgamma(1001.0)).abs() < 1e-9);
    }

    #[test]
    fn selberg_rejects_bad_params() {
        assert!(selberg_constant(0, 2.0).is_err());
        assert!(selberg_constant(3, 0.0).is_err());
        assert!(selberg_constant(3, -1.0).is_err());
    }

    /// Trapezoid rule on the periodic integrand; exact for trigonometric
    /// polynomials (even β) and O(h^{1+β}) at the kink otherwise.
    fn selberg_quadrature(n: usize, beta: f64, grid: usize) -> f64 {
        let h = TAU / grid as f64;
        let f = |g: f64| (2.0 * (g / 2.0).sin().abs()).powf(beta);
        match n {
            1 => 1.0,
            // fix x1 = 0 by rotation invariance
            2 => (0..grid).map(|i| f(i as f64 * h)).sum::<f64>() / grid as f64,
            3 => {
                let mut acc = 0.0;
                for i in 0..grid {
                    let a = i as f64 * h;
                    let fa = f(a);
                    if fa == 0.0 {
                        continue;
                    }
                    for j in 0..grid {
                        let b = j as f64 * h;
                        acc += fa * f(b) * f(a - b);
                    }
                }
                acc / (grid * grid) as f64
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn selberg_matches_quadrature() {
        for (n, beta, grid) in [(2, 2.0, 64), (3, 2.0, 64), (2, 4.0, 64), (3, 4.0, 64), (2, 1.0, 20_000), (3, 1.0, 3000)] {
            let exact = selberg_constant(n, beta).unwrap();
            let quad = selberg_quadrature(n, beta, grid);
            assert!(
                ((quad - exact) / exact).abs() < 1e-6,
                "n={n} beta={beta}: quadrature {quad} vs {exact}"
            );
        }
    }

    #[test]
    fn density_examples() {
        let c = Configuration::new(vec![0.0, PI]).unwrap();
        assert!((log_density_unnormalized(&c, 2.0) - 2.0 * 2f64.ln()).abs() < 1e-14);

        let c = Configuration::new(vec![1.0, 1.0, 2.0]).unwrap();
        assert_eq!(log_density_unnormalized(&c, 2.0), f64::NEG_INFINITY);

        let c = Configuration::equally_spaced(3, 0.0).unwrap();
        let expected = 2.0 * (3.0 * 3f64.sqrt()).ln();
        assert!((log_density_unnormalized(&c, 2.0) - expected).abs() < 1e-13);
    }

    #[test]
    fn configuration_validation() {
        assert!(Configuration::new(vec![]).is_err());
        assert!(Configuration::new(vec![1.0, 0.5]).is_err());
        assert!(Configuration::new(vec![TAU]).is_err());
        assert!(Configuration::new(vec![-0.1]).is_err());
        let c = Configuration::from_unsorted([7.0, -1.0]).unwrap();
        assert!(c.angles().windows(2).all(|w| w[0] <= w[1]));
        assert!((c.angles()[0] - (7.0 - TAU)).abs() < 1e-15);
        assert_eq!(wrap_angle(-1e-18), 0.0);
    }

    #[test]
    fn sampler_serde_shape() {
        let s = Sampler::Mcmc(McmcConfig::default_for(4));
        let js = serde_json::to_string(&s).unwrap();
        assert!(js.contains("\"kind\":\"mcmc\""));
        let back: Sampler = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);
        let exact: Sampler = serde_json::from_str("{\"kind\":\"exact\"}").unwrap();
        assert_eq!(exact, Sampler::Exact);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn density_is_rotation_and_permutation_invariant(
                raw in proptest::collection::vec(0.0..TAU, 2..8),
                theta in -10.0..10.0f64,
                beta in 0.3..5.0f64,
            ) {
                let c = Configuration::from_unsorted(raw.clone()).unwrap();
                let base = log_density_unnormalized(&c, beta);
                prop_assume!(base.is_finite());
                let rot = log_density_unnormalized(&c.rotated(theta), beta);
                prop_assert!((rot - base).abs() <= 1e-9 * (1.0 + base.abs()));
                let mut rev = raw;
                rev.reverse();
                let perm = log_interaction(&rev, beta);
                prop_assert!((perm - base).abs() <= 1e-12 * (1.0 + base.abs()));
            }
        }
    }
}
