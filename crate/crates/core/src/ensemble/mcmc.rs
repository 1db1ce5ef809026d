use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    wrap_angle, ChainRecord, Configuration, EnsembleParams, McmcConfig, Provenance, SampleBatch,
};
use crate::error::{invalid, Result};
use crate::par;
use crate::rng::{self, tag};
use crate::statistics::power_sum;

/// Log Metropolis ratio for moving particle `site` to `proposal`:
/// `β Σ_{i≠site} (log|e^{iy} − e^{ix_i}| − log|e^{ix_site} − e^{ix_i}|)`.
///
/// The reverse move has exactly the negated ratio.
pub fn log_acceptance_ratio(angles: &[f64], site: usize, proposal: f64, beta: f64) -> f64 {
    let zs: Vec<Complex64> = angles.iter().map(|&x| Complex64::cis(x)).collect();
    log_ratio_cached(&zs, site, Complex64::cis(proposal), beta)
}

fn log_ratio_cached(zs: &[Complex64], site: usize, z_new: Complex64, beta: f64) -> f64 {
    let z_old = zs[site];
    let mut prod = 1.0f64;
    let mut log_acc = 0.0f64;
    for (i, &zi) in zs.iter().enumerate() {
        if i == site {
            continue;
        }
        let num = (z_new - zi).norm_sqr();
        let den = (z_old - zi).norm_sqr();
        if num == 0.0 {
            return f64::NEG_INFINITY;
        }
        if den == 0.0 {
            return f64::INFINITY;
        }
        prod *= num / den;
        if !(1e-150..=1e150).contains(&prod) {
            log_acc += prod.ln();
            prod = 1.0;
        }
    }
    // squared moduli, hence β/2
    0.5 * beta * (log_acc + prod.ln())
}

struct Chain {
    angles: Vec<f64>,
    zs: Vec<Complex64>,
    accepted: u64,
    proposed: u64,
}

impl Chain {
    fn sweep<R: Rng>(&mut self, beta: f64, scale: f64, rng: &mut R) {
        for site in 0..self.angles.len() {
            let step: f64 = rng.sample(StandardNormal);
            let y = wrap_angle(self.angles[site] + scale * step);
            let z_new = Complex64::cis(y);
            let ratio = log_ratio_cached(&self.zs, site, z_new, beta);
            self.proposed += 1;
            // ln U < ratio; ratio = −∞ never accepts
            let u: f64 = rng.random();
            if ratio >= 0.0 || u.ln() < ratio {
                self.angles[site] = y;
                self.zs[site] = z_new;
                self.accepted += 1;
            }
        }
    }
}

fn run_chain(
    params: &EnsembleParams,
    cfg: &McmcConfig,
    chain: usize,
    retain: usize,
) -> (Vec<Configuration>, ChainRecord) {
    let mut rng = rng::stream(params.seed, &[tag::MCMC, chain as u64]);
    let angles: Vec<f64> =
        (0..params.n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
    let zs = angles.iter().map(|&x| Complex64::cis(x)).collect();
    let mut state = Chain { angles, zs, accepted: 0, proposed: 0 };
    for _ in 0..cfg.burn_in {
        state.sweep(params.beta, cfg.proposal_scale, &mut rng);
    }
    let mut out = Vec::with_capacity(retain);
    for _ in 0..retain {
        for _ in 0..cfg.thinning {
            state.sweep(params.beta, cfg.proposal_scale, &mut rng);
        }
        out.push(
            Configuration::from_unsorted(state.angles.iter().copied())
                .expect("chain angles are wrapped"),
        );
    }
    let record = ChainRecord { retained: retain, accepted: state.accepted, proposed: state.proposed };
    (out, record)
}

/// Draws `m` configurations with single-site Metropolis–Hastings and wrapped
/// Gaussian proposals. Retained samples are split across `cfg.chains`
/// independent chains, each with its own stream; the result does not depend
/// on how chains are scheduled.
pub fn mcmc_sample(params: &EnsembleParams, m: usize, cfg: &McmcConfig) -> Result<SampleBatch> {
    params.validate()?;
    cfg.validate()?;
    if m == 0 {
        return Err(invalid("need at least one retained sample"));
    }
    let chains = cfg.chains.min(m);
    let per_chain: Vec<usize> =
        (0..chains).map(|c| m / chains + usize::from(c < m % chains)).collect();
    let results = par::map_indexed(chains, |c| run_chain(params, cfg, c, per_chain[c]));
    let mut configs = Vec::with_capacity(m);
    let mut records = Vec::with_capacity(chains);
    for (cs, rec) in results {
        configs.extend(cs);
        records.push(rec);
    }
    SampleBatch::new(
        configs,
        *params,
        Provenance {
            sampler: "mcmc".into(),
            seed: params.seed,
            burn_in: Some(cfg.burn_in),
            thinning: Some(cfg.thinning),
            proposal_scale: Some(cfg.proposal_scale),
            chains: records,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    pub acceptance_rate: f64,
    /// Integrated autocorrelation time of `Re p_1` in units of retained
    /// samples; 0.5 means uncorrelated.
    pub iat_p1: f64,
    pub samples: usize,
    /// False when fewer than 50 samples were available.
    pub reliable: bool,
}

/// Acceptance rate from the provenance counters and the sample-weighted
/// integrated autocorrelation time of `Re p_1` across chains.
pub fn mcmc_diagnostics(batch: &SampleBatch) -> McmcDiagnostics {
    let (acc, prop) = batch
        .provenance
        .chains
        .iter()
        .fold((0u64, 0u64), |(a, p), c| (a + c.accepted, p + c.proposed));
    let acceptance_rate = if prop == 0 { 1.0 } else { acc as f64 / prop as f64 };

    let series: Vec<f64> = batch.configs.iter().map(|c| power_sum(c, 1).re).collect();
    let lengths: Vec<usize> = if batch.provenance.chains.is_empty() {
        vec![series.len()]
    } else {
        batch.provenance.chains.iter().map(|c| c.retained).collect()
    };
    let mut start = 0;
    let mut weighted = 0.0;
    for len in lengths {
        let chunk = &series[start..start + len];
        start += len;
        weighted += integrated_autocorrelation_time(chunk) * len as f64;
    }
    McmcDiagnostics {
        acceptance_rate,
        iat_p1: (weighted / series.len() as f64).max(0.5),
        samples: series.len(),
        reliable: series.len() >= 50,
    }
}

/// Sokal's windowed estimate `τ = 1/2 + Σ_{t=1}^{W} ρ(t)`, with the window
/// the smallest `W ≥ 5τ(W)`. Returns 0.5 for constant or very short series.
pub fn integrated_autocorrelation_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 0.5;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for lag in 1..n / 2 {
        let c = xs[..n - lag]
            .iter()
            .zip(&xs[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / n as f64;
        tau += c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::log_density_unnormalized;
    use std::f64::consts::TAU;

    #[test]
    fn reverse_move_has_reciprocal_ratio() {
        let mut rng = rng::stream(3, &[]);
        for _ in 0..50 {
            let n = rng.random_range(2..9);
            let angles: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * TAU).collect();
            let site = rng.random_range(0..n);
            let y = rng.random::<f64>() * TAU;
            let beta = 0.5 + 3.0 * rng.random::<f64>();
            let fwd = log_acceptance_ratio(&angles, site, y, beta);
            let mut moved = angles.clone();
            let old = moved[site];
            moved[site] = y;
            let back = log_acceptance_ratio(&moved, site, old, beta);
            assert!((fwd + back).abs() < 1e-10 * (1.0 + fwd.abs()));
            // and it is the density difference
            let before = crate::ensemble::log_interaction(&angles, beta);
            let after = crate::ensemble::log_interaction(&moved, beta);
            assert!((fwd - (after - before)).abs() < 1e-9 * (1.0 + fwd.abs()));
        }
    }

    #[test]
    fn coinciding_proposal_is_rejected() {
        let angles = [0.1, 1.0, 2.0];
        assert_eq!(log_acceptance_ratio(&angles, 0, 1.0, 2.0), f64::NEG_INFINITY);
    }

    #[test]
    fn single_particle_accepts_everything() {
        let p = EnsembleParams::new(1, 2.0, 11).unwrap();
        let batch = mcmc_sample(&p, 200, &McmcConfig::default_for(1)).unwrap();
        let d = mcmc_diagnostics(&batch);
        assert_eq!(d.acceptance_rate, 1.0);
        assert!(d.reliable);
        assert!(d.iat_p1 >= 0.5);
    }

    #[test]
    fn chain_is_deterministic_given_seed() {
        let p = EnsembleParams::new(5, 1.5, 99).unwrap();
        let cfg = McmcConfig { chains: 3, ..McmcConfig::default_for(5) };
        let a = mcmc_sample(&p, 10, &cfg).unwrap();
        let b = mcmc_sample(&p, 10, &cfg).unwrap();
        assert_eq!(a.configs, b.configs);
        assert_eq!(a.provenance.chains.iter().map(|c| c.retained).sum::<usize>(), 10);
        for c in &a.configs {
            assert!(log_density_unnormalized(c, 1.5).is_finite());
        }
    }

    #[test]
    fn moderate_acceptance_for_cue_twenty() {
        let p = EnsembleParams::new(20, 2.0, 5).unwrap();
        let cfg = McmcConfig { proposal_scale: 0.5, burn_in: 200, thinning: 5, chains: 1 };
        let batch = mcmc_sample(&p, 60, &cfg).unwrap();
        let d = mcmc_diagnostics(&batch);
        assert!(d.acceptance_rate > 0.0 && d.acceptance_rate < 1.0, "{d:?}");
    }

    #[test]
    fn few_samples_flagged_unreliable() {
        let p = EnsembleParams::new(3, 2.0, 5).unwrap();
        let batch = mcmc_sample(&p, 10, &McmcConfig::default_for(3)).unwrap();
        assert!(!mcmc_diagnostics(&batch).reliable);
    }

    #[test]
    fn zero_samples_rejected() {
        let p = EnsembleParams::new(3, 2.0, 5).unwrap();
        assert!(mcmc_sample(&p, 0, &McmcConfig::default_for(3)).is_err());
        let bad = McmcConfig { proposal_scale: 0.0, ..McmcConfig::default_for(3) };
        assert!(mcmc_sample(&p, 5, &bad).is_err());
    }

    #[test]
    fn iat_of_white_noise_is_about_half() {
        let mut rng = rng::stream(1, &[]);
        let xs: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let tau = integrated_autocorrelation_time(&xs);
        assert!((0.5..0.7).contains(&tau), "{tau}");
        // AR(1) with φ = 0.8 has τ = (1+φ)/(2(1−φ)) = 4.5
        let mut ar = vec![0.0f64; 20000];
        for i in 1..ar.len() {
            ar[i] = 0.8 * ar[i - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let tau = integrated_autocorrelation_time(&ar);
        assert!((3.5..5.5).contains(&tau), "{tau}");
    }
}
