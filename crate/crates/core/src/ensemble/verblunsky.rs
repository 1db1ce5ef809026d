//! Exact sampling through the CMV matrix model.
//!
//! With independent Verblunsky coefficients `α_k ~ Θ_{β(n−k−1)+1}` (rotation
//! invariant on the disk, `|α_k|² ~ Beta(1, β(n−k−1)/2)`) and `α_{n−1}`
//! uniform on the circle, the eigenvalues of the associated CMV matrix are
//! distributed exactly as CβE(n). The eigenvalues are the zeros of the
//! paraorthogonal polynomial `Φ_n(z) = zΦ_{n−1}(z) − ᾱ_{n−1}Φ*_{n−1}(z)`,
//! i.e. the solutions of `B(e^{iθ}) = ᾱ_{n−1}` for the degree-n Blaschke
//! product `B = zΦ_{n−1}/Φ*_{n−1}`. Its continuous phase is strictly
//! increasing in θ, so the `n` roots are found by bracketing and a
//! safeguarded Newton iteration; one phase evaluation costs O(n).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;

use super::{Configuration, EnsembleParams, Provenance, SampleBatch};
use crate::error::{invalid, Result};
use crate::par;
use crate::rng::{self, tag};

/// Draws `α_0, …, α_{n−1}` for CβE(n).
pub fn verblunsky_coefficients<R: Rng>(n: usize, beta: f64, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let phase = TAU * rng.random::<f64>();
            let remaining = (n - k - 1) as f64;
            let radius = if remaining == 0.0 {
                1.0
            } else {
                // Beta(1, b) by inversion: 1 − U^{1/b}
                let b = beta * remaining / 2.0;
                let u: f64 = rng.random();
                (-(u.ln() / b).exp_m1()).sqrt()
            };
            Complex64::from_polar(radius, phase)
        })
        .collect()
}

/// `Φ_n(z)` by the Szegő recursion. Used as an independent check on the roots.
pub fn szego_polynomial(alphas: &[Complex64], z: Complex64) -> Complex64 {
    let (mut phi, mut phi_star) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
    for &a in alphas {
        let next = z * phi - a.conj() * phi_star;
        phi_star -= a * z * phi;
        phi = next;
    }
    phi
}

/// Precomputed recursion data: the inner coefficients split into groups
/// whose phase corrections provably sum to less than π in magnitude, so one
/// `atan2` of the group product recovers the exact sum of the per-step
/// arguments. `|arg(1 − αb)| ≤ asin|α|` for unimodular `b`.
struct PhaseRecursion<'a> {
    inner: &'a [Complex64],
    group_ends: Vec<usize>,
}

impl<'a> PhaseRecursion<'a> {
    fn new(inner: &'a [Complex64]) -> Self {
        const BUDGET: f64 = 0.9 * PI;
        let mut group_ends = Vec::new();
        let mut used = 0.0;
        for (k, a) in inner.iter().enumerate() {
            let bound = a.norm().min(1.0).asin();
            if used + bound > BUDGET && k > 0 {
                group_ends.push(k);
                used = 0.0;
            }
            used += bound;
        }
        group_ends.push(inner.len());
        Self { inner, group_ends }
    }

    /// Continuous phase `ψ(θ)` of `B(e^{iθ})`, built from
    /// `ψ_{k+1} = θ + ψ_k − 2 arg(1 − α_k e^{iψ_k})`.
    fn phase(&self, theta: f64) -> f64 {
        self.eval::<false>(theta).psi
    }

    fn eval<const DERIV: bool>(&self, theta: f64) -> PhasePoint {
        let z = Complex64::cis(theta);
        let one = Complex64::new(1.0, 0.0);
        let mut b = z;
        let mut arg_sum = 0.0;
        let mut dpsi = 1.0;
        let mut dlog = 0.0;
        let mut start = 0;
        for &end in &self.group_ends {
            let mut prod = one;
            for &a in &self.inner[start..end] {
                let u = a * b;
                let w = one - u;
                let wn = w.norm_sqr();
                if DERIV {
                    // d/dθ log|w| = ψ_k'·Im(u/w)
                    dlog += dpsi * (u * w.conj()).im / wn;
                    dpsi = 1.0 + dpsi * (1.0 - u.norm_sqr()) / wn;
                }
                let wc = w.conj();
                // M_α(b) = b·conj(w)/w = b·conj(w)²/|w|²
                b = z * b * (wc * wc) / wn;
                prod *= w;
            }
            b /= b.norm();
            arg_sum += prod.im.atan2(prod.re);
            start = end;
        }
        let steps = self.inner.len() as f64;
        PhasePoint { psi: (steps + 1.0) * theta - 2.0 * arg_sum, dpsi, dlog }
    }
}

/// Phase, its derivative, and the derivative of `log|Φ*_{n−1}(e^{iθ})|`.
struct PhasePoint {
    psi: f64,
    dpsi: f64,
    dlog: f64,
}

/// Eigenangles (sorted, in `[0, 2π)`) of the CMV matrix with the given
/// coefficients; the last coefficient must lie on the unit circle.
pub fn cmv_eigenangles(alphas: &[Complex64]) -> Result<Vec<f64>> {
    let n = alphas.len();
    if n == 0 {
        return Err(invalid("need at least one Verblunsky coefficient"));
    }
    let last = alphas[n - 1];
    if (last.norm() - 1.0).abs() > 1e-12 {
        return Err(invalid("last Verblunsky coefficient must be unimodular"));
    }
    if alphas[..n - 1].iter().any(|a| !(a.norm() < 1.0)) {
        return Err(invalid("inner Verblunsky coefficients must lie in the open disk"));
    }
    let rec = PhaseRecursion::new(&alphas[..n - 1]);
    let base = -last.arg();

    let cells = n.max(8);
    let grid: Vec<(f64, f64)> = (0..cells)
        .map(|g| {
            let theta = TAU * g as f64 / cells as f64;
            (theta, rec.phase(theta))
        })
        .collect();
    let start = grid[0].1;
    let end = start + TAU * n as f64;
    let first = ((start - base) / TAU).ceil();

    let mut roots = Vec::with_capacity(n);
    let mut cell = 0;
    for i in 0..n {
        let target = base + TAU * (first + i as f64);
        while cell + 1 < cells && grid[cell + 1].1 <= target {
            cell += 1;
        }
        let (lo, f_lo) = grid[cell];
        let (hi, f_hi) = if cell + 1 < cells { grid[cell + 1] } else { (TAU, end) };
        roots.push(solve_monotone(&rec, target, lo, f_lo, hi, f_hi));
    }
    let mut roots: Vec<f64> = roots.into_iter().map(super::wrap_angle).collect();
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// Root of `ψ(θ) = target` inside a bracket.
///
/// The phase is a staircase (steep near each eigenangle), so Newton runs on
/// the smooth function `F(θ) = 2|Φ*_{n−1}(e^{iθ})|·sin((ψ(θ) − target)/2)`,
/// a real trigonometric polynomial up to a unimodular factor whose zeros are
/// the eigenangles. The bracket is maintained from the sign of the phase
/// residual and Newton steps leaving it fall back to bisection.
fn solve_monotone(
    rec: &PhaseRecursion<'_>,
    target: f64,
    mut lo: f64,
    f_lo: f64,
    mut hi: f64,
    f_hi: f64,
) -> f64 {
    let tol = 4.0 * f64::EPSILON * (1.0 + target.abs());
    if f_lo == target {
        return lo;
    }
    let mut theta =
        if f_hi > f_lo { lo + (hi - lo) * (target - f_lo) / (f_hi - f_lo) } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let p = rec.eval::<true>(theta);
        let f = p.psi - target;
        if f.abs() <= tol {
            return theta;
        }
        if f < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        let step = if f.abs() < PI {
            let (s, c) = (0.5 * f).sin_cos();
            -s / (p.dlog * s + 0.5 * p.dpsi * c)
        } else {
            f64::NAN
        };
        let next = theta + step;
        if step.is_finite() && next > lo && next < hi {
            if step.abs() <= 1e-13 {
                return next;
            }
            theta = next;
        } else {
            theta = 0.5 * (lo + hi);
        }
        if hi - lo <= 1e-12 {
            break;
        }
    }
    theta
}

/// `m` independent exact CβE(n) draws; draw `i` uses its own stream derived
/// from `(seed, i)`.
pub fn exact_sample(params: &EnsembleParams, m: usize) -> Result<SampleBatch> {
    params.validate()?;
    if m == 0 {
        return Err(invalid("need at least one sample"));
    }
    let configs = par::map_indexed(m, |i| {
        let mut rng = rng::stream(params.seed, &[tag::EXACT, i as u64]);
        let alphas = verblunsky_coefficients(params.n, params.beta, &mut rng);
        let angles = cmv_eigenangles(&alphas).expect("sampled coefficients are admissible");
        Configuration::new(angles).expect("eigenangles are wrapped and sorted")
    });
    SampleBatch::new(
        configs,
        *params,
        Provenance {
            sampler: "killip-nenciu".into(),
            seed: params.seed,
            burn_in: None,
            thinning: None,
            proposal_scale: None,
            chains: Vec::new(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_are_zeros_of_the_paraorthogonal_polynomial() {
        let mut rng = rng::stream(21, &[]);
        for &(n, beta) in &[(1usize, 2.0), (2, 2.0), (5, 0.5), (17, 1.0), (64, 4.0), (150, 2.0)] {
            for _ in 0..5 {
                let alphas = verblunsky_coefficients(n, beta, &mut rng);
                let roots = cmv_eigenangles(&alphas).unwrap();
                assert_eq!(roots.len(), n);
                // scale of |Φ_n| on the circle
                let scale: f64 = (0..64)
                    .map(|g| szego_polynomial(&alphas, Complex64::cis(TAU * g as f64 / 64.0)).norm())
                    .fold(0.0, f64::max);
                for &r in &roots {
                    let v = szego_polynomial(&alphas, Complex64::cis(r)).norm();
                    assert!(v <= 1e-9 * scale.max(1.0), "n={n}: |Φ(e^(i{r}))| = {v}, scale {scale}");
                }
                assert!(roots.windows(2).all(|w| w[0] < w[1]), "roots must be distinct");
            }
        }
    }

    #[test]
    fn trivial_coefficients_give_roots_of_unity() {
        // α_k = 0 except the last: Φ_n(z) = z^n − ᾱ, roots e^{i(−arg α + 2πj)/n}
        let n = 7;
        let mut alphas = vec![Complex64::new(0.0, 0.0); n];
        alphas[n - 1] = Complex64::cis(0.3);
        let roots = cmv_eigenangles(&alphas).unwrap();
        let mut expected: Vec<f64> = (0..n)
            .map(|j| super::super::wrap_angle((-0.3 + TAU * j as f64) / n as f64))
            .collect();
        expected.sort_by(f64::total_cmp);
        for (r, e) in roots.iter().zip(&expected) {
            assert!((r - e).abs() < 1e-13, "{r} vs {e}");
        }
    }

    #[test]
    fn rejects_inadmissible_coefficients() {
        assert!(cmv_eigenangles(&[]).is_err());
        assert!(cmv_eigenangles(&[Complex64::new(0.5, 0.0)]).is_err());
        assert!(cmv_eigenangles(&[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn coefficient_moduli_follow_the_beta_law() {
        // E|α_k|² = 1 / (1 + β(n−k−1)/2)
        let mut rng = rng::stream(4, &[]);
        let (n, beta, reps) = (6, 2.0, 40_000);
        let mut acc = vec![0.0; n];
        for _ in 0..reps {
            for (k, a) in verblunsky_coefficients(n, beta, &mut rng).iter().enumerate() {
                acc[k] += a.norm_sqr();
            }
        }
        for (k, s) in acc.iter().enumerate() {
            let mean = s / reps as f64;
            let expected = 1.0 / (1.0 + beta * (n - k - 1) as f64 / 2.0);
            assert!((mean - expected).abs() < 0.01, "k={k}: {mean} vs {expected}");
        }
    }

    #[test]
    fn exact_sampler_is_deterministic() {
        let p = EnsembleParams::new(12, 1.0, 8).unwrap();
        let a = exact_sample(&p, 4).unwrap();
        let b = exact_sample(&p, 4).unwrap();
        assert_eq!(a.configs, b.configs);
        assert_eq!(a.provenance.sampler, "killip-nenciu");
    }
}
