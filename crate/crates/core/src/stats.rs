//! Sample means with standard errors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl Estimate {
    /// Mean and standard error of the mean. A single sample has zero SE.
    pub fn from_samples(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, count };
        }
        let mean = xs.iter().sum::<f64>() / count as f64;
        if count == 1 {
            return Self { mean, se: 0.0, count };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        Self { mean, se: (var / count as f64).sqrt(), count }
    }

    /// Standard error from non-overlapping batch means, for correlated
    /// sequences. Falls back to the iid estimate below four batches.
    pub fn batch_means(xs: &[f64], batches: usize) -> Self {
        let count = xs.len();
        if batches < 4 || count < 2 * batches {
            return Self::from_samples(xs);
        }
        let size = count / batches;
        let means: Vec<f64> = xs
            .chunks_exact(size)
            .take(batches)
            .map(|c| c.iter().sum::<f64>() / size as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / count as f64;
        let se = Self::from_samples(&means).se;
        Self { mean, se, count }
    }

    /// `(self - other) / sqrt(se² + se²)`, zero when both errors vanish and
    /// the means agree.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        z_score(self.mean - other.mean, self.se.hypot(other.se))
    }
}

/// `diff / se`, treating `0/0` as 0 and `x/0` as ±∞.
pub fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub re: Estimate,
    pub im: Estimate,
}

impl ComplexEstimate {
    pub fn from_samples(zs: &[Complex64]) -> Self {
        let re: Vec<f64> = zs.iter().map(|z| z.re).collect();
        let im: Vec<f64> = zs.iter().map(|z| z.im).collect();
        Self { re: Estimate::from_samples(&re), im: Estimate::from_samples(&im) }
    }

    pub fn batch_means(zs: &[Complex64], batches: usize) -> Self {
        let re: Vec<f64> = zs.iter().map(|z| z.re).collect();
        let im: Vec<f64> = zs.iter().map(|z| z.im).collect();
        Self {
            re: Estimate::batch_means(&re, batches),
            im: Estimate::batch_means(&im, batches),
        }
    }

    pub fn mean(&self) -> Complex64 {
        Complex64::new(self.re.mean, self.im.mean)
    }

    /// Combined SE of the complex mean, `sqrt(se_re² + se_im²)`.
    pub fn se(&self) -> f64 {
        self.re.se.hypot(self.im.se)
    }
}
