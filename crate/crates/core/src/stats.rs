//! Small statistics toolkit: means with standard errors, batch means for
//! correlated chains, and ordinary least squares.

use serde::{Deserialize, Serialize};

/// Default number of batches for batch-means error estimates.
pub const DEFAULT_BATCHES: usize = 16;

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn new(mean: f64, se: f64) -> Self {
        MeanSe { mean, se }
    }

    /// |self − other| in units of the combined standard error.
    pub fn z_against(&self, other: &MeanSe) -> f64 {
        let se = (self.se * self.se + other.se * other.se).sqrt();
        z_score(self.mean - other.mean, se)
    }

    /// |mean − value| in units of this estimate's standard error.
    pub fn z_to(&self, value: f64) -> f64 {
        z_score(self.mean - value, self.se)
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff.abs() / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Mean and standard error for independent samples.
pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return MeanSe::new(m, f64::NAN);
    }
    MeanSe::new(m, (variance(xs) / n as f64).sqrt())
}

/// Mean and batch-means standard error for a correlated series.
///
/// The series is cut into `batches` contiguous blocks of equal length (the
/// remainder at the end is dropped from the error estimate, not the mean).
pub fn batch_means(xs: &[f64], batches: usize) -> MeanSe {
    let m = mean(xs);
    let b = batches.max(2);
    let len = xs.len() / b;
    if len == 0 {
        return MeanSe::new(m, f64::NAN);
    }
    let bm: Vec<f64> = (0..b).map(|i| mean(&xs[i * len..(i + 1) * len])).collect();
    MeanSe::new(m, (variance(&bm) / b as f64).sqrt())
}

/// Batch-means standard error of a series that is the concatenation of
/// independent chains: batches are formed within each chain and pooled.
pub fn pooled_batch_means(chains: &[Vec<f64>], batches_per_chain: usize) -> MeanSe {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let m = mean(&all);
    let mut bm = Vec::new();
    for c in chains {
        let b = batches_per_chain.max(1);
        let len = c.len() / b;
        if len == 0 {
            continue;
        }
        for i in 0..b {
            bm.push(mean(&c[i * len..(i + 1) * len]));
        }
    }
    if bm.len() < 2 {
        return MeanSe::new(m, f64::NAN);
    }
    MeanSe::new(m, (variance(&bm) / bm.len() as f64).sqrt())
}

/// Least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
}

/// Ordinary least squares with classical standard errors.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_se, intercept_se) = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let s2 = rss / (n - 2) as f64;
        let sumx2: f64 = x.iter().map(|a| a * a).sum();
        ((s2 / sxx).sqrt(), (s2 * sumx2 / (n as f64 * sxx)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Some(LineFit { intercept, slope, intercept_se, slope_se })
}

/// Two-sided normal quantile used for 95% intervals.
pub const Z95: f64 = 1.959963984540054;
