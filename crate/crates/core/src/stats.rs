//! Error summaries, histograms and a uniformity test.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty("value list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(Summary { count: values.len(), mean, median: median(values), std: libm::sqrt(var) })
}

/// Median with the two middle values averaged for even lengths. NaNs sort
/// last.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and population standard deviation of a set of run means.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Fixed-width histogram starting at zero. Bin `k` holds values in
/// `[k·w, (k+1)·w)`; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
    pub total: usize,
}

impl Histogram {
    /// Bins span `[0, max(upper, max(values))]`, so unclamped errors past
    /// `upper` are still counted.
    pub fn new(values: &[f64], bin_width: f64, upper: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("value list"));
        }
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!("bin width {bin_width}")));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("histogram value {bad}")));
        }
        let top = values.iter().copied().fold(upper.max(0.0), f64::max);
        // Tolerate rounding so that an upper bound on a bin edge adds no bin.
        let bins = (libm::ceil(top / bin_width - 1e-9) as usize).max(1);
        let mut counts = vec![0usize; bins];
        for &v in values {
            let k = ((v / bin_width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Self { bin_width, counts, total: values.len() })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width)
    }

    /// Fractions per bin, summing to one.
    pub fn normalized(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    /// Cumulative fraction at the right edge of each bin. The last entry is
    /// exactly one.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0usize;
        self.counts
            .iter()
            .map(|&c| {
                acc += c;
                acc as f64 / self.total as f64
            })
            .collect()
    }
}

/// Fraction of values not exceeding `x`.
pub fn empirical_cdf(values: &[f64], x: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().filter(|&&v| v <= x).count() as f64 / values.len() as f64
}

/// Kolmogorov–Smirnov statistic of `samples` against `U[lo, hi]`.
pub fn ks_uniform(samples: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("sample list"));
    }
    if !(hi > lo) {
        return Err(Error::InvalidArgument(alloc::format!("uniform support [{lo}, {hi}]")));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Asymptotic one-sample KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / libm::sqrt(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_small_set() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.std - libm::sqrt(1.25)).abs() < 1e-15);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn single_value_fills_one_unit_bin() {
        let h = Histogram::new(&[0.2], 0.15, 0.0).unwrap();
        assert_eq!(h.counts, vec![0, 1]);
        assert_eq!(h.normalized(), vec![0.0, 1.0]);
        assert_eq!(*h.cdf().last().unwrap(), 1.0);
    }

    #[test]
    fn histogram_covers_upper_and_outliers() {
        let h = Histogram::new(&[0.0, 0.149, 0.15, 7.0], 0.15, 6.0).unwrap();
        assert_eq!(h.len(), 47);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[46], 1);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        let h = Histogram::new(&[0.1], 0.15, 6.0).unwrap();
        assert_eq!(h.len(), 40);
    }

    #[test]
    fn ks_of_evenly_spaced_points() {
        let n = 100;
        let pts: Vec<f64> = (0..n).map(|i| 3.0 + 3.0 * (i as f64 + 0.5) / n as f64).collect();
        let d = ks_uniform(&pts, 3.0, 6.0).unwrap();
        assert!((d - 0.005).abs() < 1e-12);
        let skewed: Vec<f64> = pts.iter().map(|x| 3.0 + (x - 3.0) * (x - 3.0) / 3.0).collect();
        assert!(ks_uniform(&skewed, 3.0, 6.0).unwrap() > 0.2);
    }

    #[test]
    fn empirical_cdf_counts_ties() {
        assert_eq!(empirical_cdf(&[0.1, 0.15, 0.3, 0.5], 0.15), 0.5);
    }
}
