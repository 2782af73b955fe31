//! Empirical percentiles, CDFs and bootstrap intervals.

use rand::Rng;

/// Name recorded in report metadata.
pub const PERCENTILE_METHOD: &str =
    "linear interpolation between order statistics: h = (n - 1) q / 100, x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])";

/// Sorts a copy of `samples` (NaN-free input assumed; total order otherwise).
pub fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Percentile `q` in `[0, 100]` of already sorted samples. `None` if empty.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 100.0) / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn percentile(samples: &[f64], q: f64) -> Option<f64> {
    percentile_sorted(&sorted(samples), q)
}

/// Empirical CDF points `(x_(i), (i + 1) / n)` over the sorted samples.
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let s = sorted(samples);
    let n = s.len() as f64;
    s.into_iter()
        .enumerate()
        .map(|(i, x)| (x, (i + 1) as f64 / n))
        .collect()
}

pub fn mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Percentile-bootstrap interval for percentile `q` at confidence `level`
/// using `resamples` resamples.
pub fn bootstrap_ci<R: Rng + ?Sized>(samples: &[f64], q: f64, resamples: usize, level: f64, rng: &mut R) -> Option<(f64, f64)> {
    if samples.is_empty() || resamples == 0 {
        return None;
    }
    let n = samples.len();
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<f64> = (0..n).map(|_| samples[rng.random_range(0..n)]).collect();
            percentile(&draw, q).expect("nonempty")
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0 * 100.0;
    Some((
        percentile_sorted(&stats, tail)?,
        percentile_sorted(&stats, 100.0 - tail)?,
    ))
}

/// Summary of one sample set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub p5: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Option<Summary> {
        let s = sorted(samples);
        Some(Summary {
            count: s.len(),
            mean: mean(&s),
            min: *s.first()?,
            p5: percentile_sorted(&s, 5.0)?,
            median: percentile_sorted(&s, 50.0)?,
            p95: percentile_sorted(&s, 95.0)?,
            max: *s.last()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn percentile_endpoints_and_interpolation() {
        let x = [3.0, 1.0, 4.0, 1.5, 9.0];
        assert_eq!(percentile(&x, 0.0), Some(1.0));
        assert_eq!(percentile(&x, 100.0), Some(9.0));
        assert_eq!(percentile(&x, 50.0), Some(3.0));
        // h = 4 * 0.1 = 0.4 -> 1 + 0.4 * 0.5
        assert!((percentile(&x, 10.0).unwrap() - 1.2).abs() < 1e-15);
        assert_eq!(percentile(&[], 5.0), None);
        assert_eq!(percentile(&[7.0], 5.0), Some(7.0));
    }

    #[test]
    fn percentile_matches_reference() {
        // numpy.percentile(np.arange(1, 101), 5) == 5.95
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&x, 5.0).unwrap() - 5.95).abs() < 1e-12);
    }

    #[test]
    fn cdf_is_monotone() {
        let cdf = empirical_cdf(&[0.3, 0.1, 0.2, 0.2]);
        assert_eq!(cdf.len(), 4);
        assert!(cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        assert_eq!(cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn summary_within_range() {
        let mut rng = stream(1, 0, Purpose::Oracle);
        let x: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let s = Summary::of(&x).unwrap();
        assert!(s.min <= s.p5 && s.p5 <= s.median && s.median <= s.p95 && s.p95 <= s.max);
        let (lo, hi) = bootstrap_ci(&x, 5.0, 200, 0.95, &mut rng).unwrap();
        assert!(lo <= s.p5 && s.p5 <= hi);
    }
}
