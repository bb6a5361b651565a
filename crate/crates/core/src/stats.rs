//! Seeded random streams and percentile bootstrap intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default confidence level of reported intervals.
pub const DEFAULT_LEVEL: f64 = 0.90;
/// Default number of bootstrap resamples.
pub const DEFAULT_RESAMPLES: usize = 2000;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Master seed plus a stream id; each distinct id names an independent
/// stream, so results never depend on which worker drew what.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn derived_seed(&self) -> u64 {
        splitmix64(splitmix64(self.master_seed) ^ splitmix64(self.stream_id.wrapping_add(0x5851_f42d_4c95_7f2d)))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derived_seed())
    }

    /// Sub-stream of this stream.
    pub fn child(&self, stream_id: u64) -> RngSpec {
        RngSpec::new(self.derived_seed(), stream_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_resamples: usize,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Percentile bootstrap: resample with replacement, apply `statistic`, and
/// take the `(1−level)/2` and `1−(1−level)/2` empirical quantiles.
pub fn bootstrap_ci<T, F, R>(
    samples: &[T],
    statistic: F,
    level: f64,
    n_resamples: usize,
    rng: &mut R,
) -> Result<ConfidenceInterval>
where
    F: Fn(&[&T]) -> f64,
    R: Rng + ?Sized,
{
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level {level}")));
    }
    if n_resamples == 0 {
        return Err(Error::InvalidParameter("zero bootstrap resamples".into()));
    }
    let n = samples.len();
    let mut resample: Vec<&T> = Vec::with_capacity(n);
    let mut values: Vec<f64> = (0..n_resamples)
        .map(|_| {
            resample.clear();
            resample.extend((0..n).map(|_| &samples[rng.random_range(0..n)]));
            statistic(&resample)
        })
        .collect();
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let lower = quantile_sorted(&values, alpha);
    let upper = quantile_sorted(&values, 1.0 - alpha);
    Ok(ConfidenceInterval {
        lower,
        upper: upper.max(lower),
        level,
        n_resamples,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            if frac == 0.0 {
                sorted[lo]
            } else {
                sorted[lo] + frac * (sorted[hi] - sorted[lo])
            }
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Average ranks (1-based), ties share their mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn mean_of(xs: &[&f64]) -> f64 {
        xs.iter().copied().sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn identical_samples_give_zero_width() {
        let xs = vec![0.37; 50];
        let ci = bootstrap_ci(&xs, mean_of, 0.9, 500, &mut RngSpec::new(1, 0).rng()).unwrap();
        assert_eq!(ci.width(), 0.0);
        assert!((ci.lower - 0.37).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let mut rng = RngSpec::new(1, 0).rng();
        assert!(bootstrap_ci(&[1.0], mean_of, 0.9, 10, &mut rng).is_err());
        assert!(bootstrap_ci(&[1.0, 2.0], mean_of, 1.0, 10, &mut rng).is_err());
        assert!(bootstrap_ci(&[1.0, 2.0], mean_of, 0.0, 10, &mut rng).is_err());
    }

    #[test]
    fn normal_mean_interval_matches_normal_theory() {
        let mut rng = RngSpec::new(42, 0).rng();
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let ci = bootstrap_ci(&xs, mean_of, 0.9, 2000, &mut RngSpec::new(42, 1).rng()).unwrap();
        let theory = 2.0 * 1.645 / 100.0;
        assert!(ci.contains(0.0), "{ci:?}");
        assert!((ci.width() - theory).abs() < 0.2 * theory, "{ci:?}");
    }

    #[test]
    fn same_seed_same_interval() {
        let xs: Vec<f64> = (0..100).map(|k| (k as f64).sin()).collect();
        let a = bootstrap_ci(&xs, mean_of, 0.9, 300, &mut RngSpec::new(3, 9).rng()).unwrap();
        let b = bootstrap_ci(&xs, mean_of, 0.9, 300, &mut RngSpec::new(3, 9).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interval_narrows_with_more_samples() {
        let widths = |n: usize| -> f64 {
            (0..20)
                .map(|rep| {
                    let mut rng = RngSpec::new(5, rep).rng();
                    let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                    bootstrap_ci(&xs, mean_of, 0.9, 400, &mut rng).unwrap().width()
                })
                .sum::<f64>()
                / 20.0
        };
        let (w100, w400) = (widths(100), widths(400));
        assert!(w400 < w100);
        assert!((w400 / w100 - 0.5).abs() < 0.1);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let mut a = RngSpec::new(7, 0).rng();
        let mut b = RngSpec::new(7, 1).rng();
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| a.random::<f64>()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.random::<f64>()).collect();
        assert!(pearson(&xs, &ys).abs() < 0.01);
        assert_ne!(RngSpec::new(7, 0).derived_seed(), RngSpec::new(7, 1).derived_seed());
        assert_ne!(RngSpec::new(7, 0).derived_seed(), RngSpec::new(8, 0).derived_seed());
    }

    #[test]
    fn rank_helpers() {
        assert_eq!(ranks(&[3.0, 1.0, 2.0, 1.0]), vec![4.0, 1.5, 3.0, 1.5]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 100.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((fit_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(quantile_sorted(&[1.0, 3.0], 0.25), 1.5);
    }
}
