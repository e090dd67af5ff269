//! Small estimators used by the simulation checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean with the standard error from `batches` contiguous batch
/// means, which stays honest for autocorrelated chain output.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let b = batches.min(n).max(2);
    let size = n / b;
    if size == 0 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> = (0..b)
        .map(|k| values[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Default batch count for [`batch_means`].
pub const BATCHES: usize = 100;

/// Kolmogorov–Smirnov distance between the empirical law of `sorted` and a
/// law given by its cdf `F` and left limit `F(x−)`, so atoms are handled.
pub fn ks_statistic<F, G>(sorted: &[f64], cdf: F, cdf_left: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        d = d.max((cdf_left(x) - i as f64 / n).abs());
        d = d.max((cdf(x) - j as f64 / n).abs());
        i = j;
    }
    d
}

/// Pearson χ² p-value for counts against cell probabilities summing to one.
pub fn chi_square_pvalue(counts: &[u64], probs: &[f64]) -> (f64, f64) {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("at least two cells");
    (stat, 1.0 - dist.cdf(stat))
}
