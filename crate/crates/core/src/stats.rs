//! Small statistical tests used by the verification suite.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Pearson chi-square statistic and p-value of `counts` against a uniform
/// distribution over its bins.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let n: u64 = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("at least two bins");
    (stat, 1.0 - dist.cdf(stat))
}

/// One-sided Mann-Whitney rank-sum test of "x tends to exceed y", using the
/// normal approximation with tie and continuity corrections. Returns (U_x, p).
pub fn rank_sum_greater(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let mut all: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_x += all[i..=j].iter().filter(|e| e.1).count() as f64 * avg_rank;
        i = j + 1;
    }
    let u = rank_sum_x - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let mean = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return (u, 1.0);
    }
    let z = (u - mean - 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (u, 1.0 - normal.cdf(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_samples_are_significant() {
        let x: Vec<f64> = (0..8).map(|i| 0.8 + i as f64 * 0.01).collect();
        let y: Vec<f64> = (0..24).map(|i| 0.2 + i as f64 * 0.01).collect();
        let (u, p) = rank_sum_greater(&x, &y);
        assert_eq!(u, 8.0 * 24.0);
        assert!(p < 1e-4);
        let (u, p) = rank_sum_greater(&y, &x);
        assert_eq!(u, 0.0);
        assert!(p > 0.99);
    }

    #[test]
    fn identical_samples_are_not() {
        let (_, p) = rank_sum_greater(&[1.0; 5], &[1.0; 5]);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn chi_square_of_exact_uniform() {
        let (stat, p) = chi_square_uniform(&[10, 10, 10, 10]);
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }
}
