//! Small statistics toolkit shared by the integration tests.
#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn upper_t(t: f64, df: f64, mean_diff: f64) -> f64 {
    if !t.is_finite() {
        // zero standard error: the sign of the difference decides
        return if mean_diff > 0.0 { 0.0 } else { 1.0 };
    }
    1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t)
}

/// One-sided Welch test of H1: mean(x) > mean(y). Returns the p-value.
pub fn welch_greater(x: &[f64], y: &[f64]) -> f64 {
    let (vx, vy) = (variance(x) / x.len() as f64, variance(y) / y.len() as f64);
    let diff = mean(x) - mean(y);
    let se = (vx + vy).sqrt();
    if se == 0.0 {
        return upper_t(f64::INFINITY, 1.0, diff);
    }
    let df = (vx + vy).powi(2)
        / (vx.powi(2) / (x.len() as f64 - 1.0) + vy.powi(2) / (y.len() as f64 - 1.0));
    upper_t(diff / se, df, diff)
}

/// One-sided paired t test of H1: mean(x - y) > 0. Returns the p-value.
pub fn paired_greater(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let m = mean(&d);
    let se = (variance(&d) / d.len() as f64).sqrt();
    if se == 0.0 {
        return upper_t(f64::INFINITY, 1.0, m);
    }
    upper_t(m / se, d.len() as f64 - 1.0, m)
}

/// Pearson chi-square test of independence on a contingency table
/// (rows x columns of counts). Returns the p-value.
pub fn chi_square_independence(table: &[Vec<f64>]) -> f64 {
    let total: f64 = table.iter().flatten().sum();
    let cols = table[0].len();
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = row_sums[i] * col_sums[j] / total;
            if expected > 0.0 {
                stat += (obs - expected).powi(2) / expected;
            }
        }
    }
    let df = ((table.len() - 1) * (cols - 1)) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

/// Chi-square goodness of fit of `counts` against probabilities `probs`.
pub fn chi_square_fit(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

pub fn median_u64(xs: &[u64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

#[test]
fn stats_sanity() {
    assert!((mean(&[1.0, 2.0, 3.0]) - 2.0).abs() < 1e-15);
    assert!((variance(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    assert!(welch_greater(&[5.0, 5.1, 4.9, 5.2], &[1.0, 1.1, 0.9, 1.2]) < 1e-4);
    assert!(welch_greater(&[1.0, 1.1, 0.9, 1.2], &[5.0, 5.1, 4.9, 5.2]) > 0.999);
    assert_eq!(paired_greater(&[1.0, 1.0], &[1.0, 1.0]), 1.0);
    assert!(chi_square_independence(&[vec![10.0, 20.0], vec![10.0, 20.0]]) > 0.99);
    assert!(chi_square_fit(&[100, 100, 100, 100], &[0.25; 4]) > 0.99);
    assert_eq!(median_u64(&[3, 1, 2]), 2.0);
}
