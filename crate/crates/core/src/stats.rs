//! Summary statistics for comparing runs across seeds.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::error::{domain, Result};

/// Sample mean with a two-sided t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Mean and `level` t-interval. A single value gets a zero-width interval.
pub fn mean_ci(values: &[f64], level: f64) -> Result<MeanCi> {
    if values.is_empty() {
        return Err(domain("mean of an empty sample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(MeanCi { mean, lo: mean, hi: mean, n });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| domain(e.to_string()))?
        .inverse_cdf(0.5 + level / 2.0);
    let half = t * (var / n as f64).sqrt();
    Ok(MeanCi { mean, lo: mean - half, hi: mean + half, n })
}

pub fn mean_ci95(values: &[f64]) -> Result<MeanCi> {
    mean_ci(values, 0.95)
}

/// Outcome of a paired one-sided sign test of `a > b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X >= wins)` for `X ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

/// One-sided sign test that `a[i] > b[i]` more often than chance. Ties are dropped.
pub fn sign_test_greater(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(domain(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let ties = a.len() - wins - losses;
    let n = wins + losses;
    let p_value = if n == 0 {
        1.0
    } else if wins == 0 {
        1.0
    } else {
        let bin = Binomial::new(0.5, n as u64).map_err(|e| domain(e.to_string()))?;
        bin.sf(wins as u64 - 1)
    };
    Ok(SignTest { wins, losses, ties, p_value })
}
