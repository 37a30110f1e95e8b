//! Small-sample statistics used by the ensemble layer and the test suites:
//! Student-t confidence intervals, paired one-sided t-tests, two-sample
//! Kolmogorov–Smirnov tests, and least-squares slope estimation.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{QsdError, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n−1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0)
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    sample_std(xs) / (xs.len() as f64).sqrt()
}

/// Two-sided Student-t quantile t_{q, df} (q is the CDF level, e.g. 0.995
/// for a 99% two-sided interval).
pub fn t_quantile(q: f64, df: f64) -> Result<f64> {
    if df < 1.0 {
        return Err(QsdError::InvalidArgument(format!(
            "t quantile needs df ≥ 1, got {df}"
        )));
    }
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| QsdError::InvalidArgument(format!("t distribution: {e}")))?;
    Ok(dist.inverse_cdf(q))
}

/// Student-t CDF at `t` with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| QsdError::InvalidArgument(format!("t distribution: {e}")))?;
    Ok(dist.cdf(t))
}

/// Mean with a two-sided Student-t confidence-interval half-width at the
/// given confidence level (e.g. 0.99).
pub fn mean_with_ci(xs: &[f64], level: f64) -> Result<(f64, f64)> {
    let n = xs.len();
    if n == 0 {
        return Err(QsdError::InvalidArgument("empty sample".into()));
    }
    if n == 1 {
        return Ok((xs[0], 0.0));
    }
    let q = 0.5 + level / 2.0;
    let t = t_quantile(q, (n - 1) as f64)?;
    Ok((mean(xs), t * standard_error(xs)))
}

/// One-sided paired t-test of H1: mean(x − y) < 0.
/// Returns (t statistic, p-value). Small p ⇒ x is significantly below y.
pub fn paired_t_test_less(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(QsdError::InvalidArgument(
            "paired t-test needs equal-length samples with n ≥ 2".into(),
        ));
    }
    let d: Vec<f64> = x.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
    let sd = sample_std(&d);
    let n = d.len() as f64;
    if sd == 0.0 {
        // Degenerate but decidable: all differences identical.
        let m = mean(&d);
        let p = if m < 0.0 {
            0.0
        } else if m > 0.0 {
            1.0
        } else {
            0.5
        };
        return Ok((f64::NEG_INFINITY * -m.signum(), p));
    }
    let t = mean(&d) / (sd / n.sqrt());
    let p = t_cdf(t, n - 1.0)?;
    Ok((t, p))
}

/// One-sided exact Wilcoxon signed-rank test of H1: x < y.
///
/// Returns (W⁺ statistic, exact p-value). Small p ⇒ x is significantly
/// below y. Zero differences are dropped (Wilcoxon's prescription); ties
/// in |d| get average ranks, and the p-value is exact conditional on the
/// observed tie pattern (dynamic program over the 2ⁿ sign assignments).
///
/// Preferred over the paired t-test when the paired differences are
/// heavy-tailed — e.g. Monte-Carlo error comparisons where one sample is
/// produced by a weight-carrying estimator whose per-repeat error
/// occasionally jumps an order of magnitude. A single such outlier
/// inflates the t-test's variance estimate and destroys its power, while
/// the rank test still requires consistent ordering across repeats
/// (n = 10 pairs cannot reach p < 0.01 without at least a 9-of-10 sweep).
pub fn wilcoxon_signed_rank_less(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.is_empty() {
        return Err(QsdError::InvalidArgument(
            "signed-rank test needs equal-length non-empty samples".into(),
        ));
    }
    let mut d: Vec<f64> = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| a - b)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    if n == 0 {
        // All pairs tie exactly: no evidence in either direction.
        return Ok((0.0, 1.0));
    }
    if n > 50 {
        return Err(QsdError::InvalidArgument(format!(
            "exact signed-rank test limited to n ≤ 50, got {n}"
        )));
    }
    d.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
    // Doubled average ranks are always integers, including under ties.
    let mut ranks2 = vec![0u64; n];
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        // Positions i..=j share |d|; average rank = (i+1 + j+1)/2.
        let doubled = (i + j + 2) as u64;
        for r in ranks2.iter_mut().take(j + 1).skip(i) {
            *r = doubled;
        }
        i = j + 1;
    }
    let w_plus2: u64 = d
        .iter()
        .zip(ranks2.iter())
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| *r)
        .sum();
    // Null distribution of the doubled W⁺: each rank enters with sign ±
    // independently. counts[s] = number of sign assignments with Σ = s;
    // total 2ⁿ ≤ 2⁵⁰ is exactly representable in f64.
    let total2: u64 = ranks2.iter().sum();
    let mut counts = vec![0.0f64; total2 as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in &ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let below: f64 = counts[..=w_plus2 as usize].iter().sum();
    let p = below / 2f64.powi(n as i32);
    Ok((w_plus2 as f64 / 2.0, p))
}

/// Asymptotic Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test. Returns (D statistic, approximate
/// p-value) using the asymptotic Kolmogorov distribution with the small-
/// sample correction λ = (√n_e + 0.12 + 0.11/√n_e)·D.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(QsdError::InvalidArgument("empty KS sample".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < n && j < m {
        let xv = xs[i];
        let yv = ys[j];
        let t = xv.min(yv);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(diff);
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    Ok((d, kolmogorov_q(lambda)))
}

/// Ordinary least squares y = a + b·x. Returns (slope, intercept,
/// slope standard error).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(QsdError::InvalidArgument(
            "linear fit needs ≥ 3 matched points".into(),
        ));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(QsdError::InvalidArgument("degenerate abscissa".into()));
    }
    let sxy: f64 = x.iter().zip(y.iter()).map(|(u, v)| (u - mx) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y.iter())
        .map(|(u, v)| {
            let r = v - (intercept + slope * u);
            r * r
        })
        .sum();
    let se = (ss_res / (n as f64 - 2.0)).sqrt() / sxx.sqrt();
    Ok((slope, intercept, se))
}

/// Slope with a two-sided Student-t confidence half-width.
pub fn slope_with_ci(x: &[f64], y: &[f64], level: f64) -> Result<(f64, f64)> {
    let (slope, _, se) = linear_fit(x, y)?;
    let t = t_quantile(0.5 + level / 2.0, (x.len() - 2) as f64)?;
    Ok((slope, t * se))
}
