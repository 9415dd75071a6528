//! Statistical machinery for the validation campaigns: confidence intervals,
//! Poisson dispersion, distribution distances, goodness of fit.
//!
//! Chi-square quantiles and tail probabilities are self-contained: a
//! Wilson-Hilferty starting point refined by Newton steps on the regularized
//! incomplete gamma, accurate to well below the test levels used here.

use thiserror::Error;

use crate::model::Distribution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("ZeroTrials")]
    ZeroTrials,
    #[error("successes {successes} exceed trials {trials}")]
    MoreSuccessesThanTrials { successes: u64, trials: u64 },
    #[error("level must be in (0,1), got {0}")]
    BadLevel(f64),
    #[error("DegenerateSample: all counts equal")]
    DegenerateSample,
    #[error("need at least {need} observations, got {got}")]
    InsufficientSample { got: usize, need: usize },
    #[error("DimensionMismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("InsufficientExpectedCounts: class {class} expects {expected}")]
    InsufficientExpectedCounts { class: usize, expected: f64 },
    #[error("chi-square test needs at least two classes")]
    TooFewClasses,
}

/// A rate with its exact Poisson (Garwood) confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub events: u64,
    pub exposure: f64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_ci(successes: u64, trials: u64, level: f64) -> Result<(f64, f64), StatsError> {
    if trials == 0 {
        return Err(StatsError::ZeroTrials);
    }
    if successes > trials {
        return Err(StatsError::MoreSuccessesThanTrials { successes, trials });
    }
    if !(0.0 < level && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    let z = normal_quantile(0.5 + level / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

/// Exact Poisson rate interval (Garwood) via chi-square quantiles.
pub fn poisson_rate_ci(events: u64, exposure: f64, level: f64) -> Result<RateEstimate, StatsError> {
    assert!(exposure > 0.0, "exposure must be positive");
    if !(0.0 < level && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    let alpha = 1.0 - level;
    let low = if events == 0 {
        0.0
    } else {
        chisq_quantile(alpha / 2.0, 2.0 * events as f64) / 2.0 / exposure
    };
    let high = chisq_quantile(1.0 - alpha / 2.0, 2.0 * events as f64 + 2.0) / 2.0 / exposure;
    Ok(RateEstimate {
        events,
        exposure,
        rate: events as f64 / exposure,
        ci_low: low,
        ci_high: high,
    })
}

/// Poisson dispersion test: the variance/mean ratio with its two-sided 1%
/// chi-square band. Returns `(index, pass)`.
pub fn dispersion_test(counts: &[u64]) -> Result<(f64, bool), StatsError> {
    let n = counts.len();
    if n < 30 {
        return Err(StatsError::InsufficientSample { got: n, need: 30 });
    }
    let mean = counts.iter().sum::<u64>() as f64 / n as f64;
    let var = counts
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / (n as f64 - 1.0);
    if var == 0.0 || mean == 0.0 {
        return Err(StatsError::DegenerateSample);
    }
    let index = var / mean;
    let df = n as f64 - 1.0;
    let stat = df * index;
    let pass = stat > chisq_quantile(0.005, df) && stat < chisq_quantile(0.995, df);
    Ok((index, pass))
}

/// Total-variation distance on a shared finite support.
pub fn tv_distance(p: &Distribution, q: &Distribution) -> Result<f64, StatsError> {
    if p.len() != q.len() {
        return Err(StatsError::DimensionMismatch(p.len(), q.len()));
    }
    Ok(0.5
        * p.weights()
            .iter()
            .zip(q.weights())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// Chi-square goodness of fit of observed class counts against expected
/// class probabilities. Classes must already be pooled so every expected
/// count is at least 5. Returns `(statistic, p_value)`.
pub fn chisq_gof(observed: &[u64], expected: &[f64]) -> Result<(f64, f64), StatsError> {
    if observed.len() != expected.len() {
        return Err(StatsError::DimensionMismatch(observed.len(), expected.len()));
    }
    if observed.len() < 2 {
        return Err(StatsError::TooFewClasses);
    }
    let total = observed.iter().sum::<u64>() as f64;
    let mut stat = 0.0;
    for (class, (&obs, &p)) in observed.iter().zip(expected).enumerate() {
        let exp = total * p;
        if exp < 5.0 {
            return Err(StatsError::InsufficientExpectedCounts { class, expected: exp });
        }
        stat += (obs as f64 - exp).powi(2) / exp;
    }
    let df = observed.len() as f64 - 1.0;
    Ok((stat, chisq_sf(stat, df)))
}

// ---- self-contained special functions ----

/// Standard normal CDF via erfc.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function (Numerical Recipes rational Chebyshev fit,
/// |relative error| < 1.2e-7, symmetrized for negative arguments).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z
        - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal quantile (Acklam's rational approximation, relative error
/// below 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(0.0 < p && p < 1.0, "quantile needs p in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // One Halley refinement keeps the tails honest.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Regularized lower incomplete gamma P(a, x) by series / continued fraction.
fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // Series representation.
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-15 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        // Continued fraction (modified Lentz) for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-15 {
                break;
            }
        }
        let q = (-x + a * x.ln() - ln_gamma(a)).exp() * h;
        1.0 - q
    }
}

/// Lanczos log-gamma (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Chi-square CDF with `df` degrees of freedom.
pub fn chisq_cdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_p(df / 2.0, x / 2.0)
    }
}

/// Chi-square survival function.
pub fn chisq_sf(x: f64, df: f64) -> f64 {
    (1.0 - chisq_cdf(x, df)).clamp(0.0, 1.0)
}

/// Chi-square quantile: Wilson-Hilferty start, Newton refinement on the CDF.
pub fn chisq_quantile(p: f64, df: f64) -> f64 {
    assert!(0.0 < p && p < 1.0, "quantile needs p in (0,1)");
    assert!(df >= 1.0);
    let z = normal_quantile(p);
    let f = 2.0 / (9.0 * df);
    let mut x = df * (1.0 - f + z * f.sqrt()).powi(3);
    if x <= 0.0 {
        x = 1e-8;
    }
    for _ in 0..60 {
        let err = chisq_cdf(x, df) - p;
        // Chi-square density at x.
        let logpdf =
            (df / 2.0 - 1.0) * x.ln() - x / 2.0 - (df / 2.0) * 2.0_f64.ln() - ln_gamma(df / 2.0);
        let pdf = logpdf.exp();
        if pdf <= 0.0 {
            break;
        }
        let step = err / pdf;
        let next = x - step;
        x = if next > 0.0 { next } else { x / 2.0 };
        if step.abs() < 1e-10 * x.max(1.0) {
            break;
        }
    }
    x
}
