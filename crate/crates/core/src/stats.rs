//! Small statistical toolkit: goodness-of-fit tests, binomial intervals,
//! weighted line fits and the discrete laws used as test targets.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided standard normal quantile used for 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson goodness-of-fit test of `observed` counts against cell
/// probabilities `probs`. Adjacent cells are pooled left to right until each
/// pooled cell has expected count at least `min_expected`; the last pooled
/// cell absorbs any remaining tail mass `1 - sum(probs)`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> ChiSquareTest {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&obs, &p) in observed.iter().zip(probs) {
        o += obs as f64;
        e += p * nf;
        if e >= min_expected {
            pooled.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    e += tail * nf;
    if e > 0.0 || o > 0.0 {
        match pooled.last_mut() {
            Some(last) if e < min_expected => {
                last.0 += o;
                last.1 += e;
            }
            _ => pooled.push((o, e)),
        }
    }
    let statistic: f64 = pooled
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    let bins = pooled.len();
    let dof = bins.saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic)
    };
    ChiSquareTest { statistic, dof, p_value, bins }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value including
/// the small-sample correction of Stephens.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let p_value = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
    KsTest { statistic: d, p_value }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Empirical quantile with linear interpolation; `sorted` must be ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// P[G = k] for G geometric on {1, 2, ...} with success probability `p`.
pub fn geometric_pmf(k: u64, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    p * (1.0 - p).powi((k - 1) as i32)
}

/// P[S = k] where S is the sum of `count` independent geometric variables on
/// {1, 2, ...} with success probability `p`: C(k−1, count−1) p^count (1−p)^{k−count}.
pub fn geometric_sum_pmf(k: u64, count: u64, p: f64) -> f64 {
    if count == 0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k < count {
        return 0.0;
    }
    let ln_binom = statrs::function::factorial::ln_binomial(k - 1, count - 1);
    (ln_binom + count as f64 * p.ln() + (k - count) as f64 * (1.0 - p).ln()).exp()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Weighted residual sum of squares.
    pub chi2: f64,
    pub dof: usize,
    pub residuals: Vec<f64>,
}

/// Weighted least squares fit of y = intercept + slope·x with weights 1/σ².
/// The slope standard error is computed from the supplied σ, not from the
/// residual scatter.
pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> LineFit {
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - xm).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((a, c), b)| b * (a - xm) * (c - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, c)| c - intercept - slope * a).collect();
    let chi2 = residuals.iter().zip(&w).map(|(r, b)| b * r * r).sum();
    LineFit {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        chi2,
        dof: x.len().saturating_sub(2),
        residuals,
    }
}

/// Upper tail probability of a chi-square variable with `dof` degrees of freedom.
pub fn chi2_sf(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic)
}
