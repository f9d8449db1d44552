//! Numerical inversion of Laplace transforms on the real line.

use num_complex::Complex64;

/// Stehfest weights V_1..V_M for even M.
pub fn stehfest_weights(m: usize) -> Vec<f64> {
    assert!(m >= 2 && m.is_multiple_of(2), "term count must be even");
    let half = m / 2;
    let fact = |n: usize| (1..=n).fold(1.0f64, |a, k| a * k as f64);
    (1..=m)
        .map(|k| {
            let lo = k.div_ceil(2);
            let hi = k.min(half);
            let s: f64 = (lo..=hi)
                .map(|j| {
                    (j as f64).powi(half as i32) * fact(2 * j)
                        / (fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k))
                })
                .sum();
            if (k + half).is_multiple_of(2) { s } else { -s }
        })
        .collect()
}

/// Gaver–Stehfest approximation of f(t) from its transform F on (0, ∞).
pub fn gaver_stehfest(f: impl Fn(f64) -> f64, t: f64, m: usize) -> f64 {
    let ln2t = std::f64::consts::LN_2 / t;
    stehfest_weights(m)
        .iter()
        .enumerate()
        .map(|(i, v)| v * f((i + 1) as f64 * ln2t))
        .sum::<f64>()
        * ln2t
}

/// Fixed-Talbot approximation of f(t); F must be analytic off the negative
/// real axis.
pub fn talbot(f: impl Fn(Complex64) -> Complex64, t: f64, m: usize) -> f64 {
    let r = 2.0 * m as f64 / (5.0 * t);
    let mut acc = 0.5 * (f(Complex64::new(r, 0.0)) * (r * t).exp()).re;
    for k in 1..m {
        let theta = k as f64 * std::f64::consts::PI / m as f64;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = Complex64::new(1.0, theta + (theta * cot - 1.0) * cot);
        acc += ((s * t).exp() * f(s) * sigma).re;
    }
    acc * r / m as f64
}
