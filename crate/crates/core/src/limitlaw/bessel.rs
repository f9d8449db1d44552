//! Modified Bessel functions of the first kind.
//!
//! Real arguments use the power series for x ≤ `SERIES_SWITCH` (all terms
//! positive, so no cancellation) and the Hankel asymptotic expansion of the
//! exponentially scaled function above it. At the switch point the
//! asymptotic terms keep shrinking for ~60 orders, which is far below f64
//! resolution. Integer orders n ≥ 2 are reached from I_0 by ratios obtained
//! through backward recurrence.

use num_complex::Complex64;

pub const SERIES_SWITCH: f64 = 30.0;

fn series(nu: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=nu {
        term *= half / f64::from(k);
    }
    let q = half * half;
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + f64::from(nu)));
        sum += term;
        if term <= sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Σ_k (−1)^k a_k(ν)/x^k, the bracket of e^{−x} I_ν(x) ≈ (2πx)^{−1/2}·[…].
fn hankel_sum(nu: u32, x: f64) -> f64 {
    let mu = 4.0 * f64::from(nu) * f64::from(nu);
    let mut term = 1.0f64;
    let mut sum = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn hankel_scaled(nu: u32, x: f64) -> f64 {
    hankel_sum(nu, x) / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// I_ν(x) for ν ∈ {0, 1}, x ≥ 0. Overflows to +∞ only beyond x ≈ 713.
pub fn bessel_i(nu: u32, x: f64) -> f64 {
    assert!(nu <= 1, "only orders 0 and 1 are supported");
    assert!(x >= 0.0, "argument must be nonnegative");
    if x <= SERIES_SWITCH {
        series(nu, x)
    } else {
        let s = hankel_scaled(nu, x);
        // Split the exponential so the product stays finite as long as the result does.
        (s * (0.5 * x).exp()) * (0.5 * x).exp()
    }
}

/// e^{−x} I_ν(x) for ν ∈ {0, 1}.
pub fn bessel_i_scaled(nu: u32, x: f64) -> f64 {
    assert!(nu <= 1, "only orders 0 and 1 are supported");
    assert!(x >= 0.0, "argument must be nonnegative");
    if x <= SERIES_SWITCH {
        series(nu, x) * (-x).exp()
    } else {
        hankel_scaled(nu, x)
    }
}

pub fn i0(x: f64) -> f64 {
    bessel_i(0, x)
}

pub fn i1(x: f64) -> f64 {
    bessel_i(1, x)
}

/// I_1(x)/I_0(x), x ≥ 0. Increases from 0 to 1.
pub fn bessel_ratio(x: f64) -> f64 {
    assert!(x >= 0.0, "argument must be nonnegative");
    if x == 0.0 {
        0.0
    } else if x <= SERIES_SWITCH {
        series(1, x) / series(0, x)
    } else {
        hankel_sum(1, x) / hankel_sum(0, x)
    }
}

/// Ratios I_{ν+1}(x)/I_ν(x) for ν = 0..n by backward recurrence
/// r_{ν−1} = 1/(2ν/x + r_ν), started far enough above max(n, x).
fn ratios(n: u32, x: f64) -> Vec<f64> {
    let top = n as f64 + x + 10.0 * x.sqrt() + 60.0;
    let top = top.ceil() as u32;
    let mut out = vec![0.0; n as usize];
    let mut r = 0.0;
    for nu in (1..=top).rev() {
        r = 1.0 / (2.0 * f64::from(nu) / x + r);
        if (nu as usize) <= out.len() {
            out[nu as usize - 1] = r;
        }
    }
    out
}

/// e^{−x} I_n(x) for any integer order n ≥ 0 and x ≥ 0.
pub fn bessel_i_scaled_int(n: u32, x: f64) -> f64 {
    assert!(x >= 0.0, "argument must be nonnegative");
    if n <= 1 {
        return bessel_i_scaled(n, x);
    }
    if x == 0.0 {
        return 0.0;
    }
    let nf = f64::from(n);
    if x > 25.0 + 0.5 * nf * nf {
        return hankel_scaled(n, x);
    }
    if x <= 1.0 {
        return series(n, x) * (-x).exp();
    }
    bessel_i_scaled(0, x) * ratios(n, x).iter().product::<f64>()
}

/// I_1(w)/I_0(w) for complex w with Re w ≥ 0.
pub fn bessel_ratio_complex(w: Complex64) -> Complex64 {
    let a = w.norm();
    if a == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if a >= 40.0 {
        let s0 = hankel_sum_complex(0, w);
        let s1 = hankel_sum_complex(1, w);
        return s1 / s0;
    }
    let top = (100.0 + 2.0 * a).ceil() as u32;
    let mut r = Complex64::new(0.0, 0.0);
    for nu in (1..=top).rev() {
        r = (Complex64::new(2.0 * f64::from(nu), 0.0) / w + r).inv();
    }
    r
}

fn hankel_sum_complex(nu: u32, w: Complex64) -> Complex64 {
    let mu = 4.0 * f64::from(nu) * f64::from(nu);
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (w * (k as f64 * 8.0));
        if next.norm() > term.norm() {
            break;
        }
        term = next;
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}
