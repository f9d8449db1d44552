//! Green function of the simple random walk on Z^D, D ≥ 3.
//!
//! g(x) = ∫_0^∞ Π_i e^{−t/D} I_{x_i}(t/D) dt, the expected time a rate-one
//! continuous-time walk spends at x, which equals the expected number of
//! visits of the discrete walk. With t = e^w the integrand is analytic and
//! decays exponentially in both directions, so the trapezoidal rule in w
//! converges geometrically.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::limitlaw::bessel::bessel_i_scaled_int;

const W_MIN: f64 = -40.0;
const W_MAX: f64 = 110.0;
const W_STEP: f64 = 0.05;

/// g(0, x) on Z^{x.len()}.
pub fn lattice_green(x: &[i64]) -> f64 {
    let dim = x.len();
    assert!(dim >= 3, "the walk is recurrent in dimension {dim}");
    let mut orders: Vec<u32> = x.iter().map(|c| c.unsigned_abs() as u32).collect();
    orders.sort_unstable();
    let df = dim as f64;
    let steps = ((W_MAX - W_MIN) / W_STEP).round() as usize;
    let mut sum = 0.0;
    let mut cache: HashMap<u32, f64> = HashMap::new();
    for k in 0..=steps {
        let w = W_MIN + k as f64 * W_STEP;
        let t = w.exp();
        let s = t / df;
        cache.clear();
        let mut prod = t;
        for &n in &orders {
            let v = *cache.entry(n).or_insert_with(|| bessel_i_scaled_int(n, s));
            prod *= v;
        }
        let weight = if k == 0 || k == steps { 0.5 } else { 1.0 };
        sum += weight * prod;
    }
    sum * W_STEP
}

/// a_D with g(x) ~ a_D |x|^{2−D}, measured from the quadrature along an axis
/// at |x| = 16 and 32 with one Richardson step in |x|^{−2}.
pub fn green_asymptotic_constant(dim: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&c) = cache.lock().unwrap().get(&dim) {
        return c;
    }
    let at = |r: i64| {
        let mut x = vec![0i64; dim];
        x[0] = r;
        lattice_green(&x) * (r as f64).powi(dim as i32 - 2)
    };
    let c = (4.0 * at(32) - at(16)) / 3.0;
    cache.lock().unwrap().insert(dim, c);
    c
}

/// Leading-order Green function a_D·r^{2−D} at Euclidean distance r.
pub fn green_asymptotic(r: f64, dim: usize) -> f64 {
    green_asymptotic_constant(dim) * r.powi(2 - dim as i32)
}

/// g(0) on Z^D, cached.
pub fn green_at_origin(dim: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    *cache
        .lock()
        .unwrap()
        .entry(dim)
        .or_insert_with(|| lattice_green(&vec![0; dim]))
}
