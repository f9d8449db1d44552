//! The law of ζ(u), the first time the spatial supremum of Brownian local
//! time reaches u: its Laplace transform, its tail by numerical inversion,
//! and a Monte Carlo sampler built on one-dimensional random-walk local times.

pub mod bessel;
pub mod inversion;

use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{child_seed, stream};
use crate::stats::mean_se;

pub use bessel::{bessel_i, bessel_ratio};

/// E[exp(−θ²ζ(u)/2)] = θu/sinh²(θu/2) · I_1(θu/2)/I_0(θu/2).
///
/// Evaluated as 8x·(I_1/I_0)(x)·e^{−2x}/(1 − e^{−2x})² with x = θu/2, which is
/// finite for every x ≥ 0 and reduces to 1 at x = 0. The argument is formed
/// as `theta * u / 2.0` so that `zeta_laplace(θ, u) == zeta_laplace(θ·u, 1)`
/// holds bit for bit.
pub fn zeta_laplace(theta: f64, u: f64) -> f64 {
    assert!(theta >= 0.0 && u > 0.0, "theta must be >= 0 and u > 0");
    let x = theta * u / 2.0;
    if x == 0.0 {
        return 1.0;
    }
    let e = (-2.0 * x).exp();
    let one_minus = -(-2.0 * x).exp_m1();
    8.0 * x * bessel_ratio(x) * e / (one_minus * one_minus)
}

fn zeta_laplace_complex(x: Complex64) -> Complex64 {
    let e = (-2.0 * x).exp();
    let one_minus = Complex64::new(1.0, 0.0) - e;
    8.0 * x * bessel::bessel_ratio_complex(x) * e / (one_minus * one_minus)
}

/// Laplace transform in the variable λ = θ²/2, i.e. E[e^{−λζ(u)}].
pub fn zeta_mgf(lambda: f64, u: f64) -> f64 {
    zeta_laplace((2.0 * lambda).sqrt(), u)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InversionOptions {
    /// Even number of Gaver–Stehfest terms.
    pub stehfest_terms: usize,
    pub talbot_terms: usize,
    /// Disagreement above which a tail value is flagged.
    pub tolerance: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self { stehfest_terms: 18, talbot_terms: 28, tolerance: 1e-3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailEstimate {
    pub s: f64,
    pub u: f64,
    /// Fixed-Talbot value clamped to [0, 1].
    pub tail: f64,
    /// |Talbot − Gaver–Stehfest|.
    pub err: f64,
    pub method: String,
    pub flagged: bool,
}

/// W[ζ(u) ≥ s] by inverting (1 − E[e^{−λζ}])/λ at s.
pub fn zeta_tail(s: f64, u: f64) -> TailEstimate {
    zeta_tail_with(s, u, InversionOptions::default())
}

pub fn zeta_tail_with(s: f64, u: f64, opts: InversionOptions) -> TailEstimate {
    assert!(s > 0.0 && u > 0.0, "s and u must be positive");
    let gs = inversion::gaver_stehfest(
        |l| (1.0 - zeta_mgf(l, u)) / l,
        s,
        opts.stehfest_terms,
    );
    let tb = inversion::talbot(
        |l| {
            let x = (2.0 * l).sqrt() * (u / 2.0);
            (Complex64::new(1.0, 0.0) - zeta_laplace_complex(x)) / l
        },
        s,
        opts.talbot_terms,
    );
    let err = (tb - gs).abs();
    TailEstimate {
        s,
        u,
        tail: tb.clamp(0.0, 1.0),
        err,
        method: "talbot".into(),
        flagged: err > opts.tolerance,
    }
}

/// Tail values on an increasing grid, with a running minimum applied so the
/// table is nonincreasing in s.
pub fn tail_table(s_grid: &[f64], u: f64) -> Vec<TailEstimate> {
    let mut rows: Vec<TailEstimate> = s_grid.iter().map(|&s| zeta_tail(s, u)).collect();
    rows.sort_by(|a, b| a.s.total_cmp(&b.s));
    let mut floor = 1.0f64;
    for r in &mut rows {
        floor = floor.min(r.tail);
        r.tail = floor;
    }
    rows
}

/// The law of ζ(u) as an object: transform and tail evaluators.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ZetaLaw {
    pub u: f64,
}

impl ZetaLaw {
    pub fn new(u: f64) -> Result<Self> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::InvalidParameter(format!("u must be positive, got {u}")));
        }
        Ok(Self { u })
    }

    pub fn transform(&self, theta: f64) -> f64 {
        zeta_laplace(theta, self.u)
    }

    pub fn tail(&self, s: f64) -> TailEstimate {
        zeta_tail(s, self.u)
    }

    /// E[ζ(u)] = 11u²/48, read off the quadratic term of the transform.
    pub fn mean(&self) -> f64 {
        11.0 * self.u * self.u / 48.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZetaSample {
    pub u: f64,
    pub m: u32,
    pub seed: u64,
    /// Walk steps per replicate before the replicate is censored.
    pub budget: u64,
    pub values: Vec<f64>,
    pub censored: Vec<bool>,
    pub replicate_seeds: Vec<u64>,
}

impl ZetaSample {
    pub fn censored_count(&self) -> usize {
        self.censored.iter().filter(|&&c| c).count()
    }

    /// Mean of exp(−θ²ζ̂/2) with its standard error.
    pub fn transform(&self, theta: f64) -> (f64, f64) {
        let v: Vec<f64> = self
            .values
            .iter()
            .map(|z| (-0.5 * theta * theta * z).exp())
            .collect();
        mean_se(&v)
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["replicate", "seed", "m", "u", "zeta", "censored"])
            .map_err(csv_err)?;
        for (i, ((v, c), s)) in self
            .values
            .iter()
            .zip(&self.censored)
            .zip(&self.replicate_seeds)
            .enumerate()
        {
            out.write_record([
                i.to_string(),
                s.to_string(),
                self.m.to_string(),
                self.u.to_string(),
                v.to_string(),
                c.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Write a tail table as CSV with columns s, tail, err, method.
pub fn write_tail_csv<W: std::io::Write>(rows: &[TailEstimate], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["s", "tail", "err", "method"]).map_err(csv_err)?;
    for r in rows {
        out.write_record([r.s.to_string(), r.tail.to_string(), r.err.to_string(), r.method.clone()])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// One replicate: number of steps k of a simple random walk on Z until some
/// site has been visited ⌈u·m⌉ times, counting visits at times 0..k−1.
/// Returns (k, censored).
fn local_time_hit(threshold: u32, budget: u64, rng: &mut impl RngCore) -> (u64, bool) {
    let mut counts = vec![0u32; 1024];
    let mut pos = 512usize;
    let mut k = 0u64;
    let mut bits = 0u64;
    let mut left = 0u32;
    loop {
        if k == budget {
            return (k, true);
        }
        counts[pos] += 1;
        k += 1;
        if counts[pos] >= threshold {
            return (k, false);
        }
        if left == 0 {
            bits = rng.next_u64();
            left = 64;
        }
        let up = bits & 1 == 1;
        bits >>= 1;
        left -= 1;
        if up {
            pos += 1;
            if pos == counts.len() {
                counts.resize(2 * counts.len(), 0);
            }
        } else if pos == 0 {
            let grow = counts.len();
            let mut wider = vec![0u32; grow];
            wider.extend_from_slice(&counts);
            counts = wider;
            pos = grow - 1;
        } else {
            pos -= 1;
        }
    }
}

/// Sample ζ(u) through random-walk local times at spatial scale m: per
/// replicate the first k with max_z L̂_k^z ≥ u·m, reported as k/m².
///
/// The estimator carries a bias of order m^{−1/2} (the lattice maximum of the
/// local-time profile lags the continuum supremum); see
/// [`zeta_mc_transform`] for an extrapolated transform estimate.
pub fn zeta_mc(u: f64, m: u32, replicates: usize, seed: u64) -> Result<ZetaSample> {
    if m < 10 {
        return Err(Error::InvalidParameter(format!("scale m must be >= 10, got {m}")));
    }
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::InvalidParameter(format!("u must be positive, got {u}")));
    }
    let mf = f64::from(m);
    let threshold = (u * mf).ceil().max(1.0) as u32;
    let budget = (20.0 * u * u * mf * mf).ceil() as u64 + 1000;
    let replicate_seeds: Vec<u64> = (0..replicates as u64).map(|i| child_seed(seed, i)).collect();
    let results: Vec<(u64, bool)> = replicate_seeds
        .par_iter()
        .map(|&s| local_time_hit(threshold, budget, &mut stream(s)))
        .collect();
    Ok(ZetaSample {
        u,
        m,
        seed,
        budget,
        values: results.iter().map(|(k, _)| *k as f64 / (mf * mf)).collect(),
        censored: results.iter().map(|(_, c)| *c).collect(),
        replicate_seeds,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformEstimate {
    pub theta: f64,
    pub u: f64,
    pub value: f64,
    pub std_error: f64,
    pub scales: Vec<u32>,
    pub method: String,
}

/// Empirical E[exp(−θ²ζ(u)/2)]. With `extrapolate`, independent samples at
/// scales m/2 and m are combined as (√2·T_m − T_{m/2})/(√2 − 1), which removes
/// the m^{−1/2} bias term at the cost of a larger standard error.
pub fn zeta_mc_transform(
    theta: f64,
    u: f64,
    m: u32,
    replicates: usize,
    seed: u64,
    extrapolate: bool,
) -> Result<TransformEstimate> {
    let fine = zeta_mc(u, m, replicates, seed)?;
    let (tf, sf) = fine.transform(theta);
    if !extrapolate {
        return Ok(TransformEstimate {
            theta,
            u,
            value: tf,
            std_error: sf,
            scales: vec![m],
            method: "raw".into(),
        });
    }
    let coarse = zeta_mc(u, m / 2, replicates, child_seed(seed, u64::MAX))?;
    let (tc, sc) = coarse.transform(theta);
    let r = std::f64::consts::SQRT_2;
    Ok(TransformEstimate {
        theta,
        u,
        value: (r * tf - tc) / (r - 1.0),
        std_error: (2.0 * sf * sf + sc * sc).sqrt() / (r - 1.0),
        scales: vec![m / 2, m],
        method: "richardson-sqrt".into(),
    })
}
