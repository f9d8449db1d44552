//! Equilibrium measures and capacities of finite sets in Z^D, D ≥ 3.
//!
//! Three estimators:
//! * `equilibrium_infinite`: walks from each x ∈ K until they return to K or
//!   leave a guard box; an escaping walk at exit point y is weighted by
//!   1 − ĥ(y), where ĥ is the far-field hitting probability of K computed
//!   from the current estimate of e_K (two reweighting passes).
//! * `equilibrium_extrapolated`: exact e_{K,B(c,R)} on a ladder of box
//!   radii, fitted per point by e_∞ + a/R + b/R² + c/R³.
//! * `equilibrium_far_field`: one box whose outer boundary carries the
//!   far-field hitting probability of the current estimate, iterated to
//!   self-consistency of the total mass. Used for large windows.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::green::{green_asymptotic, green_asymptotic_constant, green_at_origin, lattice_green};
use super::solver::{BoxDirichlet, SolverConfig};
use super::{CapacityMethod, CapacityResult, DiscreteMeasure};
use crate::error::{Error, Result};
use crate::lattice::{BoxGrid, Point, PointSet, VertexSet};
use crate::rng::{child_seed, stream};

/// Integer centre and sup-norm radius of the bounding box of K.
pub fn centre_and_radius(k: &PointSet) -> (Vec<i64>, u64) {
    let dim = k.iter().next().map_or(0, Point::dim);
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for p in k {
        for a in 0..dim {
            lo[a] = lo[a].min(p.0[a]);
            hi[a] = hi[a].max(p.0[a]);
        }
    }
    let c: Vec<i64> = lo.iter().zip(&hi).map(|(l, h)| (l + h).div_euclid(2)).collect();
    let r = k
        .iter()
        .map(|p| p.0.iter().zip(&c).map(|(a, b)| (a - b).unsigned_abs()).max().unwrap_or(0))
        .max()
        .unwrap_or(0);
    (c, r)
}

/// Componentwise bounds of K.
pub fn bounding_box(k: &PointSet) -> (Vec<i64>, Vec<i64>) {
    let dim = k.iter().next().map_or(0, Point::dim);
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for p in k {
        for a in 0..dim {
            lo[a] = lo[a].min(p.0[a]);
            hi[a] = hi[a].max(p.0[a]);
        }
    }
    (lo, hi)
}

fn check_transient(k: &PointSet) -> Result<usize> {
    let dim = k
        .iter()
        .next()
        .ok_or_else(|| Error::InvalidParameter("K must be nonempty".into()))?
        .dim();
    if dim < 3 {
        return Err(Error::Recurrent { dim });
    }
    Ok(dim)
}

fn indicator_grid(k: &PointSet) -> BoxGrid {
    let dim = k.iter().next().unwrap().dim();
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for p in k {
        for a in 0..dim {
            lo[a] = lo[a].min(p.0[a]);
            hi[a] = hi[a].max(p.0[a]);
        }
    }
    let shape = lo.iter().zip(&hi).map(|(l, h)| (h - l + 1) as usize).collect();
    let mut grid = BoxGrid::new(lo, shape);
    for p in k {
        grid.set(&p.0, true);
    }
    grid
}

/// Hitting probability of K from far away, P_y[H_K < ∞] ≈ Σ_x g(y − x)·e(x),
/// with the source coarse-grained into cubic cells.
#[derive(Clone, Debug)]
pub struct FarField {
    dim: usize,
    constant: f64,
    centres: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

impl FarField {
    pub fn new(measure: &DiscreteMeasure, cell: u64) -> Self {
        let dim = measure.support().first().map_or(3, Point::dim);
        let cell = cell.max(1) as i64;
        let mut groups: std::collections::BTreeMap<Vec<i64>, (Vec<f64>, f64)> =
            std::collections::BTreeMap::new();
        for (p, w) in measure.iter() {
            if w <= 0.0 {
                continue;
            }
            let key: Vec<i64> = p.0.iter().map(|c| c.div_euclid(cell)).collect();
            let slot = groups.entry(key).or_insert_with(|| (vec![0.0; dim], 0.0));
            for (acc, c) in slot.0.iter_mut().zip(&p.0) {
                *acc += w * *c as f64;
            }
            slot.1 += w;
        }
        let (centres, masses) = groups
            .into_values()
            .map(|(s, m)| (s.iter().map(|v| v / m).collect(), m))
            .unzip();
        Self { dim, constant: green_asymptotic_constant(dim), centres, masses }
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn hitting(&self, y: &[i64]) -> f64 {
        let mut s = 0.0;
        for (c, m) in self.centres.iter().zip(&self.masses) {
            let r2: f64 = c.iter().zip(y).map(|(a, b)| (*b as f64 - a).powi(2)).sum();
            s += m * r2.powf(1.0 - 0.5 * self.dim as f64);
        }
        (self.constant * s).min(1.0)
    }
}

/// Walk from `start` until it returns to K (None) or leaves the guard box
/// B(centre, radius) (Some(exit point)).
fn escape_walk(
    start: &[i64],
    k: &BoxGrid,
    centre: &[i64],
    radius: i64,
    rng: &mut impl Rng,
) -> Option<Vec<i64>> {
    let dim = start.len();
    let deg = 2 * dim;
    let mut p = start.to_vec();
    loop {
        let m = rng.random_range(0..deg);
        let a = m >> 1;
        p[a] += if m & 1 == 0 { 1 } else { -1 };
        if (p[a] - centre[a]).abs() > radius {
            return Some(p);
        }
        if k.contains(&p) {
            return None;
        }
    }
}

/// Monte Carlo equilibrium measure of K ⊂ Z^D with guard-box correction.
///
/// `truncation_bound` is ε_ret·cap, where ε_ret bounds the probability of
/// returning to K from the guard boundary via the sandwich bound with the
/// measured Green asymptotic: ε_ret = a_D (R+1−r_K)^{2−D} |K| / g(0).
pub fn equilibrium_infinite(
    k: &PointSet,
    guard_radius: u64,
    samples: usize,
    seed: u64,
) -> Result<CapacityResult> {
    let dim = check_transient(k)?;
    let diam = k
        .iter()
        .flat_map(|a| k.iter().map(move |b| (a, b)))
        .map(|(a, b)| a.0.iter().zip(&b.0).map(|(x, y)| (x - y).unsigned_abs()).max().unwrap())
        .max()
        .unwrap_or(0);
    if guard_radius < (2 * diam).max(1) {
        return Err(Error::InvalidParameter(format!(
            "guard radius {guard_radius} must be at least 2·diam(K) = {}",
            2 * diam
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    let grid = indicator_grid(k);
    let (centre, r_k) = centre_and_radius(k);
    let points: Vec<Point> = k.iter().cloned().collect();
    const CHUNK: usize = 2048;
    let exits: Vec<Vec<Vec<i64>>> = points
        .par_iter()
        .enumerate()
        .map(|(xi, x)| {
            let chunks = samples.div_ceil(CHUNK);
            (0..chunks)
                .into_par_iter()
                .flat_map_iter(|c| {
                    let mut rng = stream(child_seed(child_seed(seed, xi as u64), c as u64));
                    let n = CHUNK.min(samples - c * CHUNK);
                    let grid = &grid;
                    let centre = &centre;
                    (0..n)
                        .filter_map(move |_| {
                            escape_walk(&x.0, grid, centre, guard_radius as i64, &mut rng)
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        })
        .collect();
    let n = samples as f64;
    let mut weights: Vec<f64> = exits.iter().map(|e| e.len() as f64 / n).collect();
    let mut ses = vec![0.0; points.len()];
    for _ in 0..2 {
        let est = DiscreteMeasure::new(points.clone(), weights.clone())?;
        let ff = FarField::new(&est, 1);
        for (i, ex) in exits.iter().enumerate() {
            let vals: Vec<f64> = ex.iter().map(|y| 1.0 - ff.hitting(y)).collect();
            let s: f64 = vals.iter().sum();
            let s2: f64 = vals.iter().map(|v| v * v).sum();
            let mean = s / n;
            weights[i] = mean;
            ses[i] = ((s2 / n - mean * mean).max(0.0) / (n - 1.0).max(1.0)).sqrt();
        }
    }
    let measure = DiscreteMeasure::new(points, weights)?.pruned();
    let value = measure.total_mass();
    let dist = (guard_radius + 1 - r_k.min(guard_radius)) as f64;
    let eps_ret = green_asymptotic(dist, dim) * k.len() as f64 / green_at_origin(dim);
    Ok(CapacityResult {
        value,
        measure,
        method: CapacityMethod::McEscape,
        std_error: ses.iter().map(|s| s * s).sum::<f64>().sqrt(),
        truncation_bound: eps_ret * value,
        seed: Some(seed),
    })
}

/// Escape weights of K from the bounding box of K enlarged by `margin` on
/// every side, with boundary values `boundary` outside it.
fn box_escape(
    k: &PointSet,
    margin: u64,
    boundary: impl Fn(&[i64]) -> f64,
    warm: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(Vec<(Vec<i64>, f64)>, Vec<f64>)> {
    let m = margin as i64;
    let (lo, hi) = bounding_box(k);
    let grid = BoxDirichlet::new(
        lo.iter().map(|c| c - m).collect(),
        lo.iter().zip(&hi).map(|(l, h)| (h - l + 2 * m + 1) as usize).collect(),
        k,
    );
    let b = grid.rhs(&boundary);
    let h = grid.solve(&b, warm, cfg)?;
    Ok((grid.escape(&h, &boundary), h))
}

/// Default margin ladder for the big-box estimator.
pub fn default_margins() -> Vec<u64> {
    vec![6, 8, 12, 16, 24, 32]
}

fn fit_limit(radii: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    let rows = radii.len();
    let cols = 4.min(rows);
    let x = DMatrix::from_fn(rows, cols, |i, j| radii[i].powi(-(j as i32)));
    let y = DVector::from_column_slice(values);
    let xtx = x.transpose() * &x;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::DegenerateFit("singular radius ladder".into()))?;
    let beta = &inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let dof = rows.saturating_sub(cols);
    let se = if dof > 0 {
        (resid.norm_squared() / dof as f64 * inv[(0, 0)]).sqrt()
    } else {
        0.0
    };
    Ok((beta[0], se))
}

/// Infinite-volume equilibrium measure from exact solves on the bounding box
/// of K enlarged by each margin, extrapolated in 1/R with R the margin plus
/// half the largest side of the bounding box.
///
/// `std_error` is the fit standard error summed over points;
/// `truncation_bound` is the change in capacity when the smallest radius is
/// dropped from the fit.
pub fn equilibrium_extrapolated(
    k: &PointSet,
    margins: &[u64],
    cfg: &SolverConfig,
) -> Result<CapacityResult> {
    check_transient(k)?;
    if margins.len() < 5 || margins.contains(&0) {
        return Err(Error::InvalidParameter("need at least five positive margins".into()));
    }
    let (lo, hi) = bounding_box(k);
    let half = lo.iter().zip(&hi).map(|(l, h)| h - l).max().unwrap_or(0) as f64 / 2.0;
    let radii: Vec<f64> = margins.iter().map(|&m| m as f64 + half).collect();
    let radii = &radii[..];
    let per_radius: Vec<Vec<(Vec<i64>, f64)>> = margins
        .par_iter()
        .map(|&m| box_escape(k, m, |_| 0.0, None, cfg).map(|(e, _)| e))
        .collect::<Result<_>>()?;
    let points: Vec<Vec<i64>> = per_radius[0].iter().map(|(p, _)| p.clone()).collect();
    let mut support = Vec::new();
    let mut weights = Vec::new();
    let (mut se_sum, mut cap_all, mut cap_drop) = (0.0, 0.0, 0.0);
    for (i, p) in points.iter().enumerate() {
        let vals: Vec<f64> = per_radius.iter().map(|row| row[i].1).collect();
        if vals.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (lim, se) = fit_limit(radii, &vals)?;
        let (lim_drop, _) = fit_limit(&radii[1..], &vals[1..])?;
        support.push(Point(p.clone()));
        weights.push(lim.max(0.0));
        se_sum += se;
        cap_all += lim;
        cap_drop += lim_drop;
    }
    let measure = DiscreteMeasure::new(support, weights)?;
    Ok(CapacityResult {
        value: measure.total_mass(),
        measure,
        method: CapacityMethod::BigBoxExtrapolation,
        std_error: se_sum,
        truncation_bound: (cap_all - cap_drop).abs(),
        seed: None,
    })
}

/// Equilibrium measure of a (typically large) K from a single box solve with
/// self-consistent far-field boundary data.
///
/// The box is the bounding box of K enlarged by `margin`. `truncation_bound` combines the size of
/// the far-field correction times the relative error of the Green asymptotic
/// at the closest boundary distance, and the last mass update.
pub fn equilibrium_far_field(
    k: &PointSet,
    margin: u64,
    cfg: &SolverConfig,
) -> Result<CapacityResult> {
    let dim = check_transient(k)?;
    let margin = margin.max(2);
    let cell = (margin / 8).max(1);
    let to_measure = |rows: &[(Vec<i64>, f64)]| {
        let (s, w): (Vec<Point>, Vec<f64>) =
            rows.iter().map(|(p, e)| (Point(p.clone()), e.max(0.0))).unzip();
        DiscreteMeasure::new(s, w)
    };
    let (e0_rows, mut h) = box_escape(k, margin, |_| 0.0, None, cfg)?;
    let e0: Vec<f64> = e0_rows.iter().map(|r| r.1).collect();
    let m0: f64 = e0.iter().sum();
    let mut est = e0.clone();
    let mut last_change = f64::INFINITY;
    let mut prev_mass = m0;
    for _ in 0..12 {
        let rows: Vec<(Vec<i64>, f64)> =
            e0_rows.iter().zip(&est).map(|((p, _), e)| (p.clone(), *e)).collect();
        let ff = FarField::new(&to_measure(&rows)?, cell);
        let (next_rows, h_next) =
            box_escape(k, margin, |y| ff.hitting(y), Some(&h), cfg)?;
        h = h_next;
        // F is affine in the estimate: F(α·est) = e0 − α(e0 − F(est)).
        // Choose α so that the total mass is a fixed point.
        let f: Vec<f64> = next_rows.iter().map(|r| r.1).collect();
        let mf: f64 = f.iter().sum();
        let me: f64 = est.iter().sum();
        let alpha = m0 / (me + m0 - mf);
        est = e0.iter().zip(&f).map(|(a, b)| a - alpha * (a - b)).collect();
        let mass: f64 = est.iter().sum();
        last_change = (mass - prev_mass).abs();
        prev_mass = mass;
        if last_change <= 1e-10 * mass {
            break;
        }
    }
    let rows: Vec<(Vec<i64>, f64)> =
        e0_rows.iter().zip(&est).map(|((p, _), e)| (p.clone(), *e)).collect();
    let measure = to_measure(&rows)?.pruned();
    let value = measure.total_mass();
    let d = margin as i64 + 1;
    let mut axis = vec![0i64; dim];
    axis[0] = d;
    let rel_green = (lattice_green(&axis) / green_asymptotic(d as f64, dim) - 1.0).abs();
    Ok(CapacityResult {
        value,
        measure,
        method: CapacityMethod::FarFieldMatched,
        std_error: 0.0,
        truncation_bound: (m0 - value).abs() * rel_green + last_change,
        seed: None,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossCheck {
    pub difference: f64,
    pub allowance: f64,
    pub agree: bool,
}

/// Compare two capacity estimates: agreement within 3 combined standard
/// errors plus both truncation bounds.
pub fn cross_check(a: &CapacityResult, b: &CapacityResult) -> CrossCheck {
    let difference = (a.value - b.value).abs();
    let allowance = 3.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
        + a.truncation_bound
        + b.truncation_bound;
    CrossCheck { difference, allowance, agree: difference <= allowance }
}
