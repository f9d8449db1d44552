//! Vacant-set percolation observables of random interlacements in Z^{d+1}.
//!
//! Every estimator works on label-coupled samples: one cloud at the largest
//! level of interest, thresholded per level. For each sample we store the
//! bottleneck level b = sup over paths of the smallest label met, so that
//! the event at level u is exactly {b > u}. Monotonicity in u is therefore
//! exact per sample.
//!
//! All critical-level outputs are finite-size estimates at the listed scales,
//! not the critical values themselves.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::interlace::{label_field, sample_cloud, CloudConfig, LabelField};
use crate::lattice::{BoxGrid, Geometry};
use crate::potential::infinite::equilibrium_far_field;
use crate::potential::solver::SolverConfig;
use crate::potential::CapacityResult;
use crate::rng::{child_seed, replicate_seed};
use crate::stats::{chi2_sf, weighted_line_fit, wilson_interval};
use crate::{BoxSpec, Error, Result};

/// Normal quantile of the reported 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Caveat attached to every critical-level estimate.
pub const FINITE_SIZE_CAVEAT: &str = "finite-size estimate at the listed scales, not the true critical value";

fn check_dim(g: &Geometry) -> Result<usize> {
    match g {
        Geometry::FullLattice { .. } if g.dim() >= 3 => Ok(g.dim()),
        Geometry::FullLattice { .. } => Err(Error::Recurrent { dim: g.dim() }),
        _ => Err(Error::InvalidGeometry("percolation observables live on Z^{d+1}".into())),
    }
}

/// Equilibrium measure of B(0, radius) in Z^dim, computed once per process.
pub fn box_equilibrium(dim: usize, radius: u64) -> Result<Arc<CapacityResult>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<CapacityResult>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().unwrap().get(&(dim, radius)) {
        return Ok(hit.clone());
    }
    let g = Geometry::lattice(dim)?;
    let k = BoxSpec::new(g.origin(), radius).point_set(&g);
    let eq = Arc::new(equilibrium_far_field(&k, radius.max(8), &SolverConfig::default())?);
    cache.lock().unwrap().insert((dim, radius), eq.clone());
    Ok(eq)
}

/// Guard radius used for a cloud on B(0, radius); the remainder of each path
/// is handled by far-field reinjection.
pub fn guard_for(radius: u64) -> u64 {
    2 * radius.max(4)
}

#[derive(Clone, Copy, PartialEq)]
struct Level(f64, usize);

impl Eq for Level {}

impl PartialOrd for Level {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Level {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Widest-path levels from `sources`: best[i] = sup over grid paths from a
/// source to i of the smallest label on the path (∞ for unlabelled cells).
fn widest_paths(field: &LabelField, sources: &[usize]) -> Vec<f64> {
    let grid = field.grid();
    let shape = grid.shape();
    let dim = shape.len();
    let mut stride = vec![1usize; dim];
    for k in (0..dim - 1).rev() {
        stride[k] = stride[k + 1] * shape[k + 1];
    }
    let labels = field.labels();
    let mut best = vec![f64::NEG_INFINITY; labels.len()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if labels[s] > best[s] {
            best[s] = labels[s];
            heap.push(Level(labels[s], s));
        }
    }
    while let Some(Level(level, i)) = heap.pop() {
        if level < best[i] {
            continue;
        }
        for k in 0..dim {
            let c = (i / stride[k]) % shape[k];
            let mut relax = |j: usize| {
                let v = level.min(labels[j]);
                if v > best[j] {
                    best[j] = v;
                    heap.push(Level(v, j));
                }
            };
            if c > 0 {
                relax(i - stride[k]);
            }
            if c + 1 < shape[k] {
                relax(i + stride[k]);
            }
        }
    }
    best
}

/// Cells of a grid centred at the origin at sup-distance exactly `r`.
fn sphere_cells(grid: &BoxGrid, r: u64) -> Vec<usize> {
    (0..grid.cells().len())
        .filter(|&i| grid.point(i).0.iter().map(|c| c.unsigned_abs()).max() == Some(r))
        .collect()
}

fn ball_cells(grid: &BoxGrid, r: u64) -> Vec<usize> {
    (0..grid.cells().len())
        .filter(|&i| grid.point(i).0.iter().all(|c| c.unsigned_abs() <= r))
        .collect()
}

fn cloud_fields(
    dim: usize,
    radius: u64,
    u_max: f64,
    samples: u64,
    seed: u64,
) -> Result<impl ParallelIterator<Item = Result<(u64, LabelField)>>> {
    let g = Geometry::lattice(dim)?;
    let k = BoxSpec::new(g.origin(), radius).point_set(&g);
    let eq = box_equilibrium(dim, radius)?;
    let cfg = CloudConfig::new(u_max, guard_for(radius));
    let window = BoxGrid::around(&g.origin().0, radius);
    Ok((0..samples).into_par_iter().map(move |i| {
        let s = sample_cloud(&k, &eq, &cfg, child_seed(seed, i))?;
        Ok((i, label_field(&s, &window)))
    }))
}

/// Per-sample bottleneck levels of the crossing B(0, L) ↔ S(0, 2L) in the
/// vacant set, on clouds over K = B(0, 2L) at level u_max.
pub fn crossing_levels(dim: usize, l: u64, u_max: f64, samples: u64, seed: u64) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::InvalidParameter("crossing scale must be >= 1".into()));
    }
    let grid = BoxGrid::around(&vec![0; dim], 2 * l);
    let sources = ball_cells(&grid, l);
    let targets = sphere_cells(&grid, 2 * l);
    let mut out: Vec<(u64, f64)> = cloud_fields(dim, 2 * l, u_max, samples, seed)?
        .map(|r| {
            let (i, field) = r?;
            let best = widest_paths(&field, &sources);
            Ok((i, targets.iter().map(|&t| best[t]).fold(f64::NEG_INFINITY, f64::max)))
        })
        .collect::<Result<_>>()?;
    out.sort_by_key(|r| r.0);
    Ok(out.into_iter().map(|r| r.1).collect())
}

/// Per-sample bottleneck levels of 0 ↔ S(0, L) for every L in `scales`, on
/// clouds over B(0, max L). Nonincreasing in L for each sample.
pub fn connection_levels(dim: usize, scales: &[u64], u_max: f64, samples: u64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let l_max = *scales.iter().max().ok_or_else(|| Error::InvalidParameter("no scales".into()))?;
    let grid = BoxGrid::around(&vec![0; dim], l_max);
    let origin = grid.index(&vec![0; dim]).unwrap();
    let spheres: Vec<Vec<usize>> = scales.iter().map(|&l| sphere_cells(&grid, l)).collect();
    let mut out: Vec<(u64, Vec<f64>)> = cloud_fields(dim, l_max, u_max, samples, seed)?
        .map(|r| {
            let (i, field) = r?;
            let best = widest_paths(&field, &[origin]);
            let per_scale = spheres
                .iter()
                .map(|s| s.iter().map(|&t| best[t]).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            Ok((i, per_scale))
        })
        .collect::<Result<_>>()?;
    out.sort_by_key(|r| r.0);
    Ok(out.into_iter().map(|r| r.1).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingEstimate {
    pub u: f64,
    #[serde(rename = "L")]
    pub l: u64,
    pub samples: u64,
    pub successes: u64,
    pub p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

impl CrossingEstimate {
    fn from_levels(u: f64, l: u64, levels: &[f64], seed: u64) -> Self {
        let n = levels.len() as u64;
        let successes = levels.iter().filter(|&&b| b > u).count() as u64;
        let (ci_lo, ci_hi) = wilson_interval(successes, n, Z95);
        CrossingEstimate {
            u,
            l,
            samples: n,
            successes,
            p: if n == 0 { f64::NAN } else { successes as f64 / n as f64 },
            ci_lo,
            ci_hi,
            seed,
        }
    }

    /// Standard error of ln p̂ read off the Wilson interval.
    pub fn log_sigma(&self) -> f64 {
        (self.ci_hi.ln() - self.ci_lo.ln()) / (2.0 * Z95)
    }
}

fn scale_seed(seed: u64, l: u64) -> u64 {
    replicate_seed(seed, "percolation-crossing", l)
}

/// P[B(0, L) ↔ S(0, 2L) in V^u].
pub fn crossing_probability(u: f64, l: u64, samples: u64, g: &Geometry, seed: u64) -> Result<CrossingEstimate> {
    let dim = check_dim(g)?;
    let s = scale_seed(seed, l);
    Ok(CrossingEstimate::from_levels(u, l, &crossing_levels(dim, l, u, samples, s)?, s))
}

/// Crossing estimates on one coupled sample per scale, for every grid level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossingScan {
    pub u_max: f64,
    pub scales: Vec<u64>,
    pub samples: u64,
    pub seed: u64,
    /// Bottleneck levels, one row per scale.
    pub levels: Vec<Vec<f64>>,
}

impl CrossingScan {
    pub fn run(u_max: f64, scales: &[u64], samples: u64, g: &Geometry, seed: u64) -> Result<Self> {
        let dim = check_dim(g)?;
        let levels = scales
            .iter()
            .map(|&l| crossing_levels(dim, l, u_max, samples, scale_seed(seed, l)))
            .collect::<Result<_>>()?;
        Ok(CrossingScan { u_max, scales: scales.to_vec(), samples, seed, levels })
    }

    pub fn estimate(&self, u: f64, scale_index: usize) -> CrossingEstimate {
        assert!(u <= self.u_max, "level above the sampled u_max");
        let l = self.scales[scale_index];
        CrossingEstimate::from_levels(u, l, &self.levels[scale_index], scale_seed(self.seed, l))
    }

    pub fn estimates(&self, u: f64) -> Vec<CrossingEstimate> {
        (0..self.scales.len()).map(|i| self.estimate(u, i)).collect()
    }

    pub fn fit(&self, u: f64) -> ExponentFit {
        fit_exponent(u, &self.estimates(u))
    }

    /// CSV rows (u, L, samples, p̂, ci_lo, ci_hi, seed) over a level grid.
    pub fn write_csv<W: std::io::Write>(&self, u_grid: &[f64], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["u", "L", "samples", "p", "ci_lo", "ci_hi", "seed"]).map_err(csv_err)?;
        for &u in u_grid {
            for e in self.estimates(u) {
                out.write_record([
                    u.to_string(),
                    e.l.to_string(),
                    e.samples.to_string(),
                    e.p.to_string(),
                    e.ci_lo.to_string(),
                    e.ci_hi.to_string(),
                    e.seed.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    crate::limitlaw::csv_err(e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    Fitted,
    /// Some p̂ = 0: decay faster than the sample size resolves; not fitted.
    FasterThanResolvable,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentFit {
    pub u: f64,
    pub points: Vec<CrossingEstimate>,
    pub status: FitStatus,
    /// Slope of −ln p̂ against ln L.
    pub alpha: Option<f64>,
    pub alpha_se: Option<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub residuals: Vec<f64>,
    /// χ² goodness of fit below 1%.
    pub nonlinear: bool,
}

impl ExponentFit {
    /// Whether the fit shows decay: α̂ above zero by `k` standard errors, or
    /// a scale where no crossing was observed.
    pub fn decays(&self, k: f64) -> bool {
        match self.status {
            FitStatus::FasterThanResolvable => true,
            FitStatus::Fitted => self.alpha.unwrap() - k * self.alpha_se.unwrap() > 0.0,
        }
    }
}

/// Weighted fit of −ln p̂ = c + α ln L with σ(ln p̂) from the Wilson interval.
pub fn fit_exponent(u: f64, points: &[CrossingEstimate]) -> ExponentFit {
    assert!(points.len() >= 3, "the exponent fit needs at least 3 scales");
    if points.iter().any(|p| p.p == 0.0) {
        return ExponentFit {
            u,
            points: points.to_vec(),
            status: FitStatus::FasterThanResolvable,
            alpha: None,
            alpha_se: None,
            chi2: f64::NAN,
            dof: 0,
            residuals: Vec::new(),
            nonlinear: false,
        };
    }
    let x: Vec<f64> = points.iter().map(|p| (p.l as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| -p.p.ln()).collect();
    let s: Vec<f64> = points.iter().map(CrossingEstimate::log_sigma).collect();
    let fit = weighted_line_fit(&x, &y, &s);
    ExponentFit {
        u,
        points: points.to_vec(),
        status: FitStatus::Fitted,
        alpha: Some(fit.slope),
        alpha_se: Some(fit.slope_se),
        nonlinear: fit.dof > 0 && chi2_sf(fit.chi2, fit.dof) < 0.01,
        chi2: fit.chi2,
        dof: fit.dof,
        residuals: fit.residuals,
    }
}

/// Crossing exponent at level u over `scales`.
pub fn alpha_fit(u: f64, scales: &[u64], samples: u64, g: &Geometry, seed: u64) -> Result<ExponentFit> {
    if scales.len() < 3 {
        return Err(Error::InvalidParameter("the exponent fit needs at least 3 scales".into()));
    }
    Ok(CrossingScan::run(u, scales, samples, g, seed)?.fit(u))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UStarStarEstimate {
    /// Bracket [lo, hi]: no decay at lo, decay at hi.
    pub lo: f64,
    pub hi: f64,
    pub criterion_se: f64,
    pub scales: Vec<u64>,
    pub samples: u64,
    pub seed: u64,
    pub grid: Vec<ExponentFit>,
    pub bisection: Vec<ExponentFit>,
    /// The criterion switches exactly once along the grid.
    pub monotone: bool,
    pub caveat: String,
}

/// Bracket for u_** from the criterion "α̂(u) > 0 at `criterion_se` standard
/// errors", refined by bisection on the same coupled samples.
pub fn ustarstar_estimate(
    u_grid: &[f64],
    scales: &[u64],
    samples: u64,
    criterion_se: f64,
    g: &Geometry,
    seed: u64,
) -> Result<UStarStarEstimate> {
    let mut grid_u = u_grid.to_vec();
    grid_u.sort_by(f64::total_cmp);
    let u_max = *grid_u.last().ok_or(Error::NoSignChange)?;
    if scales.len() < 3 {
        return Err(Error::InvalidParameter("the exponent fit needs at least 3 scales".into()));
    }
    let scan = CrossingScan::run(u_max, scales, samples, g, seed)?;
    ustarstar_from_scan(&scan, &grid_u, criterion_se)
}

/// As [`ustarstar_estimate`], on an existing scan.
pub fn ustarstar_from_scan(scan: &CrossingScan, u_grid: &[f64], criterion_se: f64) -> Result<UStarStarEstimate> {
    let grid: Vec<ExponentFit> = u_grid.iter().map(|&u| scan.fit(u)).collect();
    let verdicts: Vec<bool> = grid.iter().map(|f| f.decays(criterion_se)).collect();
    let first = verdicts.iter().position(|&v| v).ok_or(Error::NoSignChange)?;
    if first == 0 {
        return Err(Error::NoSignChange);
    }
    let monotone = verdicts[first..].iter().all(|&v| v);
    let (mut lo, mut hi) = (u_grid[first - 1], u_grid[first]);
    let mut bisection = Vec::new();
    for _ in 0..10 {
        let mid = 0.5 * (lo + hi);
        let fit = scan.fit(mid);
        if fit.decays(criterion_se) {
            hi = mid;
        } else {
            lo = mid;
        }
        bisection.push(fit);
    }
    Ok(UStarStarEstimate {
        lo,
        hi,
        criterion_se,
        scales: scan.scales.clone(),
        samples: scan.samples,
        seed: scan.seed,
        grid,
        bisection,
        monotone,
        caveat: FINITE_SIZE_CAVEAT.into(),
    })
}

/// P[0 ↔ S(0, L) in V^u], the finite-size stand-in for η(u).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EtaScan {
    pub u_max: f64,
    pub scales: Vec<u64>,
    pub samples: u64,
    pub seed: u64,
    /// Per sample, bottleneck level per scale.
    pub levels: Vec<Vec<f64>>,
}

impl EtaScan {
    pub fn run(u_max: f64, scales: &[u64], samples: u64, g: &Geometry, seed: u64) -> Result<Self> {
        let dim = check_dim(g)?;
        let mut sorted = scales.to_vec();
        sorted.sort_unstable();
        let s = replicate_seed(seed, "percolation-eta", 0);
        let levels = connection_levels(dim, &sorted, u_max, samples, s)?;
        Ok(EtaScan { u_max, scales: sorted, samples, seed: s, levels })
    }

    pub fn estimate(&self, u: f64, scale_index: usize) -> CrossingEstimate {
        assert!(u <= self.u_max, "level above the sampled u_max");
        let col: Vec<f64> = self.levels.iter().map(|r| r[scale_index]).collect();
        CrossingEstimate::from_levels(u, self.scales[scale_index], &col, self.seed)
    }

    /// Largest grid level whose proxy has Wilson lower bound ≥ `floor` at
    /// every scale.
    pub fn ustar_proxy(&self, u_grid: &[f64], floor: f64) -> Option<f64> {
        u_grid
            .iter()
            .copied()
            .filter(|&u| (0..self.scales.len()).all(|i| self.estimate(u, i).ci_lo >= floor))
            .fold(None, |acc: Option<f64>, u| Some(acc.map_or(u, |a| a.max(u))))
    }
}

/// Single-level, single-scale η proxy.
pub fn eta_proxy(u: f64, l: u64, samples: u64, g: &Geometry, seed: u64) -> Result<CrossingEstimate> {
    Ok(EtaScan::run(u, &[l], samples, g, seed)?.estimate(u, 0))
}

/// Default proxy floor for "bounded away from 0".
pub const ETA_FLOOR: f64 = 0.01;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z3() -> Geometry {
        Geometry::lattice(3).unwrap()
    }

    #[test]
    fn zero_level_always_crosses() {
        let e = crossing_probability(0.0, 2, 20, &z3(), 1).unwrap();
        assert_eq!(e.p, 1.0);
        assert_eq!(eta_proxy(0.0, 3, 10, &z3(), 1).unwrap().p, 1.0);
        let fit = alpha_fit(0.0, &[1, 2, 3], 10, &z3(), 2).unwrap();
        assert_eq!(fit.alpha, Some(0.0));
        assert!(!fit.decays(2.0));
    }

    #[test]
    fn rejects_recurrent_and_cylinder_geometries() {
        assert!(crossing_probability(1.0, 2, 2, &Geometry::lattice(2).unwrap(), 1).is_err());
        assert!(crossing_probability(1.0, 2, 2, &Geometry::cylinder(2, 5).unwrap(), 1).is_err());
    }

    #[test]
    fn coupled_scan_is_monotone_per_sample() {
        let scan = CrossingScan::run(6.0, &[2, 3, 4], 40, &z3(), 5).unwrap();
        let mut prev = vec![u64::MAX; 3];
        for u in [0.0, 1.0, 2.0, 3.0, 4.5, 6.0] {
            for (i, e) in scan.estimates(u).iter().enumerate() {
                assert!(e.successes <= prev[i]);
                assert!(e.ci_lo <= e.p && e.p <= e.ci_hi);
                prev[i] = e.successes;
            }
        }
        assert!(scan.estimate(6.0, 2).p < 1.0);
    }

    #[test]
    fn crossing_decays_with_scale_at_high_level() {
        let scan = CrossingScan::run(5.0, &[2, 4, 8], 200, &z3(), 11).unwrap();
        let e = scan.estimates(5.0);
        assert!(e[0].p > e[2].p && e[2].ci_hi < e[0].ci_hi, "{e:?}");
    }

    #[test]
    #[ignore = "needs the equilibrium measure of B(0, 32), several minutes"]
    fn crossing_decays_with_scale_at_larger_sizes() {
        let scan = CrossingScan::run(5.0, &[4, 8, 16], 200, &z3(), 11).unwrap();
        let e = scan.estimates(5.0);
        assert!(e[0].p >= e[1].p && e[1].p >= e[2].p, "{e:?}");
    }

    #[test]
    fn widest_path_matches_threshold_bfs() {
        // Brute force: at each level, BFS over cells with label > u.
        let dim = 3;
        let fields: Vec<LabelField> = cloud_fields(dim, 3, 4.0, 6, 17)
            .unwrap()
            .map(|r| r.unwrap().1)
            .collect();
        for field in &fields {
            let grid = field.grid();
            let sources = ball_cells(grid, 1);
            let targets = sphere_cells(grid, 3);
            let best = widest_paths(field, &sources);
            let b = targets.iter().map(|&t| best[t]).fold(f64::NEG_INFINITY, f64::max);
            for u in [0.5, 1.0, 2.0, 3.0, 3.9] {
                let open = |i: usize| field.labels()[i] > u;
                let mut seen = vec![false; grid.cells().len()];
                let mut stack: Vec<usize> = sources.iter().copied().filter(|&s| open(s)).collect();
                for &s in &stack {
                    seen[s] = true;
                }
                let g = z3();
                while let Some(i) = stack.pop() {
                    for q in g.neighbors(&grid.point(i).0) {
                        if let Some(j) = grid.index(&q.0) {
                            if !seen[j] && open(j) {
                                seen[j] = true;
                                stack.push(j);
                            }
                        }
                    }
                }
                let crosses = targets.iter().any(|&t| seen[t]);
                assert_eq!(crosses, b > u, "u = {u}, bottleneck {b}");
            }
        }
    }

    #[test]
    fn connection_proxy_is_nested_in_scale_and_level() {
        let scan = EtaScan::run(3.0, &[1, 2, 4], 30, &z3(), 3).unwrap();
        for row in &scan.levels {
            assert!(row.windows(2).all(|w| w[1] <= w[0]));
        }
        let p = |u, i| scan.estimate(u, i).p;
        assert!(p(1.0, 2) <= p(1.0, 0));
        assert!(p(3.0, 1) <= p(1.0, 1));
        assert_eq!(scan.ustar_proxy(&[0.0], ETA_FLOOR), Some(0.0));
    }

    fn planted(alpha: f64, scales: &[u64]) -> Vec<CrossingEstimate> {
        scales
            .iter()
            .map(|&l| {
                let p = (l as f64).powf(-alpha);
                CrossingEstimate {
                    u: 1.0,
                    l,
                    samples: 1_000_000,
                    successes: (p * 1e6).round() as u64,
                    p,
                    ci_lo: p * (-0.01f64).exp(),
                    ci_hi: p * 0.01f64.exp(),
                    seed: 0,
                }
            })
            .collect()
    }

    #[test]
    fn planted_power_laws_are_recovered() {
        for alpha in [0.5, 1.0, 2.0] {
            let fit = fit_exponent(1.0, &planted(alpha, &[2, 4, 8, 16]));
            let se = fit.alpha_se.unwrap();
            assert!((fit.alpha.unwrap() - alpha).abs() < 1e-9 + se, "{fit:?}");
            assert!(!fit.nonlinear);
            assert!(fit.decays(2.0));
        }
    }

    #[test]
    fn bent_data_is_flagged_nonlinear() {
        let mut pts = planted(1.0, &[2, 4, 8, 16]);
        pts[3].p = 1.0 / 64.0;
        pts[3].ci_lo = pts[3].p * (-0.01f64).exp();
        pts[3].ci_hi = pts[3].p * 0.01f64.exp();
        assert!(fit_exponent(1.0, &pts).nonlinear);
    }

    #[test]
    fn unresolved_decay_is_reported_not_fitted() {
        let mut pts = planted(1.0, &[2, 4, 8]);
        pts[2].p = 0.0;
        let fit = fit_exponent(1.0, &pts);
        assert_eq!(fit.status, FitStatus::FasterThanResolvable);
        assert!(fit.alpha.is_none() && fit.decays(2.0));
    }

    #[test]
    fn ustarstar_brackets_on_planted_scan() {
        // Bottleneck levels chosen so crossing decays in L only for u > 2.
        let n = 400;
        let levels = |cut: f64| (0..n).map(|i| if i < (cut * n as f64) as usize { 10.0 } else { 1.0 + 2.0 * i as f64 / n as f64 }).collect::<Vec<f64>>();
        let scan = CrossingScan {
            u_max: 5.0,
            scales: vec![2, 4, 8],
            samples: n as u64,
            seed: 0,
            levels: vec![levels(0.8), levels(0.4), levels(0.1)],
        };
        let est = ustarstar_from_scan(&scan, &[0.5, 1.0, 3.0, 4.0], 2.0).unwrap();
        assert!(est.lo >= 1.0 && est.hi <= 3.0 && est.lo < est.hi, "{est:?}");
        assert!(est.monotone);
        assert!(matches!(ustarstar_from_scan(&scan, &[3.0, 4.0], 2.0), Err(Error::NoSignChange)));
    }

    #[test]
    fn scan_csv_has_one_row_per_level_and_scale() {
        let scan = CrossingScan::run(1.0, &[1, 2], 5, &z3(), 8).unwrap();
        let mut buf = Vec::new();
        scan.write_csv(&[0.0, 1.0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("u,L,samples,p,ci_lo,ci_hi,seed"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn wilson_interval_contains_estimate(successes in 0u64..50, extra in 0u64..50) {
            let levels: Vec<f64> = (0..successes + extra).map(|i| if i < successes { 2.0 } else { 0.5 }).collect();
            let e = CrossingEstimate::from_levels(1.0, 2, &levels, 0);
            prop_assert!(e.ci_lo <= e.p && e.p <= e.ci_hi || e.samples == 0);
            prop_assert!((0.0..=1.0).contains(&e.ci_lo) && (0.0..=1.0).contains(&e.ci_hi));
        }
    }
}
