//! Random interlacements seen from a finite window K ⊂ Z^{d+1}.
//!
//! The trajectories meeting K, started at their first entrance, form a
//! Poisson cloud with intensity u·P_{e_K}. Each trajectory carries a label
//! uniform on [0, u_max]; thresholding labels gives the whole family
//! (I^u ∩ K)_{u ≤ u_max} from one sample, monotone in u by construction.
//!
//! Forward paths are followed until they leave a guard box around K. Under
//! [`GuardPolicy::Reinject`] a path that leaves returns to K with probability
//! Σ_x g(y − x)e_K(x), re-entering at x with weight ∝ g(y − x)e_K(x); under
//! [`GuardPolicy::Truncate`] it is cut and flagged.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{char_move, move_char, BoxGrid, BoxSpec, Geometry, Point, PointSet, VertexSet};
use crate::potential::green::{green_asymptotic, green_asymptotic_constant};
use crate::potential::infinite::{centre_and_radius, FarField};
use crate::potential::CapacityResult;
use crate::rng::{child_seed, stream, StreamRng};
use crate::{Error, Result};

/// What happens when a path leaves the guard box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuardPolicy {
    Truncate,
    Reinject,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CloudConfig {
    pub u_max: f64,
    /// Radius of the guard box around the centre of K.
    pub guard_radius: u64,
    pub policy: GuardPolicy,
    /// Largest accepted (std_error + truncation_bound)/cap for e_K.
    pub capacity_tolerance: f64,
    /// Returns per trajectory before it is cut and flagged.
    pub max_returns: u32,
}

impl CloudConfig {
    pub fn new(u_max: f64, guard_radius: u64) -> Self {
        CloudConfig {
            u_max,
            guard_radius,
            policy: GuardPolicy::Reinject,
            capacity_tolerance: 1e-2,
            max_returns: 10_000,
        }
    }
}

/// Guard radius R making the return probability from the guard sphere,
/// a_D·cap(K)·(R + 1 − r_K)^{2−D}, at most `eps`.
pub fn guard_radius_for(eps: f64, cap: f64, k_radius: u64, dim: usize) -> u64 {
    let a = green_asymptotic_constant(dim);
    let dist = (a * cap / eps).powf(1.0 / (dim as f64 - 2.0));
    (dist.ceil() as u64 + k_radius).saturating_sub(1)
}

/// A stretch of nearest-neighbour path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Point,
    /// One character per step, as in [`move_char`].
    pub moves: String,
}

impl Segment {
    /// Positions from the start, inclusive of both ends.
    pub fn positions(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        let mut p = self.start.0.clone();
        let mut first = true;
        let mut chars = self.moves.chars();
        std::iter::from_fn(move || {
            if first {
                first = false;
                return Some(p.clone());
            }
            let m = char_move(chars.next()?)?;
            let axis = m >> 1;
            p[axis] += if m & 1 == 0 { 1 } else { -1 };
            Some(p.clone())
        })
    }

    /// Feeds positions to `f` in order until it returns false; false if cut.
    pub fn visit(&self, mut f: impl FnMut(&[i64]) -> bool) -> bool {
        let mut p = self.start.0.clone();
        if !f(&p) {
            return false;
        }
        for b in self.moves.bytes() {
            let m = char_move(b as char).expect("move alphabet");
            p[m >> 1] += if m & 1 == 0 { 1 } else { -1 };
            if !f(&p) {
                return false;
            }
        }
        true
    }

    pub fn steps(&self) -> usize {
        self.moves.len()
    }
}

/// One trajectory of the cloud, from its first entrance in K. Segments after
/// the first start at a re-entrance into K following an unobserved excursion
/// beyond the guard box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub label: f64,
    pub segments: Vec<Segment>,
    /// Cut at the guard box while a return was still possible.
    pub truncated: bool,
}

impl Trajectory {
    pub fn start(&self) -> &Point {
        &self.segments[0].start
    }

    /// All recorded positions, segment by segment.
    pub fn positions(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        self.segments.iter().flat_map(Segment::positions)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterlacementSample {
    pub window: Vec<Point>,
    pub u_max: f64,
    pub guard: BoxSpec,
    pub policy: GuardPolicy,
    pub capacity: f64,
    /// Largest return probability to K from outside the guard box.
    pub return_bound: f64,
    /// Error scale of the re-entrance model: return_bound·diam(K)/distance.
    pub model_error: f64,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
}

/// Samples the cloud of trajectories meeting K up to level u_max.
pub fn sample_cloud(
    k: &PointSet,
    equilibrium: &CapacityResult,
    cfg: &CloudConfig,
    seed: u64,
) -> Result<InterlacementSample> {
    let dim = k.iter().next().ok_or_else(|| Error::InvalidParameter("empty window".into()))?.dim();
    if dim < 3 {
        return Err(Error::Recurrent { dim });
    }
    if !(cfg.u_max >= 0.0 && cfg.u_max.is_finite()) {
        return Err(Error::InvalidParameter("u_max must be finite and >= 0".into()));
    }
    let cap = equilibrium.value;
    let relative = (equilibrium.std_error + equilibrium.truncation_bound) / cap;
    if !(relative <= cfg.capacity_tolerance) {
        return Err(Error::CapacityTolerance { relative, tolerance: cfg.capacity_tolerance });
    }
    if equilibrium.measure.support().iter().any(|p| !k.0.contains(p)) {
        return Err(Error::NotSubset);
    }
    let (centre, r_k) = centre_and_radius(k);
    if cfg.guard_radius <= r_k {
        return Err(Error::InvalidParameter("guard box must strictly contain K".into()));
    }
    let guard = BoxSpec::new(Point(centre.clone()), cfg.guard_radius);
    let distance = (cfg.guard_radius + 1 - r_k) as f64;
    let return_bound = (green_asymptotic(distance, dim) * cap).min(1.0);
    let model_error = return_bound * (2 * r_k + 1) as f64 / distance;
    let mut sample = InterlacementSample {
        window: k.iter().cloned().collect(),
        u_max: cfg.u_max,
        guard,
        policy: cfg.policy,
        capacity: cap,
        return_bound,
        model_error,
        seed,
        trajectories: Vec::new(),
    };
    if cfg.u_max == 0.0 || cap == 0.0 {
        return Ok(sample);
    }
    let mut rng = stream(seed);
    let count = Poisson::new(cfg.u_max * cap)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(&mut rng) as usize;
    let support = equilibrium.measure.support();
    let starts = WeightedIndex::new(equilibrium.measure.weights())
        .map_err(|e| Error::InvalidMeasure(e.to_string()))?;
    let returns = Returns::new(equilibrium, cfg);
    let g = Geometry::lattice(dim)?;
    for _ in 0..count {
        let label = rng.random::<f64>() * cfg.u_max;
        let start = support[starts.sample(&mut rng)].clone();
        sample.trajectories.push(walk_trajectory(&g, start, label, &sample.guard, &returns, cfg, &mut rng));
    }
    Ok(sample)
}

/// Far-field return model of a cloud.
struct Returns<'a> {
    field: FarField,
    support: &'a [Point],
    groups: Vec<Group>,
    dim: i32,
}

/// Support points sharing a coarse cell, sampled ∝ e_K inside the cell.
struct Group {
    members: Vec<usize>,
    pick: WeightedIndex<f64>,
    mass: f64,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl Group {
    /// Smallest Euclidean distance from y to the bounding box of the cell.
    fn distance(&self, y: &[i64]) -> f64 {
        let mut s = 0.0;
        for ((&a, &b), &c) in self.lo.iter().zip(&self.hi).zip(y) {
            let gap = (a - c).max(c - b).max(0) as f64;
            s += gap * gap;
        }
        s.sqrt()
    }
}

fn distance(x: &[i64], y: &[i64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>().sqrt()
}

impl<'a> Returns<'a> {
    fn new(eq: &'a CapacityResult, cfg: &CloudConfig) -> Self {
        let support = eq.measure.support();
        let weights = eq.measure.weights();
        let (_, r_k) = centre_and_radius(&support.iter().cloned().collect());
        let gap = cfg.guard_radius - r_k.min(cfg.guard_radius);
        let side = (gap / 4).max(1) as i64;
        let mut cells: std::collections::BTreeMap<Vec<i64>, Vec<usize>> = Default::default();
        for (i, p) in support.iter().enumerate() {
            if weights[i] > 0.0 {
                cells.entry(p.0.iter().map(|c| c.div_euclid(side)).collect()).or_default().push(i);
            }
        }
        let groups = cells
            .into_values()
            .map(|members| {
                let w: Vec<f64> = members.iter().map(|&i| weights[i]).collect();
                let dim = support[0].dim();
                let lo = (0..dim).map(|k| members.iter().map(|&i| support[i].0[k]).min().unwrap()).collect();
                let hi = (0..dim).map(|k| members.iter().map(|&i| support[i].0[k]).max().unwrap()).collect();
                Group { mass: w.iter().sum(), pick: WeightedIndex::new(&w).unwrap(), members, lo, hi }
            })
            .collect();
        Returns {
            field: FarField::new(&eq.measure, (gap / 8).max(1)),
            support,
            groups,
            dim: support[0].dim() as i32,
        }
    }

    /// Re-entrance point from y, if the walk returns: x ∝ e_K(x)|y − x|^{2−D},
    /// by rejection from the cell-wise bound |y − cell|^{2−D}.
    fn sample(&self, y: &[i64], rng: &mut StreamRng) -> Option<Point> {
        if !rng.random_bool(self.field.hitting(y)) {
            return None;
        }
        let bounds: Vec<f64> =
            self.groups.iter().map(|g| g.mass * g.distance(y).powi(2 - self.dim)).collect();
        let outer = WeightedIndex::new(&bounds).ok()?;
        loop {
            let j = outer.sample(rng);
            let group = &self.groups[j];
            let i = group.members[group.pick.sample(rng)];
            let ratio = (distance(&self.support[i].0, y) / group.distance(y)).powi(2 - self.dim);
            if rng.random::<f64>() < ratio {
                return Some(self.support[i].clone());
            }
        }
    }
}

fn walk_trajectory(
    g: &Geometry,
    start: Point,
    label: f64,
    guard: &BoxSpec,
    returns: &Returns<'_>,
    cfg: &CloudConfig,
    rng: &mut StreamRng,
) -> Trajectory {
    debug_assert!(!g.is_cylinder());
    let deg = g.degree();
    let mut segments = Vec::new();
    let mut from = start;
    let mut truncated = false;
    loop {
        let mut p = from.0.clone();
        let mut moves = String::new();
        let r = guard.radius as i64;
        // Starts inside; only the moved coordinate can leave the box.
        loop {
            let m = rng.random_range(0..deg);
            let axis = m >> 1;
            p[axis] += if m & 1 == 0 { 1 } else { -1 };
            moves.push(move_char(m));
            if (p[axis] - guard.center.0[axis]).abs() > r {
                break;
            }
        }
        segments.push(Segment { start: from, moves });
        if cfg.policy == GuardPolicy::Truncate {
            truncated = true;
            break;
        }
        if segments.len() > cfg.max_returns as usize {
            truncated = true;
            break;
        }
        match returns.sample(&p, rng) {
            Some(x) => from = x,
            None => break,
        }
    }
    Trajectory { label, segments, truncated }
}

/// Independent cloud samples `0..count` of a window, in parallel.
pub fn sample_clouds<'a>(
    k: &PointSet,
    equilibrium: &'a CapacityResult,
    cfg: &'a CloudConfig,
    count: u64,
    seed: u64,
) -> impl ParallelIterator<Item = Result<InterlacementSample>> + 'a {
    let k = k.clone();
    (0..count).into_par_iter().map(move |i| sample_cloud(&k, equilibrium, cfg, child_seed(seed, i)))
}

/// Occupied (or vacant) cells of a window at level u.
#[derive(Clone, Debug)]
pub struct OccupancyField {
    pub cells: BoxGrid,
    pub u: f64,
    pub seed: u64,
    pub vacant: bool,
}

impl OccupancyField {
    /// The complementary field on the same window.
    pub fn complement(&self) -> OccupancyField {
        let mut cells = self.cells.clone();
        for i in 0..cells.cells().len() {
            let v = cells.get_index(i);
            cells.set_index(i, !v);
        }
        OccupancyField { cells, u: self.u, seed: self.seed, vacant: !self.vacant }
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        self.cells.contains(p)
    }

    /// Dense export: one JSON header line {window, u, seed, vacant}, then the
    /// cells packed eight per byte, first cell in the low bit.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::json!({
            "window": { "lo": self.cells.lo(), "shape": self.cells.shape() },
            "u": self.u,
            "seed": self.seed,
            "vacant": self.vacant,
        });
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let bytes: Vec<u8> = self
            .cells
            .cells()
            .chunks(8)
            .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << i)))
            .collect();
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// Smallest label of a trajectory visiting each window cell (∞ if none).
#[derive(Clone, Debug)]
pub struct LabelField {
    grid: BoxGrid,
    labels: Vec<f64>,
    seed: u64,
}

impl LabelField {
    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn label(&self, p: &[i64]) -> Option<f64> {
        self.grid.index(p).map(|i| self.labels[i])
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Occupancy at level u: cells whose smallest label is ≤ u.
    pub fn occupancy(&self, u: f64) -> OccupancyField {
        let mut cells = self.grid.clone();
        for (i, &l) in self.labels.iter().enumerate() {
            cells.set_index(i, l <= u);
        }
        OccupancyField { cells, u, seed: self.seed, vacant: false }
    }

    pub fn vacancy(&self, u: f64) -> OccupancyField {
        self.occupancy(u).complement()
    }

    /// Whether every point of `set` is vacant at level u.
    pub fn vacant_on(&self, set: &[Point], u: f64) -> bool {
        set.iter().all(|p| self.label(&p.0).is_none_or(|l| l > u))
    }
}

/// Smallest-label field over a window; `visit` feeds the positions each
/// trajectory contributes.
fn fold_labels(
    sample: &InterlacementSample,
    window: &BoxGrid,
    visit: impl Fn(&Trajectory, &mut dyn FnMut(&[i64])),
) -> LabelField {
    let grid = BoxGrid::new(window.lo().to_vec(), window.shape().to_vec());
    let mut labels = vec![f64::INFINITY; grid.cells().len()];
    for t in &sample.trajectories {
        visit(t, &mut |p| {
            if let Some(i) = grid.index(p) {
                if t.label < labels[i] {
                    labels[i] = t.label;
                }
            }
        });
    }
    LabelField { grid, labels, seed: sample.seed }
}

/// Smallest-label field of full trajectories over `window`.
pub fn label_field(sample: &InterlacementSample, window: &BoxGrid) -> LabelField {
    fold_labels(sample, window, |t, f| {
        for seg in &t.segments {
            seg.visit(|p| {
                f(p);
                true
            });
        }
    })
}

/// I^u ∩ W from one sample.
pub fn occupancy(sample: &InterlacementSample, u: f64, window: &BoxGrid) -> Result<OccupancyField> {
    if u > sample.u_max {
        return Err(Error::InvalidParameter(format!("level {u} above u_max {}", sample.u_max)));
    }
    Ok(label_field(sample, window).occupancy(u))
}

/// V^u ∩ W from one sample.
pub fn vacancy(sample: &InterlacementSample, u: f64, window: &BoxGrid) -> Result<OccupancyField> {
    Ok(occupancy(sample, u, window)?.complement())
}

/// Smallest-label field of the truncated trajectories w([0, T_C̃]) over A.
pub fn truncated_label_field(
    sample: &InterlacementSample,
    a: &BoxSpec,
    c_tilde: &BoxSpec,
) -> Result<LabelField> {
    let g = Geometry::lattice(a.center.dim())?;
    if !sample.guard.contains(&g, &c_tilde.center.0)
        || sample.guard.radius < c_tilde.radius + g.sup_distance(&sample.guard.center.0, &c_tilde.center.0)
    {
        return Err(Error::InvalidParameter("C̃ must lie inside the guard box".into()));
    }
    let window = BoxGrid::around(&a.center.0, a.radius);
    Ok(fold_labels(sample, &window, |t, f| {
        // First segment up to and including the exit of C̃.
        t.segments[0].visit(|p| {
            f(p);
            c_tilde.contains(&g, p)
        });
    }))
}

/// I^u_C̃ ∩ A: each trajectory contributes w([0, T_C̃]) only.
pub fn truncated_occupancy(
    sample: &InterlacementSample,
    u: f64,
    a: &BoxSpec,
    c_tilde: &BoxSpec,
) -> Result<OccupancyField> {
    Ok(truncated_label_field(sample, a, c_tilde)?.occupancy(u))
}

/// Successive returns to A and departures from C along a trajectory, as
/// (R_k, D_k) with D_k = None when the walk never leaves C again. Times index
/// the recorded positions; an unobserved excursion beyond the guard box
/// between segments counts as one step.
pub fn returns_departures(
    t: &Trajectory,
    a: &impl VertexSet,
    c: &impl VertexSet,
) -> Vec<(u64, Option<u64>)> {
    let mut out = Vec::new();
    let mut inside_excursion = false;
    for (time, p) in t.positions().enumerate() {
        let time = time as u64;
        if !inside_excursion {
            if a.contains(&p) {
                out.push((time, None));
                inside_excursion = true;
            }
        } else if !c.contains(&p) {
            out.last_mut().unwrap().1 = Some(time);
            inside_excursion = false;
        }
    }
    out
}

/// The ℓ with D_ℓ < T_C̃ < R_{ℓ+1} (1-based), or None if the trajectory
/// never enters A or never leaves C̃ in its first segment.
pub fn truncation_class(
    t: &Trajectory,
    a: &impl VertexSet,
    c: &impl VertexSet,
    c_tilde: &impl VertexSet,
) -> Option<usize> {
    let exit = t.segments[0].positions().position(|p| !c_tilde.contains(&p))? as u64;
    let pairs = returns_departures(t, a, c);
    let classes: Vec<usize> = (0..pairs.len())
        .filter(|&i| {
            let departed = pairs[i].1.is_some_and(|d| d < exit);
            let next = pairs.get(i + 1).map_or(u64::MAX, |r| r.0);
            departed && exit < next
        })
        .map(|i| i + 1)
        .collect();
    match classes.as_slice() {
        [l] => Some(*l),
        _ => None,
    }
}

/// Boxes A = B(0, 2⌈N^{1−ε}/8⌉) ⊆ C̃ = B(0, ⌈N/4⌉) of the truncation scheme,
/// with C = B(0, ⌈N/(4M)⌉), M = ⌈exp √(ln N)⌉ + 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruncationBoxes {
    pub a: BoxSpec,
    pub c: BoxSpec,
    pub c_tilde: BoxSpec,
}

impl TruncationBoxes {
    pub fn new(n: u32, eps: f64, dim: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) || n < 1 {
            return Err(Error::InvalidParameter("need N >= 1 and 0 < eps < 1".into()));
        }
        let nf = n as f64;
        let origin = Point(vec![0; dim]);
        let a = 2 * (nf.powf(1.0 - eps) / 8.0).ceil() as u64;
        let m = (nf.ln().sqrt().exp()).ceil() + 1.0;
        let c = (nf / (4.0 * m)).ceil() as u64;
        let c_tilde = (nf / 4.0).ceil() as u64;
        Ok(TruncationBoxes {
            a: BoxSpec::new(origin.clone(), a),
            c: BoxSpec::new(origin.clone(), c.max(a)),
            c_tilde: BoxSpec::new(origin, c_tilde),
        })
    }
}

/// One (sprinkling factor, K′) cell of the sprinkling experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SprinklingRow {
    pub factor: f64,
    pub set: Vec<Point>,
    /// P[K′ ⊆ V^{u′}].
    pub vacant_full: f64,
    /// P[K′ ∩ I^u_C̃ = ∅] with u = factor·u′.
    pub vacant_truncated: f64,
    /// Paired standard error of the difference.
    pub sigma: f64,
    /// vacant_full ≥ vacant_truncated − u′N^{−d} − 3σ.
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SprinklingReport {
    pub n: u32,
    pub eps: f64,
    pub u_prime: f64,
    pub samples: u64,
    pub seed: u64,
    pub boxes: TruncationBoxes,
    pub slack: f64,
    pub rows: Vec<SprinklingRow>,
    /// Smallest factor from which every larger grid factor passes for all K′.
    pub passing_factor: Option<f64>,
}

/// Compares the full interlacement at level u′ with the truncated one at
/// u = factor·u′ on small sets K′ ⊆ A, on label-coupled samples of the cloud
/// on A.
#[allow(clippy::too_many_arguments)]
pub fn sprinkling_experiment(
    n: u32,
    d: usize,
    eps: f64,
    u_prime: f64,
    factors: &[f64],
    sets: &[Vec<Point>],
    equilibrium: &CapacityResult,
    guard_radius: u64,
    samples: u64,
    seed: u64,
) -> Result<SprinklingReport> {
    let dim = d + 1;
    let boxes = TruncationBoxes::new(n, eps, dim)?;
    let g = Geometry::lattice(dim)?;
    let a_set = boxes.a.point_set(&g);
    for s in sets {
        if s.iter().any(|p| !boxes.a.contains(&g, &p.0)) {
            return Err(Error::InvalidParameter("every K′ must lie in A".into()));
        }
    }
    if factors.iter().any(|&f| f < 1.0) {
        return Err(Error::InvalidParameter("sprinkling factors must be >= 1".into()));
    }
    let max_factor = factors.iter().copied().fold(1.0, f64::max);
    let cfg = CloudConfig::new(u_prime * max_factor, guard_radius);
    // Per sample: for each set, vacancy under the full cloud at u′ and the
    // smallest truncated label meeting the set.
    let per_sample: Vec<Vec<(bool, f64)>> = sample_clouds(&a_set, equilibrium, &cfg, samples, seed)
        .map(|s| {
            let s = s?;
            let full = label_field(&s, &BoxGrid::around(&boxes.a.center.0, boxes.a.radius));
            let trunc = truncated_label_field(&s, &boxes.a, &boxes.c_tilde)?;
            Ok(sets
                .iter()
                .map(|set| {
                    let min_trunc = set
                        .iter()
                        .filter_map(|p| trunc.label(&p.0))
                        .fold(f64::INFINITY, f64::min);
                    (full.vacant_on(set, u_prime), min_trunc)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let slack = u_prime * (n as f64).powi(-(d as i32));
    let nf = samples as f64;
    let mut rows = Vec::new();
    for &factor in factors {
        let u = factor * u_prime;
        for (j, set) in sets.iter().enumerate() {
            let (mut a, mut b, mut diff_sq) = (0.0, 0.0, 0.0);
            for s in &per_sample {
                let x = f64::from(u8::from(s[j].0));
                let y = f64::from(u8::from(s[j].1 > u));
                a += x;
                b += y;
                diff_sq += (x - y).powi(2);
            }
            let (pa, pb) = (a / nf, b / nf);
            let var = (diff_sq / nf - (pa - pb).powi(2)).max(0.0);
            let sigma = (var / nf).sqrt();
            rows.push(SprinklingRow {
                factor,
                set: set.clone(),
                vacant_full: pa,
                vacant_truncated: pb,
                sigma,
                holds: pa >= pb - slack - 3.0 * sigma,
            });
        }
    }
    let mut sorted: Vec<f64> = factors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let passes = |f: f64| rows.iter().filter(|r| r.factor == f).all(|r| r.holds);
    let passing_factor = (0..sorted.len())
        .find(|&i| sorted[i..].iter().all(|&f| passes(f)))
        .map(|i| sorted[i]);
    Ok(SprinklingReport {
        n,
        eps,
        u_prime,
        samples,
        seed,
        boxes,
        slack,
        rows,
        passing_factor,
    })
}
