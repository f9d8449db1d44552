//! Disconnection of the cylinder by finite sets and the disconnection time
//! of a walk.
//!
//! A finite S disconnects E iff no path in E \ S joins level z_max(S)+1 to
//! level z_min(S)−1: outside the slab of S every level is untouched, so the
//! two infinite ends are each connected to those levels.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{Geometry, Point, PointSet};
use crate::limitlaw::csv_err;
use crate::rng::replicate_seed;
use crate::stats::quantile;
use crate::unionfind::DisjointSets;
use crate::walk::{Outcome, WalkRun};
use crate::{Error, Result};

const UNSEEN: u64 = u64::MAX;

/// Torus cells with a precomputed neighbour table.
#[derive(Clone, Debug)]
struct Torus {
    cells: usize,
    neighbours: Vec<usize>,
    degree: usize,
}

impl Torus {
    fn new(g: &Geometry) -> Result<Self> {
        let (d, n) = match *g {
            Geometry::Cylinder { d, n } => (d, n as usize),
            Geometry::FullLattice { .. } => {
                return Err(Error::InvalidGeometry("disconnection needs the cylinder".into()))
            }
        };
        let cells = n.pow(d as u32);
        let mut neighbours = Vec::with_capacity(cells * 2 * d);
        for c in 0..cells {
            let mut stride = 1;
            for _ in 0..d {
                let coord = (c / stride) % n;
                let up = if coord + 1 == n { c - coord * stride } else { c + stride };
                let down = if coord == 0 { c + (n - 1) * stride } else { c - stride };
                neighbours.push(up);
                neighbours.push(down);
                stride *= n;
            }
        }
        Ok(Torus { cells, neighbours, degree: 2 * d })
    }

    /// Cell index with the first torus coordinate fastest.
    fn index(&self, y: &[i64], n: i64) -> usize {
        y.iter().rev().fold(0usize, |acc, &c| acc * n as usize + c as usize)
    }
}

/// Whether the free cells of the slab levels lo..=hi connect level hi to
/// level lo; `blocked(layer, cell)` with layer = z − lo.
fn slab_crossable(torus: &Torus, lo: i64, hi: i64, blocked: impl Fn(usize, usize) -> bool) -> bool {
    let cells = torus.cells;
    let layers = (hi - lo + 1) as usize;
    let mut seen = vec![false; cells * layers];
    let mut queue = VecDeque::new();
    let top = layers - 1;
    for c in 0..cells {
        if !blocked(top, c) {
            seen[top * cells + c] = true;
            queue.push_back((top, c));
        }
    }
    while let Some((layer, c)) = queue.pop_front() {
        if layer == 0 {
            return true;
        }
        let mut visit = |l: usize, cell: usize| {
            let i = l * cells + cell;
            if !seen[i] && !blocked(l, cell) {
                seen[i] = true;
                queue.push_back((l, cell));
            }
        };
        for &nb in &torus.neighbours[c * torus.degree..(c + 1) * torus.degree] {
            visit(layer, nb);
        }
        visit(layer - 1, c);
        if layer < top {
            visit(layer + 1, c);
        }
    }
    false
}

/// Whether the finite set S disconnects the cylinder, by BFS on the slab
/// T × [z_min − 1, z_max + 1].
pub fn disconnects(s: &PointSet, g: &Geometry) -> Result<bool> {
    let torus = Torus::new(g)?;
    let Some((zmin, zmax)) = s.z_range() else { return Ok(false) };
    let n = g.side().unwrap() as i64;
    let lo = zmin - 1;
    let cells = torus.cells;
    let mut blocked = vec![false; cells * (zmax - zmin + 3) as usize];
    for p in s {
        g.check_point(&p.0)?;
        let d = g.torus_dim();
        blocked[(p.0[d] - lo) as usize * cells + torus.index(&p.0[..d], n)] = true;
    }
    Ok(!slab_crossable(&torus, lo, zmax + 1, |l, c| blocked[l * cells + c]))
}

/// Independent oracle for [`disconnects`]: union-find over the free points of
/// the slab using the geometry's own neighbour lists.
pub fn disconnects_union_find(s: &PointSet, g: &Geometry) -> Result<bool> {
    if !g.is_cylinder() {
        return Err(Error::InvalidGeometry("disconnection needs the cylinder".into()));
    }
    let Some((zmin, zmax)) = s.z_range() else { return Ok(false) };
    let free: Vec<Point> = g.slab(zmin - 1, zmax + 1).iter().filter(|p| !s.0.contains(*p)).cloned().collect();
    let index: HashMap<&Point, usize> = free.iter().enumerate().map(|(i, p)| (p, i)).collect();
    // Two virtual nodes stand for the top and bottom levels.
    let (top, bottom) = (free.len(), free.len() + 1);
    let mut sets = DisjointSets::new(free.len() + 2);
    for (i, p) in free.iter().enumerate() {
        if p.z() == zmax + 1 {
            sets.union(i, top);
        }
        if p.z() == zmin - 1 {
            sets.union(i, bottom);
        }
        for q in g.neighbors(&p.0) {
            if let Some(&j) = index.get(&q) {
                sets.union(i, j);
            }
        }
    }
    Ok(!sets.same(top, bottom))
}

/// Visited vertices with first-visit times, stored densely over the
/// vertical range reached so far.
#[derive(Clone, Debug)]
pub struct TraceSet {
    geometry: Geometry,
    torus: Torus,
    side: i64,
    z_lo: i64,
    first: Vec<u64>,
    extent: Option<(i64, i64)>,
    last_time: Option<u64>,
    size: usize,
}

impl TraceSet {
    pub fn new(geometry: Geometry) -> Result<Self> {
        let torus = Torus::new(&geometry)?;
        Ok(TraceSet {
            side: geometry.side().unwrap() as i64,
            geometry,
            torus,
            z_lo: 0,
            first: Vec::new(),
            extent: None,
            last_time: None,
            size: 0,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn layer_range(&self) -> (i64, i64) {
        (self.z_lo, self.z_lo + (self.first.len() / self.torus.cells) as i64 - 1)
    }

    fn ensure_level(&mut self, z: i64) {
        let cells = self.torus.cells;
        if self.first.is_empty() {
            self.z_lo = z - 16;
            self.first = vec![UNSEEN; 33 * cells];
            return;
        }
        let (lo, hi) = self.layer_range();
        if z < lo {
            let grow = ((hi - lo + 1) as usize).max((lo - z) as usize + 1);
            let mut next = vec![UNSEEN; grow * cells];
            next.extend_from_slice(&self.first);
            self.first = next;
            self.z_lo -= grow as i64;
        } else if z > hi {
            let grow = ((hi - lo + 1) as usize).max((z - hi) as usize + 1);
            self.first.resize(self.first.len() + grow * cells, UNSEEN);
        }
    }

    fn slot(&self, p: &[i64]) -> Option<usize> {
        let d = self.geometry.torus_dim();
        let (lo, hi) = self.layer_range();
        let z = p[d];
        if self.first.is_empty() || z < lo || z > hi {
            return None;
        }
        Some((z - lo) as usize * self.torus.cells + self.torus.index(&p[..d], self.side))
    }

    /// Record a visit at time t. Times must be fed in nondecreasing order.
    pub fn insert(&mut self, t: u64, p: &[i64]) {
        debug_assert!(self.last_time.is_none_or(|l| l <= t));
        self.last_time = Some(t);
        let z = p[self.geometry.torus_dim()];
        self.ensure_level(z);
        let i = self.slot(p).expect("level allocated");
        if self.first[i] == UNSEEN {
            self.first[i] = t;
            self.size += 1;
            self.extent = Some(match self.extent {
                None => (z, z),
                Some((a, b)) => (a.min(z), b.max(z)),
            });
        }
    }

    /// First visit time of `p`, if visited.
    pub fn first_visit(&self, p: &[i64]) -> Option<u64> {
        self.slot(p).map(|i| self.first[i]).filter(|&t| t != UNSEEN)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Vertical extent [z_min, z_max] of the visited set.
    pub fn extent(&self) -> Option<(i64, i64)> {
        self.extent
    }

    /// Latest time fed.
    pub fn last_time(&self) -> Option<u64> {
        self.last_time
    }

    /// The vertices visited by time n.
    pub fn visited_by(&self, n: u64) -> PointSet {
        let cells = self.torus.cells;
        let d = self.geometry.torus_dim();
        let mut out = PointSet::new();
        for (i, &t) in self.first.iter().enumerate() {
            if t <= n {
                let mut y = Vec::with_capacity(d + 1);
                let mut c = i % cells;
                for _ in 0..d {
                    y.push((c % self.side as usize) as i64);
                    c /= self.side as usize;
                }
                y.push(self.z_lo + (i / cells) as i64);
                out.insert(Point(y));
            }
        }
        out
    }

    /// Whether X_{[0,n]} disconnects E.
    pub fn disconnects_at(&self, n: u64) -> bool {
        let Some((zmin, zmax)) = self.extent else { return false };
        let cells = self.torus.cells;
        let lo = zmin - 1;
        let base = (lo - self.z_lo) * cells as i64;
        // Levels outside the allocation are unvisited.
        let len = self.first.len() as i64;
        !slab_crossable(&self.torus, lo, zmax + 1, |l, c| {
            let i = base + (l * cells + c) as i64;
            (0..len).contains(&i) && self.first[i as usize] <= n
        })
    }
}

/// T_N with the probes that established it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisconnectionTime {
    pub outcome: Outcome,
    /// Number of slab searches used.
    pub probes: u32,
    /// Steps actually simulated (at least T_N).
    pub simulated: u64,
}

/// Feeds the run into `trace` up to absolute time `until`.
fn extend(run: &mut WalkRun, trace: &mut TraceSet, until: u64, observe: &mut impl FnMut(u64, &[i64])) {
    if trace.last_time().is_none() {
        observe(run.time(), run.position());
        trace.insert(run.time(), run.position());
    }
    while run.time() < until {
        run.step();
        observe(run.time(), run.position());
        trace.insert(run.time(), run.position());
    }
}

/// Exact T_N = inf{n ≥ 0 : X_{[0,n]} disconnects E} for a fresh run. The walk
/// is extended over horizons N^{2d}·2^j until one disconnects, then the first
/// disconnecting time is found by bisection with a full search per probe.
/// Every simulated position is also passed to `observe`.
pub fn disconnection_time_with(
    run: &mut WalkRun,
    budget: u64,
    mut observe: impl FnMut(u64, &[i64]),
) -> Result<(DisconnectionTime, TraceSet)> {
    if run.time() != 0 {
        return Err(Error::InvalidParameter("disconnection time needs a fresh run".into()));
    }
    let mut trace = TraceSet::new(*run.geometry())?;
    let scale = (run.geometry().torus_size() as u64).pow(2);
    let mut probes = 0;
    // Largest time known not to disconnect.
    let mut known_false: Option<u64> = None;
    let mut horizon = 0u64;
    loop {
        extend(run, &mut trace, horizon, &mut observe);
        probes += 1;
        if trace.disconnects_at(horizon) {
            break;
        }
        known_false = Some(horizon);
        if horizon >= budget {
            let result =
                DisconnectionTime { outcome: Outcome::Exhausted(budget), probes, simulated: run.time() };
            return Ok((result, trace));
        }
        horizon = if horizon == 0 { scale } else { horizon.saturating_mul(2) }.min(budget);
    }
    let (mut lo, mut hi) = (known_false, horizon);
    while lo.map_or(0, |l| l + 1) < hi {
        let mid = lo.map_or(0, |l| l + 1) + (hi - lo.map_or(0, |l| l + 1)) / 2;
        probes += 1;
        if trace.disconnects_at(mid) {
            hi = mid;
        } else {
            lo = Some(mid);
        }
    }
    debug_assert!(trace.disconnects_at(hi) && (hi == 0 || !trace.disconnects_at(hi - 1)));
    Ok((DisconnectionTime { outcome: Outcome::Stopped(hi), probes, simulated: run.time() }, trace))
}

pub fn disconnection_time(run: &mut WalkRun, budget: u64) -> Result<(DisconnectionTime, TraceSet)> {
    disconnection_time_with(run, budget, |_, _| {})
}

/// Oracle for [`disconnection_time`]: probes every n = 0, 1, … in turn.
pub fn disconnection_time_incremental(run: &mut WalkRun, budget: u64) -> Result<Outcome> {
    let mut trace = TraceSet::new(*run.geometry())?;
    let mut sink = |_: u64, _: &[i64]| {};
    extend(run, &mut trace, run.time(), &mut sink);
    loop {
        if trace.disconnects_at(run.time()) {
            return Ok(Outcome::Stopped(run.time()));
        }
        if run.time() >= budget {
            return Ok(Outcome::Exhausted(run.time()));
        }
        let t = run.time() + 1;
        extend(run, &mut trace, t, &mut sink);
    }
}

/// One replicate of the disconnection experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TnRow {
    pub replicate: u64,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: u32,
    pub d: usize,
    /// T_N, or the budget when censored.
    pub t: u64,
    pub scaled: f64,
    pub censored: bool,
}

/// Empirical law of T_N/N^{2d}; censored rows are lower bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TnDistribution {
    pub geometry: Geometry,
    pub budget: u64,
    pub rows: Vec<TnRow>,
}

impl TnDistribution {
    pub fn censored(&self) -> usize {
        self.rows.iter().filter(|r| r.censored).count()
    }

    /// Sorted scaled values, censored ones at their lower bound.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.scaled).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn quantiles(&self, levels: &[f64]) -> Vec<f64> {
        let s = self.sorted();
        levels.iter().map(|&q| quantile(&s, q)).collect()
    }

    /// Fraction of replicates with T_N ≥ s·N^{2d} and its standard error; a
    /// censored row counts when its lower bound already reaches s.
    pub fn tail(&self, s: f64) -> (f64, f64) {
        let n = self.rows.len() as f64;
        let k = self.rows.iter().filter(|r| r.scaled >= s).count() as f64;
        let p = k / n;
        (p, (p * (1.0 - p) / n).sqrt())
    }

    /// Rows sorted by T_N/N^{2d}, CSV columns seed, N, d, T_N,
    /// T_N/N^{2d}, censored.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["seed", "N", "d", "T_N", "T_N/N^{2d}", "censored"]).map_err(csv_err)?;
        let mut rows: Vec<&TnRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.scaled.total_cmp(&b.scaled).then(a.replicate.cmp(&b.replicate)));
        for r in rows {
            out.write_record([
                r.seed.to_string(),
                r.n.to_string(),
                r.d.to_string(),
                r.t.to_string(),
                format!("{:.9}", r.scaled),
                u8::from(r.censored).to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// T_N/N^{2d} over `replicates` walks from the origin, with budget
/// `budget_multiplier`·N^{2d} each.
pub fn tn_distribution(
    g: &Geometry,
    replicates: u64,
    seed: u64,
    budget_multiplier: u64,
) -> Result<TnDistribution> {
    let Geometry::Cylinder { d, n } = *g else {
        return Err(Error::InvalidGeometry("disconnection needs the cylinder".into()));
    };
    if d < 2 {
        return Err(Error::InvalidParameter("the disconnection experiment needs d >= 2".into()));
    }
    let scale = (g.torus_size() as u64).pow(2);
    let budget = budget_multiplier.max(1) * scale;
    let rows = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let s = replicate_seed(seed, "disconnect", i);
            let mut run = WalkRun::new(*g, g.origin(), s)?;
            let (dt, _) = disconnection_time(&mut run, budget)?;
            let (t, censored) = match dt.outcome {
                Outcome::Stopped(t) => (t, false),
                Outcome::Exhausted(b) => (b, true),
            };
            Ok(TnRow { replicate: i, seed: s, n, d, t, scaled: t as f64 / scale as f64, censored })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TnDistribution { geometry: *g, budget, rows })
}
