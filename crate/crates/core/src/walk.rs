//! Simple random walk on the cylinder and on Z^{d+1}: stopping times, the
//! vertical skeleton and its local times, level clocks, and the excursion
//! schedule between the boxes B(z) ⊆ B̃(z).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{Geometry, Point, PointSet, VertexSet};
use crate::limitlaw::csv_err;
use crate::rng::{child_seed, stream, StreamRng};
use crate::stats::{chi_square_gof, geometric_pmf, geometric_sum_pmf, ChiSquareTest};
use crate::{Error, Result};

/// Height scales r_N = N < h_N of the excursion boxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scales {
    pub r: i64,
    pub h: i64,
}

impl Scales {
    /// r_N = N and h_N = ⌊N(2 + (ln N)²)⌋.
    pub fn for_side(n: u32) -> Self {
        let nf = n as f64;
        let h = (nf * (2.0 + nf.ln().powi(2))).floor() as i64;
        Scales { r: n as i64, h }
    }

    /// The variant h_N = ⌊N (ln N)²⌋, for sensitivity sweeps.
    pub fn log_squared(n: u32) -> Result<Self> {
        let nf = n as f64;
        Scales::new(n as i64, (nf * nf.ln().powi(2)).floor() as i64)
    }

    pub fn new(r: i64, h: i64) -> Result<Self> {
        if r < 1 || h <= r {
            return Err(Error::InvalidParameter(format!("scales need 1 <= r < h, got r={r}, h={h}")));
        }
        Ok(Scales { r, h })
    }

    /// (d+1)(h − r)/N^d, the Green-sum constant of the excursion box.
    pub fn green_sum_constant(&self, g: &Geometry) -> f64 {
        (g.dim() as f64) * (self.h - self.r) as f64 / g.torus_size() as f64
    }
}

/// Outcome of running until a stopping time: the time reached, or the time
/// at which the step budget ran out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "time", rename_all = "kebab-case")]
pub enum Outcome {
    Stopped(u64),
    Exhausted(u64),
}

impl Outcome {
    pub fn time(self) -> Option<u64> {
        match self {
            Outcome::Stopped(t) => Some(t),
            Outcome::Exhausted(_) => None,
        }
    }

    pub fn is_stopped(self) -> bool {
        matches!(self, Outcome::Stopped(_))
    }
}

/// Default budget 64·N^{2d} for runs on the scale of the disconnection time.
pub fn default_budget(g: &Geometry) -> u64 {
    64 * (g.torus_size() as u64).pow(2)
}

/// A walk in progress. Positions are streamed; callers that need the trace
/// collect it in their stopping predicate or through [`WalkRun::path`].
#[derive(Clone, Debug)]
pub struct WalkRun {
    geometry: Geometry,
    start: Point,
    seed: u64,
    position: Vec<i64>,
    time: u64,
    rng: StreamRng,
}

impl WalkRun {
    pub fn new(geometry: Geometry, start: Point, seed: u64) -> Result<Self> {
        geometry.check_point(&start.0)?;
        Ok(WalkRun {
            position: start.0.clone(),
            geometry,
            start,
            seed,
            time: 0,
            rng: stream(seed),
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn start(&self) -> &Point {
        &self.start
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn position(&self) -> &[i64] {
        &self.position
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// One step; returns the move taken.
    #[inline]
    pub fn step(&mut self) -> usize {
        let m = self.rng.random_range(0..self.geometry.degree());
        self.geometry.apply(&mut self.position, m);
        self.time += 1;
        m
    }

    /// Steps until `stop(time, position)` holds, testing the current state
    /// first. At most `budget` steps are taken.
    pub fn run_until(&mut self, budget: u64, mut stop: impl FnMut(u64, &[i64]) -> bool) -> Outcome {
        let end = self.time.saturating_add(budget);
        loop {
            if stop(self.time, &self.position) {
                return Outcome::Stopped(self.time);
            }
            if self.time >= end {
                return Outcome::Exhausted(self.time);
            }
            self.step();
        }
    }

    /// H_U from the current time.
    pub fn hit(&mut self, u: &impl VertexSet, budget: u64) -> Outcome {
        self.run_until(budget, |_, p| u.contains(p))
    }

    /// H̃_U: first time strictly after the current one spent in U.
    pub fn return_to(&mut self, u: &impl VertexSet, budget: u64) -> Outcome {
        let t0 = self.time;
        self.run_until(budget, |t, p| t > t0 && u.contains(p))
    }

    /// T_U: first time outside U.
    pub fn exit(&mut self, u: &impl VertexSet, budget: u64) -> Outcome {
        self.run_until(budget, |_, p| !u.contains(p))
    }

    /// Positions from the current time until `stop` holds or the budget runs
    /// out, inclusive of both ends.
    pub fn path(
        &mut self,
        budget: u64,
        mut stop: impl FnMut(u64, &[i64]) -> bool,
    ) -> (Vec<Point>, Outcome) {
        let mut path = Vec::new();
        let outcome = self.run_until(budget, |t, p| {
            path.push(Point(p.to_vec()));
            stop(t, p)
        });
        (path, outcome)
    }

    pub fn manifest(&self, outcome: Option<Outcome>) -> WalkManifest {
        WalkManifest {
            geometry: self.geometry,
            start: self.start.0.clone(),
            seed: self.seed,
            steps: self.time,
            outcome,
        }
    }
}

/// JSON summary of a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WalkManifest {
    pub geometry: Geometry,
    pub start: Vec<i64>,
    pub seed: u64,
    pub steps: u64,
    pub outcome: Option<Outcome>,
}

/// Jump times ρ_k of the vertical component and the skeleton Ẑ_k = Z_{ρ_k}.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonRecord {
    rho: Vec<u64>,
    zhat: Vec<i64>,
}

impl SkeletonRecord {
    /// Skeleton of the vertical path Z_0, Z_1, …
    pub fn from_vertical_path(z: &[i64]) -> Self {
        let mut rec = SkeletonRecord::default();
        for (t, &zt) in z.iter().enumerate() {
            rec.observe(t as u64, zt);
        }
        rec
    }

    /// Record `steps` steps of `run` (from its current state).
    pub fn record(run: &mut WalkRun, steps: u64) -> Self {
        let mut rec = SkeletonRecord::default();
        run.run_until(steps, |t, p| {
            rec.observe(t, p[p.len() - 1]);
            false
        });
        rec
    }

    /// Feed Z_t; the first observation is ρ_0.
    #[inline]
    pub fn observe(&mut self, t: u64, z: i64) {
        if self.zhat.last() != Some(&z) {
            self.rho.push(t);
            self.zhat.push(z);
        }
    }

    pub fn rho(&self) -> &[u64] {
        &self.rho
    }

    pub fn zhat(&self) -> &[i64] {
        &self.zhat
    }

    /// Number of recorded skeleton points.
    pub fn len(&self) -> usize {
        self.zhat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zhat.is_empty()
    }

    /// L̂_k^z = #{m < k : Ẑ_m = z}.
    pub fn local_time(&self, k: usize, z: i64) -> u64 {
        self.zhat[..k.min(self.zhat.len())].iter().filter(|&&w| w == z).count() as u64
    }

    /// All nonzero L̂_k^z.
    pub fn local_times(&self, k: usize) -> BTreeMap<i64, u64> {
        let mut out = BTreeMap::new();
        for &w in &self.zhat[..k.min(self.zhat.len())] {
            *out.entry(w).or_insert(0) += 1;
        }
        out
    }

    /// ρ_{k+1} − ρ_k over recorded k.
    pub fn increments(&self) -> Vec<u64> {
        self.rho.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// γ_v^z = inf{ρ_k : L̂_k^z ≥ v}. Since L̂_k^z counts m < k, the j-th
    /// visit to z is registered at the following jump, so v ≥ 1 is never
    /// reached before ρ_1. `Exhausted` carries the last recorded ρ.
    pub fn gamma_level(&self, v: f64, z: i64) -> Outcome {
        let need = level_threshold(v);
        if need == 0 {
            return Outcome::Stopped(0);
        }
        let mut count = 0;
        for (m, &w) in self.zhat.iter().enumerate() {
            if w == z {
                count += 1;
                if count == need {
                    return match self.rho.get(m + 1) {
                        Some(&t) => Outcome::Stopped(t),
                        None => Outcome::Exhausted(self.rho[m]),
                    };
                }
            }
        }
        Outcome::Exhausted(self.rho.last().copied().unwrap_or(0))
    }

    /// ρ strictly increasing from 0 and unit skeleton increments.
    pub fn check_invariants(&self) -> bool {
        self.rho.first().is_none_or(|&r| r == 0)
            && self.rho.windows(2).all(|w| w[0] < w[1])
            && self.zhat.windows(2).all(|w| (w[1] - w[0]).abs() == 1)
    }

    /// CSV rows k, rho, zhat.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "rho", "zhat"]).map_err(csv_err)?;
        for (k, (r, z)) in self.rho.iter().zip(&self.zhat).enumerate() {
            out.write_record([k.to_string(), r.to_string(), z.to_string()]).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Smallest integer local time that is ≥ v.
fn level_threshold(v: f64) -> u64 {
    assert!(v >= 0.0 && v.is_finite(), "level threshold must be finite and >= 0");
    v.ceil() as u64
}

/// Streaming inf_z γ_v^z: reports the first jump time at which the level
/// just left has accumulated local time ⌈v⌉.
#[derive(Clone, Debug)]
pub struct LevelClock {
    need: u64,
    counts: BTreeMap<i64, u64>,
    last: Option<i64>,
    extent: Option<(i64, i64)>,
}

impl LevelClock {
    pub fn new(v: f64) -> Self {
        LevelClock { need: level_threshold(v), counts: BTreeMap::new(), last: None, extent: None }
    }

    /// Feed Z_t; returns Some(t) when t = inf_z γ_v^z.
    #[inline]
    pub fn observe(&mut self, t: u64, z: i64) -> Option<u64> {
        if self.need == 0 {
            return Some(0);
        }
        match self.last {
            Some(prev) if prev == z => None,
            prev => {
                self.last = Some(z);
                self.extent = Some(match self.extent {
                    None => (z, z),
                    Some((lo, hi)) => (lo.min(z), hi.max(z)),
                });
                let prev = prev?;
                let c = self.counts.entry(prev).or_insert(0);
                *c += 1;
                (*c == self.need).then_some(t)
            }
        }
    }

    /// Vertical range visited so far.
    pub fn extent(&self) -> Option<(i64, i64)> {
        self.extent
    }
}

/// inf over all levels of γ_v^z along `run`.
pub fn min_gamma_level(run: &mut WalkRun, v: f64, budget: u64) -> Outcome {
    let mut clock = LevelClock::new(v);
    run.run_until(budget, |t, p| clock.observe(t, p[p.len() - 1]).is_some())
}

/// γ_v^z along `run`, streamed.
pub fn gamma_level(run: &mut WalkRun, v: f64, z: i64, budget: u64) -> Outcome {
    let need = level_threshold(v);
    if need == 0 {
        return Outcome::Stopped(run.time());
    }
    let mut last = None;
    let mut count = 0;
    run.run_until(budget, |_, p| {
        let w = p[p.len() - 1];
        if last == Some(w) {
            return false;
        }
        let hit = last == Some(z) && {
            count += 1;
            count == need
        };
        last = Some(w);
        hit
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    SeekLevel,
    SeekEdge,
    InBox,
}

/// Alternating times σ_k^z < τ_k^z together with the entrance times H_k^z,
/// each computed by its own recursion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcursionSchedule {
    pub z: i64,
    pub scales: Scales,
    pub sigma: Vec<u64>,
    pub tau: Vec<u64>,
    /// H_k^z.
    pub entrance: Vec<u64>,
    /// Exit of B̃(z) after H_k^z.
    pub exit_after_entrance: Vec<u64>,
    /// Σ_ℓ 1{Ẑ_ℓ = z, ρ_ℓ < τ_k^z} for each completed k.
    pub visits_before_tau: Vec<u64>,
    pub exhausted: bool,
}

impl ExcursionSchedule {
    /// Strict interleaving 0 < σ_0 < τ_0 < σ_1 < ….
    pub fn is_interleaved(&self) -> bool {
        if self.tau.len() > self.sigma.len() || self.sigma.len() > self.tau.len() + 1 {
            return false;
        }
        let mut prev = 0u64;
        let times = self.sigma.iter().zip(self.tau.iter().map(Some).chain(std::iter::repeat(None)));
        for (&s, t) in times {
            if s <= prev {
                return false;
            }
            prev = s;
            if let Some(&t) = t {
                if t <= prev {
                    return false;
                }
                prev = t;
            }
        }
        true
    }

    /// τ_k^z = T_{B̃(z)}∘θ_{H_k^z} + H_k^z on every completed k.
    pub fn entrance_identity_holds(&self) -> bool {
        self.tau.iter().zip(&self.exit_after_entrance).all(|(a, b)| a == b)
    }

    /// CSV rows k, sigma, tau.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "sigma", "tau"]).map_err(csv_err)?;
        for (k, (s, t)) in self.sigma.iter().zip(&self.tau).enumerate() {
            out.write_record([k.to_string(), s.to_string(), t.to_string()]).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Streaming construction of [`ExcursionSchedule`] from Z_t.
#[derive(Clone, Debug)]
struct ScheduleTracker {
    z: i64,
    scales: Scales,
    phase: Phase,
    entrance_phase: Phase,
    last: Option<i64>,
    visits: u64,
    out: ExcursionSchedule,
}

impl ScheduleTracker {
    fn new(z: i64, scales: Scales) -> Self {
        ScheduleTracker {
            z,
            scales,
            phase: Phase::SeekLevel,
            entrance_phase: Phase::SeekLevel,
            last: None,
            visits: 0,
            out: ExcursionSchedule {
                z,
                scales,
                sigma: Vec::new(),
                tau: Vec::new(),
                entrance: Vec::new(),
                exit_after_entrance: Vec::new(),
                visits_before_tau: Vec::new(),
                exhausted: false,
            },
        }
    }

    fn observe(&mut self, t: u64, z: i64) {
        let off = z - self.z;
        // A new skeleton point at level z is counted before any τ at time t,
        // which cannot coincide with it since h ≥ 1.
        if self.last != Some(z) {
            self.last = Some(z);
            if off == 0 {
                self.visits += 1;
            }
        }
        // σ_k: first reach of |off| = r after hitting the level; τ_k: next exit of |off| < h.
        loop {
            match self.phase {
                Phase::SeekLevel if off == 0 => self.phase = Phase::SeekEdge,
                Phase::SeekEdge if off.abs() == self.scales.r => {
                    self.out.sigma.push(t);
                    self.phase = Phase::InBox;
                }
                Phase::InBox if off.abs() >= self.scales.h => {
                    self.out.tau.push(t);
                    self.out.visits_before_tau.push(self.visits);
                    self.phase = Phase::SeekLevel;
                }
                _ => break,
            }
        }
        // Entrance times H_k into the level, each followed by the exit from the box.
        loop {
            match self.entrance_phase {
                Phase::SeekLevel if off == 0 => {
                    self.out.entrance.push(t);
                    self.entrance_phase = Phase::InBox;
                }
                Phase::InBox if off.abs() >= self.scales.h => {
                    self.out.exit_after_entrance.push(t);
                    self.entrance_phase = Phase::SeekLevel;
                }
                _ => break,
            }
        }
    }
}

/// Runs the walk until τ_{count−1}^z and returns the schedule. Budget
/// exhaustion sets `exhausted` and keeps what was completed.
pub fn excursion_schedule(
    run: &mut WalkRun,
    z: i64,
    scales: Scales,
    count: usize,
    budget: u64,
) -> Result<ExcursionSchedule> {
    if !run.geometry().is_cylinder() {
        return Err(Error::InvalidGeometry("excursion schedules live on the cylinder".into()));
    }
    let mut tracker = ScheduleTracker::new(z, scales);
    let outcome = run.run_until(budget, |t, p| {
        tracker.observe(t, p[p.len() - 1]);
        tracker.out.tau.len() >= count
    });
    tracker.out.exhausted = !outcome.is_stopped();
    Ok(tracker.out)
}

/// Samples of Σ_ℓ 1{Ẑ_ℓ = z, ρ_ℓ < τ_k^z} under P_0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VisitCounts {
    pub z: i64,
    pub k: usize,
    pub scales: Scales,
    pub values: Vec<u64>,
    pub censored: u64,
}

impl VisitCounts {
    /// χ² test of the uncensored values against the sum of k + 1
    /// independent geometric laws on {1, 2, ...} with success probability 1/h.
    pub fn chi_square(&self, h: i64) -> ChiSquareTest {
        let max = self.values.iter().copied().max().unwrap_or(0) as usize;
        let mut counts = vec![0u64; max + 1];
        for &v in &self.values {
            counts[v as usize] += 1;
        }
        let p = 1.0 / h as f64;
        let probs: Vec<f64> =
            (0..=max as u64).map(|j| geometric_sum_pmf(j, self.k as u64 + 1, p)).collect();
        chi_square_gof(&counts, &probs, 5.0)
    }
}

/// χ² test of `count` increments ρ_{k+1} − ρ_k of one walk from the origin
/// against the geometric law with success probability 1/(d+1).
pub fn rho_increment_test(g: &Geometry, count: usize, seed: u64) -> Result<ChiSquareTest> {
    let d = g.torus_dim();
    if !g.is_cylinder() {
        return Err(Error::InvalidGeometry("the skeleton lives on the cylinder".into()));
    }
    let mut run = WalkRun::new(*g, g.origin(), seed)?;
    let mut rec = SkeletonRecord::default();
    run.run_until(u64::MAX, |t, p| {
        rec.observe(t, p[d]);
        rec.len() > count
    });
    let inc = rec.increments();
    let max = inc.iter().copied().max().unwrap_or(1) as usize;
    let mut observed = vec![0u64; max];
    for &i in &inc[..count] {
        observed[i as usize - 1] += 1;
    }
    let probs: Vec<f64> = (1..=max as u64).map(|k| geometric_pmf(k, 1.0 / (d + 1) as f64)).collect();
    Ok(chi_square_gof(&observed, &probs, 5.0))
}

/// Runs `samples` walks from the origin until τ_k^z. A run is censored when
/// a segment spent seeking level z (before H_0^z or between τ_m^z and
/// H_{m+1}^z) exceeds `seek_cap` steps. Those segments carry no visits to z
/// and, by the strong Markov property, are independent of the counts, so
/// censoring leaves the law of the uncensored values unchanged.
pub fn level_visit_counts(
    g: &Geometry,
    z: i64,
    scales: Scales,
    k: usize,
    samples: u64,
    seek_cap: u64,
    seed: u64,
) -> Result<VisitCounts> {
    if !g.is_cylinder() {
        return Err(Error::InvalidGeometry("excursion schedules live on the cylinder".into()));
    }
    let outcomes: Vec<Option<u64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut run = WalkRun::new(*g, g.origin(), child_seed(seed, i)).expect("origin");
            let mut tracker = ScheduleTracker::new(z, scales);
            let mut seek_start = 0u64;
            let mut censored = false;
            run.run_until(u64::MAX, |t, p| {
                let before = tracker.out.tau.len();
                tracker.observe(t, p[p.len() - 1]);
                if tracker.out.tau.len() > before {
                    seek_start = t;
                }
                if tracker.entrance_phase == Phase::SeekLevel && t - seek_start > seek_cap {
                    censored = true;
                    return true;
                }
                tracker.out.tau.len() > k
            });
            (!censored).then(|| tracker.out.visits_before_tau[k])
        })
        .collect();
    let censored = outcomes.iter().filter(|o| o.is_none()).count() as u64;
    Ok(VisitCounts { z, k, scales, values: outcomes.into_iter().flatten().collect(), censored })
}

/// Start drawn from q, the uniform law on T × {z − r, z + r}.
pub fn sample_q(g: &Geometry, z: i64, scales: Scales, rng: &mut impl Rng) -> Point {
    let n = g.side().unwrap_or(1) as i64;
    let mut p: Vec<i64> = (0..g.torus_dim()).map(|_| rng.random_range(0..n)).collect();
    p.push(if rng.random_bool(0.5) { z + scales.r } else { z - scales.r });
    Point(p)
}

/// One excursion started from q at level z and stopped on exiting B̃(z).
pub fn iid_excursion(
    g: &Geometry,
    z: i64,
    scales: Scales,
    rng: &mut StreamRng,
) -> Result<Vec<Point>> {
    if !g.is_cylinder() {
        return Err(Error::InvalidGeometry("excursions live on the cylinder".into()));
    }
    let start = sample_q(g, z, scales, rng);
    let mut run = WalkRun::new(*g, start, 0)?;
    run.rng = rng.clone();
    let (path, _) = run.path(u64::MAX, |_, p| (p[p.len() - 1] - z).abs() >= scales.h);
    *rng = run.rng;
    Ok(path)
}

/// Empirical entrance law of i.i.d. excursions at level 0 into K ⊆ B̃:
/// counts of X_{H_K} over `count` excursions, in the order of `k`.
pub fn excursion_entrance_counts(
    g: &Geometry,
    k: &PointSet,
    scales: Scales,
    count: u64,
    seed: u64,
) -> Result<Vec<u64>> {
    if !g.is_cylinder() {
        return Err(Error::InvalidGeometry("excursions live on the cylinder".into()));
    }
    let index: BTreeMap<&Point, usize> = k.iter().enumerate().map(|(i, p)| (p, i)).collect();
    const CHUNK: u64 = 4096;
    let chunks = count.div_ceil(CHUNK);
    let partial: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<u64>> {
            let mut rng = stream(child_seed(seed, c));
            let mut hits = vec![0u64; k.len()];
            for _ in 0..CHUNK.min(count - c * CHUNK) {
                let start = sample_q(g, 0, scales, &mut rng);
                let mut run = WalkRun::new(*g, start, 0)?;
                std::mem::swap(&mut run.rng, &mut rng);
                let mut found = None;
                run.run_until(u64::MAX, |_, p| {
                    if k.contains(p) {
                        found = Some(Point(p.to_vec()));
                        return true;
                    }
                    p[p.len() - 1].abs() >= scales.h
                });
                std::mem::swap(&mut run.rng, &mut rng);
                if let Some(x) = found {
                    hits[index[&x]] += 1;
                }
            }
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    let mut hits = vec![0u64; k.len()];
    for part in partial {
        for (a, b) in hits.iter_mut().zip(part) {
            *a += b;
        }
    }
    Ok(hits)
}

/// How the law of X_σ is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TvMethod {
    /// Direct simulation of the walk until σ.
    Mc,
    /// Exact continuous-time torus heat kernel averaged over samples of the
    /// vertical stopping time σ̄.
    TorusKernel,
}

/// Estimate of the law of X_σ (σ for level 0) and its total-variation
/// distance to q.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TvEstimate {
    pub method: TvMethod,
    pub start: Vec<i64>,
    pub tv: f64,
    /// ½ Σ_x (standard error of the law at x); the scale below which `tv`
    /// cannot be resolved.
    pub noise_floor: f64,
    pub samples: u64,
    pub censored: u64,
    /// Law on T × {−r, r}: index level·N^d + torus index (row-major y).
    pub law: Vec<f64>,
}

fn torus_index(y: &[i64], n: i64) -> usize {
    y.iter().fold(0usize, |acc, &c| acc * n as usize + c as usize)
}

/// Total variation between the law of X_σ under P_{x′} and q. Any start is
/// accepted; the homogenization bound concerns x′ ∉ B̃.
pub fn homogenization_tv(
    start: &[i64],
    g: &Geometry,
    scales: Scales,
    method: TvMethod,
    samples: u64,
    seed: u64,
) -> Result<TvEstimate> {
    let (d, n) = match *g {
        Geometry::Cylinder { d, n } => (d, n as i64),
        Geometry::FullLattice { .. } => {
            return Err(Error::InvalidGeometry("homogenization needs the cylinder".into()))
        }
    };
    g.check_point(start)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let cells = g.torus_size();
    const CHUNK: u64 = 1024;
    let chunks = samples.div_ceil(CHUNK);
    // Per chunk: Σ law, Σ law², censored count.
    let parts: Vec<(Vec<f64>, Vec<f64>, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(child_seed(seed, c));
            let mut sum = vec![0.0; 2 * cells];
            let mut sq = vec![0.0; 2 * cells];
            let mut censored = 0;
            let kernel = TorusKernel::new(d, n);
            for _ in 0..CHUNK.min(samples - c * CHUNK) {
                match method {
                    TvMethod::Mc => {
                        match sample_x_sigma(g, start, scales, &mut rng) {
                            Some((y, up)) => {
                                let i = usize::from(up) * cells + torus_index(&y, n);
                                sum[i] += 1.0;
                                sq[i] += 1.0;
                            }
                            None => censored += 1,
                        }
                    }
                    TvMethod::TorusKernel => {
                        let t = sample_sigma_bar(start[d], scales, &kernel, &mut rng);
                        let mu = kernel.law(&start[..d], t);
                        for (j, &m) in mu.iter().enumerate() {
                            for level in 0..2 {
                                sum[level * cells + j] += 0.5 * m;
                                sq[level * cells + j] += 0.25 * m * m;
                            }
                        }
                    }
                }
            }
            (sum, sq, censored)
        })
        .collect();
    let mut sum = vec![0.0; 2 * cells];
    let mut sq = vec![0.0; 2 * cells];
    let mut censored = 0;
    for (s, q, c) in parts {
        for i in 0..2 * cells {
            sum[i] += s[i];
            sq[i] += q[i];
        }
        censored += c;
    }
    let used = (samples - censored) as f64;
    if used == 0.0 {
        return Err(Error::InvalidParameter("every sample was censored".into()));
    }
    let q = 1.0 / (2 * cells) as f64;
    let law: Vec<f64> = sum.iter().map(|s| s / used).collect();
    let tv = 0.5 * law.iter().map(|p| (p - q).abs()).sum::<f64>();
    let noise_floor = 0.5
        * law
            .iter()
            .zip(&sq)
            .map(|(&m, &s2)| ((s2 / used - m * m).max(0.0) / used).sqrt())
            .sum::<f64>();
    Ok(TvEstimate { method, start: start.to_vec(), tv, noise_floor, samples, censored, law })
}

/// Step cap for the direct simulation of X_σ; longer runs are censored.
fn sigma_budget(g: &Geometry, scales: Scales) -> u64 {
    (4096 * (scales.h as u64).pow(2) * g.dim() as u64).max(default_budget(g))
}

/// X_σ for level 0 as (y, landed on +r), or None when censored.
fn sample_x_sigma(
    g: &Geometry,
    start: &[i64],
    scales: Scales,
    rng: &mut StreamRng,
) -> Option<(Vec<i64>, bool)> {
    let d = g.torus_dim();
    let mut p = start.to_vec();
    let mut seen_level = false;
    let deg = g.degree();
    for _ in 0..=sigma_budget(g, scales) {
        let z = p[d];
        seen_level |= z == 0;
        if seen_level && z.abs() == scales.r {
            return Some((p[..d].to_vec(), z > 0));
        }
        g.apply(&mut p, rng.random_range(0..deg));
    }
    None
}

/// Continuous-time heat kernel of the torus walk with unit rate per move.
struct TorusKernel {
    d: usize,
    n: i64,
    /// Eigenvalues 2 − 2cos(2πk/N).
    lambda: Vec<f64>,
    /// cos(2πkΔ/N) indexed [k][Δ].
    cosines: Vec<Vec<f64>>,
}

impl TorusKernel {
    fn new(d: usize, n: i64) -> Self {
        let w = 2.0 * PI / n as f64;
        let lambda = (0..n).map(|k| 2.0 - 2.0 * (w * k as f64).cos()).collect();
        let cosines =
            (0..n).map(|k| (0..n).map(|j| (w * (k * j) as f64).cos()).collect()).collect();
        TorusKernel { d, n, lambda, cosines }
    }

    /// Smallest nonzero eigenvalue.
    fn gap(&self) -> f64 {
        self.lambda.iter().skip(1).copied().fold(f64::INFINITY, f64::min)
    }

    /// One-coordinate kernel p_t(Δ).
    fn line(&self, t: f64) -> Vec<f64> {
        let nf = self.n as f64;
        let decay: Vec<f64> = self.lambda.iter().map(|l| (-t * l).exp()).collect();
        (0..self.n as usize)
            .map(|j| {
                let s: f64 = (0..self.n as usize).map(|k| self.cosines[k][j] * decay[k]).sum();
                (s / nf).max(0.0)
            })
            .collect()
    }

    /// Law of Ȳ_t from y′ over the torus, row-major; t = ∞ is uniform.
    fn law(&self, from: &[i64], t: f64) -> Vec<f64> {
        let size = (self.n as usize).pow(self.d as u32);
        if t.is_infinite() {
            return vec![1.0 / size as f64; size];
        }
        let line = self.line(t);
        let n = self.n;
        (0..size)
            .map(|mut idx| {
                let mut prod = 1.0;
                for a in (0..self.d).rev() {
                    let y = (idx as i64) % n;
                    idx /= n as usize;
                    prod *= line[(y - from[a]).rem_euclid(n) as usize];
                }
                prod
            })
            .collect()
    }
}

/// σ̄ for the rate-2 continuous-time vertical walk from z′: the number of
/// jumps J comes from the discrete skeleton and σ̄ ~ Gamma(J, 1/2). Once J is
/// so large that the kernel is uniform to 1e-16 at the Gamma lower tail, the
/// sample is returned as ∞.
fn sample_sigma_bar(z0: i64, scales: Scales, kernel: &TorusKernel, rng: &mut StreamRng) -> f64 {
    let cap = {
        // t_lo ≈ (J − 8√J)/2 must satisfy d·N·e^{−gap·t_lo} < 1e-16.
        let need = ((kernel.d as f64 * kernel.n as f64).ln() + 16.0 * 10f64.ln()) / kernel.gap();
        let mut j = 1u64;
        while (j as f64 - 8.0 * (j as f64).sqrt()) / 2.0 < need {
            j *= 2;
        }
        j
    };
    let mut z = z0;
    let mut seen_level = false;
    let mut jumps = 0u64;
    loop {
        seen_level |= z == 0;
        if seen_level && z.abs() == scales.r {
            break;
        }
        if jumps >= cap {
            return f64::INFINITY;
        }
        z += if rng.random_bool(0.5) { 1 } else { -1 };
        jumps += 1;
    }
    if jumps == 0 {
        return 0.0;
    }
    Gamma::new(jumps as f64, 0.5).expect("positive shape").sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{
        entrance_law, equilibrium_exact, green_potential, open_slab, DiscreteMeasure,
    };
    use crate::potential::solver::SolverConfig;
    use proptest::prelude::*;

    fn cyl(d: usize, n: u32) -> Geometry {
        Geometry::cylinder(d, n).unwrap()
    }

    #[test]
    fn scales_follow_the_displayed_definition() {
        assert_eq!(Scales::for_side(3), Scales { r: 3, h: 9 });
        assert_eq!(Scales::for_side(5), Scales { r: 5, h: 22 });
        assert_eq!(Scales::for_side(1), Scales { r: 1, h: 2 });
        assert!(Scales::log_squared(3).is_err());
        assert_eq!(Scales::log_squared(9).unwrap().h, 43);
    }

    #[test]
    fn exit_from_outside_is_immediate() {
        let g = cyl(2, 5);
        let u = open_slab(&g, 0, 3);
        let mut run = WalkRun::new(g, Point(vec![0, 0, 7]), 1).unwrap();
        assert_eq!(run.exit(&u, 10), Outcome::Stopped(0));
    }

    #[test]
    fn first_return_on_the_line_is_even() {
        let g = Geometry::lattice(1).unwrap();
        let origin: PointSet = [Point(vec![0])].into_iter().collect();
        for seed in 0..200 {
            let mut run = WalkRun::new(g, Point(vec![0]), seed).unwrap();
            if let Outcome::Stopped(t) = run.return_to(&origin, 1 << 20) {
                assert!(t >= 2 && t % 2 == 0);
            }
        }
    }

    #[test]
    fn budget_exhaustion_is_tagged() {
        let g = Geometry::lattice(3).unwrap();
        let mut run = WalkRun::new(g, g.origin(), 3).unwrap();
        assert_eq!(run.run_until(50, |_, _| false), Outcome::Exhausted(50));
        assert_eq!(run.time(), 50);
    }

    #[test]
    fn gamblers_ruin_components() {
        // Layout b̃ = −9 < b = −3 < a = 3 < ã = 9 on Z, start z = 0.
        let g = Geometry::lattice(1).unwrap();
        let (h, r, z) = (9i64, 3i64, 0i64);
        let runs = 100_000u64;
        let mut hits_a = 0u64;
        let mut hits_b = 0u64;
        for i in 0..runs {
            let mut run = WalkRun::new(g, Point(vec![z]), child_seed(11, i)).unwrap();
            let mut a = false;
            let mut b = false;
            run.run_until(u64::MAX, |_, p| {
                a |= p[0] == r;
                b |= p[0] == -r;
                p[0].abs() >= h
            });
            hits_a += u64::from(a);
            hits_b += u64::from(b);
        }
        let pa = (z + h) as f64 / (h + r) as f64;
        let pb = (h - z) as f64 / (h + r) as f64;
        for (k, p) in [(hits_a, pa), (hits_b, pb)] {
            let se = (p * (1.0 - p) / runs as f64).sqrt();
            assert!((k as f64 / runs as f64 - p).abs() < 3.0 * se, "{k} vs {p}");
        }
        assert!((pa + pb - 2.0 * h as f64 / (h + r) as f64).abs() < 1e-15);
    }

    #[test]
    fn hand_skeleton() {
        let rec = SkeletonRecord::from_vertical_path(&[0, 1, 0, 1]);
        assert_eq!(rec.rho(), &[0, 1, 2, 3]);
        assert_eq!(rec.local_time(4, 1), 2);
        assert_eq!(rec.local_time(4, 0), 2);
        assert_eq!(rec.local_time(3, 1), 1);
        let lazy = SkeletonRecord::from_vertical_path(&[0, 0, 1, 1, 1, 0]);
        assert_eq!(lazy.rho(), &[0, 2, 5]);
        assert_eq!(lazy.zhat(), &[0, 1, 0]);
        assert_eq!(lazy.gamma_level(0.0, 4), Outcome::Stopped(0));
        // The visit at ρ_0 is counted from k = 1 on.
        assert_eq!(lazy.gamma_level(1.0, 0), Outcome::Stopped(2));
        assert_eq!(lazy.gamma_level(0.5, 1), Outcome::Stopped(5));
        assert!(matches!(lazy.gamma_level(2.0, 0), Outcome::Exhausted(_)));
    }

    #[test]
    fn frozen_vertical_component_has_trivial_skeleton() {
        let rec = SkeletonRecord::from_vertical_path(&[4; 17]);
        assert_eq!(rec.rho(), &[0]);
        assert_eq!(rec.local_times(1).get(&4), Some(&1));
    }

    #[test]
    fn rho_increments_are_geometric() {
        let g = cyl(2, 5);
        let mut run = WalkRun::new(g, g.origin(), 7).unwrap();
        let mut rec = SkeletonRecord::default();
        run.run_until(u64::MAX, |t, p| {
            rec.observe(t, p[2]);
            rec.len() > 100_000
        });
        assert!(rec.check_invariants());
        let inc = rec.increments();
        let max = *inc.iter().max().unwrap() as usize;
        let mut observed = vec![0u64; max];
        for &i in &inc {
            observed[i as usize - 1] += 1;
        }
        let probs: Vec<f64> = (1..=max as u64).map(|k| geometric_pmf(k, 1.0 / 3.0)).collect();
        let test = chi_square_gof(&observed, &probs, 5.0);
        assert!(test.p_value > 0.01, "{test:?}");
        assert!(rho_increment_test(&cyl(3, 4), 50_000, 8).unwrap().p_value > 0.01);
        assert!(rho_increment_test(&Geometry::lattice(3).unwrap(), 10, 8).is_err());
    }

    #[test]
    fn gamma_is_monotone_and_streaming_agrees() {
        let g = cyl(2, 3);
        for seed in 0..1000u64 {
            let mut run = WalkRun::new(g, g.origin(), seed).unwrap();
            let rec = SkeletonRecord::record(&mut run, 3000);
            assert!(rec.check_invariants());
            let mut prev = 0;
            for v in 1..=50 {
                let t = match rec.gamma_level(v as f64, 0) {
                    Outcome::Stopped(t) => t,
                    Outcome::Exhausted(_) => u64::MAX,
                };
                assert!(t >= prev);
                prev = t;
            }
            if seed < 50 {
                let v = 7.0;
                let mut fresh = WalkRun::new(g, g.origin(), seed).unwrap();
                let streamed = gamma_level(&mut fresh, v, 1, 3000);
                match rec.gamma_level(v, 1) {
                    Outcome::Stopped(t) => assert_eq!(streamed, Outcome::Stopped(t)),
                    Outcome::Exhausted(_) => assert!(!streamed.is_stopped() || streamed.time() > Some(rec.rho()[rec.len() - 1])),
                }
                let mut fresh = WalkRun::new(g, g.origin(), seed).unwrap();
                let min = min_gamma_level(&mut fresh, v, 3000);
                let levels: Vec<i64> = rec.local_times(rec.len()).keys().copied().collect();
                let best = levels.iter().filter_map(|&z| rec.gamma_level(v, z).time()).min();
                if let Some(b) = best {
                    assert_eq!(min, Outcome::Stopped(b));
                }
            }
        }
    }

    #[test]
    fn straight_climb_gives_sigma_r() {
        let g = cyl(2, 3);
        let s = Scales::for_side(3);
        // Rejection: keep seeds whose first r steps are all upward moves.
        let mut found = 0;
        for seed in 0..2_000_000u64 {
            let mut run = WalkRun::new(g, Point(vec![1, 2, 0]), seed).unwrap();
            let ok = (0..s.r).all(|_| run.step() == 4);
            if !ok {
                continue;
            }
            let mut run = WalkRun::new(g, Point(vec![1, 2, 0]), seed).unwrap();
            let sched = excursion_schedule(&mut run, 0, s, 1, 1 << 24).unwrap();
            assert_eq!(sched.sigma[0], s.r as u64);
            found += 1;
            if found == 3 {
                break;
            }
        }
        assert_eq!(found, 3);
    }

    #[test]
    fn schedules_interleave_and_match_entrance_recursion() {
        let g = cyl(2, 3);
        let s = Scales::for_side(3);
        let mut complete = 0;
        for seed in 0..1000u64 {
            let z = (seed % 7) as i64 - 3;
            let mut run = WalkRun::new(g, g.origin(), seed).unwrap();
            // Returns to a level are heavy tailed, so a few runs may exhaust.
            let sched = excursion_schedule(&mut run, z, s, 4, 1 << 24).unwrap();
            assert!(sched.is_interleaved());
            assert!(sched.entrance_identity_holds());
            assert!(sched.exit_after_entrance.len() >= sched.tau.len());
            if !sched.exhausted {
                assert_eq!(sched.tau.len(), 4);
                complete += 1;
            }
        }
        assert!(complete > 950);
    }

    fn visit_law_p(scales: Scales, target_h: i64, k: usize, samples: u64, seed: u64) -> f64 {
        let vc = level_visit_counts(&cyl(2, 3), 0, scales, k, samples, 20_000, seed).unwrap();
        assert!(vc.censored < samples / 5);
        vc.chi_square(target_h).p_value
    }

    #[test]
    fn visits_before_tau_are_negative_binomial() {
        let s = Scales::for_side(3);
        assert!(visit_law_p(s, s.h, 2, 20_000, 5) > 0.01);
        // Mutating h by one is detected.
        let tampered = Scales::new(s.r, s.h + 1).unwrap();
        assert!(visit_law_p(tampered, s.h, 2, 20_000, 5) < 0.01);
    }

    #[test]
    fn visits_off_the_start_level() {
        let g = cyl(2, 3);
        let s = Scales::for_side(3);
        let vc = level_visit_counts(&g, 4, s, 1, 5000, 20_000, 9).unwrap();
        let mean = vc.values.iter().sum::<u64>() as f64 / vc.values.len() as f64;
        // Sum of two geometrics with mean h each.
        let se = (2.0 * (s.h * (s.h - 1)) as f64 / vc.values.len() as f64).sqrt();
        assert!((mean - 2.0 * s.h as f64).abs() < 4.0 * se, "{mean}");
    }

    #[test]
    fn q_is_uniform_on_two_levels() {
        let g = cyl(2, 3);
        let s = Scales::for_side(3);
        let q = DiscreteMeasure::level_uniform(&g, &[-s.r, s.r]).unwrap();
        assert_eq!(q.len(), 18);
        assert!((q.total_mass() - 1.0).abs() < 1e-15);
        assert!(q.weights().iter().all(|&w| (w - 1.0 / 18.0).abs() < 1e-15));
        let mut rng = stream(3);
        for _ in 0..1000 {
            let p = sample_q(&g, 5, s, &mut rng);
            assert!(q.weight_of(&[p.0[0], p.0[1], p.0[2] - 5]) > 0.0);
        }
    }

    #[test]
    fn excursions_stop_on_exit() {
        let g = cyl(2, 3);
        let s = Scales::for_side(3);
        let mut rng = stream(9);
        for _ in 0..200 {
            let path = iid_excursion(&g, 2, s, &mut rng).unwrap();
            let last = path.last().unwrap();
            assert_eq!((last.z() - 2).abs(), s.h);
            assert!(path[..path.len() - 1].iter().all(|p| (p.z() - 2).abs() < s.h));
            assert!(path.windows(2).all(|w| g.adjacent(&w[0].0, &w[1].0)));
            assert_eq!((path[0].z() - 2).abs(), s.r);
        }
    }

    #[test]
    fn green_sum_is_constant_on_the_inner_box() {
        for n in [3u32, 5] {
            let g = cyl(2, n);
            let s = Scales::for_side(n);
            let u = open_slab(&g, 0, s.h);
            let q = DiscreteMeasure::level_uniform(&g, &[-s.r, s.r]).unwrap();
            let (domain, v) = green_potential(&q, &u, &g, &SolverConfig::default()).unwrap();
            let want = s.green_sum_constant(&g);
            for (i, p) in domain.points().iter().enumerate() {
                if p.z().abs() <= s.r {
                    assert!((v[i] - want).abs() < 1e-10, "{} vs {want}", v[i]);
                }
            }
        }
    }

    #[test]
    fn excursion_entrance_matches_equilibrium() {
        let g = cyl(2, 3);
        let s = Scales::for_side(3);
        let k: PointSet =
            [vec![0, 0, 0], vec![1, 0, 1], vec![2, 2, -2]].into_iter().map(Point).collect();
        let u = open_slab(&g, 0, s.h);
        let cfg = SolverConfig::default();
        let e = equilibrium_exact(&k, &u, &g, &cfg).unwrap();
        let q = DiscreteMeasure::level_uniform(&g, &[-s.r, s.r]).unwrap();
        let exact = entrance_law(&q, &k, &u, &g, &cfg).unwrap();
        let c = s.green_sum_constant(&g);
        let runs = 100_000;
        let hits = excursion_entrance_counts(&g, &k, s, runs, 17).unwrap();
        for (i, x) in k.iter().enumerate() {
            let p = c * e.measure.weight_of(&x.0);
            assert!((exact.weight_of(&x.0) - p).abs() < 1e-10);
            let se = (p * (1.0 - p) / runs as f64).sqrt();
            let got = hits[i] as f64 / runs as f64;
            assert!((got - p).abs() < 3.0 * se, "{x:?}: {got} vs {p}");
        }
    }

    #[test]
    fn torus_kernel_is_a_probability_law() {
        let k = TorusKernel::new(2, 4);
        for t in [0.0, 0.3, 2.0, 50.0] {
            let mu = k.law(&[1, 3], t);
            assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mu = k.law(&[1, 3], 0.0);
        assert!((mu[torus_index(&[1, 3], 4)] - 1.0).abs() < 1e-12);
        // Short time: one jump to a neighbour with probability t e^{−4t}.
        let t = 0.01;
        let mu = k.law(&[0, 0], t);
        assert!((mu[torus_index(&[0, 1], 4)] - t * (-4.0 * t).exp()).abs() < 1e-5);
    }

    #[test]
    fn homogenization_methods_agree_on_a_nontrivial_law() {
        // From inside B̃ the law of X_σ is far from q and both methods see it.
        let g = cyl(1, 7);
        let s = Scales::new(1, 3).unwrap();
        let x = [0, 0];
        let mc = homogenization_tv(&x, &g, s, TvMethod::Mc, 40_000, 1).unwrap();
        let kern = homogenization_tv(&x, &g, s, TvMethod::TorusKernel, 40_000, 2).unwrap();
        assert!(kern.tv > 0.1);
        let slack = 3.0 * (mc.noise_floor + kern.noise_floor);
        assert!((mc.tv - kern.tv).abs() < slack, "{} vs {} ± {slack}", mc.tv, kern.tv);
        let total: u64 = 40_000 - mc.censored;
        let observed: Vec<u64> = mc.law.iter().map(|p| (p * total as f64).round() as u64).collect();
        let test = chi_square_gof(&observed, &kern.law, 5.0);
        assert!(test.p_value > 0.001, "{test:?}");
    }

    #[test]
    fn homogenization_outside_box() {
        let g = cyl(2, 3);
        let s = Scales::for_side(3);
        let above = [1, 0, s.h];
        let below = [1, 0, -s.h];
        let mc = homogenization_tv(&above, &g, s, TvMethod::Mc, 20_000, 4).unwrap();
        let kern = homogenization_tv(&above, &g, s, TvMethod::TorusKernel, 20_000, 5).unwrap();
        let mirror = homogenization_tv(&below, &g, s, TvMethod::TorusKernel, 20_000, 6).unwrap();
        // Both are pure noise around a TV far below resolution.
        assert!(mc.tv < 3.0 * mc.noise_floor + kern.tv);
        assert!((mirror.tv - kern.tv).abs() < 3.0 * (mirror.noise_floor + kern.noise_floor));
        let trend: Vec<f64> = [3u32, 5, 9]
            .iter()
            .map(|&n| {
                let g = cyl(2, n);
                let s = Scales::for_side(n);
                homogenization_tv(&[0, 0, s.h], &g, s, TvMethod::TorusKernel, 4000, 8).unwrap().tv
            })
            .collect();
        // Beyond N = 3 the distance is at the rounding floor.
        assert!(trend[1] < trend[0], "{trend:?}");
        assert!(trend.windows(2).all(|w| w[1] < w[0] || w[1] < 1e-12), "{trend:?}");
    }

    #[test]
    fn csv_exports() {
        let rec = SkeletonRecord::from_vertical_path(&[0, 1, 1, 2]);
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,rho,zhat\n0,0,0\n1,1,1\n2,3,2\n");
        let g = cyl(2, 3);
        let mut run = WalkRun::new(g, g.origin(), 2).unwrap();
        let sched = excursion_schedule(&mut run, 0, Scales::for_side(3), 2, 1 << 24).unwrap();
        let mut buf = Vec::new();
        sched.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        let json = serde_json::to_string(&run.manifest(Some(Outcome::Stopped(run.time())))).unwrap();
        assert!(json.contains("\"outcome\":\"stopped\""));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn paths_are_nearest_neighbour(seed in any::<u64>(), d in 1usize..4, n in 1u32..6) {
            let g = cyl(d, n);
            let start = g.origin();
            let mut run = WalkRun::new(g, start.clone(), seed).unwrap();
            let (path, _) = run.path(500, |_, _| false);
            prop_assert_eq!(&path[0], &start);
            for w in path.windows(2) {
                prop_assert!(g.adjacency_multiplicity(&w[0].0, &w[1].0) > 0);
            }
            let rec = SkeletonRecord::from_vertical_path(
                &path.iter().map(Point::z).collect::<Vec<_>>());
            prop_assert!(rec.check_invariants());
            let total: u64 = rec.local_times(rec.len()).values().sum();
            prop_assert_eq!(total as usize, rec.len());
        }
    }
}
