//! Experiment configuration, seeding, persistence and the composite
//! experiments: the disconnection-versus-local-time trend, the tail
//! comparison of T_N/N^{2d} with ζ, and the identity verification suite.
//!
//! Every record carries the SHA-256 of the canonical JSON form of its
//! configuration. Rows depend only on the configuration and master seed, so
//! re-running reproduces them bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::disconnect::{disconnection_time_with, tn_distribution, TnDistribution};
use crate::interlace::{sample_clouds, CloudConfig};
use crate::lattice::{Geometry, Point, PointSet};
use crate::limitlaw::{zeta_laplace, zeta_mc_transform, zeta_tail};
use crate::percolation::{ustarstar_estimate, UStarStarEstimate, Z95};
use crate::potential::green::green_at_origin;
use crate::potential::solver::SolverConfig;
use crate::potential::{
    entrance_law, equilibrium_exact, green_potential, hitting_probability, open_slab, DiscreteMeasure,
};
use crate::rng::{replicate_seed, stream};
use crate::stats::wilson_interval;
use crate::walk::{level_visit_counts, rho_increment_test, LevelClock, Outcome, Scales, WalkRun};
use crate::{Error, Result};

/// Environment variable naming the output root.
pub const OUT_ENV: &str = "DCYL_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PercolationSettings {
    pub u_grid: Vec<f64>,
    pub scales: Vec<u64>,
    pub samples: u64,
    pub criterion_se: f64,
}

impl Default for PercolationSettings {
    fn default() -> Self {
        PercolationSettings {
            u_grid: vec![1.0, 2.0, 3.0, 3.5, 4.0, 4.5, 5.0, 6.0],
            scales: vec![2, 4, 8],
            samples: 200,
            criterion_se: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    /// Not part of the hash.
    pub output: Option<PathBuf>,
    pub d: usize,
    #[serde(rename = "N")]
    pub sides: Vec<u32>,
    /// Level u; estimated as the upper end of the u_** bracket when absent.
    pub u: Option<f64>,
    /// δ; 0.5·u when absent.
    pub delta: Option<f64>,
    pub replicates: u64,
    /// Walk budget in units of N^{2d}.
    pub budget_multiplier: u64,
    /// Tail comparison grid in units of the empirical median of T_N/N^{2d}.
    pub s_factors: Vec<f64>,
    /// Multipliers of û for the sensitivity sweep.
    pub u_sweep: Vec<f64>,
    pub percolation: PercolationSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: "theorem41".into(),
            seed: 1,
            output: None,
            d: 2,
            sides: vec![6, 10, 14],
            u: None,
            delta: None,
            replicates: 200,
            budget_multiplier: 64,
            s_factors: vec![0.5, 1.0, 2.0],
            u_sweep: vec![0.5, 0.75, 1.0, 1.25, 1.5],
            percolation: PercolationSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.d < 2 {
            return bad("d must be >= 2");
        }
        if self.sides.is_empty() || self.sides.iter().any(|&n| n < 1) {
            return bad("N must be a nonempty list of sides >= 1");
        }
        if self.replicates == 0 || self.budget_multiplier == 0 {
            return bad("replicates and budget_multiplier must be >= 1");
        }
        if self.u.is_some_and(|u| !(u > 0.0 && u.is_finite())) {
            return bad("u must be positive");
        }
        if self.delta.is_some_and(|d| !(d > 0.0 && d.is_finite())) {
            return bad("delta must be positive");
        }
        if self.s_factors.iter().chain(&self.u_sweep).any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("s_factors and u_sweep entries must be positive");
        }
        let p = &self.percolation;
        if p.scales.len() < 3 || p.scales.contains(&0) || p.u_grid.len() < 2 || p.samples == 0 {
            return bad("percolation needs >= 3 positive scales, >= 2 levels and >= 1 sample");
        }
        if p.u_grid.iter().any(|&u| !(u >= 0.0 && u.is_finite())) {
            return bad("percolation levels must be finite and >= 0");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    /// Output directory: the configured one, else $DCYL_OUT, else ./dcyl-out.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("dcyl-out"))
    }
}

/// Where the level u came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelSource {
    User,
    UstarstarUpper,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolvedLevel {
    pub u: f64,
    pub source: LevelSource,
    pub estimate: Option<UStarStarEstimate>,
}

/// The configured u, or the upper end of the u_** bracket in Z^{d+1}.
pub fn resolve_level(cfg: &ExperimentConfig) -> Result<ResolvedLevel> {
    if let Some(u) = cfg.u {
        return Ok(ResolvedLevel { u, source: LevelSource::User, estimate: None });
    }
    let p = &cfg.percolation;
    let g = Geometry::lattice(cfg.d + 1)?;
    let est = ustarstar_estimate(
        &p.u_grid,
        &p.scales,
        p.samples,
        p.criterion_se,
        &g,
        replicate_seed(cfg.seed, "ustarstar", 0),
    )?;
    Ok(ResolvedLevel { u: est.hi, source: LevelSource::UstarstarUpper, estimate: Some(est) })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord<R, S> {
    pub experiment: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub level: Option<ResolvedLevel>,
    pub rows: Vec<R>,
    pub summary: S,
    pub censored: u64,
    pub wall_clock_s: f64,
    pub versions: BTreeMap<String, String>,
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([("dcyl".to_string(), env!("CARGO_PKG_VERSION").to_string())])
}

impl<R: Serialize, S: Serialize> ResultRecord<R, S> {
    /// Writes `<stem>.csv` (rows) and `<stem>.json` (whole record) into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path).map_err(crate::limitlaw::csv_err)?;
        for r in &self.rows {
            w.serialize(r).map_err(crate::limitlaw::csv_err)?;
        }
        w.flush()?;
        let json_path = dir.join(format!("{stem}.json"));
        fs::write(&json_path, serde_json::to_vec_pretty(self)?)?;
        Ok((csv_path, json_path))
    }
}

/// Reads a record back from its JSON sidecar.
pub fn read_record<R: DeserializeOwned, S: DeserializeOwned>(path: &Path) -> Result<ResultRecord<R, S>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem41Row {
    pub config_hash: String,
    #[serde(rename = "N")]
    pub n: u32,
    pub replicate: u64,
    pub seed: u64,
    /// T_N, absent when the budget ran out first.
    pub t_n: Option<u64>,
    /// inf_z γ^z at the threshold, absent when not reached in the simulated time.
    pub inf_gamma: Option<u64>,
    /// 1{T_N > inf_z γ^z}, absent when censored.
    pub indicator: Option<bool>,
    pub censored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem41Point {
    #[serde(rename = "N")]
    pub n: u32,
    /// Local-time threshold N^d(u + δ)/(d + 1).
    pub threshold: f64,
    pub replicates: u64,
    pub events: u64,
    pub censored: u64,
    pub p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem41Summary {
    pub u: f64,
    pub delta: f64,
    pub points: Vec<Theorem41Point>,
    /// No later N has a 95% interval entirely above an earlier one.
    pub nonincreasing: bool,
}

/// One replicate: T_N and inf_z γ^z_v from the same walk. The clock sees
/// every simulated position, which covers [0, T_N]; a level not reached by
/// then has γ > T_N, so the indicator is exact.
pub fn theorem41_replicate(g: &Geometry, v: f64, budget: u64, seed: u64) -> Result<(Option<u64>, Option<u64>, Option<bool>)> {
    let d = g.torus_dim();
    let mut run = WalkRun::new(*g, g.origin(), seed)?;
    let mut clock = LevelClock::new(v);
    let mut inf_gamma = None;
    let (dt, _) = disconnection_time_with(&mut run, budget, |t, p| {
        if inf_gamma.is_none() {
            inf_gamma = clock.observe(t, p[d]);
        }
    })?;
    let (t_n, indicator) = match (dt.outcome, inf_gamma) {
        (Outcome::Stopped(t), Some(gamma)) => (Some(t), Some(t > gamma)),
        (Outcome::Stopped(t), None) => (Some(t), Some(false)),
        // T_N > budget ≥ the simulated time.
        (Outcome::Exhausted(_), Some(_)) => (None, Some(true)),
        (Outcome::Exhausted(_), None) => (None, None),
    };
    Ok((t_n, inf_gamma, indicator))
}

/// Probability of {T_N > inf_z γ^z_{N^d(u+δ)/(d+1)}} for each N.
pub fn run_theorem41(cfg: &ExperimentConfig) -> Result<ResultRecord<Theorem41Row, Theorem41Summary>> {
    cfg.validate()?;
    let started = Instant::now();
    let level = resolve_level(cfg)?;
    let u = level.u;
    let delta = cfg.delta.unwrap_or(0.5 * u);
    let hash = cfg.hash();
    let d = cfg.d;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &n in &cfg.sides {
        let g = Geometry::cylinder(d, n)?;
        let nd = (n as f64).powi(d as i32);
        let v = nd * (u + delta) / (d + 1) as f64;
        let budget = cfg.budget_multiplier.saturating_mul((g.torus_size() as u64).pow(2));
        let tag = format!("theorem41/N={n}");
        let out: Vec<Theorem41Row> = (0..cfg.replicates)
            .into_par_iter()
            .map(|i| {
                let seed = replicate_seed(cfg.seed, &tag, i);
                let (t_n, inf_gamma, indicator) = theorem41_replicate(&g, v, budget, seed)?;
                Ok(Theorem41Row {
                    config_hash: hash.clone(),
                    n,
                    replicate: i,
                    seed,
                    t_n,
                    inf_gamma,
                    indicator,
                    censored: indicator.is_none(),
                })
            })
            .collect::<Result<_>>()?;
        let known: Vec<bool> = out.iter().filter_map(|r| r.indicator).collect();
        let events = known.iter().filter(|&&b| b).count() as u64;
        let (ci_lo, ci_hi) = wilson_interval(events, known.len() as u64, Z95);
        points.push(Theorem41Point {
            n,
            threshold: v,
            replicates: cfg.replicates,
            events,
            censored: cfg.replicates - known.len() as u64,
            p: events as f64 / known.len().max(1) as f64,
            ci_lo,
            ci_hi,
        });
        rows.extend(out);
    }
    let nonincreasing =
        points.iter().enumerate().all(|(i, a)| points[i + 1..].iter().all(|b| b.ci_lo <= a.ci_hi));
    let censored = points.iter().map(|p| p.censored).sum();
    Ok(ResultRecord {
        experiment: "theorem41".into(),
        config_hash: hash,
        config: cfg.clone(),
        level: Some(level),
        rows,
        summary: Theorem41Summary { u, delta, points, nonincreasing },
        censored,
        wall_clock_s: started.elapsed().as_secs_f64(),
        versions: versions(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corollary46Row {
    pub config_hash: String,
    #[serde(rename = "N")]
    pub n: u32,
    /// û fed to ζ(û/√(d+1)).
    pub u_hat: f64,
    pub main: bool,
    pub s: f64,
    pub empirical: f64,
    pub mc_error: f64,
    pub analytic: f64,
    pub inversion_error: f64,
    /// empirical ≤ analytic + 3·mc_error.
    pub dominated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corollary46Point {
    #[serde(rename = "N")]
    pub n: u32,
    pub median: f64,
    pub censored: u64,
    /// Every s on the grid dominated at the main û.
    pub dominated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corollary46Summary {
    pub u_hat: f64,
    pub points: Vec<Corollary46Point>,
    /// Set when domination fails at the main û: the comparison is a finite-N
    /// experiment and the sweep rows show how the verdict moves with û.
    pub report: Option<String>,
}

/// Comparison rows of one T_N sample against ζ(û/√(d+1)) on `s_grid`.
pub fn tail_comparison(dist: &TnDistribution, d: usize, u_hat: f64, s_grid: &[f64], hash: &str, main: bool) -> Vec<Corollary46Row> {
    let n = dist.geometry.side().unwrap_or(0);
    let arg = u_hat / ((d + 1) as f64).sqrt();
    let mut floor = 1.0f64;
    let mut grid = s_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&s| {
            let (empirical, mc_error) = dist.tail(s);
            let t = zeta_tail(s, arg);
            floor = floor.min(t.tail);
            Corollary46Row {
                config_hash: hash.to_string(),
                n,
                u_hat,
                main,
                s,
                empirical,
                mc_error,
                analytic: floor,
                inversion_error: t.err,
                dominated: empirical <= floor + 3.0 * mc_error,
            }
        })
        .collect()
}

/// Empirical tail of T_N/N^{2d} against W[ζ(û/√(d+1)) ≥ s], with the û
/// sensitivity sweep attached.
pub fn run_corollary46(cfg: &ExperimentConfig) -> Result<ResultRecord<Corollary46Row, Corollary46Summary>> {
    cfg.validate()?;
    let started = Instant::now();
    let level = resolve_level(cfg)?;
    let u_hat = level.u;
    let hash = cfg.hash();
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &n in &cfg.sides {
        let g = Geometry::cylinder(cfg.d, n)?;
        let dist = tn_distribution(&g, cfg.replicates, replicate_seed(cfg.seed, "corollary46", n as u64), cfg.budget_multiplier)?;
        let median = crate::stats::quantile(&dist.sorted(), 0.5);
        let s_grid: Vec<f64> = cfg.s_factors.iter().map(|f| f * median).collect();
        let main = tail_comparison(&dist, cfg.d, u_hat, &s_grid, &hash, true);
        points.push(Corollary46Point {
            n,
            median,
            censored: dist.censored() as u64,
            dominated: main.iter().all(|r| r.dominated),
        });
        rows.extend(main);
        for &f in &cfg.u_sweep {
            if f != 1.0 {
                rows.extend(tail_comparison(&dist, cfg.d, f * u_hat, &s_grid, &hash, false));
            }
        }
    }
    let report = points.iter().any(|p| !p.dominated).then(|| {
        "empirical tail exceeds the ζ bound at the main û: finite-size tension; see the sweep rows".to_string()
    });
    let censored = points.iter().map(|p| p.censored).sum();
    Ok(ResultRecord {
        experiment: "corollary46".into(),
        config_hash: hash,
        config: cfg.clone(),
        level: Some(level),
        rows,
        summary: Corollary46Summary { u_hat, points, report },
        censored,
        wall_clock_s: started.elapsed().as_secs_f64(),
        versions: versions(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyLevel {
    Exact,
    McFast,
    McFull,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Passes when the statistic is below the threshold.
    Residual,
    /// Passes when the statistic (a p-value) is above the threshold.
    PValue,
    /// Passes when |statistic| is within threshold standard errors.
    ZScore,
    /// Passes when the statistic (a p-value) is below the threshold: the
    /// test must detect a deliberate mutation.
    Detects,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, kind: CheckKind, statistic: f64, threshold: f64) -> Self {
        let passed = match kind {
            CheckKind::Residual => statistic < threshold,
            CheckKind::PValue => statistic > threshold,
            CheckKind::ZScore => statistic.abs() <= threshold,
            CheckKind::Detects => statistic < threshold,
        };
        Check { name: name.into(), kind, statistic, threshold, passed }
    }
}

/// max over x ∈ T × [−r, r] of |Σ q(x′)g_B̃(x′, x) − (d+1)(h−r)/N^d|.
pub fn green_sum_residual(d: usize, n: u32, scales: Scales) -> Result<f64> {
    let g = Geometry::cylinder(d, n)?;
    let u = open_slab(&g, 0, scales.h);
    let q = DiscreteMeasure::level_uniform(&g, &[-scales.r, scales.r])?;
    let (domain, v) = green_potential(&q, &u, &g, &SolverConfig::default())?;
    let want = scales.green_sum_constant(&g);
    Ok(domain
        .points()
        .iter()
        .zip(&v)
        .filter(|(p, _)| p.z().abs() <= scales.r)
        .map(|(_, v)| (v - want).abs())
        .fold(0.0, f64::max))
}

/// max over x ∈ K of |P_q[X_{H_K} = x, H_K < T_B̃] − (d+1)(h−r)/N^d·e_{K,B̃}(x)|
/// for a seeded random K ⊆ T × (−r, r) of `size` points.
pub fn entrance_law_residual(d: usize, n: u32, size: usize, seed: u64) -> Result<(PointSet, f64)> {
    let g = Geometry::cylinder(d, n)?;
    let s = Scales::for_side(n);
    let inner: Vec<Point> = g.slab(-s.r + 1, s.r - 1).iter().cloned().collect();
    if inner.len() < size {
        return Err(Error::InvalidParameter("not enough inner points".into()));
    }
    let mut rng = stream(seed);
    let k: PointSet = sample_indices(&mut rng, inner.len(), size).into_iter().map(|i| inner[i].clone()).collect();
    let u = open_slab(&g, 0, s.h);
    let cfg = SolverConfig::default();
    let q = DiscreteMeasure::level_uniform(&g, &[-s.r, s.r])?;
    let law = entrance_law(&q, &k, &u, &g, &cfg)?;
    let e = equilibrium_exact(&k, &u, &g, &cfg)?;
    let c = s.green_sum_constant(&g);
    let res = k
        .iter()
        .map(|x| (law.weight_of(&x.0) - c * e.measure.weight_of(&x.0)).abs())
        .fold(0.0, f64::max);
    Ok((k, res))
}

/// A one-dimensional layout b̃ < b < a < ã with a + b = ã + b̃.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub b_tilde: i64,
    pub b: i64,
    pub a: i64,
    pub a_tilde: i64,
}

impl Layout {
    pub fn new(b_tilde: i64, b: i64, a: i64, a_tilde: i64) -> Result<Self> {
        if !(b_tilde < b && b < a && a < a_tilde && a + b == a_tilde + b_tilde) {
            return Err(Error::InvalidParameter("layout must satisfy b̃ < b < a < ã, a + b = ã + b̃".into()));
        }
        Ok(Layout { b_tilde, b, a, a_tilde })
    }

    /// (h, r) with 2h = ã − b̃ and 2r = a − b.
    pub fn h_r(&self) -> (f64, f64) {
        ((self.a_tilde - self.b_tilde) as f64 / 2.0, (self.a - self.b) as f64 / 2.0)
    }
}

pub fn default_layouts() -> Vec<Layout> {
    [(-9, -3, 3, 9), (-18, -1, 9, 26), (-3, 0, 3, 6), (-7, -2, -1, 4), (-10, 4, 5, 19)]
        .into_iter()
        .map(|(w, x, y, z)| Layout::new(w, x, y, z).unwrap())
        .collect()
}

/// Residuals of the two one-dimensional identities on (b̃, ã): escape from a
/// and from b, and the hitting sum on [b, a].
pub fn one_dimensional_residuals(layout: &Layout) -> Result<(f64, f64)> {
    let g = Geometry::lattice(1)?;
    let u = g.slab(layout.b_tilde + 1, layout.a_tilde - 1);
    let cfg = SolverConfig::default();
    let (h, r) = layout.h_r();
    let escape = 0.5 / (h - r) + 0.5 / (h + r);
    let single = |x: i64| -> PointSet { [Point(vec![x])].into_iter().collect() };
    let mut esc_res = 0.0f64;
    for x in [layout.a, layout.b] {
        let e = equilibrium_exact(&single(x), &u, &g, &cfg)?;
        esc_res = esc_res.max((e.value - escape).abs());
    }
    let ha = hitting_probability(&single(layout.a), &u, &g, &cfg)?;
    let hb = hitting_probability(&single(layout.b), &u, &g, &cfg)?;
    let sum = 2.0 * h / (h + r);
    let hit_res = (layout.b..=layout.a)
        .map(|z| (ha.get(&[z]) + hb.get(&[z]) - sum).abs())
        .fold(0.0, f64::max);
    Ok((esc_res, hit_res))
}

/// Chi-square p-value of the level-visit law (sum of k+1 geometric(1/h)) at N = 3 with the h
/// under test; `h_shift` perturbs the h of the simulated scales.
pub fn visit_law_p_value(samples: u64, h_shift: i64, seed: u64) -> Result<f64> {
    let g = Geometry::cylinder(2, 3)?;
    let s = Scales::for_side(3);
    let sim = Scales::new(s.r, s.h + h_shift)?;
    let vc = level_visit_counts(&g, 0, sim, 2, samples, 20_000, seed)?;
    Ok(vc.chi_square(s.h).p_value)
}

/// z-score of the MC vacancy frequency of K against exp(−u cap(K)) in Z^3.
pub fn vacancy_z_score(k: &PointSet, u: f64, samples: u64, seed: u64) -> Result<f64> {
    let eq = crate::potential::infinite::equilibrium_extrapolated(
        k,
        &crate::potential::infinite::default_margins(),
        &SolverConfig::default(),
    )?;
    let cfg = CloudConfig::new(u, 8);
    let vacant = sample_clouds(k, &eq, &cfg, samples, seed)
        .map(|s| s.map(|s| s.trajectories.is_empty()))
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&v| v)
        .count() as f64
        / samples as f64;
    let want = (-u * eq.value).exp();
    let se = (want * (1.0 - want) / samples as f64).sqrt();
    Ok((vacant - want) / se)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub level: VerifyLevel,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub wall_clock_s: f64,
}

/// Budget for the mc-fast level.
pub const MC_FAST_BUDGET_S: f64 = 300.0;

/// Runs the identity battery. Exact checks use no randomness beyond fixed
/// seeds; Monte Carlo checks use fixed master seeds.
pub fn verify_suite(level: VerifyLevel) -> Result<VerifyReport> {
    let started = Instant::now();
    let mut checks = Vec::new();
    for n in [3u32, 5] {
        let r = green_sum_residual(2, n, Scales::for_side(n))?;
        checks.push(Check::new(format!("green-sum N={n}"), CheckKind::Residual, r, 1e-10));
    }
    let (_, r) = entrance_law_residual(2, 3, 3, 11)?;
    checks.push(Check::new("entrance-law N=3", CheckKind::Residual, r, 1e-10));
    for (i, layout) in default_layouts().iter().enumerate() {
        let (esc, hit) = one_dimensional_residuals(layout)?;
        checks.push(Check::new(format!("escape-1d layout {i}"), CheckKind::Residual, esc, 1e-12));
        checks.push(Check::new(format!("hitting-sum-1d layout {i}"), CheckKind::Residual, hit, 1e-12));
    }
    checks.push(Check::new("zeta-transform-at-0", CheckKind::Residual, (zeta_laplace(1e-8, 1.0) - 1.0).abs(), 1e-10));
    let scaling = [0.1, 0.5, 1.0, 2.0, 7.0]
        .iter()
        .flat_map(|&t| [0.3, 1.0, 2.5].map(|u| (zeta_laplace(t, u) - zeta_laplace(t * u, 1.0)).abs()))
        .fold(0.0, f64::max);
    checks.push(Check::new("zeta-scaling", CheckKind::Residual, scaling, 1e-15));
    if level != VerifyLevel::Exact {
        let full = level == VerifyLevel::McFull;
        let n = if full { 100_000 } else { 20_000 };
        let g = Geometry::cylinder(2, 5)?;
        checks.push(Check::new("rho-geometric", CheckKind::PValue, rho_increment_test(&g, n, 7)?.p_value, 0.01));
        checks.push(Check::new("visits-geometric-sum", CheckKind::PValue, visit_law_p_value(n as u64, 0, 5)?, 0.01));
        checks.push(Check::new("visits-tampering-probe", CheckKind::Detects, visit_law_p_value(n as u64, 1, 5)?, 0.01));
        let origin: PointSet = [Point(vec![0, 0, 0])].into_iter().collect();
        let samples = if full { 100_000 } else { 10_000 };
        checks.push(Check::new("vacancy-singleton u=1", CheckKind::ZScore, vacancy_z_score(&origin, 1.0, samples, 3)?, 3.0));
        let g0 = green_at_origin(3);
        checks.push(Check::new("green-origin-z3", CheckKind::Residual, (g0 - 1.516_386_059_151_978).abs(), 1e-9));
        if full {
            for theta in [0.5, 1.0, 2.0] {
                let est = zeta_mc_transform(theta, 1.0, 200, 10_000, 13, true)?;
                let z = (est.value - zeta_laplace(theta, 1.0)) / est.std_error;
                checks.push(Check::new(format!("zeta-mc-transform bias-corrected theta={theta}"), CheckKind::ZScore, z, 3.0));
            }
        }
        if level == VerifyLevel::McFast {
            let t = started.elapsed().as_secs_f64();
            checks.push(Check::new("mc-fast-wall-clock", CheckKind::Residual, t, MC_FAST_BUDGET_S));
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { level, checks, passed, wall_clock_s: started.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            sides: vec![3, 4],
            u: Some(2.0),
            replicates: 30,
            budget_multiplier: 64,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_round_trips_and_hash_ignores_output() {
        let mut cfg = small();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        let h = cfg.hash();
        cfg.output = Some("elsewhere".into());
        assert_eq!(cfg.hash(), h);
        cfg.seed += 1;
        assert_ne!(cfg.hash(), h);
        assert_eq!(h.len(), 64);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::from_toml("d = 1").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 3").is_err());
        assert!(ExperimentConfig::from_toml("u = -1.0").is_err());
        let cfg = ExperimentConfig::from_toml("seed = 9\nN = [5]\n[percolation]\nscales = [1, 2, 3]\n").unwrap();
        assert_eq!(cfg.sides, vec![5]);
        assert_eq!(cfg.percolation.samples, 200);
    }

    #[test]
    fn theorem41_is_reproducible_and_consistent() {
        let cfg = small();
        let a = run_theorem41(&cfg).unwrap();
        let b = run_theorem41(&cfg).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.level.as_ref().unwrap().source, LevelSource::User);
        for r in &a.rows {
            assert_eq!(r.config_hash, cfg.hash());
            match (r.t_n, r.inf_gamma, r.indicator) {
                (Some(t), Some(g), Some(i)) => assert_eq!(i, t > g),
                (Some(_), None, Some(i)) => assert!(!i),
                (None, _, None) => assert!(r.censored),
                _ => {}
            }
        }
        assert_eq!(a.summary.points.len(), 2);
    }

    #[test]
    fn unreachable_threshold_gives_no_events() {
        let cfg = ExperimentConfig { delta: Some(1e3), ..small() };
        let rec = run_theorem41(&cfg).unwrap();
        assert!(rec.summary.points.iter().all(|p| p.events == 0));
    }

    #[test]
    fn indicator_matches_definition_on_replicates() {
        let g = Geometry::cylinder(2, 4).unwrap();
        for seed in 0..20 {
            let (t, gamma, ind) = theorem41_replicate(&g, 5.0, 1 << 22, seed).unwrap();
            let t = t.unwrap();
            let mut run = WalkRun::new(g, g.origin(), seed).unwrap();
            let direct = crate::walk::min_gamma_level(&mut run, 5.0, t + 1);
            match direct {
                Outcome::Stopped(x) => {
                    assert_eq!(gamma, Some(x));
                    assert_eq!(ind, Some(t > x));
                }
                Outcome::Exhausted(_) => assert_eq!(ind, Some(false)),
            }
        }
    }

    #[test]
    fn corollary46_rows_and_sweep() {
        let cfg = ExperimentConfig { sides: vec![4], replicates: 40, ..small() };
        let rec = run_corollary46(&cfg).unwrap();
        let main: Vec<&Corollary46Row> = rec.rows.iter().filter(|r| r.main).collect();
        assert_eq!(main.len(), 3);
        assert!(main.windows(2).all(|w| w[1].analytic <= w[0].analytic));
        assert_eq!(rec.rows.len(), 3 * cfg.u_sweep.len());
        // Far below the median both tails sit near 1.
        let low = tail_comparison(
            &tn_distribution(&Geometry::cylinder(2, 4).unwrap(), 40, 1, 64).unwrap(),
            2,
            2.0,
            &[1e-4],
            "x",
            true,
        );
        assert!(low[0].empirical == 1.0 && low[0].analytic > 0.999);
    }

    #[test]
    fn records_persist_and_reload() {
        let cfg = ExperimentConfig { sides: vec![3], replicates: 5, ..small() };
        let rec = run_theorem41(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv_path, json_path) = rec.write(dir.path(), "t41").unwrap();
        let back: ResultRecord<Theorem41Row, Theorem41Summary> = read_record(&json_path).unwrap();
        assert_eq!(back.rows, rec.rows);
        let text = fs::read_to_string(csv_path).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().next().unwrap().contains("config_hash"));
    }

    #[test]
    fn exact_identities() {
        for n in [3u32, 5] {
            assert!(green_sum_residual(2, n, Scales::for_side(n)).unwrap() < 1e-10);
        }
        // The sum is constant for any h > r, not only the canonical one.
        let s = Scales::for_side(3);
        assert!(green_sum_residual(2, 3, Scales::new(s.r, s.h + 1).unwrap()).unwrap() < 1e-10);
        for layout in default_layouts() {
            let (a, b) = one_dimensional_residuals(&layout).unwrap();
            assert!(a < 1e-12 && b < 1e-12, "{layout:?}: {a} {b}");
        }
        assert!(Layout::new(0, 1, 2, 4).is_err());
    }

    #[test]
    fn exact_suite_passes() {
        let report = verify_suite(VerifyLevel::Exact).unwrap();
        assert!(report.passed, "{:#?}", report.checks);
        assert!(report.checks.iter().all(|c| c.kind == CheckKind::Residual));
    }

    #[test]
    fn mc_fast_suite_passes_and_detects_tampering() {
        let report = verify_suite(VerifyLevel::McFast).unwrap();
        assert!(report.passed, "{:#?}", report.checks);
        let probe = report.checks.iter().find(|c| c.name == "visits-tampering-probe").unwrap();
        assert_eq!(probe.kind, CheckKind::Detects);
        assert!(probe.statistic < 0.01);
    }
}
