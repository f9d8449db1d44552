//! Potential theory of the simple random walk: killed Green functions,
//! equilibrium measures, capacities, hitting and entrance laws.
//!
//! Exact routines solve linear systems for the walk killed outside a finite
//! set U (dense LU up to `SolverConfig::dense_cap` states, conjugate
//! gradients beyond). Infinite-volume quantities on Z^{d+1} live in
//! [`infinite`] and the lattice Green function quadrature in [`green`].

pub mod green;
pub mod infinite;
pub mod solver;

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Geometry, Point, PointSet, VertexSet};
pub use solver::{Domain, Factorization, KilledChain, SolverConfig};

/// Finitely supported nonnegative weights on vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    support: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::InvalidMeasure("support and weights differ in length".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("weight {w} is not a finite nonnegative number")));
        }
        let distinct: PointSet = support.iter().cloned().collect();
        if distinct.len() != support.len() {
            return Err(Error::InvalidMeasure("repeated support point".into()));
        }
        Ok(Self { support, weights })
    }

    /// A measure whose total mass is 1 within 1e-12.
    pub fn probability(support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        let m = Self::new(support, weights)?;
        if (m.total_mass() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("total mass {} is not 1", m.total_mass())));
        }
        Ok(m)
    }

    pub fn empty() -> Self {
        Self { support: Vec::new(), weights: Vec::new() }
    }

    /// Uniform probability on the union of the levels T × {z}, z ∈ `levels`.
    pub fn level_uniform(g: &Geometry, levels: &[i64]) -> Result<Self> {
        let support: Vec<Point> = levels.iter().flat_map(|&z| g.level(z)).collect();
        let w = 1.0 / support.len() as f64;
        let n = support.len();
        Self::new(support, vec![w; n])
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.support.iter().zip(self.weights.iter().copied())
    }

    pub fn weight_of(&self, p: &[i64]) -> f64 {
        self.support
            .iter()
            .position(|q| q.0 == p)
            .map_or(0.0, |i| self.weights[i])
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.total_mass();
        if m <= 0.0 {
            return Err(Error::InvalidMeasure("cannot normalize a null measure".into()));
        }
        Ok(Self {
            support: self.support.clone(),
            weights: self.weights.iter().map(|w| w / m).collect(),
        })
    }

    /// Drop points of zero weight.
    pub fn pruned(&self) -> Self {
        let (support, weights) = self
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, w)| (p.clone(), w))
            .unzip();
        Self { support, weights }
    }
}

/// Green function of the walk killed outside U.
#[derive(Clone, Debug)]
pub struct GreenTable {
    domain: Domain,
    values: DMatrix<f64>,
}

impl GreenTable {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// g_U(x, y); zero when either argument lies outside U.
    pub fn get(&self, x: &[i64], y: &[i64]) -> f64 {
        match (self.domain.index_of(x), self.domain.index_of(y)) {
            (Some(i), Some(j)) => self.values[(i, j)],
            _ => 0.0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// max |g(x,y) − g(y,x)|.
    pub fn asymmetry(&self) -> f64 {
        let n = self.values.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Solve (I − P_U) G = I.
pub fn green_exact(u: &PointSet, g: &Geometry, cfg: &SolverConfig) -> Result<GreenTable> {
    if u.len() > cfg.green_cap {
        return Err(Error::SizeGuard { size: u.len(), cap: cfg.green_cap });
    }
    let domain = Domain::new(u);
    let chain = KilledChain::new(&domain, g);
    let n = domain.len();
    let values = if n <= cfg.dense_cap {
        chain
            .dense()
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular killed operator".into()))?
    } else {
        let fac = Factorization::new(&chain, cfg);
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = fac.solve(&e)?;
            e[j] = 0.0;
            m.set_column(j, &nalgebra::DVector::from_vec(col));
        }
        m
    };
    Ok(GreenTable { domain, values })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityMethod {
    ExactSolve,
    McEscape,
    BigBoxExtrapolation,
    /// Dirichlet solve on a box whose outer boundary carries the far-field
    /// hitting probability of the current equilibrium estimate, iterated to
    /// self-consistency.
    FarFieldMatched,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapacityResult {
    pub value: f64,
    pub measure: DiscreteMeasure,
    pub method: CapacityMethod,
    pub std_error: f64,
    pub truncation_bound: f64,
    pub seed: Option<u64>,
}

/// JSON summary of a capacity computation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapacityRecord {
    pub method: CapacityMethod,
    pub value: f64,
    pub std_error: f64,
    pub truncation_bound: f64,
    pub seed: Option<u64>,
}

impl CapacityResult {
    pub fn record(&self) -> CapacityRecord {
        CapacityRecord {
            method: self.method,
            value: self.value,
            std_error: self.std_error,
            truncation_bound: self.truncation_bound,
            seed: self.seed,
        }
    }
}

fn check_subset(k: &PointSet, u: &PointSet) -> Result<()> {
    if !k.is_subset(u) {
        return Err(Error::NotSubset);
    }
    Ok(())
}

/// P_x[H_K < T_U] for every x ∈ U, indexed by the domain of U.
#[derive(Clone, Debug)]
pub struct HittingProbabilities {
    pub domain: Domain,
    pub values: Vec<f64>,
}

impl HittingProbabilities {
    pub fn get(&self, x: &[i64]) -> f64 {
        self.domain.index_of(x).map_or(0.0, |i| self.values[i])
    }
}

pub fn hitting_probability(
    k: &PointSet,
    u: &PointSet,
    g: &Geometry,
    cfg: &SolverConfig,
) -> Result<HittingProbabilities> {
    check_subset(k, u)?;
    let rest: PointSet = u.iter().filter(|p| !k.contains(&p.0)).cloned().collect();
    let rest_domain = Domain::new(&rest);
    let chain = KilledChain::new(&rest_domain, g);
    let w = 1.0 / g.degree() as f64;
    let b: Vec<f64> = rest_domain
        .points()
        .iter()
        .map(|p| g.neighbors(&p.0).iter().filter(|q| k.contains(&q.0)).count() as f64 * w)
        .collect();
    let h_rest = if rest_domain.is_empty() {
        Vec::new()
    } else {
        Factorization::new(&chain, cfg).solve(&b)?
    };
    let domain = Domain::new(u);
    let values = domain
        .points()
        .iter()
        .map(|p| {
            if k.contains(&p.0) {
                1.0
            } else {
                h_rest[rest_domain.index_of(&p.0).unwrap()]
            }
        })
        .collect();
    Ok(HittingProbabilities { domain, values })
}

/// e_{K,U}(x) = P_x[H̃_K > T_U] for x ∈ K and cap_U(K) = Σ e.
pub fn equilibrium_exact(
    k: &PointSet,
    u: &PointSet,
    g: &Geometry,
    cfg: &SolverConfig,
) -> Result<CapacityResult> {
    let h = hitting_probability(k, u, g, cfg)?;
    let w = 1.0 / g.degree() as f64;
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for x in k {
        // Summing 1 − h over moves gives an exact zero when every move stays in K.
        let e = g.neighbors(&x.0).iter().map(|y| 1.0 - h.get(&y.0)).sum::<f64>() * w;
        let e = e.max(0.0);
        if e > 0.0 {
            support.push(x.clone());
            weights.push(e);
        }
    }
    let measure = DiscreteMeasure::new(support, weights)?;
    Ok(CapacityResult {
        value: measure.total_mass(),
        measure,
        method: CapacityMethod::ExactSolve,
        std_error: 0.0,
        truncation_bound: 0.0,
        seed: None,
    })
}

/// Σ_{x′} μ(x′) g_U(x′, x) for every x ∈ U, indexed by the domain of U.
pub fn green_potential(
    mu: &DiscreteMeasure,
    u: &PointSet,
    g: &Geometry,
    cfg: &SolverConfig,
) -> Result<(Domain, Vec<f64>)> {
    let domain = Domain::new(u);
    let chain = KilledChain::new(&domain, g);
    let mut b = vec![0.0; domain.len()];
    for (p, w) in mu.iter() {
        if let Some(i) = domain.index_of(&p.0) {
            b[i] += w;
        }
    }
    let v = Factorization::new(&chain, cfg).solve(&b)?;
    Ok((domain, v))
}

/// Entrance law x ↦ P_μ[X_{H_K} = x, H_K < T_U] on K.
pub fn entrance_law(
    mu: &DiscreteMeasure,
    k: &PointSet,
    u: &PointSet,
    g: &Geometry,
    cfg: &SolverConfig,
) -> Result<DiscreteMeasure> {
    check_subset(k, u)?;
    let rest: PointSet = u.iter().filter(|p| !k.contains(&p.0)).cloned().collect();
    let (domain, v) = if rest.is_empty() {
        (Domain::new(&rest), Vec::new())
    } else {
        green_potential(mu, &rest, g, cfg)?
    };
    let w = 1.0 / g.degree() as f64;
    let mut law: HashMap<Point, f64> = k.iter().map(|x| (x.clone(), mu.weight_of(&x.0))).collect();
    for (i, y) in domain.points().iter().enumerate() {
        for t in g.neighbors(&y.0) {
            if let Some(slot) = law.get_mut(&t) {
                *slot += v[i] * w;
            }
        }
    }
    let (support, weights): (Vec<Point>, Vec<f64>) = k
        .iter()
        .map(|x| (x.clone(), law[x]))
        .unzip();
    DiscreteMeasure::new(support, weights)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Compare P_x[H_K < T_U] with Σ_{x′} g_U(x, x′) e_{K,U}(x′).
pub fn hitting_identity_check(
    x: &[i64],
    k: &PointSet,
    u: &PointSet,
    g: &Geometry,
    cfg: &SolverConfig,
) -> Result<IdentityCheck> {
    if !u.contains(x) {
        return Err(Error::InvalidParameter("x must lie in U".into()));
    }
    let lhs = hitting_probability(k, u, g, cfg)?.get(x);
    let eq = equilibrium_exact(k, u, g, cfg)?;
    let delta = DiscreteMeasure::new(vec![Point(x.to_vec())], vec![1.0])?;
    let (domain, gx) = green_potential(&delta, u, g, cfg)?;
    let rhs: f64 = eq
        .measure
        .iter()
        .map(|(p, e)| gx[domain.index_of(&p.0).unwrap()] * e)
        .sum();
    Ok(IdentityCheck { lhs, rhs, residual: (lhs - rhs).abs() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub holds: bool,
}

/// Σ_{x′∈K} g_U(x,x′) / sup_{y∈K} Σ_{x′∈K} g_U(y,x′) ≤ P_x[H_K < T_U]
/// ≤ the same ratio with inf, each with 1e-10 slack.
pub fn sandwich_check(
    x: &[i64],
    k: &PointSet,
    u: &PointSet,
    g: &Geometry,
    cfg: &SolverConfig,
) -> Result<SandwichCheck> {
    if k.is_empty() {
        return Err(Error::InvalidParameter("K must be nonempty".into()));
    }
    let value = hitting_probability(k, u, g, cfg)?.get(x);
    let ones = DiscreteMeasure::new(k.iter().cloned().collect(), vec![1.0; k.len()])?;
    let (domain, s) = green_potential(&ones, u, g, cfg)?;
    let at = |p: &[i64]| domain.index_of(p).map_or(0.0, |i| s[i]);
    let on_k: Vec<f64> = k.iter().map(|p| at(&p.0)).collect();
    let sup = on_k.iter().cloned().fold(f64::MIN, f64::max);
    let inf = on_k.iter().cloned().fold(f64::MAX, f64::min);
    let lower = at(x) / sup;
    let upper = at(x) / inf;
    Ok(SandwichCheck {
        lower,
        value,
        upper,
        holds: lower <= value + 1e-10 && value <= upper + 1e-10,
    })
}

/// The cylinder box T × (centre − h, centre + h) as a vertex set.
pub fn open_slab(g: &Geometry, centre: i64, h: i64) -> PointSet {
    g.slab(centre - h + 1, centre + h - 1)
}
