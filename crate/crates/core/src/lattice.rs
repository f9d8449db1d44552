//! Geometry of the discrete cylinder (Z/NZ)^d × Z and of Z^{d+1}.
//!
//! Points are coordinate vectors of length d+1 whose last entry is the
//! vertical coordinate z. On the cylinder the first d entries are residues in
//! [0, N). A move is an index in 0..2(d+1): move `2i` adds one to axis `i`,
//! move `2i+1` subtracts one. For N ∈ {1, 2} distinct moves may land on the
//! same vertex (self-loops, double edges); moves are never merged, so every
//! transition probability stays 1/(2(d+1)).

use std::borrow::Borrow;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    /// (Z/NZ)^d × Z.
    Cylinder {
        d: usize,
        #[serde(rename = "N")]
        n: u32,
    },
    /// Z^{d+1}.
    FullLattice { d: usize },
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Cylinder { d, n } => write!(f, "cylinder (Z/{n}Z)^{d} x Z"),
            Geometry::FullLattice { d } => write!(f, "lattice Z^{}", d + 1),
        }
    }
}

impl Geometry {
    pub fn cylinder(d: usize, n: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidGeometry("cylinder needs d >= 1".into()));
        }
        if n == 0 {
            return Err(Error::InvalidGeometry("cylinder needs N >= 1".into()));
        }
        Ok(Geometry::Cylinder { d, n })
    }

    /// Z^dim. Dimension one is accepted so that the one-dimensional walk can
    /// share the machinery.
    pub fn lattice(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGeometry("lattice needs dimension >= 1".into()));
        }
        Ok(Geometry::FullLattice { d: dim - 1 })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Geometry::Cylinder { d, n } => Geometry::cylinder(d, n).map(|_| ()),
            Geometry::FullLattice { .. } => Ok(()),
        }
    }

    /// Number of coordinates, d+1.
    pub fn dim(&self) -> usize {
        match *self {
            Geometry::Cylinder { d, .. } | Geometry::FullLattice { d } => d + 1,
        }
    }

    /// Number of periodic coordinates (d on the cylinder, 0 on the lattice).
    pub fn torus_dim(&self) -> usize {
        match *self {
            Geometry::Cylinder { d, .. } => d,
            Geometry::FullLattice { .. } => 0,
        }
    }

    pub fn side(&self) -> Option<u32> {
        match *self {
            Geometry::Cylinder { n, .. } => Some(n),
            Geometry::FullLattice { .. } => None,
        }
    }

    pub fn is_cylinder(&self) -> bool {
        matches!(self, Geometry::Cylinder { .. })
    }

    /// 2(d+1).
    pub fn degree(&self) -> usize {
        2 * self.dim()
    }

    /// N^d, the number of vertices on one level of the cylinder.
    pub fn torus_size(&self) -> usize {
        match *self {
            Geometry::Cylinder { d, n } => (n as usize).pow(d as u32),
            Geometry::FullLattice { .. } => 1,
        }
    }

    pub fn origin(&self) -> Point {
        Point(vec![0; self.dim()])
    }

    pub fn check_point(&self, p: &[i64]) -> Result<()> {
        let bad = p.len() != self.dim()
            || match *self {
                Geometry::Cylinder { d, n } => p[..d].iter().any(|&c| c < 0 || c >= n as i64),
                Geometry::FullLattice { .. } => false,
            };
        if bad {
            return Err(Error::InvalidPoint {
                point: p.to_vec(),
                geometry: self.to_string(),
            });
        }
        Ok(())
    }

    /// Apply move `m` in place.
    #[inline]
    pub fn apply(&self, p: &mut [i64], m: usize) {
        let axis = m >> 1;
        let up = m & 1 == 0;
        match *self {
            Geometry::Cylinder { d, n } if axis < d => {
                let n = n as i64;
                let c = p[axis];
                p[axis] = if up {
                    if c + 1 == n { 0 } else { c + 1 }
                } else if c == 0 {
                    n - 1
                } else {
                    c - 1
                };
            }
            _ => p[axis] += if up { 1 } else { -1 },
        }
    }

    /// Reduce the periodic coordinates of `p` into [0, N).
    pub fn normalize(&self, p: &mut [i64]) {
        if let Geometry::Cylinder { d, n } = *self {
            for c in &mut p[..d] {
                *c = c.rem_euclid(n as i64);
            }
        }
    }

    /// The 2(d+1) neighbors of `p` in move order, as a multiset.
    pub fn neighbors(&self, p: &[i64]) -> Vec<Point> {
        (0..self.degree())
            .map(|m| {
                let mut q = p.to_vec();
                self.apply(&mut q, m);
                Point(q)
            })
            .collect()
    }

    /// Sup-norm distance; periodic coordinates use the distance on Z/NZ.
    pub fn sup_distance(&self, a: &[i64], b: &[i64]) -> u64 {
        let t = self.torus_dim();
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (&x, &y))| {
                let diff = (x - y).unsigned_abs();
                match (*self, i < t) {
                    (Geometry::Cylinder { n, .. }, true) => {
                        let r = diff % n as u64;
                        r.min(n as u64 - r)
                    }
                    _ => diff,
                }
            })
            .max()
            .unwrap_or(0)
    }

    /// Whether some move takes `a` to `b`.
    pub fn adjacent(&self, a: &[i64], b: &[i64]) -> bool {
        self.adjacency_multiplicity(a, b) > 0
    }

    /// Number of moves taking `a` to `b`.
    pub fn adjacency_multiplicity(&self, a: &[i64], b: &[i64]) -> usize {
        let mut q = a.to_vec();
        (0..self.degree())
            .filter(|&m| {
                q.copy_from_slice(a);
                self.apply(&mut q, m);
                q == b
            })
            .count()
    }

    /// All vertices of the level T × {z} in lexicographic order of y.
    pub fn level(&self, z: i64) -> Vec<Point> {
        let t = self.torus_dim();
        let n = self.side().unwrap_or(1) as i64;
        let mut out = Vec::with_capacity(self.torus_size());
        for idx in 0..self.torus_size() {
            let mut p = vec![0; t + 1];
            let mut rest = idx as i64;
            for c in p.iter_mut().take(t) {
                *c = rest % n;
                rest /= n;
            }
            p[t] = z;
            out.push(Point(p));
        }
        out
    }

    /// T × [lo, hi].
    pub fn slab(&self, lo: i64, hi: i64) -> PointSet {
        (lo..=hi).flat_map(|z| self.level(z)).collect()
    }
}

/// Move label used in path strings: `+axis i` is `'a'+i`, `−axis i` is `'A'+i`.
pub fn move_char(m: usize) -> char {
    let axis = (m >> 1) as u8;
    if m & 1 == 0 {
        (b'a' + axis) as char
    } else {
        (b'A' + axis) as char
    }
}

pub fn char_move(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(2 * (c as usize - 'a' as usize)),
        'A'..='Z' => Some(2 * (c as usize - 'A' as usize) + 1),
        _ => None,
    }
}

/// A vertex of the cylinder or the lattice; the last coordinate is vertical.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<i64>);

/// Vertex of Z^{d+1}.
pub type LatticePoint = Point;

impl Point {
    pub fn new(coords: Vec<i64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn z(&self) -> i64 {
        *self.0.last().expect("point has at least one coordinate")
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl Borrow<[i64]> for Point {
    fn borrow(&self) -> &[i64] {
        &self.0
    }
}

impl From<Vec<i64>> for Point {
    fn from(v: Vec<i64>) -> Self {
        Point(v)
    }
}

/// Vertex of the cylinder split into its torus and vertical parts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CylinderPoint {
    pub y: Vec<i64>,
    pub z: i64,
}

impl CylinderPoint {
    pub fn new(y: Vec<i64>, z: i64) -> Self {
        Self { y, z }
    }
}

impl From<CylinderPoint> for Point {
    fn from(c: CylinderPoint) -> Self {
        let mut v = c.y;
        v.push(c.z);
        Point(v)
    }
}

impl From<&Point> for CylinderPoint {
    fn from(p: &Point) -> Self {
        let (y, z) = p.0.split_at(p.0.len() - 1);
        CylinderPoint { y: y.to_vec(), z: z[0] }
    }
}

/// Membership interface shared by hashed and dense vertex sets.
pub trait VertexSet {
    fn contains(&self, p: &[i64]) -> bool;
}

/// Finite vertex set in sorted order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointSet(pub BTreeSet<Point>);

impl PointSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: Point) -> bool {
        self.0.insert(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point> {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &PointSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn z_range(&self) -> Option<(i64, i64)> {
        let zs = self.0.iter().map(Point::z);
        let lo = zs.clone().min()?;
        Some((lo, zs.max().unwrap()))
    }
}

impl VertexSet for PointSet {
    fn contains(&self, p: &[i64]) -> bool {
        self.0.contains(p)
    }
}

impl FromIterator<Point> for PointSet {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        PointSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a Point;
    type IntoIter = std::collections::btree_set::Iter<'a, Point>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Dense boolean grid over the coordinate box [lo, lo + shape).
/// Coordinates are taken literally, so cylinder points must be normalized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxGrid {
    lo: Vec<i64>,
    shape: Vec<usize>,
    cells: Vec<bool>,
}

impl BoxGrid {
    pub fn new(lo: Vec<i64>, shape: Vec<usize>) -> Self {
        let total = shape.iter().product();
        Self { lo, shape, cells: vec![false; total] }
    }

    /// Grid covering the lattice box B(center, radius).
    pub fn around(center: &[i64], radius: u64) -> Self {
        let r = radius as i64;
        Self::new(
            center.iter().map(|c| c - r).collect(),
            vec![2 * radius as usize + 1; center.len()],
        )
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Row-major index, last axis fastest.
    #[inline]
    pub fn index(&self, p: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for ((&c, &lo), &s) in p.iter().zip(&self.lo).zip(&self.shape) {
            let off = c - lo;
            if off < 0 || off >= s as i64 {
                return None;
            }
            idx = idx * s + off as usize;
        }
        Some(idx)
    }

    pub fn point(&self, mut idx: usize) -> Point {
        let mut p = vec![0; self.shape.len()];
        for k in (0..self.shape.len()).rev() {
            p[k] = self.lo[k] + (idx % self.shape[k]) as i64;
            idx /= self.shape[k];
        }
        Point(p)
    }

    pub fn set(&mut self, p: &[i64], value: bool) -> bool {
        match self.index(p) {
            Some(i) => {
                self.cells[i] = value;
                true
            }
            None => false,
        }
    }

    pub fn set_index(&mut self, i: usize, value: bool) {
        self.cells[i] = value;
    }

    pub fn get_index(&self, i: usize) -> bool {
        self.cells[i]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn to_point_set(&self) -> PointSet {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| self.point(i))
            .collect()
    }
}

impl VertexSet for BoxGrid {
    fn contains(&self, p: &[i64]) -> bool {
        self.index(p).is_some_and(|i| self.cells[i])
    }
}

/// Closed sup-norm ball B(center, radius).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: Point,
    pub radius: u64,
}

impl BoxSpec {
    pub fn new(center: Point, radius: u64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, g: &Geometry, p: &[i64]) -> bool {
        g.sup_distance(&self.center.0, p) <= self.radius
    }

    /// Distinct vertices of B(center, radius).
    pub fn points(&self, g: &Geometry) -> Vec<Point> {
        self.collect(g, |dist| dist <= self.radius)
    }

    /// Distinct vertices of the sphere S(center, radius).
    pub fn sphere_points(&self, g: &Geometry) -> Vec<Point> {
        self.collect(g, |dist| dist == self.radius)
    }

    pub fn point_set(&self, g: &Geometry) -> PointSet {
        self.points(g).into_iter().collect()
    }

    /// Borrowed view usable as a `VertexSet`.
    pub fn region<'a>(&'a self, g: &'a Geometry) -> BoxRegion<'a> {
        BoxRegion { g, spec: self }
    }

    fn collect(&self, g: &Geometry, keep: impl Fn(u64) -> bool) -> Vec<Point> {
        let r = self.radius as i64;
        let t = g.torus_dim();
        let ranges: Vec<Vec<i64>> = (0..g.dim())
            .map(|i| {
                let c = self.center.0[i];
                match g.side() {
                    Some(n) if i < t && 2 * r + 1 >= n as i64 => (0..n as i64).collect(),
                    Some(n) if i < t => (c - r..=c + r).map(|v| v.rem_euclid(n as i64)).collect(),
                    _ => (c - r..=c + r).collect(),
                }
            })
            .collect();
        let mut out = Vec::new();
        let mut cur = vec![0usize; ranges.len()];
        loop {
            let p: Vec<i64> = cur.iter().zip(&ranges).map(|(&k, r)| r[k]).collect();
            if keep(g.sup_distance(&self.center.0, &p)) {
                out.push(Point(p));
            }
            let mut k = ranges.len();
            loop {
                if k == 0 {
                    out.sort();
                    return out;
                }
                k -= 1;
                cur[k] += 1;
                if cur[k] < ranges[k].len() {
                    break;
                }
                cur[k] = 0;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoxRegion<'a> {
    g: &'a Geometry,
    spec: &'a BoxSpec,
}

impl VertexSet for BoxRegion<'_> {
    fn contains(&self, p: &[i64]) -> bool {
        self.spec.contains(self.g, p)
    }
}

/// ∂U: vertices outside U with a neighbor in U.
pub fn boundary(u: &PointSet, g: &Geometry) -> PointSet {
    let mut out = PointSet::new();
    for p in u {
        for q in g.neighbors(&p.0) {
            if !u.contains(&q.0) {
                out.insert(q);
            }
        }
    }
    out
}

/// ∂_int U: vertices of U with a neighbor outside U.
pub fn interior_boundary(u: &PointSet, g: &Geometry) -> PointSet {
    u.iter()
        .filter(|p| g.neighbors(&p.0).iter().any(|q| !u.contains(&q.0)))
        .cloned()
        .collect()
}

/// Identification of the cylinder box T-ball × [center_z − r, center_z + r]
/// around ((0,…,0), center_z) with the lattice box B(0, r) ⊂ Z^{d+1}.
#[derive(Clone, Debug)]
pub struct SlabEmbedding {
    cylinder: Geometry,
    lattice: Geometry,
    center_z: i64,
    radius: u64,
}

/// Build the identification. Requires 2·radius + 1 ≤ N. When 2·radius + 1
/// equals N the box covers whole torus circles and the cylinder has wrap
/// edges between opposite faces that have no lattice counterpart; the map is
/// then a bijection that carries lattice edges to cylinder edges but not
/// conversely (see `wrap_free`).
pub fn embed_slab(center_z: i64, radius: u64, g: &Geometry) -> Result<SlabEmbedding> {
    let Geometry::Cylinder { d, n } = *g else {
        return Err(Error::InvalidGeometry("embed_slab needs a cylinder".into()));
    };
    if 2 * radius + 1 > n as u64 {
        return Err(Error::BoxWraps { radius, side: n });
    }
    Ok(SlabEmbedding {
        cylinder: *g,
        lattice: Geometry::FullLattice { d },
        center_z,
        radius,
    })
}

impl SlabEmbedding {
    pub fn lattice_geometry(&self) -> Geometry {
        self.lattice
    }

    pub fn radius(&self) -> u64 {
        self.radius
    }

    /// Whether the identification is an isomorphism of induced subgraphs.
    pub fn wrap_free(&self) -> bool {
        2 * self.radius + 2 <= self.cylinder.side().unwrap() as u64
    }

    fn box_spec(&self) -> BoxSpec {
        let mut c = vec![0; self.cylinder.dim()];
        c[self.cylinder.dim() - 1] = self.center_z;
        BoxSpec::new(Point(c), self.radius)
    }

    pub fn cylinder_points(&self) -> Vec<Point> {
        self.box_spec().points(&self.cylinder)
    }

    pub fn to_lattice(&self, p: &[i64]) -> Option<Point> {
        if !self.box_spec().contains(&self.cylinder, p) {
            return None;
        }
        let n = self.cylinder.side().unwrap() as i64;
        let t = self.cylinder.torus_dim();
        let r = self.radius as i64;
        let mut q: Vec<i64> = p[..t].iter().map(|&y| if y > r { y - n } else { y }).collect();
        q.push(p[t] - self.center_z);
        Some(Point(q))
    }

    pub fn to_cylinder(&self, q: &[i64]) -> Option<Point> {
        if self.lattice.sup_distance(q, &vec![0; q.len()]) > self.radius {
            return None;
        }
        let t = self.cylinder.torus_dim();
        let mut p = q.to_vec();
        p[t] += self.center_z;
        self.cylinder.normalize(&mut p);
        Some(Point(p))
    }

    /// Map from cylinder points of the box to their lattice images.
    pub fn table(&self) -> HashMap<Point, Point> {
        self.cylinder_points()
            .into_iter()
            .map(|p| {
                let q = self.to_lattice(&p.0).unwrap();
                (p, q)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[&[i64]]) -> Vec<Point> {
        v.iter().map(|c| Point(c.to_vec())).collect()
    }

    #[test]
    fn cylinder_neighbors_wrap() {
        let g = Geometry::cylinder(2, 5).unwrap();
        let mut got = g.neighbors(&[0, 0, 0]);
        got.sort();
        let mut want = pts(&[&[1, 0, 0], &[4, 0, 0], &[0, 1, 0], &[0, 4, 0], &[0, 0, 1], &[0, 0, -1]]);
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn degenerate_torus_has_self_loops() {
        let g = Geometry::cylinder(2, 1).unwrap();
        let nb = g.neighbors(&[0, 0, 7]);
        assert_eq!(nb.len(), 6);
        assert_eq!(nb.iter().filter(|p| p.0 == [0, 0, 7]).count(), 4);
        assert!(nb.contains(&Point(vec![0, 0, 8])));
        assert!(nb.contains(&Point(vec![0, 0, 6])));
    }

    #[test]
    fn lattice_neighbors_are_unit_moves() {
        let g = Geometry::lattice(3).unwrap();
        let nb = g.neighbors(&[0, 0, 0]);
        assert_eq!(nb.len(), 6);
        for p in &nb {
            assert_eq!(p.0.iter().map(|c| c.abs()).sum::<i64>(), 1);
        }
        let set: PointSet = nb.into_iter().collect();
        assert_eq!(set.len(), 6);
    }

    #[test]
    fn rejects_invalid_geometry() {
        assert!(Geometry::cylinder(0, 3).is_err());
        assert!(Geometry::cylinder(2, 0).is_err());
        assert!(Geometry::lattice(0).is_err());
        let g = Geometry::cylinder(2, 3).unwrap();
        assert!(g.check_point(&[3, 0, 0]).is_err());
        assert!(g.check_point(&[2, 0, -9]).is_ok());
    }

    #[test]
    fn boundaries_of_small_sets() {
        let g = Geometry::lattice(2).unwrap();
        let empty = PointSet::new();
        assert!(boundary(&empty, &g).is_empty());
        assert!(interior_boundary(&empty, &g).is_empty());
        let u: PointSet = pts(&[&[0, 0]]).into_iter().collect();
        assert_eq!(boundary(&u, &g).len(), 4);
        assert_eq!(interior_boundary(&u, &g), u);
    }

    #[test]
    fn interior_boundary_of_box_is_sphere() {
        let g = Geometry::lattice(3).unwrap();
        let b = BoxSpec::new(g.origin(), 2);
        let u = b.point_set(&g);
        let inner = interior_boundary(&u, &g);
        // Exhaustive scan over B(0,3).
        for p in BoxSpec::new(g.origin(), 3).points(&g) {
            let on_sphere = p.0.iter().map(|c| c.abs()).max().unwrap() == 2;
            assert_eq!(inner.contains(&p.0), on_sphere, "{p:?}");
        }
        let outer = boundary(&u, &g);
        assert_eq!(outer.len(), 6 * 25);
        assert!(outer.iter().all(|p| !u.contains(&p.0)));
    }

    #[test]
    fn sphere_sizes() {
        let g = Geometry::lattice(3).unwrap();
        assert_eq!(BoxSpec::new(g.origin(), 2).sphere_points(&g).len(), 125 - 27);
        let c = Geometry::cylinder(2, 3).unwrap();
        // Radius 1 already covers each torus circle of side 3.
        assert_eq!(BoxSpec::new(c.origin(), 1).points(&c).len(), 27);
        assert_eq!(BoxSpec::new(c.origin(), 2).points(&c).len(), 45);
    }

    #[test]
    fn slab_embedding_preserves_adjacency() {
        let g = Geometry::cylinder(2, 9).unwrap();
        let e = embed_slab(4, 2, &g).unwrap();
        assert!(e.wrap_free());
        let table = e.table();
        assert_eq!(table.len(), 125);
        let images: PointSet = table.values().cloned().collect();
        assert_eq!(images.len(), 125);
        let lat = e.lattice_geometry();
        let keys: Vec<&Point> = table.keys().collect();
        let mut adj = 0;
        for (i, a) in keys.iter().enumerate() {
            for b in &keys[i + 1..] {
                let cyl = g.adjacent(&a.0, &b.0);
                assert_eq!(cyl, lat.adjacent(&table[*a].0, &table[*b].0));
                assert_eq!(
                    g.sup_distance(&a.0, &b.0),
                    lat.sup_distance(&table[*a].0, &table[*b].0)
                );
                adj += cyl as usize;
            }
        }
        assert_eq!(adj, 300);
        for (p, q) in &table {
            assert_eq!(&e.to_cylinder(&q.0).unwrap(), p);
        }
    }

    #[test]
    fn slab_embedding_edge_cases() {
        let g = Geometry::cylinder(2, 5).unwrap();
        assert!(matches!(embed_slab(0, 3, &g), Err(Error::BoxWraps { .. })));
        let e = embed_slab(-3, 0, &g).unwrap();
        assert_eq!(e.cylinder_points(), vec![Point(vec![0, 0, -3])]);
        assert_eq!(e.to_lattice(&[0, 0, -3]).unwrap().0, vec![0, 0, 0]);
        let full = embed_slab(0, 2, &g).unwrap();
        assert!(!full.wrap_free());
    }

    #[test]
    fn move_chars_round_trip() {
        for m in 0..8 {
            assert_eq!(char_move(move_char(m)), Some(m));
        }
    }

    fn cylinder_and_point() -> impl Strategy<Value = (Geometry, Vec<i64>)> {
        (1usize..4, 1u32..6).prop_flat_map(|(d, n)| {
            let g = Geometry::Cylinder { d, n };
            (Just(g), proptest::collection::vec(0..n as i64, d), -20i64..20).prop_map(
                |(g, mut y, z)| {
                    y.push(z);
                    (g, y)
                },
            )
        })
    }

    proptest! {
        #[test]
        fn neighbor_relation_is_symmetric((g, p) in cylinder_and_point()) {
            let nb = g.neighbors(&p);
            prop_assert_eq!(nb.len(), g.degree());
            for q in &nb {
                prop_assert_eq!(
                    g.adjacency_multiplicity(&p, &q.0),
                    g.adjacency_multiplicity(&q.0, &p)
                );
                prop_assert!(g.sup_distance(&p, &q.0) <= 1);
            }
            if g.side().unwrap() >= 3 {
                let set: PointSet = nb.into_iter().collect();
                prop_assert_eq!(set.len(), g.degree());
            }
        }

        #[test]
        fn boundary_laws(raw in proptest::collection::vec((-3i64..3, -3i64..3, -3i64..3), 0..20)) {
            let g = Geometry::lattice(3).unwrap();
            let u: PointSet = raw.iter().map(|&(a, b, c)| Point(vec![a, b, c])).collect();
            let outer = boundary(&u, &g);
            let inner = interior_boundary(&u, &g);
            prop_assert!(outer.iter().all(|p| !u.contains(&p.0)));
            prop_assert!(inner.is_subset(&u));
            prop_assert_eq!(outer.is_empty(), u.is_empty());
        }

        #[test]
        fn box_membership_is_sup_norm(c in proptest::collection::vec(-5i64..5, 3), r in 0u64..3) {
            let g = Geometry::lattice(3).unwrap();
            let b = BoxSpec::new(Point(c.clone()), r);
            let pts = b.points(&g);
            prop_assert_eq!(pts.len(), (2 * r as usize + 1).pow(3));
            for p in BoxSpec::new(Point(c.clone()), r + 1).points(&g) {
                let inside = p.0.iter().zip(&c).all(|(a, b)| (a - b).unsigned_abs() <= r);
                prop_assert_eq!(b.contains(&g, &p.0), inside);
            }
        }
    }
}
