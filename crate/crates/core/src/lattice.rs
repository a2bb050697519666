//! Honeycomb geometry, string-net configuration spaces and region helpers.
//!
//! # Coordinates
//!
//! Cells are indexed by `(x, y)`; each cell holds an `A` and a `B` vertex and
//! three edges `dl`, `dr`, `v`. Every edge carries a fixed upward
//! orientation:
//!
//! * `dl(x,y)`: `A(x,y) → B(x−1,y)`
//! * `dr(x,y)`: `A(x,y) → B(x,y)`
//! * `v(x,y)`:  `B(x,y) → A(x,y+1)`
//!
//! so `A` vertices split their lower edge into two upper edges and `B`
//! vertices fuse two lower edges into their upper edge. Each vertex lists its
//! edges as `[left, right, trunk]`; the branching rule is always
//! `N_{left,right}^{trunk}` on the stored labels:
//!
//! | vertex  | left      | right       | trunk      |
//! |---------|-----------|-------------|------------|
//! | `A(x,y)`| `dl(x,y)` | `dr(x,y)`   | `v(x,y−1)` |
//! | `B(x,y)`| `dr(x,y)` | `dl(x+1,y)` | `v(x,y)`   |
//!
//! Plaquette `P(x,y)` lists its ring clockwise from the top vertex
//! `B(x−1,y+1)`; ring edge `k` joins ring vertices `k` and `k+1`.
//!
//! On the torus, vertex ids are `A(x,y) = 2(y·Lx+x)`, `B = A+1`, and edge ids
//! `dl = 3(y·Lx+x)`, `dr = dl+1`, `v = dl+2`. Plaquette `P(x,y)` has id
//! `y·Lx+x`. Open patches are the plaquettes `P(x,y)`, `0 ≤ x < Lx`,
//! `0 ≤ y < Ly`, together with every vertex on their rings; vertices and edges
//! are numbered in `(y, x, kind)` order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::fusion_category::{FusionCategory, Label};
use crate::{par, Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Default limit on the number of enumerated configurations.
pub const DEFAULT_BASIS_CAP: f64 = 2e7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Torus,
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sub {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Dl,
    Dr,
    V,
}

/// Vertex position on the infinite honeycomb.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VCoord {
    pub sub: Sub,
    pub x: i32,
    pub y: i32,
}

/// Edge position on the infinite honeycomb.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ECoord {
    pub kind: EdgeKind,
    pub x: i32,
    pub y: i32,
}

impl VCoord {
    pub fn a(x: i32, y: i32) -> Self {
        VCoord { sub: Sub::A, x, y }
    }

    pub fn b(x: i32, y: i32) -> Self {
        VCoord { sub: Sub::B, x, y }
    }

    /// Incident edges as `[left, right, trunk]`.
    pub fn slots(self) -> [ECoord; 3] {
        let (x, y) = (self.x, self.y);
        match self.sub {
            Sub::A => [ECoord::dl(x, y), ECoord::dr(x, y), ECoord::v(x, y - 1)],
            Sub::B => [ECoord::dr(x, y), ECoord::dl(x + 1, y), ECoord::v(x, y)],
        }
    }

    /// The three plaquettes containing this vertex.
    pub fn plaquettes(self) -> [(i32, i32); 3] {
        let (x, y) = (self.x, self.y);
        match self.sub {
            Sub::A => [(x, y), (x, y - 1), (x + 1, y - 1)],
            Sub::B => [(x, y), (x + 1, y - 1), (x + 1, y)],
        }
    }

    /// Planar position (unit edge length).
    pub fn position(self) -> (f64, f64) {
        let (cx, cy) = cell_center(self.x, self.y);
        match self.sub {
            Sub::A => (cx, cy - 1.0),
            Sub::B => (cx + SQRT3 / 2.0, cy - 0.5),
        }
    }
}

impl ECoord {
    pub fn dl(x: i32, y: i32) -> Self {
        ECoord { kind: EdgeKind::Dl, x, y }
    }

    pub fn dr(x: i32, y: i32) -> Self {
        ECoord { kind: EdgeKind::Dr, x, y }
    }

    pub fn v(x: i32, y: i32) -> Self {
        ECoord { kind: EdgeKind::V, x, y }
    }

    /// `(lower, upper)` endpoints in the edge's reference orientation.
    pub fn endpoints(self) -> (VCoord, VCoord) {
        let (x, y) = (self.x, self.y);
        match self.kind {
            EdgeKind::Dl => (VCoord::a(x, y), VCoord::b(x - 1, y)),
            EdgeKind::Dr => (VCoord::a(x, y), VCoord::b(x, y)),
            EdgeKind::V => (VCoord::b(x, y), VCoord::a(x, y + 1)),
        }
    }
}

fn cell_center(x: i32, y: i32) -> (f64, f64) {
    (SQRT3 * x as f64 + SQRT3 / 2.0 * y as f64, 1.5 * y as f64)
}

/// Ring vertices, ring edges and outer legs of plaquette `P(x,y)` on the
/// infinite lattice, clockwise from the top.
pub fn plaquette_coords(x: i32, y: i32) -> ([VCoord; 6], [ECoord; 6], [ECoord; 6]) {
    let verts = [
        VCoord::b(x - 1, y + 1),
        VCoord::a(x, y + 1),
        VCoord::b(x, y),
        VCoord::a(x, y),
        VCoord::b(x - 1, y),
        VCoord::a(x - 1, y + 1),
    ];
    let ring = [
        ECoord::dl(x, y + 1),
        ECoord::v(x, y),
        ECoord::dr(x, y),
        ECoord::dl(x, y),
        ECoord::v(x - 1, y),
        ECoord::dr(x - 1, y + 1),
    ];
    let legs = [
        ECoord::v(x - 1, y + 1),
        ECoord::dr(x, y + 1),
        ECoord::dl(x + 1, y),
        ECoord::v(x, y - 1),
        ECoord::dr(x - 1, y),
        ECoord::dl(x - 1, y + 1),
    ];
    (verts, ring, legs)
}

/// Center of plaquette `P(x,y)`.
pub fn plaquette_center(x: i32, y: i32) -> (f64, f64) {
    cell_center(x, y)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vertex {
    pub coord: VCoord,
    /// Edge ids `[left, right, trunk]`.
    pub slots: [usize; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Edge {
    pub coord: ECoord,
    /// Endpoint vertex ids; `None` where the edge leaves an open patch.
    pub lower: Option<usize>,
    pub upper: Option<usize>,
    /// Open patches: the edge lies on no patch plaquette and is pinned to the
    /// vacuum.
    pub boundary: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Plaquette {
    pub x: i32,
    pub y: i32,
    pub vertices: [usize; 6],
    pub ring: [usize; 6],
    pub legs: [usize; 6],
}

/// Honeycomb lattice on a torus or an open parallelogram patch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HoneycombLattice {
    pub lx: usize,
    pub ly: usize,
    pub topology: Topology,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub plaquettes: Vec<Plaquette>,
    /// Plaquette ids touching each vertex.
    pub vertex_plaquettes: Vec<Vec<usize>>,
    /// Set for tori with `Lx = 1` or `Ly = 1`, where a plaquette meets itself.
    pub degenerate: bool,
    #[serde(skip)]
    vindex: HashMap<VCoord, usize>,
    #[serde(skip)]
    eindex: HashMap<ECoord, usize>,
}

/// Upper bound on `Lx·Ly` accepted by the constructors.
const MAX_CELLS: usize = 1 << 20;

impl HoneycombLattice {
    /// Periodic lattice with `Lx·Ly` plaquettes.
    pub fn torus(lx: usize, ly: usize) -> Result<Self> {
        check_dims(lx, ly)?;
        let (lxi, lyi) = (lx as i32, ly as i32);
        let mut vertices = Vec::with_capacity(2 * lx * ly);
        let mut edges = Vec::with_capacity(3 * lx * ly);
        for y in 0..lyi {
            for x in 0..lxi {
                for c in [VCoord::a(x, y), VCoord::b(x, y)] {
                    vertices.push(Vertex { coord: c, slots: [0; 3] });
                }
                for e in [ECoord::dl(x, y), ECoord::dr(x, y), ECoord::v(x, y)] {
                    edges.push(Edge { coord: e, lower: None, upper: None, boundary: false });
                }
            }
        }
        let mut lat = HoneycombLattice {
            lx,
            ly,
            topology: Topology::Torus,
            vertices,
            edges,
            plaquettes: Vec::new(),
            vertex_plaquettes: Vec::new(),
            degenerate: lx == 1 || ly == 1,
            vindex: HashMap::new(),
            eindex: HashMap::new(),
        };
        lat.reindex();
        let cells: Vec<(i32, i32)> = (0..lyi).flat_map(|y| (0..lxi).map(move |x| (x, y))).collect();
        lat.wire(&cells)?;
        Ok(lat)
    }

    /// Open patch of `Lx·Ly` plaquettes; edges off the patch plaquettes are
    /// marked as boundary (vacuum-pinned in [`SpaceSpec::whole`]).
    pub fn open_patch(lx: usize, ly: usize) -> Result<Self> {
        check_dims(lx, ly)?;
        let cells: Vec<(i32, i32)> = (0..ly as i32).flat_map(|y| (0..lx as i32).map(move |x| (x, y))).collect();
        let mut vset = BTreeSet::new();
        for &(x, y) in &cells {
            vset.extend(plaquette_coords(x, y).0);
        }
        let mut vs: Vec<VCoord> = vset.into_iter().collect();
        vs.sort_by_key(|c| (c.y, c.x, c.sub));
        let mut eset = BTreeSet::new();
        for v in &vs {
            eset.extend(v.slots());
        }
        let mut es: Vec<ECoord> = eset.into_iter().collect();
        es.sort_by_key(|e| (e.y, e.x, e.kind));
        let mut ring_edges = BTreeSet::new();
        for &(x, y) in &cells {
            ring_edges.extend(plaquette_coords(x, y).1);
        }
        let mut lat = HoneycombLattice {
            lx,
            ly,
            topology: Topology::Open,
            vertices: vs.into_iter().map(|c| Vertex { coord: c, slots: [0; 3] }).collect(),
            edges: es
                .into_iter()
                .map(|e| Edge { coord: e, lower: None, upper: None, boundary: !ring_edges.contains(&e) })
                .collect(),
            plaquettes: Vec::new(),
            vertex_plaquettes: Vec::new(),
            degenerate: false,
            vindex: HashMap::new(),
            eindex: HashMap::new(),
        };
        lat.reindex();
        lat.wire(&cells)?;
        Ok(lat)
    }

    fn reindex(&mut self) {
        self.vindex = self.vertices.iter().enumerate().map(|(i, v)| (v.coord, i)).collect();
        self.eindex = self.edges.iter().enumerate().map(|(i, e)| (e.coord, i)).collect();
    }

    fn wire(&mut self, cells: &[(i32, i32)]) -> Result<()> {
        for i in 0..self.vertices.len() {
            let slots = self.vertices[i].coord.slots();
            for (k, e) in slots.iter().enumerate() {
                self.vertices[i].slots[k] =
                    self.edge_id(*e).ok_or_else(|| Error::Structure(format!("vertex {i} misses edge {e:?}")))?;
            }
        }
        for i in 0..self.edges.len() {
            let (lo, up) = self.edges[i].coord.endpoints();
            self.edges[i].lower = self.vertex_id(lo);
            self.edges[i].upper = self.vertex_id(up);
        }
        self.plaquettes.clear();
        self.vertex_plaquettes = vec![Vec::new(); self.vertices.len()];
        for &(x, y) in cells {
            let (vs, ring, legs) = plaquette_coords(x, y);
            let pid = self.plaquettes.len();
            let mut p = Plaquette { x, y, vertices: [0; 6], ring: [0; 6], legs: [0; 6] };
            for k in 0..6 {
                p.vertices[k] = self.vertex_id(vs[k]).ok_or_else(|| Error::Structure("ring vertex".into()))?;
                p.ring[k] = self.edge_id(ring[k]).ok_or_else(|| Error::Structure("ring edge".into()))?;
                p.legs[k] = self.edge_id(legs[k]).ok_or_else(|| Error::Structure("leg".into()))?;
                if !self.vertex_plaquettes[p.vertices[k]].contains(&pid) {
                    self.vertex_plaquettes[p.vertices[k]].push(pid);
                }
            }
            self.plaquettes.push(p);
        }
        Ok(())
    }

    fn wrap(&self, x: i32, y: i32) -> (i32, i32) {
        match self.topology {
            Topology::Torus => (x.rem_euclid(self.lx as i32), y.rem_euclid(self.ly as i32)),
            Topology::Open => (x, y),
        }
    }

    /// Lattice id of an infinite-lattice vertex, if it belongs to the lattice.
    pub fn vertex_id(&self, c: VCoord) -> Option<usize> {
        let (x, y) = self.wrap(c.x, c.y);
        self.vindex.get(&VCoord { sub: c.sub, x, y }).copied()
    }

    /// Lattice id of an infinite-lattice edge, if it belongs to the lattice.
    pub fn edge_id(&self, c: ECoord) -> Option<usize> {
        let (x, y) = self.wrap(c.x, c.y);
        self.eindex.get(&ECoord { kind: c.kind, x, y }).copied()
    }

    /// Lattice id of plaquette `P(x,y)`, if present.
    pub fn plaquette_id(&self, x: i32, y: i32) -> Option<usize> {
        let (x, y) = self.wrap(x, y);
        match self.topology {
            Topology::Torus => Some(y as usize * self.lx + x as usize),
            Topology::Open => (x >= 0 && y >= 0 && (x as usize) < self.lx && (y as usize) < self.ly)
                .then(|| y as usize * self.lx + x as usize),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_plaquettes(&self) -> usize {
        self.plaquettes.len()
    }

    /// Refuses tori on which a plaquette wraps onto itself.
    pub fn require_nondegenerate(&self) -> Result<()> {
        if self.degenerate {
            return Err(Error::Geometry(format!(
                "degenerate wrap on the {}x{} torus: a plaquette touches itself",
                self.lx, self.ly
            )));
        }
        Ok(())
    }

    /// Edge ids of the vacuum-pinned boundary (empty on the torus).
    pub fn boundary_edges(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].boundary).collect()
    }

    /// Neighbouring vertex ids (through edges inside the lattice).
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &e in &self.vertices[v].slots {
            let ed = &self.edges[e];
            for w in [ed.lower, ed.upper].into_iter().flatten() {
                if w != v && !out.contains(&w) {
                    out.push(w);
                }
            }
        }
        out
    }

    /// Edges with exactly one endpoint in `set` (counted once each), plus
    /// edges leaving the lattice from `set` that are not vacuum-pinned.
    pub fn boundary_size(&self, set: &BTreeSet<usize>) -> usize {
        let mut seen = BTreeSet::new();
        for &v in set {
            for &e in &self.vertices[v].slots {
                let ed = &self.edges[e];
                if ed.boundary {
                    continue;
                }
                let inside = [ed.lower, ed.upper].iter().filter(|w| w.is_some_and(|w| set.contains(&w))).count();
                if inside == 1 {
                    seen.insert(e);
                }
            }
        }
        seen.len()
    }

    /// JSON dump of ids and incidence.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_dims(lx: usize, ly: usize) -> Result<()> {
    if lx == 0 || ly == 0 {
        return Err(Error::Geometry("lattice dimensions must be at least 1".into()));
    }
    if lx.saturating_mul(ly) > MAX_CELLS {
        return Err(Error::Geometry(format!("{lx}x{ly} exceeds the cell limit {MAX_CELLS}")));
    }
    Ok(())
}

/// Vertex set of a region on the infinite lattice: the union of the rings of
/// all plaquettes touching `seed`, repeated `radius` times. `keep` filters
/// the plaquettes that may be used (open patches pass only their own).
pub fn grow(seed: &BTreeSet<VCoord>, radius: usize, keep: impl Fn(i32, i32) -> bool) -> BTreeSet<VCoord> {
    let mut cur = seed.clone();
    for _ in 0..radius {
        let mut next = cur.clone();
        for v in &cur {
            for (x, y) in v.plaquettes() {
                if keep(x, y) {
                    next.extend(plaquette_coords(x, y).0);
                }
            }
        }
        cur = next;
    }
    cur
}

/// True when `set` is connected through lattice edges.
pub fn is_connected(set: &BTreeSet<VCoord>) -> bool {
    let Some(&start) = set.iter().next() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for e in v.slots() {
            let (a, b) = e.endpoints();
            let w = if a == v { b } else { a };
            if set.contains(&w) && seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen.len() == set.len()
}

impl HoneycombLattice {
    /// Maps an infinite-lattice vertex set into this lattice, failing when a
    /// vertex is absent or when two vertices (or two of their incident edges)
    /// are identified by the periodic wrap.
    pub fn embed(&self, set: &BTreeSet<VCoord>) -> Result<BTreeSet<usize>> {
        let mut ids = BTreeSet::new();
        for &c in set {
            let id =
                self.vertex_id(c).ok_or_else(|| Error::Geometry(format!("vertex {c:?} lies outside the lattice")))?;
            ids.insert(id);
        }
        if ids.len() != set.len() {
            return Err(Error::Geometry("region wraps onto itself".into()));
        }
        let edges: BTreeSet<ECoord> = set.iter().flat_map(|c| c.slots()).collect();
        let eids: BTreeSet<usize> = edges.iter().filter_map(|&e| self.edge_id(e)).collect();
        if eids.len() != edges.len() {
            return Err(Error::Geometry("region edges wrap onto themselves".into()));
        }
        Ok(ids)
    }

    /// Plaquette filter used by [`grow`]: every plaquette on the torus, the
    /// patch plaquettes on an open lattice.
    pub fn has_plaquette(&self, x: i32, y: i32) -> bool {
        self.plaquette_id(x, y).is_some()
    }

    /// Vertex ids of `cluster^radius({v})` with the wrap check of [`Self::embed`].
    pub fn cluster(&self, v: usize, radius: usize) -> Result<BTreeSet<usize>> {
        let seed = BTreeSet::from([self.vertices[v].coord]);
        self.embed(&grow(&seed, radius, |x, y| self.has_plaquette(x, y)))
    }

    /// Vertex ids of the union of the given plaquette rings.
    pub fn plaquette_vertices(&self, plaquettes: &[usize]) -> BTreeSet<usize> {
        plaquettes.iter().flat_map(|&p| self.plaquettes[p].vertices).collect()
    }

    /// Plaquettes whose whole ring lies in `set`.
    pub fn plaquettes_inside(&self, set: &BTreeSet<usize>) -> Vec<usize> {
        (0..self.plaquettes.len()).filter(|&p| self.plaquettes[p].vertices.iter().all(|v| set.contains(v))).collect()
    }
}

/// Region roles of the axiom partitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartitionKind {
    A0Bulk,
    A1Bulk,
    A0Boundary,
    A1Boundary,
}

impl PartitionKind {
    pub fn name(self) -> &'static str {
        match self {
            PartitionKind::A0Bulk => "A0-bulk",
            PartitionKind::A1Bulk => "A1-bulk",
            PartitionKind::A0Boundary => "A0-boundary",
            PartitionKind::A1Boundary => "A1-boundary",
        }
    }

    pub fn is_boundary(self) -> bool {
        matches!(self, PartitionKind::A0Boundary | PartitionKind::A1Boundary)
    }
}

/// A tagged vertex set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub tag: char,
    pub vertices: BTreeSet<usize>,
}

/// Disjoint regions covering the lattice. A0 partitions carry `C` (disk),
/// `B` (its collar) and `D` (the rest); A1 partitions carry `C` (disk),
/// `B` and `D` (the two arcs of its collar) and `A` (the rest).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Partition {
    pub kind: PartitionKind,
    pub anchor: usize,
    pub regions: Vec<Region>,
}

impl Partition {
    pub fn get(&self, tag: char) -> &BTreeSet<usize> {
        static EMPTY: BTreeSet<usize> = BTreeSet::new();
        self.regions.iter().find(|r| r.tag == tag).map(|r| &r.vertices).unwrap_or(&EMPTY)
    }
}

/// Complement of `set` among `0..n`.
pub fn complement(n: usize, set: &BTreeSet<usize>) -> BTreeSet<usize> {
    (0..n).filter(|v| !set.contains(v)).collect()
}

/// Builds the axiom partition anchored at vertex `anchor`. `widths = (c, b)`:
/// the disk is `cluster^{c-1}(anchor)` and the collar adds `b` more layers.
/// Boundary kinds need an open lattice and an anchor with a pinned edge.
pub fn make_axiom_partition(
    lat: &HoneycombLattice,
    kind: PartitionKind,
    anchor: usize,
    widths: (usize, usize),
) -> Result<Partition> {
    let (wc, wb) = widths;
    if wc == 0 || wb == 0 {
        return Err(Error::Geometry("partition widths must be at least 1".into()));
    }
    if anchor >= lat.n_vertices() {
        return Err(Error::Geometry(format!("anchor {anchor} out of range")));
    }
    if kind.is_boundary() {
        if lat.topology != Topology::Open {
            return Err(Error::Geometry("boundary partitions need an open patch".into()));
        }
        if !lat.vertices[anchor].slots.iter().any(|&e| lat.edges[e].boundary) {
            return Err(Error::Geometry(format!("vertex {anchor} does not touch the boundary")));
        }
    } else if lat.topology == Topology::Open {
        return Err(Error::Geometry("bulk partitions are placed on a torus".into()));
    }
    let keep = |x: i32, y: i32| lat.has_plaquette(x, y);
    let center = lat.vertices[anchor].coord;
    let disk = grow(&BTreeSet::from([center]), wc - 1, keep);
    let ball = grow(&disk, wb, keep);
    let collar: BTreeSet<VCoord> = ball.difference(&disk).copied().collect();
    // Check the whole ball embeds without wrapping; keep one outside vertex.
    let ball_ids = lat.embed(&ball)?;
    if ball_ids.len() == lat.n_vertices() {
        return Err(Error::Geometry("partition leaves no outside region".into()));
    }
    let c_ids = lat.embed(&disk)?;
    let rest = complement(lat.n_vertices(), &ball_ids);
    let regions = match kind {
        PartitionKind::A0Bulk | PartitionKind::A0Boundary => vec![
            Region { tag: 'B', vertices: lat.embed(&collar)? },
            Region { tag: 'C', vertices: c_ids },
            Region { tag: 'D', vertices: rest },
        ],
        PartitionKind::A1Bulk | PartitionKind::A1Boundary => {
            let angles: &[f64] =
                if kind.is_boundary() { &[95.0, 85.0, 100.0, 80.0] } else { &[105.0, 75.0, 165.0, 15.0] };
            let (p0x, p0y) = center.position();
            let mut split = None;
            for &deg in angles {
                let (s, c) = deg.to_radians().sin_cos();
                let mut left = BTreeSet::new();
                let mut right = BTreeSet::new();
                let mut ok = true;
                for &v in &collar {
                    let (px, py) = v.position();
                    let cross = c * (py - p0y) - s * (px - p0x);
                    if cross.abs() < 1e-6 {
                        ok = false;
                        break;
                    }
                    if cross > 0.0 {
                        left.insert(v);
                    } else {
                        right.insert(v);
                    }
                }
                if ok && !left.is_empty() && !right.is_empty() && is_connected(&left) && is_connected(&right) {
                    split = Some((left, right));
                    break;
                }
            }
            let (left, right) =
                split.ok_or_else(|| Error::Geometry("no admissible cut of the collar into two arcs".into()))?;
            vec![
                Region { tag: 'A', vertices: rest },
                Region { tag: 'B', vertices: lat.embed(&left)? },
                Region { tag: 'C', vertices: c_ids },
                Region { tag: 'D', vertices: lat.embed(&right)? },
            ]
        }
    };
    Ok(Partition { kind, anchor, regions })
}

/// All anchors at which `kind` can be placed with the given widths.
pub fn valid_anchors(lat: &HoneycombLattice, kind: PartitionKind, widths: (usize, usize)) -> Vec<usize> {
    (0..lat.n_vertices()).filter(|&v| make_axiom_partition(lat, kind, v, widths).is_ok()).collect()
}

/// Treatment of one edge of a configuration space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeSlot {
    Free,
    Pinned(Label),
}

/// A set of lattice vertices together with all their incident edges, some of
/// which may be pinned to fixed labels. Edges with an endpoint outside the
/// vertex set are dangling legs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub vertices: BTreeSet<usize>,
    pub pins: BTreeMap<usize, Label>,
}

impl SpaceSpec {
    /// The whole lattice; open patches pin their boundary edges to the vacuum.
    pub fn whole(lat: &HoneycombLattice) -> Self {
        SpaceSpec {
            vertices: (0..lat.n_vertices()).collect(),
            pins: lat.boundary_edges().into_iter().map(|e| (e, 0)).collect(),
        }
    }

    /// A vertex subset whose legs stay free; lattice boundary edges are
    /// pinned to the vacuum.
    pub fn region(lat: &HoneycombLattice, vertices: BTreeSet<usize>) -> Self {
        let pins = vertices
            .iter()
            .flat_map(|&v| lat.vertices[v].slots)
            .filter(|&e| lat.edges[e].boundary)
            .map(|e| (e, 0))
            .collect();
        SpaceSpec { vertices, pins }
    }
}

/// Enumerated string-net configurations of a [`SpaceSpec`].
///
/// A configuration assigns a label to every edge and a multiplicity index to
/// every vertex such that each vertex obeys the branching rule. It is packed
/// in a `u128` key: edge labels first (most significant, in space edge
/// order), then vertex multiplicities. Keys are sorted, so basis order is
/// lexicographic in (edge labels, multiplicities) and lookup is a binary
/// search.
#[derive(Clone, Debug)]
pub struct StringNetBasis {
    pub rank: usize,
    pub max_mult: usize,
    /// Lattice vertex ids, ascending.
    pub vertices: Vec<usize>,
    /// Lattice edge ids, ascending.
    pub edges: Vec<usize>,
    pub slots: Vec<EdgeSlot>,
    /// Edge has an endpoint outside the space (or outside the lattice).
    pub dangling: Vec<bool>,
    /// Positions into `edges` of each vertex's `[left, right, trunk]`.
    pub vertex_edges: Vec<[usize; 3]>,
    label_bits: u32,
    mult_bits: u32,
    keys: Vec<u128>,
    edge_pos: HashMap<usize, usize>,
    vertex_pos: HashMap<usize, usize>,
}

fn bits_for(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

impl StringNetBasis {
    /// Enumerates every admissible configuration of `spec`.
    pub fn enumerate(cat: &FusionCategory, lat: &HoneycombLattice, spec: &SpaceSpec, cap: f64) -> Result<Self> {
        let mut basis = Self::layout(cat, lat, spec)?;
        let estimate = basis.estimate(cat);
        if estimate > 4.0 * cap {
            return Err(Error::Cap { estimate, cap });
        }
        basis.keys = basis.run(cat, cap)?;
        Ok(basis)
    }

    fn layout(cat: &FusionCategory, lat: &HoneycombLattice, spec: &SpaceSpec) -> Result<Self> {
        let vertices: Vec<usize> = spec.vertices.iter().copied().collect();
        if let Some(&v) = vertices.iter().find(|&&v| v >= lat.n_vertices()) {
            return Err(Error::Geometry(format!("vertex {v} out of range")));
        }
        let eset: BTreeSet<usize> = vertices.iter().flat_map(|&v| lat.vertices[v].slots).collect();
        let edges: Vec<usize> = eset.into_iter().collect();
        for (&e, &l) in &spec.pins {
            if !edges.contains(&e) {
                return Err(Error::Geometry(format!("pinned edge {e} is not incident to the space")));
            }
            if l >= cat.rank() {
                return Err(Error::Geometry(format!("pinned label {l} out of range")));
            }
        }
        let edge_pos: HashMap<usize, usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let vertex_pos: HashMap<usize, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let slots = edges.iter().map(|e| spec.pins.get(e).map_or(EdgeSlot::Free, |&l| EdgeSlot::Pinned(l))).collect();
        let dangling = edges
            .iter()
            .map(|&e| {
                let ed = &lat.edges[e];
                ![ed.lower, ed.upper].iter().all(|w| w.is_some_and(|w| vertex_pos.contains_key(&w)))
            })
            .collect();
        let vertex_edges = vertices
            .iter()
            .map(|&v| {
                let s = lat.vertices[v].slots;
                [edge_pos[&s[0]], edge_pos[&s[1]], edge_pos[&s[2]]]
            })
            .collect();
        let rank = cat.rank();
        let max_mult = cat.max_multiplicity().max(1);
        let label_bits = bits_for(rank);
        let mult_bits = bits_for(max_mult);
        let total = label_bits as usize * edges.len() + mult_bits as usize * vertices.len();
        if total > 128 {
            return Err(Error::Geometry(format!("configuration key needs {total} bits (limit 128)")));
        }
        Ok(StringNetBasis {
            rank,
            max_mult,
            vertices,
            edges,
            slots,
            dangling,
            vertex_edges,
            label_bits,
            mult_bits,
            keys: Vec::new(),
            edge_pos,
            vertex_pos,
        })
    }

    /// Rough size estimate: free label choices times the admissible fraction
    /// per vertex.
    pub fn estimate(&self, cat: &FusionCategory) -> f64 {
        let r = self.rank as f64;
        let mut adm = 0.0;
        for a in 0..self.rank {
            for b in 0..self.rank {
                for c in 0..self.rank {
                    adm += cat.n(a, b, c) as f64;
                }
            }
        }
        let free = self.slots.iter().filter(|s| **s == EdgeSlot::Free).count() as f64;
        r.powf(free) * (adm / (r * r * r)).powf(self.vertices.len() as f64)
    }

    fn run(&self, cat: &FusionCategory, cap: f64) -> Result<Vec<u128>> {
        let ne = self.edges.len();
        // Vertices become checkable once their last edge is assigned.
        let mut checks: Vec<Vec<usize>> = vec![Vec::new(); ne];
        for (m, ve) in self.vertex_edges.iter().enumerate() {
            checks[*ve.iter().max().unwrap()].push(m);
        }
        let first_free = self.slots.iter().position(|s| *s == EdgeSlot::Free);
        let count = AtomicUsize::new(0);
        let limit = cap.min(usize::MAX as f64) as usize;
        let shard = |fixed: Option<Label>| -> Result<Vec<u128>> {
            let mut labels = vec![0usize; ne];
            let mut out = Vec::new();
            self.dfs(cat, 0, &checks, first_free.zip(fixed), &mut labels, &mut out, &count, limit)?;
            Ok(out)
        };
        let parts: Vec<Result<Vec<u128>>> = match first_free {
            Some(_) => par::map_range(self.rank, |l| shard(Some(l))),
            None => vec![shard(None)],
        };
        let mut keys = Vec::new();
        for p in parts {
            keys.extend(p?);
        }
        debug_assert!(keys.windows(2).all(|w| w[0] < w[1]));
        Ok(keys)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        cat: &FusionCategory,
        j: usize,
        checks: &[Vec<usize>],
        fixed: Option<(usize, Label)>,
        labels: &mut Vec<Label>,
        out: &mut Vec<u128>,
        count: &AtomicUsize,
        limit: usize,
    ) -> Result<()> {
        if j == self.edges.len() {
            return self.emit(cat, labels, out, count, limit);
        }
        let range = match (self.slots[j], fixed) {
            (EdgeSlot::Pinned(l), _) => l..l + 1,
            (EdgeSlot::Free, Some((fj, l))) if fj == j => l..l + 1,
            (EdgeSlot::Free, _) => 0..self.rank,
        };
        'labels: for l in range {
            labels[j] = l;
            for &m in &checks[j] {
                let [a, b, c] = self.vertex_edges[m];
                if cat.n(labels[a], labels[b], labels[c]) == 0 {
                    continue 'labels;
                }
            }
            self.dfs(cat, j + 1, checks, fixed, labels, out, count, limit)?;
        }
        Ok(())
    }

    fn emit(
        &self,
        cat: &FusionCategory,
        labels: &[Label],
        out: &mut Vec<u128>,
        count: &AtomicUsize,
        limit: usize,
    ) -> Result<()> {
        let mut base = 0u128;
        for (j, &l) in labels.iter().enumerate() {
            base |= (l as u128) << self.edge_shift(j);
        }
        let ranges: Vec<usize> =
            self.vertex_edges.iter().map(|&[a, b, c]| cat.n(labels[a], labels[b], labels[c])).collect();
        let total: usize = ranges.iter().product();
        if count.fetch_add(total, Ordering::Relaxed) + total > limit {
            return Err(Error::Cap { estimate: (count.load(Ordering::Relaxed)) as f64, cap: limit as f64 });
        }
        let mut digits = vec![0usize; ranges.len()];
        for _ in 0..total {
            let mut key = base;
            for (m, &d) in digits.iter().enumerate() {
                key |= (d as u128) << self.mult_shift(m);
            }
            out.push(key);
            // Increment the mixed-radix counter, last vertex fastest.
            for m in (0..digits.len()).rev() {
                digits[m] += 1;
                if digits[m] < ranges[m] {
                    break;
                }
                digits[m] = 0;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[u128] {
        &self.keys
    }

    pub fn key(&self, i: usize) -> u128 {
        self.keys[i]
    }

    /// Basis index of a configuration key.
    pub fn index_of(&self, key: u128) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }

    pub fn edge_shift(&self, pos: usize) -> u32 {
        (self.edges.len() - 1 - pos) as u32 * self.label_bits + self.vertices.len() as u32 * self.mult_bits
    }

    pub fn mult_shift(&self, vpos: usize) -> u32 {
        (self.vertices.len() - 1 - vpos) as u32 * self.mult_bits
    }

    pub fn label_mask(&self, pos: usize) -> u128 {
        ((1u128 << self.label_bits) - 1) << self.edge_shift(pos)
    }

    pub fn mult_mask(&self, vpos: usize) -> u128 {
        ((1u128 << self.mult_bits) - 1) << self.mult_shift(vpos)
    }

    pub fn label(&self, key: u128, pos: usize) -> Label {
        if self.label_bits == 0 {
            return 0;
        }
        ((key >> self.edge_shift(pos)) & ((1u128 << self.label_bits) - 1)) as Label
    }

    pub fn mult(&self, key: u128, vpos: usize) -> usize {
        if self.mult_bits == 0 {
            return 0;
        }
        ((key >> self.mult_shift(vpos)) & ((1u128 << self.mult_bits) - 1)) as usize
    }

    /// `key` with the label at `pos` replaced.
    pub fn with_label(&self, key: u128, pos: usize, l: Label) -> u128 {
        (key & !self.label_mask(pos)) | ((l as u128) << self.edge_shift(pos))
    }

    /// `key` with the multiplicity of vertex `vpos` replaced.
    pub fn with_mult(&self, key: u128, vpos: usize, m: usize) -> u128 {
        if self.mult_bits == 0 {
            return key;
        }
        (key & !self.mult_mask(vpos)) | ((m as u128) << self.mult_shift(vpos))
    }

    /// All edge labels of a key in space edge order.
    pub fn labels(&self, key: u128) -> Vec<Label> {
        (0..self.edges.len()).map(|j| self.label(key, j)).collect()
    }

    /// Position of a lattice edge in this space.
    pub fn edge_position(&self, edge: usize) -> Option<usize> {
        self.edge_pos.get(&edge).copied()
    }

    /// Position of a lattice vertex in this space.
    pub fn vertex_position(&self, v: usize) -> Option<usize> {
        self.vertex_pos.get(&v).copied()
    }

    /// Local state of vertex `vpos` (its three labels and multiplicity) as a
    /// single integer. This is the vertex's factor in the embedding of the
    /// constrained space into the tensor product over vertices.
    pub fn site_key(&self, key: u128, vpos: usize) -> u32 {
        let [a, b, c] = self.vertex_edges[vpos];
        let r = self.rank as u32;
        ((self.label(key, a) as u32 * r + self.label(key, b) as u32) * r + self.label(key, c) as u32)
            * self.max_mult as u32
            + self.mult(key, vpos) as u32
    }

    /// Positions of free dangling edges.
    pub fn free_legs(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&j| self.dangling[j] && self.slots[j] == EdgeSlot::Free).collect()
    }

    /// Groups basis indices by the labels at `positions`.
    pub fn group_by_labels(&self, positions: &[usize]) -> BTreeMap<Vec<Label>, Vec<usize>> {
        let mut out: BTreeMap<Vec<Label>, Vec<usize>> = BTreeMap::new();
        for (i, &k) in self.keys.iter().enumerate() {
            out.entry(positions.iter().map(|&p| self.label(k, p)).collect()).or_default().push(i);
        }
        out
    }

    /// Stable fingerprint of the basis (FNV-1a over layout and keys), used in
    /// state file headers.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u128| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(self.rank as u128);
        for &v in &self.vertices {
            feed(v as u128);
        }
        for &e in &self.edges {
            feed(e as u128);
        }
        for &k in &self.keys {
            feed(k);
        }
        h
    }
}

/// Brute-force count of admissible labelings (times multiplicities) of a
/// space, filtering the full product set. Test oracle for small spaces.
pub fn brute_force_count(cat: &FusionCategory, lat: &HoneycombLattice, spec: &SpaceSpec) -> Result<usize> {
    let b = StringNetBasis::layout(cat, lat, spec)?;
    let free: Vec<usize> = (0..b.edges.len()).filter(|&j| b.slots[j] == EdgeSlot::Free).collect();
    let mut labels: Vec<Label> = b.slots.iter().map(|s| if let EdgeSlot::Pinned(l) = s { *l } else { 0 }).collect();
    let total = b.rank.pow(free.len() as u32);
    let mut count = 0;
    for code in 0..total {
        let mut c = code;
        for &j in &free {
            labels[j] = c % b.rank;
            c /= b.rank;
        }
        count += b.vertex_edges.iter().map(|&[x, y, z]| cat.n(labels[x], labels[y], labels[z])).product::<usize>();
    }
    Ok(count)
}
