//! Entanglement-bootstrap checks on computed string-net states: the local
//! axioms on every placement, the area-law fit, and the sector structure of
//! information convex sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::fusion_category::{FusionCategory, Label};
use crate::hamiltonian::{ground_space_by_block, StringNetModel};
use crate::lattice::{
    make_axiom_partition, valid_anchors, HoneycombLattice, PartitionKind, SpaceSpec, StringNetBasis, Topology, VCoord,
};
use crate::linalg::{eigh, entropy_of};
use crate::quantum_info::{
    petz_merge, reduced_density_matrix, reduced_transitions, region_entropy, trace_distance, LocalOperator,
    MergeReport, MergeRoles, VectorGroup,
};
use crate::{par, Error, Result, C64};

/// One evaluated axiom placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomRecord {
    pub kind: String,
    pub anchor: usize,
    pub value: f64,
    pub pass: bool,
}

/// Axiom values over all placements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub width: usize,
    pub tolerance: f64,
    pub max_abs: f64,
    pub records: Vec<AxiomRecord>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `placement,kind,value` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("placement,kind,value\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{:.6e}\n", r.anchor, r.kind, r.value));
        }
        out
    }
}

/// Entropies of one state memoized by region.
pub struct EntropyCache<'a> {
    basis: &'a StringNetBasis,
    ens: &'a [(f64, &'a [C64])],
    memo: Mutex<HashMap<BTreeSet<usize>, f64>>,
}

impl<'a> EntropyCache<'a> {
    pub fn new(basis: &'a StringNetBasis, ens: &'a [(f64, &'a [C64])]) -> Self {
        EntropyCache { basis, ens, memo: Mutex::new(HashMap::new()) }
    }

    pub fn entropy(&self, region: &BTreeSet<usize>) -> Result<f64> {
        if let Some(&s) = self.memo.lock().unwrap().get(region) {
            return Ok(s);
        }
        let s = region_entropy(self.basis, self.ens, region)?;
        self.memo.lock().unwrap().insert(region.clone(), s);
        Ok(s)
    }
}

fn union(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> BTreeSet<usize> {
    a.union(b).copied().collect()
}

/// The axiom combination for one partition: A0 is `S(BC) + S(C) − S(B)`,
/// A1 is `S(BC) + S(CD) − S(B) − S(D)`.
pub fn axiom_value(
    cache: &EntropyCache,
    lat: &HoneycombLattice,
    kind: PartitionKind,
    anchor: usize,
    width: usize,
) -> Result<f64> {
    let p = make_axiom_partition(lat, kind, anchor, (width, width))?;
    let (b, c, d) = (p.get('B'), p.get('C'), p.get('D'));
    Ok(match kind {
        PartitionKind::A0Bulk | PartitionKind::A0Boundary => {
            cache.entropy(&union(b, c))? + cache.entropy(c)? - cache.entropy(b)?
        }
        PartitionKind::A1Bulk | PartitionKind::A1Boundary => {
            cache.entropy(&union(b, c))? + cache.entropy(&union(c, d))? - cache.entropy(b)? - cache.entropy(d)?
        }
    })
}

/// Axiom kinds that apply to a lattice: bulk on the torus, boundary on an
/// open patch.
pub fn axiom_kinds(lat: &HoneycombLattice) -> Vec<PartitionKind> {
    match lat.topology {
        Topology::Torus => vec![PartitionKind::A0Bulk, PartitionKind::A1Bulk],
        Topology::Open => vec![PartitionKind::A0Boundary, PartitionKind::A1Boundary],
    }
}

/// Evaluates the axioms of `kinds` at every valid anchor for the given
/// buffer width. The state is `ens` over `basis` (the whole lattice).
pub fn verify_axioms(
    basis: &StringNetBasis,
    lat: &HoneycombLattice,
    ens: &[(f64, &[C64])],
    kinds: &[PartitionKind],
    width: usize,
    tol: f64,
) -> Result<AxiomReport> {
    let cache = EntropyCache::new(basis, ens);
    let mut jobs = Vec::new();
    for &k in kinds {
        for a in valid_anchors(lat, k, (width, width)) {
            jobs.push((k, a));
        }
    }
    if jobs.is_empty() {
        return Err(Error::Geometry(format!("no valid placement at width {width}")));
    }
    let values = par::map_slice(&jobs, |&(k, a)| axiom_value(&cache, lat, k, a, width));
    let mut records = Vec::with_capacity(jobs.len());
    for ((k, a), v) in jobs.into_iter().zip(values) {
        let value = v?;
        records.push(AxiomRecord { kind: k.name().to_string(), anchor: a, value, pass: value.abs() < tol });
    }
    let max_abs = records.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
    Ok(AxiomReport { width, tolerance: tol, max_abs, records })
}

/// Least-squares fit `S = α n − γ` over regions with `n` crossed edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaLawFit {
    pub alpha: f64,
    pub gamma: f64,
    /// Largest deviation of a point from the fitted line.
    pub residual: f64,
    /// `(crossed edges, entropy)` per region.
    pub points: Vec<(usize, f64)>,
}

/// Disks of increasing boundary around vertex `v`: the vertex, an edge, a
/// three-vertex path and the ring of a plaquette containing `v` (3, 4, 5
/// and 6 crossed edges on the honeycomb).
pub fn standard_disks(lat: &HoneycombLattice, v: usize) -> Result<Vec<BTreeSet<usize>>> {
    let c = lat.vertices[v].coord;
    let keep = |x: i32, y: i32| lat.has_plaquette(x, y);
    let (px, py) = c
        .plaquettes()
        .into_iter()
        .find(|&(x, y)| keep(x, y))
        .ok_or_else(|| Error::Geometry(format!("vertex {v} touches no plaquette")))?;
    let ring = crate::lattice::plaquette_coords(px, py).0;
    let at = ring.iter().position(|&r| r == c).unwrap();
    let path = |n: usize| -> BTreeSet<VCoord> { (0..n).map(|k| ring[(at + k) % 6]).collect() };
    let mut out = Vec::new();
    for n in [1, 2, 3, 6] {
        out.push(lat.embed(&path(n))?);
    }
    Ok(out)
}

/// Fits the area law over `regions` (each a vertex set of the lattice).
pub fn area_law_fit(
    basis: &StringNetBasis,
    lat: &HoneycombLattice,
    ens: &[(f64, &[C64])],
    regions: &[BTreeSet<usize>],
) -> Result<AreaLawFit> {
    let sizes: BTreeSet<usize> = regions.iter().map(|r| lat.boundary_size(r)).collect();
    if sizes.len() < 2 {
        return Err(Error::Precondition("area-law fit needs at least two distinct boundary sizes".into()));
    }
    let ents = par::map_slice(regions, |r| region_entropy(basis, ens, r));
    let mut points = Vec::with_capacity(regions.len());
    for (r, s) in regions.iter().zip(ents) {
        points.push((lat.boundary_size(r), s?));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    let alpha = sxy / sxx;
    let gamma = alpha * mx - my;
    let residual = points.iter().map(|p| (alpha * p.0 as f64 - gamma - p.1).abs()).fold(0.0, f64::max);
    Ok(AreaLawFit { alpha, gamma, residual, points })
}

/// Region shapes for information convex sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SectorGeometry {
    /// Vertex row `y` of a torus, an annulus wrapping the x cycle. The
    /// thickened region adds rows on both sides.
    BulkStrip { row: usize },
    /// The plaquette column `x` of an open patch, running from the lower to
    /// the upper vacuum boundary: a half-annulus around the part of the patch
    /// to its left.
    BoundaryStrip { column: usize },
    /// `cluster^radius(vertex)`.
    Disk { vertex: usize, radius: usize },
}

impl SectorGeometry {
    pub fn name(&self) -> &'static str {
        match self {
            SectorGeometry::BulkStrip { .. } => "annulus",
            SectorGeometry::BoundaryStrip { .. } => "half-annulus",
            SectorGeometry::Disk { .. } => "disk",
        }
    }

    /// `(Ω, Ω⁺)` for the given thickening.
    pub fn regions(&self, lat: &HoneycombLattice, thickening: usize) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
        match *self {
            SectorGeometry::BulkStrip { row } => {
                if lat.topology != Topology::Torus {
                    return Err(Error::Geometry("the bulk strip lives on a torus".into()));
                }
                if row >= lat.ly || lat.ly < 2 * thickening + 2 {
                    return Err(Error::Geometry(format!(
                        "thickening {thickening} around row {row} needs Ly ≥ {}",
                        2 * thickening + 2
                    )));
                }
                let ly = lat.ly as i64;
                let rows = |t: usize| -> BTreeSet<usize> {
                    let wanted: BTreeSet<i64> =
                        (-(t as i64)..=t as i64).map(|d| (row as i64 + d).rem_euclid(ly)).collect();
                    (0..lat.n_vertices()).filter(|&v| wanted.contains(&(lat.vertices[v].coord.y as i64))).collect()
                };
                Ok((rows(0), rows(thickening)))
            }
            SectorGeometry::BoundaryStrip { column } => {
                if lat.topology != Topology::Open {
                    return Err(Error::Geometry("the boundary strip lives on an open patch".into()));
                }
                let x0 = column as i32;
                if column < thickening + 1 || column + thickening + 1 >= lat.lx {
                    return Err(Error::Geometry(format!(
                        "column {column} with thickening {thickening} needs Lx ≥ {}",
                        column + thickening + 2
                    )));
                }
                let cols = |t: i32| -> Result<BTreeSet<usize>> {
                    let mut set = BTreeSet::new();
                    for y in 0..lat.ly as i32 {
                        for x in x0 - t..=x0 + t {
                            set.extend(crate::lattice::plaquette_coords(x, y).0);
                        }
                    }
                    lat.embed(&set)
                };
                Ok((cols(0)?, cols(thickening as i32)?))
            }
            SectorGeometry::Disk { vertex, radius } => {
                if vertex >= lat.n_vertices() {
                    return Err(Error::Geometry(format!("vertex {vertex} out of range")));
                }
                let outer = lat.cluster(vertex, radius + thickening)?;
                if outer.len() == lat.n_vertices() {
                    return Err(Error::Geometry("thickened disk covers the lattice".into()));
                }
                Ok((lat.cluster(vertex, radius)?, outer))
            }
        }
    }
}

/// One orthogonal sector of an information convex set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorBlock {
    pub rank: usize,
    pub entropy: f64,
    /// Weight of the reference state in this sector.
    pub weight: f64,
}

/// Orthogonal extreme points of an information convex set.
#[derive(Clone, Debug, Serialize)]
pub struct SectorDecomposition {
    pub geometry: String,
    pub thickening: usize,
    pub region_size: usize,
    pub thickened_size: usize,
    /// Linear dimension of the span of the reduced ground states.
    pub span_dim: usize,
    pub support_dim: usize,
    pub blocks: Vec<SectorBlock>,
    /// Designated vacuum block: the block holding the reference state
    /// (weight ≥ 1 − 1e-6) when there is one, otherwise the block of least
    /// entropy (first in block order).
    pub vacuum: Option<usize>,
    /// Whether `vacuum` was matched to the reference state.
    pub vacuum_matched: bool,
    /// Cluster count agrees with the span dimension and the ranks fill the
    /// support.
    pub consistent: bool,
    #[serde(skip)]
    pub states: Vec<DMatrix<C64>>,
    #[serde(skip)]
    pub projectors: Vec<DMatrix<C64>>,
    #[serde(skip)]
    pub configs: Vec<Vec<u32>>,
}

impl SectorDecomposition {
    pub fn n_sectors(&self) -> usize {
        self.blocks.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Weights `Tr(P_a ρ)` of an operator given over configurations of the
    /// same region (any configurations outside the support are ignored).
    pub fn weights_of(&self, configs: &[Vec<u32>], rho: &DMatrix<C64>) -> Vec<f64> {
        let map: Vec<Option<usize>> = configs.iter().map(|c| self.configs.binary_search(c).ok()).collect();
        let n = self.configs.len();
        let mut r = DMatrix::<C64>::zeros(n, n);
        for (i, mi) in map.iter().enumerate() {
            for (j, mj) in map.iter().enumerate() {
                if let (Some(a), Some(b)) = (mi, mj) {
                    r[(*a, *b)] = rho[(i, j)];
                }
            }
        }
        self.projectors.iter().map(|p| (p * &r).trace().re).collect()
    }
}

/// Relative tolerance for grouping eigenvectors into sectors.
pub const CLUSTER_TOL: f64 = 1e-8;

fn flatten(m: &DMatrix<C64>) -> Vec<f64> {
    m.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn real_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Absolute cutoff for new span directions. Generators are reductions of
/// normalized vectors (entries of order one), so a residual below this is
/// rounding noise whatever the generator's own norm.
const SPAN_TOL: f64 = 1e-9;

/// Orthonormal basis (Frobenius inner product) of the real span of the
/// Hermitian parts of `mats`.
fn hermitian_span(gens: impl Iterator<Item = DMatrix<C64>>, n: usize) -> Vec<DMatrix<C64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for g in gens {
        let mut v = flatten(&g);
        if real_dot(&v, &v).sqrt() < SPAN_TOL {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let c = real_dot(b, &v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let norm = real_dot(&v, &v).sqrt();
        if norm > SPAN_TOL {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
        .into_iter()
        .map(|v| DMatrix::from_fn(n, n, |i, j| C64::new(v[2 * (i * n + j)], v[2 * (i * n + j) + 1])))
        .collect()
}

/// Sector structure of `Σ(Ω)`: ground states of the Hamiltonian restricted
/// to `Ω⁺` (every plaquette whose ring lies in `Ω⁺`, free legs), reduced to
/// `Ω`. The reductions span the sector states; a random Hermitian element
/// `H = Σ c_a ρ_a` is diagonalized and its eigenvectors grouped by the
/// ratios `⟨u|E_k|u⟩/⟨u|H|u⟩` over a basis `E_k` of the span, which are
/// constant within a sector. Blocks are ordered by entropy, then rank. The
/// reference state is the first ground state with all legs in the vacuum.
pub fn information_convex_sectors(
    cat: &FusionCategory,
    lat: &HoneycombLattice,
    geometry: SectorGeometry,
    thickening: usize,
    seed: u64,
    basis_cap: f64,
) -> Result<SectorDecomposition> {
    let (omega, omega_plus) = geometry.regions(lat, thickening)?;
    let spec = SpaceSpec::region(lat, omega_plus.clone());
    let basis = StringNetBasis::enumerate(cat, lat, &spec, basis_cap)?;
    let model = StringNetModel::new(cat, lat, &basis)?;
    let blocks = ground_space_by_block(&model, seed)?;
    if blocks.is_empty() {
        return Err(Error::Convergence("restricted Hamiltonian has no ground states".into()));
    }
    // Reference: first block whose legs are all vacuum.
    let legs = basis.free_legs();
    let vac_block = blocks.iter().position(|(keys, _)| legs.iter().all(|&l| basis.label(keys[0], l) == 0));
    let groups: Vec<VectorGroup> = blocks
        .iter()
        .map(|(keys, vecs)| VectorGroup { keys, vecs: vecs.iter().map(|v| v.as_slice()).collect() })
        .collect();
    let (configs, x) = reduced_transitions(&basis, &groups, &omega)?;
    let n = configs.len();
    let gens = x.iter().flat_map(|g| {
        let k = g.len();
        (0..k).flat_map(move |i| {
            (i..k).flat_map(move |j| {
                let h = &g[i][j] + g[i][j].adjoint();
                let a = (&g[i][j] - g[i][j].adjoint()) * C64::new(0.0, 1.0);
                if i == j {
                    vec![h]
                } else {
                    vec![h, a]
                }
            })
        })
    });
    let span = hermitian_span(gens, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = DMatrix::<C64>::zeros(n, n);
    for e in &span {
        let g: f64 = StandardNormal.sample(&mut rng);
        h += e * C64::new(g, 0.0);
    }
    let (vals, vecs) = eigh(&h);
    let top = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut clusters: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    for (u, &lam) in vals.iter().enumerate() {
        if lam.abs() <= 1e-9 * top {
            continue;
        }
        let col = vecs.column(u);
        let ratios: Vec<f64> = span.iter().map(|e| ((col.adjoint() * e * col)[(0, 0)].re) / lam).collect();
        let scale = ratios.iter().map(|r| r * r).sum::<f64>().sqrt().max(1.0);
        let found = clusters.iter_mut().find(|(rep, _)| {
            rep.iter().zip(&ratios).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= CLUSTER_TOL.sqrt() * scale
        });
        match found {
            Some((_, members)) => members.push(u),
            None => clusters.push((ratios, vec![u])),
        }
    }
    let reference = vac_block.map(|b| x[b][0][0].clone());
    let mut sectors: Vec<(SectorBlock, DMatrix<C64>, DMatrix<C64>, usize)> = clusters
        .iter()
        .map(|(_, members)| {
            let mut p = DMatrix::<C64>::zeros(n, n);
            for &u in members {
                let c = vecs.column(u);
                p += c * c.adjoint();
            }
            let php = &p * &h * &p;
            let tr = php.trace().re;
            let rho = php / C64::new(tr, 0.0);
            let entropy = entropy_of(crate::linalg::eigvalsh(&rho));
            let weight = reference.as_ref().map(|r| (&p * r).trace().re).unwrap_or(0.0);
            let first = (0..n).find(|&i| p[(i, i)].re > 1e-9).unwrap_or(n);
            (SectorBlock { rank: members.len(), entropy, weight }, rho, p, first)
        })
        .collect();
    sectors.sort_by(|a, b| a.0.entropy.total_cmp(&b.0.entropy).then(a.0.rank.cmp(&b.0.rank)).then(a.3.cmp(&b.3)));
    let support_dim: usize = sectors.iter().map(|s| s.0.rank).sum();
    let support_rank = vals.iter().filter(|&&v| v.abs() > 1e-9 * top).count();
    let matched = sectors.iter().position(|s| s.0.weight >= 1.0 - 1e-6);
    let vacuum = matched.or(if sectors.is_empty() { None } else { Some(0) });
    let consistent = sectors.len() == span.len() && support_dim == support_rank;
    Ok(SectorDecomposition {
        geometry: geometry.name().to_string(),
        thickening,
        region_size: omega.len(),
        thickened_size: omega_plus.len(),
        span_dim: span.len(),
        support_dim,
        vacuum,
        vacuum_matched: matched.is_some(),
        consistent,
        blocks: sectors.iter().map(|s| s.0.clone()).collect(),
        states: sectors.iter().map(|s| s.1.clone()).collect(),
        projectors: sectors.iter().map(|s| s.2.clone()).collect(),
        configs,
    })
}

/// Sector counts at `thickening` and `thickening + 1`.
#[derive(Clone, Debug, Serialize)]
pub struct SectorConvergence {
    pub counts: [usize; 2],
    pub converged: bool,
}

pub fn sector_count_convergence(
    cat: &FusionCategory,
    lat: &HoneycombLattice,
    geometry: SectorGeometry,
    thickening: usize,
    seed: u64,
    basis_cap: f64,
) -> Result<SectorConvergence> {
    let a = information_convex_sectors(cat, lat, geometry, thickening, seed, basis_cap)?.n_sectors();
    let b = information_convex_sectors(cat, lat, geometry, thickening + 1, seed, basis_cap)?.n_sectors();
    Ok(SectorConvergence { counts: [a, b], converged: a == b })
}

/// `S(ρ_a) − S(ρ_vacuum)` for every non-vacuum sector, in block order.
pub fn sector_entropy_differences(decomp: &SectorDecomposition) -> Result<Vec<f64>> {
    let v = decomp.vacuum.ok_or_else(|| Error::Precondition("decomposition has no sectors".into()))?;
    let s0 = decomp.blocks[v].entropy;
    Ok(decomp.blocks.iter().enumerate().filter(|&(i, _)| i != v).map(|(_, b)| b.entropy - s0).collect())
}

/// Labels of the three slots of a vertex-local key (see
/// [`StringNetBasis::site_key`]).
pub fn site_labels(rank: usize, max_mult: usize, key: u32) -> [u32; 3] {
    let r = rank as u32;
    let k = key / max_mult as u32;
    [k / (r * r), (k / r) % r, k % r]
}

/// Consistency of a tuple of vertex-local keys: every edge shared by two
/// listed vertices carries one label.
pub fn lattice_compatibility(
    lat: &HoneycombLattice,
    rank: usize,
    max_mult: usize,
) -> impl Fn(&[usize], &[u32]) -> bool + '_ {
    move |sites: &[usize], keys: &[u32]| {
        let mut seen: BTreeMap<usize, u32> = BTreeMap::new();
        for (&v, &k) in sites.iter().zip(keys) {
            let labels = site_labels(rank, max_mult, k);
            for (slot, &e) in lat.vertices[v].slots.iter().enumerate() {
                if let Some(&l) = seen.get(&e) {
                    if l != labels[slot] {
                        return false;
                    }
                } else {
                    seen.insert(e, labels[slot]);
                }
            }
        }
        true
    }
}

/// Vertices of row `y` on a torus ordered by x (A before B in each cell),
/// which is the cyclic order along the zigzag.
pub fn row_cycle(lat: &HoneycombLattice, y: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for x in 0..lat.lx as i32 {
        for c in [VCoord::a(x, y as i32), VCoord::b(x, y as i32)] {
            if let Some(id) = lat.vertex_id(c) {
                out.push(id);
            }
        }
    }
    out
}

/// Index of the block that holds `rho` (given over `configs` of the same
/// region) up to `tol`; fails when the state is spread over several blocks.
pub fn block_of(decomp: &SectorDecomposition, configs: &[Vec<u32>], rho: &DMatrix<C64>, tol: f64) -> Result<usize> {
    let w = decomp.weights_of(configs, rho);
    w.iter()
        .position(|&x| x >= 1.0 - tol)
        .ok_or_else(|| Error::Precondition(format!("state is not inside a single sector (weights {w:?})")))
}

/// Outcome of a lattice merge demonstration.
#[derive(Clone, Debug, Serialize)]
pub struct MergeDemo {
    pub kind: String,
    pub roles: MergeRoles,
    pub report: MergeReport,
    /// Trace distance of the merged state to its predicted form.
    pub target_distance: f64,
    /// Sector weights of the merged state (annulus closure only).
    pub sector_weights: Vec<f64>,
    /// `d_a²/D²` for the sectors in block order (annulus closure only).
    pub expected_weights: Vec<f64>,
    pub weight_error: f64,
}

fn arcs(cycle: &[usize], sizes: [usize; 4]) -> MergeRoles {
    let mut it = cycle.iter().copied();
    let mut take = |n: usize| -> Vec<usize> { (&mut it).take(n).collect() };
    MergeRoles { a: take(sizes[0]), b: take(sizes[1]), c: take(sizes[2]), d: take(sizes[3]) }
}

fn set_of(parts: &[&Vec<usize>]) -> BTreeSet<usize> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Merges the reductions of a global state onto `ABC` and `BCD`, four
/// consecutive single-vertex arcs of torus row `row`, and compares the
/// result with the state's own reduction onto `ABCD`. The arcs stop short
/// of closing the row, so `ABCD` is a disk.
pub fn markov_strip_merge(
    cat: &FusionCategory,
    basis: &StringNetBasis,
    lat: &HoneycombLattice,
    ens: &[(f64, &[C64])],
    row: usize,
    tol: f64,
) -> Result<MergeDemo> {
    let cycle = row_cycle(lat, row);
    if cycle.len() < 5 {
        return Err(Error::Geometry("the Markov strip needs a row of at least five vertices".into()));
    }
    let roles = arcs(&cycle, [1, 1, 1, 1]);
    let rho = reduced_density_matrix(basis, ens, &set_of(&[&roles.a, &roles.b, &roles.c]), "ABC")?;
    let lam = reduced_density_matrix(basis, ens, &set_of(&[&roles.b, &roles.c, &roles.d]), "BCD")?;
    let sigma = reduced_density_matrix(basis, ens, &set_of(&[&roles.a, &roles.b, &roles.c, &roles.d]), "ABCD")?;
    let compat = lattice_compatibility(lat, cat.rank(), basis.max_mult);
    let (tau, report) = petz_merge(&rho.op, &lam.op, &roles, &compat, tol)?;
    let target_distance = trace_distance(&tau, &sigma.op)?;
    Ok(MergeDemo {
        kind: "markov-strip".into(),
        roles,
        report,
        target_distance,
        sector_weights: Vec::new(),
        expected_weights: Vec::new(),
        weight_error: 0.0,
    })
}

/// `d_i² d_j² / D⁴` over pairs of simple objects, ascending: the
/// quantum-dimension weights of the sectors of a doubled theory with `rank²`
/// anyons, ordered like sectors sorted by entropy.
pub fn doubled_weights(cat: &FusionCategory) -> Vec<f64> {
    let d2: Vec<f64> = (0..cat.rank()).map(|a| cat.d(a as Label).powi(2)).collect();
    let total: f64 = d2.iter().sum();
    let mut w: Vec<f64> = d2.iter().flat_map(|x| d2.iter().map(move |y| x * y / (total * total))).collect();
    w.sort_by(f64::total_cmp);
    w
}

/// Closes torus row `row` (split into four arcs) by merging the reductions
/// of a global state onto `ABC` and `BCD`. The merged state lives on the
/// whole row, an annulus; its weights in the row's sectors are compared with
/// `d_a²/D²` and the state with the weighted sector mixture.
#[allow(clippy::too_many_arguments)]
pub fn annulus_closure_merge(
    cat: &FusionCategory,
    basis: &StringNetBasis,
    lat: &HoneycombLattice,
    ens: &[(f64, &[C64])],
    row: usize,
    tol: f64,
    seed: u64,
    basis_cap: f64,
) -> Result<MergeDemo> {
    let cycle = row_cycle(lat, row);
    let n = cycle.len();
    if n < 6 {
        return Err(Error::Geometry("the annulus closure needs a row of at least six vertices".into()));
    }
    // A and D get two vertices each so that a loop around the other cycle
    // of the torus can cross the row on an edge inside A (or D); otherwise
    // the reductions onto BCD (or ABC) would depend on the ground state.
    let b = (n - 4) / 2;
    let roles = arcs(&cycle, [2, b, n - 4 - b, 2]);
    let rho = reduced_density_matrix(basis, ens, &set_of(&[&roles.a, &roles.b, &roles.c]), "ABC")?;
    let lam = reduced_density_matrix(basis, ens, &set_of(&[&roles.b, &roles.c, &roles.d]), "BCD")?;
    let compat = lattice_compatibility(lat, cat.rank(), basis.max_mult);
    let (tau, report) = petz_merge(&rho.op, &lam.op, &roles, &compat, tol)?;
    let decomp = information_convex_sectors(cat, lat, SectorGeometry::BulkStrip { row }, 1, seed, basis_cap)?;
    // Express τ over the row's vertex ids in ascending order, as the sectors are.
    let sorted: Vec<usize> = set_of(&[&roles.a, &roles.b, &roles.c, &roles.d]).into_iter().collect();
    let tau = tau.reorder(&sorted)?;
    let sector_weights = decomp.weights_of(&tau.configs, &tau.mat);
    let expected_weights = doubled_weights(cat);
    if expected_weights.len() != sector_weights.len() {
        return Err(Error::Precondition(format!(
            "found {} sectors, the quantum dimensions predict {}",
            sector_weights.len(),
            expected_weights.len()
        )));
    }
    let weight_error = sector_weights.iter().zip(&expected_weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut mixture = DMatrix::<C64>::zeros(decomp.configs.len(), decomp.configs.len());
    for (w, s) in expected_weights.iter().zip(&decomp.states) {
        mixture += s * C64::new(*w, 0.0);
    }
    let target = LocalOperator { sites: sorted, configs: decomp.configs.clone(), mat: mixture };
    let target_distance = trace_distance(&tau, &target)?;
    Ok(MergeDemo {
        kind: "annulus-closure".into(),
        roles,
        report,
        target_distance,
        sector_weights,
        expected_weights,
        weight_error,
    })
}
