//! Levin-Wen operators: plaquette operators `B_p^s`, projectors `B_p`, the
//! Hamiltonian, exact ground spaces and the operator-level checks.
//!
//! A plaquette operator only touches the six ring edges and six ring vertex
//! multiplicities of its plaquette; the outer legs are spectators. Its matrix
//! therefore splits into independent blocks labelled by the six leg labels,
//! and the blocks are the same for every plaquette. [`PlaquetteTable`]
//! precomputes those blocks once per category; applying an operator to a
//! state is a row gather through binary searches in the configuration keys.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagrams::{completeness_mult, plaquette_coeffs, VertexLabels};
use crate::fusion_category::{FusionCategory, Label};
use crate::lattice::{EdgeSlot, HoneycombLattice, StringNetBasis};
use crate::linalg;
use crate::{par, Error, Result, C64};

/// Ring labels and vertex multiplicities of one plaquette, clockwise from
/// the top vertex.
pub type RingConfig = ([Label; 6], [usize; 6]);

/// `(left, right, trunk)` labels of ring vertex `kind` (1..=6) given its leg
/// `e`, the preceding ring edge `ia` and the following one `ib`.
pub fn vertex_triple(kind: usize, e: Label, ia: Label, ib: Label) -> (Label, Label, Label) {
    match kind {
        1 => (ia, ib, e),
        2 => (ia, e, ib),
        3 => (ib, e, ia),
        4 => (ib, ia, e),
        5 => (e, ia, ib),
        _ => (e, ib, ia),
    }
}

fn prev(k: usize) -> usize {
    (k + 5) % 6
}

/// Key of one cached vertex coefficient matrix.
type CoeffKey = (Label, usize, Label, Label, Label, Label, Label, usize, usize);

/// One leg block of the plaquette operators.
#[derive(Clone, Debug)]
pub struct LocalBlock {
    pub configs: Vec<RingConfig>,
    index: HashMap<RingConfig, usize>,
    /// `B^s` restricted to the block, one matrix per label `s`, acting as
    /// `(B ψ)_r = Σ_{r'} B[r, r'] ψ_{r'}`.
    pub mats: Vec<DMatrix<C64>>,
}

impl LocalBlock {
    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn index_of(&self, c: &RingConfig) -> Option<usize> {
        self.index.get(c).copied()
    }

    /// `Σ_s w_s B^s` on this block.
    pub fn combine(&self, weights: &[C64]) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (w, b) in weights.iter().zip(&self.mats) {
            if *w != C64::new(0.0, 0.0) {
                m += b * *w;
            }
        }
        m
    }
}

/// All leg blocks of `B^s`, indexed by the leg labels read as a base-rank
/// number (leg 1 most significant).
#[derive(Clone, Debug)]
pub struct PlaquetteTable {
    pub rank: usize,
    pub dims: Vec<f64>,
    pub total_dim: f64,
    pub duals: Vec<Label>,
    /// Fusion multiplicities `N_{st}^u`, flattened.
    fusion: Vec<usize>,
    blocks: Vec<Option<LocalBlock>>,
}

fn leg_code(rank: usize, legs: &[Label; 6]) -> usize {
    legs.iter().fold(0, |acc, &l| acc * rank + l)
}

impl PlaquetteTable {
    pub fn build(cat: &FusionCategory) -> Result<Self> {
        let rank = cat.rank();
        let coeffs = coefficient_cache(cat)?;
        let n_codes = rank.pow(6);
        let blocks: Vec<Result<Option<LocalBlock>>> = par::map_range(n_codes, |code| {
            let mut legs = [0; 6];
            let mut c = code;
            for k in (0..6).rev() {
                legs[k] = c % rank;
                c /= rank;
            }
            build_block(cat, &coeffs, legs)
        });
        let blocks = blocks.into_iter().collect::<Result<Vec<_>>>()?;
        let mut fusion = vec![0; rank * rank * rank];
        for s in 0..rank {
            for t in 0..rank {
                for u in 0..rank {
                    fusion[(s * rank + t) * rank + u] = cat.n(s, t, u);
                }
            }
        }
        Ok(PlaquetteTable {
            rank,
            dims: cat.qdim.clone(),
            total_dim: cat.total_dim,
            duals: cat.dual.clone(),
            fusion,
            blocks,
        })
    }

    pub fn block(&self, legs: &[Label; 6]) -> Option<&LocalBlock> {
        self.blocks[leg_code(self.rank, legs)].as_ref()
    }

    pub fn blocks(&self) -> impl Iterator<Item = ([Label; 6], &LocalBlock)> {
        let rank = self.rank;
        self.blocks.iter().enumerate().filter_map(move |(code, b)| {
            b.as_ref().map(|b| {
                let mut legs = [0; 6];
                let mut c = code;
                for k in (0..6).rev() {
                    legs[k] = c % rank;
                    c /= rank;
                }
                (legs, b)
            })
        })
    }

    pub fn n(&self, s: Label, t: Label, u: Label) -> usize {
        self.fusion[(s * self.rank + t) * self.rank + u]
    }

    /// Weights of the projector `B_p = D^{-2} Σ_s d_s B_p^s`.
    pub fn projector_weights(&self) -> Vec<C64> {
        let d2 = self.total_dim * self.total_dim;
        self.dims.iter().map(|&d| C64::new(d / d2, 0.0)).collect()
    }

    /// Weights selecting the single loop label `s`.
    pub fn label_weights(&self, s: Label) -> Vec<C64> {
        (0..self.rank).map(|t| C64::new(if t == s { 1.0 } else { 0.0 }, 0.0)).collect()
    }

    /// Sparse local operator `Σ_s w_s B^s`.
    pub fn local_op(&self, weights: &[C64]) -> LocalOp {
        let rows = self
            .blocks
            .iter()
            .map(|b| {
                b.as_ref().map(|b| {
                    let m = b.combine(weights);
                    (0..m.nrows())
                        .map(|r| (0..m.ncols()).filter(|&c| m[(r, c)].norm() > 1e-15).map(|c| (c, m[(r, c)])).collect())
                        .collect()
                })
            })
            .collect();
        LocalOp { rows }
    }
}

/// Every vertex coefficient matrix `b_k` that can occur, keyed by
/// `(s, kind, e, ia, ib, pa, pb, ga, gb)`.
fn coefficient_cache(cat: &FusionCategory) -> Result<HashMap<CoeffKey, DMatrix<C64>>> {
    let rank = cat.rank();
    let per_s: Vec<Result<Vec<(CoeffKey, DMatrix<C64>)>>> = par::map_range(rank, |s| {
        let mut out = Vec::new();
        for kind in 1..=6 {
            let ka = if kind == 1 { 6 } else { kind - 1 };
            for e in 0..rank {
                for ia in 0..rank {
                    for ib in 0..rank {
                        let (l, r, t) = vertex_triple(kind, e, ia, ib);
                        if cat.n(l, r, t) == 0 {
                            continue;
                        }
                        for pa in 0..rank {
                            let na = completeness_mult(cat, s, ka, ia, pa);
                            for pb in 0..rank {
                                let nb = completeness_mult(cat, s, kind, ib, pb);
                                let (l2, r2, t2) = vertex_triple(kind, e, pa, pb);
                                if na == 0 || nb == 0 || cat.n(l2, r2, t2) == 0 {
                                    continue;
                                }
                                for ga in 0..na {
                                    for gb in 0..nb {
                                        let lab = VertexLabels { e, ring: (ia, ib), primed: (pa, pb), gamma: (ga, gb) };
                                        let m = plaquette_coeffs(cat, s, kind, lab)?;
                                        out.push(((s, kind, e, ia, ib, pa, pb, ga, gb), m));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    });
    let mut cache = HashMap::new();
    for part in per_s {
        cache.extend(part?);
    }
    Ok(cache)
}

/// Ring configurations compatible with the legs, in lexicographic order.
fn ring_configs(cat: &FusionCategory, legs: [Label; 6]) -> Vec<RingConfig> {
    let rank = cat.rank();
    let mut out = Vec::new();
    for code in 0..rank.pow(6) {
        let mut ring = [0; 6];
        let mut c = code;
        for k in (0..6).rev() {
            ring[k] = c % rank;
            c /= rank;
        }
        let ranges: Vec<usize> = (0..6)
            .map(|k| {
                let (l, r, t) = vertex_triple(k + 1, legs[k], ring[prev(k)], ring[k]);
                cat.n(l, r, t)
            })
            .collect();
        if ranges.contains(&0) {
            continue;
        }
        for_each_digits(&ranges, |al| {
            let mut a = [0; 6];
            a.copy_from_slice(al);
            out.push((ring, a));
        });
    }
    out
}

/// Visits every mixed-radix digit vector below `ranges`, last digit fastest.
fn for_each_digits(ranges: &[usize], mut f: impl FnMut(&[usize])) {
    if ranges.contains(&0) {
        return;
    }
    let mut d = vec![0; ranges.len()];
    loop {
        f(&d);
        let mut k = ranges.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            d[k] += 1;
            if d[k] < ranges[k] {
                break;
            }
            d[k] = 0;
        }
    }
}

fn build_block(
    cat: &FusionCategory,
    coeffs: &HashMap<CoeffKey, DMatrix<C64>>,
    legs: [Label; 6],
) -> Result<Option<LocalBlock>> {
    let configs = ring_configs(cat, legs);
    if configs.is_empty() {
        return Ok(None);
    }
    let index: HashMap<RingConfig, usize> = configs.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let rank = cat.rank();
    let n = configs.len();
    let mut mats = Vec::with_capacity(rank);
    for s in 0..rank {
        let ds = cat.d(s);
        // m[(old, new)]: the loop fused into `old` produces `new` with this
        // amplitude; the operator is its transpose.
        let mut m = DMatrix::zeros(n, n);
        for (ro, (ring, al)) in configs.iter().enumerate() {
            let choices: Vec<Vec<Label>> = (0..6)
                .map(|k| (0..rank).filter(|&p| completeness_mult(cat, s, k + 1, ring[k], p) > 0).collect())
                .collect();
            let sizes: Vec<usize> = choices.iter().map(Vec::len).collect();
            let mut err = None;
            for_each_digits(&sizes, |pick| {
                let mut pr = [0; 6];
                for k in 0..6 {
                    pr[k] = choices[k][pick[k]];
                }
                let new_ranges: Vec<usize> = (0..6)
                    .map(|k| {
                        let (l, r, t) = vertex_triple(k + 1, legs[k], pr[prev(k)], pr[k]);
                        cat.n(l, r, t)
                    })
                    .collect();
                let gam: Vec<usize> = (0..6).map(|k| completeness_mult(cat, s, k + 1, ring[k], pr[k])).collect();
                let pref: f64 = (0..6).map(|k| (cat.d(pr[k]) / (ds * cat.d(ring[k]))).sqrt()).product();
                for_each_digits(&new_ranges, |alp| {
                    let mut total = C64::new(0.0, 0.0);
                    for_each_digits(&gam, |g| {
                        let mut prod = C64::new(1.0, 0.0);
                        for k in 0..6 {
                            let kp = prev(k);
                            let key = (s, k + 1, legs[k], ring[kp], ring[k], pr[kp], pr[k], g[kp], g[k]);
                            match coeffs.get(&key) {
                                Some(b) => prod *= b[(al[k], alp[k])],
                                None => {
                                    prod = C64::new(0.0, 0.0);
                                    if err.is_none() {
                                        err = Some(format!("missing vertex coefficient {key:?}"));
                                    }
                                }
                            }
                        }
                        total += prod;
                    });
                    let mut a = [0; 6];
                    a.copy_from_slice(alp);
                    if let Some(&rn) = index.get(&(pr, a)) {
                        m[(ro, rn)] += total * pref;
                    }
                });
            });
            if let Some(e) = err {
                return Err(Error::Inadmissible(e));
            }
        }
        mats.push(m.transpose());
    }
    Ok(Some(LocalBlock { configs, index, mats }))
}

/// A combination `Σ_s w_s B^s` as sparse rows per leg block.
#[derive(Clone, Debug)]
pub struct LocalOp {
    rows: Vec<Option<Vec<Vec<(usize, C64)>>>>,
}

/// Where one plaquette sits inside a configuration space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaquetteSites {
    pub plaquette: usize,
    pub ring: [usize; 6],
    pub legs: [usize; 6],
    pub vertices: [usize; 6],
}

/// Positions of plaquette `p` in `basis`. The plaquette must be active: all
/// six ring vertices belong to the space and no ring edge is pinned.
pub fn plaquette_sites(lat: &HoneycombLattice, basis: &StringNetBasis, p: usize) -> Result<PlaquetteSites> {
    lat.require_nondegenerate()?;
    let pl = lat.plaquettes.get(p).ok_or_else(|| Error::Geometry(format!("plaquette {p} out of range")))?;
    let mut s = PlaquetteSites { plaquette: p, ring: [0; 6], legs: [0; 6], vertices: [0; 6] };
    for k in 0..6 {
        s.vertices[k] = basis
            .vertex_position(pl.vertices[k])
            .ok_or_else(|| Error::Geometry(format!("plaquette {p} is not inside the space")))?;
        s.ring[k] = basis.edge_position(pl.ring[k]).expect("ring edge of a space vertex");
        s.legs[k] = basis.edge_position(pl.legs[k]).expect("leg of a space vertex");
        if basis.slots[s.ring[k]] != EdgeSlot::Free {
            return Err(Error::Geometry(format!("plaquette {p} has a pinned ring edge")));
        }
    }
    Ok(s)
}

/// Plaquettes whose ring lies inside the space with no pinned ring edge.
pub fn active_plaquettes(lat: &HoneycombLattice, basis: &StringNetBasis) -> Vec<PlaquetteSites> {
    (0..lat.n_plaquettes()).filter_map(|p| plaquette_sites(lat, basis, p).ok()).collect()
}

fn read_ring(basis: &StringNetBasis, sites: &PlaquetteSites, key: u128) -> ([Label; 6], RingConfig) {
    let mut legs = [0; 6];
    let mut ring = [0; 6];
    let mut al = [0; 6];
    for k in 0..6 {
        legs[k] = basis.label(key, sites.legs[k]);
        ring[k] = basis.label(key, sites.ring[k]);
        al[k] = basis.mult(key, sites.vertices[k]);
    }
    (legs, (ring, al))
}

/// A plaquette's view of a key set: the keys grouped by environment
/// (everything except the ring edges and ring multiplicities), each group
/// listed in the order of its leg block's ring configurations. Acting with a
/// plaquette operator is then a dense block product per group.
#[derive(Clone, Debug)]
pub struct PlaquetteIndex {
    pub sites: PlaquetteSites,
    /// Key positions, grouped.
    order: Vec<u32>,
    /// `(leg code, start)` per group.
    groups: Vec<(usize, usize)>,
    /// Group of every grouped position.
    pos_group: Vec<u32>,
}

impl PlaquetteIndex {
    /// Fails unless `keys` is closed under the plaquette operators.
    pub fn build(table: &PlaquetteTable, basis: &StringNetBasis, sites: PlaquetteSites, keys: &[u128]) -> Result<Self> {
        let mut ring_mask = 0u128;
        for k in 0..6 {
            ring_mask |= basis.label_mask(sites.ring[k]);
            if basis.max_mult > 1 {
                ring_mask |= basis.mult_mask(sites.vertices[k]);
            }
        }
        let tagged: Vec<Result<(u128, usize, u32)>> = par::map_range(keys.len(), |i| {
            let (legs, cfg) = read_ring(basis, &sites, keys[i]);
            let code = leg_code(table.rank, &legs);
            let block = table.blocks[code]
                .as_ref()
                .ok_or_else(|| Error::Inadmissible("legs outside the plaquette table".into()))?;
            let r = block
                .index_of(&cfg)
                .ok_or_else(|| Error::Inadmissible("ring configuration outside its block".into()))?;
            Ok((keys[i] & !ring_mask, r, i as u32))
        });
        let mut tagged = tagged.into_iter().collect::<Result<Vec<_>>>()?;
        tagged.sort_unstable();
        let mut order = Vec::with_capacity(keys.len());
        let mut groups = Vec::new();
        let mut pos_group = Vec::with_capacity(keys.len());
        let mut start = 0;
        while start < tagged.len() {
            let env = tagged[start].0;
            let (legs, _) = read_ring(basis, &sites, keys[tagged[start].2 as usize]);
            let code = leg_code(table.rank, &legs);
            let dim = table.blocks[code].as_ref().map_or(0, LocalBlock::dim);
            let end = start + dim;
            let complete = end <= tagged.len()
                && (start..end).all(|j| tagged[j].0 == env && tagged[j].1 == j - start)
                && (end == tagged.len() || tagged[end].0 != env);
            if !complete {
                return Err(Error::Inadmissible("key set is not closed under the plaquette operator".into()));
            }
            let g = groups.len() as u32;
            groups.push((code, start));
            for t in &tagged[start..end] {
                order.push(t.2);
                pos_group.push(g);
            }
            start = end;
        }
        Ok(PlaquetteIndex { sites, order, groups, pos_group })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `op · x` over the indexed key set.
    pub fn apply(&self, op: &LocalOp, x: &[C64]) -> Vec<C64> {
        let permuted: Vec<C64> = par::map_range(self.order.len(), |pos| {
            let (code, start) = self.groups[self.pos_group[pos] as usize];
            let rows = op.rows[code].as_ref().expect("block present for every indexed group");
            rows[pos - start].iter().map(|&(c, v)| v * x[self.order[start + c] as usize]).sum()
        });
        let mut out = vec![C64::new(0.0, 0.0); x.len()];
        for (pos, v) in permuted.into_iter().enumerate() {
            out[self.order[pos] as usize] = v;
        }
        out
    }

    /// Sparse triplets `(row, col, value)` of `op`.
    pub fn triplets(&self, op: &LocalOp) -> Vec<(usize, usize, C64)> {
        let mut out = Vec::new();
        for (pos, &g) in self.pos_group.iter().enumerate() {
            let (code, start) = self.groups[g as usize];
            let rows = op.rows[code].as_ref().expect("block present for every indexed group");
            for &(c, v) in &rows[pos - start] {
                out.push((self.order[pos] as usize, self.order[start + c] as usize, v));
            }
        }
        out
    }
}

/// Compressed sparse row operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    pub dim: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<C64>,
}

impl SparseOperator {
    /// Sums duplicate triplets and drops exact zeros.
    pub fn from_triplets(dim: usize, mut t: Vec<(usize, usize, C64)>) -> Self {
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; dim + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<C64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            indptr[r + 1] += indptr[r];
        }
        SparseOperator { dim, indptr, indices, values }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))).collect())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim)
            .flat_map(move |r| (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k])))
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        par::map_range(self.dim, |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(|k| self.values[k] * x[self.indices[k]]).sum()
        })
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// `self · other`.
    pub fn matmul(&self, other: &SparseOperator) -> SparseOperator {
        let rows: Vec<Vec<(usize, C64)>> = par::map_range(self.dim, |r| {
            let mut acc: BTreeMap<usize, C64> = BTreeMap::new();
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (j, a) = (self.indices[k], self.values[k]);
                for l in other.indptr[j]..other.indptr[j + 1] {
                    *acc.entry(other.indices[l]).or_default() += a * other.values[l];
                }
            }
            acc.into_iter().collect()
        });
        let mut indptr = Vec::with_capacity(self.dim + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            for (c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        SparseOperator { dim: self.dim, indptr, indices, values }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> SparseOperator {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: C64, other: &SparseOperator, b: C64) -> SparseOperator {
        let t = self
            .triplets()
            .map(|(r, c, v)| (r, c, a * v))
            .chain(other.triplets().map(|(r, c, v)| (r, c, b * v)))
            .collect();
        Self::from_triplets(self.dim, t)
    }

    /// Largest entry of `self − self†`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut map: HashMap<(usize, usize), C64> = HashMap::new();
        for (r, c, v) in self.triplets() {
            *map.entry((r, c)).or_default() += v;
        }
        map.iter()
            .map(|(&(r, c), v)| (v - map.get(&(c, r)).copied().unwrap_or_default().conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Triplet CSV `row,col,re,im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,re,im\n");
        for (r, c, v) in self.triplets() {
            s.push_str(&format!("{r},{c},{:e},{:e}\n", v.re, v.im));
        }
        s
    }
}

/// Plaquette operators acting on one configuration space.
pub struct StringNetModel<'a> {
    pub cat: &'a FusionCategory,
    pub lattice: &'a HoneycombLattice,
    pub basis: &'a StringNetBasis,
    pub table: PlaquetteTable,
    /// Active plaquettes of the space, indexed over the whole basis.
    pub plaquettes: Vec<PlaquetteIndex>,
    projector: LocalOp,
}

impl<'a> StringNetModel<'a> {
    pub fn new(cat: &'a FusionCategory, lattice: &'a HoneycombLattice, basis: &'a StringNetBasis) -> Result<Self> {
        let table = PlaquetteTable::build(cat)?;
        Self::with_table(cat, lattice, basis, table)
    }

    /// Reuses a prebuilt table.
    pub fn with_table(
        cat: &'a FusionCategory,
        lattice: &'a HoneycombLattice,
        basis: &'a StringNetBasis,
        table: PlaquetteTable,
    ) -> Result<Self> {
        lattice.require_nondegenerate()?;
        if table.rank != cat.rank() {
            return Err(Error::Precondition("plaquette table built for another category".into()));
        }
        let projector = table.local_op(&table.projector_weights());
        let plaquettes = active_plaquettes(lattice, basis)
            .into_iter()
            .map(|s| PlaquetteIndex::build(&table, basis, s, basis.keys()))
            .collect::<Result<_>>()?;
        Ok(StringNetModel { cat, lattice, basis, table, plaquettes, projector })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Plaquette ids of the active plaquettes.
    pub fn plaquette_ids(&self) -> Vec<usize> {
        self.plaquettes.iter().map(|p| p.sites.plaquette).collect()
    }

    fn index(&self, p: usize) -> Result<&PlaquetteIndex> {
        self.plaquettes
            .iter()
            .find(|s| s.sites.plaquette == p)
            .ok_or_else(|| Error::Geometry(format!("plaquette {p} is not active in this space")))
    }

    fn label_op(&self, s: Label) -> Result<LocalOp> {
        if s >= self.cat.rank() {
            return Err(Error::Geometry(format!("label {s} out of range")));
        }
        Ok(self.table.local_op(&self.table.label_weights(s)))
    }

    /// The projector `B_p` as a local operator.
    pub fn projector_op(&self) -> &LocalOp {
        &self.projector
    }

    /// Indexes the active plaquettes over a key subset closed under them.
    pub fn index_subset(&self, keys: &[u128]) -> Result<Vec<PlaquetteIndex>> {
        self.plaquettes.iter().map(|p| PlaquetteIndex::build(&self.table, self.basis, p.sites, keys)).collect()
    }

    /// `B_p^s ψ`.
    pub fn apply_label(&self, p: usize, s: Label, psi: &[C64]) -> Result<Vec<C64>> {
        Ok(self.index(p)?.apply(&self.label_op(s)?, psi))
    }

    /// `B_p ψ`.
    pub fn apply_projector(&self, p: usize, psi: &[C64]) -> Result<Vec<C64>> {
        Ok(self.index(p)?.apply(&self.projector, psi))
    }

    /// Sparse `B_p^s`.
    pub fn plaquette_operator(&self, p: usize, s: Label) -> Result<SparseOperator> {
        let t = self.index(p)?.triplets(&self.label_op(s)?);
        Ok(SparseOperator::from_triplets(self.dim(), t))
    }

    /// Sparse `B_p = D^{-2} Σ_s d_s B_p^s`.
    pub fn plaquette_projector(&self, p: usize) -> Result<SparseOperator> {
        let t = self.index(p)?.triplets(&self.projector);
        Ok(SparseOperator::from_triplets(self.dim(), t))
    }

    /// `Q_I` on the enumerated basis: diagonal, and equal to one on every
    /// configuration because enumeration enforces the branching rule.
    pub fn vertex_projector(&self, v: usize) -> Result<SparseOperator> {
        let m =
            self.basis.vertex_position(v).ok_or_else(|| Error::Geometry(format!("vertex {v} is not in the space")))?;
        let [a, b, c] = self.basis.vertex_edges[m];
        let t = (0..self.dim())
            .map(|i| {
                let k = self.basis.key(i);
                let ok = self.cat.n(self.basis.label(k, a), self.basis.label(k, b), self.basis.label(k, c)) > 0;
                (i, i, C64::new(if ok { 1.0 } else { 0.0 }, 0.0))
            })
            .collect();
        Ok(SparseOperator::from_triplets(self.dim(), t))
    }

    /// `H = −Σ_I Q_I − Σ_p B_p` over the space's vertices and active
    /// plaquettes.
    pub fn hamiltonian(&self) -> Result<SparseOperator> {
        let dim = self.dim();
        let nv = self.basis.vertices.len() as f64;
        let mut t: Vec<(usize, usize, C64)> = (0..dim).map(|i| (i, i, C64::new(-nv, 0.0))).collect();
        for idx in &self.plaquettes {
            t.extend(idx.triplets(&self.projector).into_iter().map(|(r, c, v)| (r, c, -v)));
        }
        Ok(SparseOperator::from_triplets(dim, t))
    }

    /// Ground energy of a frustration-free model: `−(#vertices + #plaquettes)`.
    pub fn frustration_free_energy(&self) -> f64 {
        -((self.basis.vertices.len() + self.plaquettes.len()) as f64)
    }
}

/// `Q_I` in the unconstrained labelling space: one when vertex `v` obeys the
/// branching rule under the lattice-wide labelling `labels`, zero otherwise.
pub fn vertex_projector_value(cat: &FusionCategory, lat: &HoneycombLattice, v: usize, labels: &[Label]) -> f64 {
    let [a, b, c] = lat.vertices[v].slots;
    if cat.n(labels[a], labels[b], labels[c]) > 0 {
        1.0
    } else {
        0.0
    }
}

/// Ground-space algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundMethod {
    /// Apply `∏_p B_p` to random seeds, adding seeds until the image rank
    /// stops growing.
    ProjectorProduct,
    /// Dense eigendecomposition of `H` (small spaces only).
    Dense,
}

/// Relative Gram-eigenvalue cutoff separating ground-space directions from
/// round-off in the projected seeds.
const RANK_TOL: f64 = 1e-10;

/// Largest key set accepted by [`GroundMethod::Dense`] and by the entrywise
/// operator checks.
pub const DENSE_LIMIT: usize = 4096;

/// Gaussian random complex vector with unit norm.
pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let mut v: Vec<C64> = (0..n).map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))).collect();
    normalize(&mut v);
    v
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn normalize(v: &mut [C64]) {
    let n = norm(v);
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
}

/// `⟨a|b⟩`.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn columns_to_matrix(cols: &[Vec<C64>], n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

fn matrix_to_columns(m: &DMatrix<C64>) -> Vec<Vec<C64>> {
    (0..m.ncols()).map(|j| m.column(j).iter().copied().collect()).collect()
}

/// Orthonormal basis of the common `+1` eigenspace of the projector `op`
/// at every indexed plaquette. `n` is the size of the key set.
pub fn ground_space_indexed(
    op: &LocalOp,
    plaquettes: &[PlaquetteIndex],
    n: usize,
    method: GroundMethod,
    seed: u64,
) -> Result<Vec<Vec<C64>>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let project = |v: &[C64]| -> Vec<C64> {
        let mut w = v.to_vec();
        for idx in plaquettes {
            w = idx.apply(op, &w);
        }
        w
    };
    let vecs = match method {
        GroundMethod::ProjectorProduct => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut images: Vec<Vec<C64>> = Vec::new();
            let mut batch = n.min(8);
            loop {
                for _ in 0..batch {
                    images.push(project(&random_state(&mut rng, n)));
                }
                // Unit seeds with vanishing images: the plaquette constraints
                // admit no common solution in this key set.
                if images.iter().all(|v| norm(v) < 1e-10) {
                    break Vec::new();
                }
                let q = linalg::orthonormal_columns(&columns_to_matrix(&images, n), RANK_TOL);
                // A rank-deficient image (or the whole space) pins down the
                // eigenspace; otherwise add as many seeds again.
                if q.ncols() < images.len() || images.len() == n {
                    break matrix_to_columns(&q);
                }
                batch = images.len().min(n - images.len());
            }
        }
        GroundMethod::Dense => {
            if n > DENSE_LIMIT {
                return Err(Error::Precondition(format!(
                    "dense ground space limited to {DENSE_LIMIT} states, got {n}"
                )));
            }
            let mut h = DMatrix::<C64>::zeros(n, n);
            for idx in plaquettes {
                for (r, c, v) in idx.triplets(op) {
                    h[(r, c)] -= v;
                }
            }
            let (vals, vecs) = linalg::eigh(&h);
            let target = -(plaquettes.len() as f64);
            if vals[0] < target - 1e-8 {
                return Err(Error::Convergence(format!(
                    "lowest plaquette energy {} lies below the frustration-free value {target}",
                    vals[0]
                )));
            }
            // Frustrated key sets have an empty ground space.
            (0..n).filter(|&i| vals[i] < target + 1e-8).map(|i| vecs.column(i).iter().copied().collect()).collect()
        }
    };
    for v in &vecs {
        for idx in plaquettes {
            let bv = idx.apply(op, v);
            let r = norm(&bv.iter().zip(v).map(|(a, b)| a - b).collect::<Vec<_>>());
            if r > 1e-9 {
                return Err(Error::Convergence(format!(
                    "ground vector residual {r:e} on plaquette {}",
                    idx.sites.plaquette
                )));
            }
        }
    }
    Ok(vecs)
}

/// Ground space on the whole basis.
pub fn ground_space(model: &StringNetModel, method: GroundMethod, seed: u64) -> Result<Vec<Vec<C64>>> {
    ground_space_indexed(&model.projector, &model.plaquettes, model.dim(), method, seed)
}

/// Ground space of a key subset closed under the active plaquettes.
pub fn ground_space_on(
    model: &StringNetModel,
    keys: &[u128],
    method: GroundMethod,
    seed: u64,
) -> Result<Vec<Vec<C64>>> {
    let idx = model.index_subset(keys)?;
    ground_space_indexed(&model.projector, &idx, keys.len(), method, seed)
}

/// Ground space of a space with free legs, one leg block at a time. Returns
/// `(block keys, block ground vectors)` for every block with a nonzero
/// ground space, in block order.
pub fn ground_space_by_block(model: &StringNetModel, seed: u64) -> Result<Vec<(Vec<u128>, Vec<Vec<C64>>)>> {
    let legs = model.basis.free_legs();
    let groups: Vec<Vec<usize>> = model.basis.group_by_labels(&legs).into_values().collect();
    let out: Vec<Result<(Vec<u128>, Vec<Vec<C64>>)>> = par::map_range(groups.len(), |g| {
        let keys: Vec<u128> = groups[g].iter().map(|&i| model.basis.key(i)).collect();
        // Random images under the projector product beat a dense
        // eigensolve even for blocks of a few dozen states.
        let vecs = ground_space_on(model, &keys, GroundMethod::ProjectorProduct, seed.wrapping_add(g as u64))?;
        Ok((keys, vecs))
    });
    let mut blocks = Vec::new();
    for r in out {
        let (k, v) = r?;
        if !v.is_empty() {
            blocks.push((k, v));
        }
    }
    Ok(blocks)
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub passed: bool,
    pub max_residual: f64,
    pub tolerance: f64,
}

impl CheckRecord {
    pub fn new(check: impl Into<String>, residual: f64, tol: f64) -> Self {
        CheckRecord { check: check.into(), passed: residual < tol, max_residual: residual, tolerance: tol }
    }
}

/// Algebra checks for one plaquette: `B^s B^t = Σ_u N_st^u B^u`,
/// `(B^s)† = B^{s̄}`, `B_p² = B_p` and Hermiticity of `B_p`. Entrywise via
/// sparse products for spaces up to [`DENSE_LIMIT`] states, random probes
/// otherwise.
pub fn verify_plaquette_algebra(model: &StringNetModel, p: usize, tol: f64) -> Result<Vec<CheckRecord>> {
    let r = model.cat.rank();
    let n = model.basis.len();
    let one = C64::new(1.0, 0.0);
    let (fusion, adjoint, idem, herm) = if n <= DENSE_LIMIT {
        let bs: Vec<SparseOperator> = (0..r).map(|s| model.plaquette_operator(p, s)).collect::<Result<_>>()?;
        let mut fusion: f64 = 0.0;
        let mut adjoint: f64 = 0.0;
        for s in 0..r {
            adjoint = adjoint.max(bs[s].adjoint().axpby(one, &bs[model.cat.dual[s]], -one).max_abs());
            for t in 0..r {
                let mut diff = bs[s].matmul(&bs[t]);
                for u in 0..r {
                    let nst = model.cat.n(s, t, u);
                    if nst > 0 {
                        diff = diff.axpby(one, &bs[u], C64::new(-(nst as f64), 0.0));
                    }
                }
                fusion = fusion.max(diff.max_abs());
            }
        }
        let bp = model.plaquette_projector(p)?;
        (fusion, adjoint, bp.matmul(&bp).axpby(one, &bp, -one).max_abs(), bp.hermiticity_defect())
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(p as u64);
        let x = random_state(&mut rng, n);
        let y = random_state(&mut rng, n);
        let bx: Vec<Vec<C64>> = (0..r).map(|s| model.apply_label(p, s, &x)).collect::<Result<_>>()?;
        let by: Vec<Vec<C64>> = (0..r).map(|s| model.apply_label(p, s, &y)).collect::<Result<_>>()?;
        let mut fusion: f64 = 0.0;
        let mut adjoint: f64 = 0.0;
        for s in 0..r {
            adjoint = adjoint.max((dot(&bx[s], &y) - dot(&x, &by[model.cat.dual[s]])).norm());
            for t in 0..r {
                let lhs = model.apply_label(p, s, &bx[t])?;
                let mut diff = lhs;
                for u in 0..r {
                    let nst = model.cat.n(s, t, u) as f64;
                    for (d, b) in diff.iter_mut().zip(&bx[u]) {
                        *d -= b * nst;
                    }
                }
                fusion = fusion.max(norm(&diff));
            }
        }
        let px = model.apply_projector(p, &x)?;
        let ppx = model.apply_projector(p, &px)?;
        let py = model.apply_projector(p, &y)?;
        let idem = norm(&ppx.iter().zip(&px).map(|(a, b)| a - b).collect::<Vec<_>>());
        (fusion, adjoint, idem, (dot(&px, &y) - dot(&x, &py)).norm())
    };
    Ok(vec![
        CheckRecord::new(format!("fusion_algebra[p={p}]"), fusion, tol),
        CheckRecord::new(format!("adjoint[p={p}]"), adjoint, tol),
        CheckRecord::new(format!("idempotent[p={p}]"), idem, tol),
        CheckRecord::new(format!("hermitian[p={p}]"), herm, tol),
    ])
}

/// Largest `‖[B_p, B_q]‖` entry over all pairs of active plaquettes
/// (entrywise, via sparse products).
pub fn max_commutator(model: &StringNetModel) -> Result<f64> {
    if model.basis.len() > DENSE_LIMIT {
        return Err(Error::Precondition("commutator check needs a dense-sized space".into()));
    }
    let ps: Vec<SparseOperator> =
        model.plaquettes.iter().map(|s| model.plaquette_projector(s.sites.plaquette)).collect::<Result<_>>()?;
    let one = C64::new(1.0, 0.0);
    let mut worst: f64 = 0.0;
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            worst = worst.max(ps[i].matmul(&ps[j]).axpby(one, &ps[j].matmul(&ps[i]), -one).max_abs());
        }
    }
    Ok(worst)
}

const STATE_MAGIC: &[u8; 8] = b"SNLSTATE";

/// Binary state file: magic, basis fingerprint, dimension, then little-endian
/// `(re, im)` pairs.
pub fn encode_state(basis: &StringNetBasis, psi: &[C64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 16 * psi.len());
    out.extend_from_slice(STATE_MAGIC);
    out.extend_from_slice(&basis.fingerprint().to_le_bytes());
    out.extend_from_slice(&(psi.len() as u64).to_le_bytes());
    for z in psi {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_state`]; the fingerprint must match `basis`.
pub fn decode_state(basis: &StringNetBasis, bytes: &[u8]) -> Result<Vec<C64>> {
    if bytes.len() < 24 || &bytes[..8] != STATE_MAGIC {
        return Err(Error::Parse("not a state file".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    if word(8) != basis.fingerprint() {
        return Err(Error::Parse("state file belongs to a different basis".into()));
    }
    let n = word(16) as usize;
    if n != basis.len() || bytes.len() != 24 + 16 * n {
        return Err(Error::Parse("state file length mismatch".into()));
    }
    Ok((0..n)
        .map(|i| {
            let o = 24 + 16 * i;
            C64::new(f64::from_bits(word(o)), f64::from_bits(word(o + 8)))
        })
        .collect())
}

/// JSON export of a state: fingerprint, dimension and `[re, im]` pairs.
pub fn state_to_json(basis: &StringNetBasis, psi: &[C64]) -> Result<String> {
    let amps: Vec<[f64; 2]> = psi.iter().map(|z| [z.re, z.im]).collect();
    Ok(serde_json::to_string(&serde_json::json!({
        "fingerprint": format!("{:016x}", basis.fingerprint()),
        "dim": psi.len(),
        "amplitudes": amps,
    }))?)
}

/// Outcome of [`check_ltqo`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtqoReport {
    pub region_size: usize,
    pub ell: usize,
    pub buffered_size: usize,
    /// `A(ℓ)` is the whole lattice, so `P` is the global ground projector and
    /// the check probes the finite-size cutoff rather than local order.
    pub whole_lattice: bool,
    pub ground_dim: usize,
    pub samples: usize,
    /// `max ‖P O P − c P‖` over the samples.
    pub max_residual: f64,
    pub residuals: Vec<f64>,
}

/// Local topological order on `region` with buffer `ell`: for `samples`
/// random Hermitian `O` on the region's vertices, the norm of
/// `P O P − c P` with `c = Tr(P O)/Tr(P)`, where `P` is the ground
/// projector of the Hamiltonian restricted to `A(ℓ)` (the region grown by
/// `ell` plaquette layers, every plaquette inside it, free outer legs).
///
/// With ground vectors `v_i`, `⟨v_i|O|v_j⟩ = Tr(O X_ji)` where `X_ji` is the
/// reduced transition operator onto the region, and the residual is the
/// spectral norm of `G − c·1`. Ground vectors in different leg blocks
/// differ outside the region, so `G` is block diagonal.
pub fn check_ltqo(
    cat: &FusionCategory,
    lat: &HoneycombLattice,
    region: &std::collections::BTreeSet<usize>,
    ell: usize,
    samples: usize,
    seed: u64,
    basis_cap: f64,
) -> Result<LtqoReport> {
    use crate::lattice::{grow, SpaceSpec};
    use crate::quantum_info::{random_hermitian, reduced_transitions, VectorGroup};
    if region.is_empty() {
        return Err(Error::Geometry("LTQO needs a nonempty region".into()));
    }
    let coords: std::collections::BTreeSet<_> = region.iter().map(|&v| lat.vertices[v].coord).collect();
    let grown = grow(&coords, ell, |x, y| lat.has_plaquette(x, y));
    let (buffered, whole_lattice) = match lat.embed(&grown) {
        Ok(ids) if ids.len() < lat.n_vertices() => (ids, false),
        _ => ((0..lat.n_vertices()).collect(), true),
    };
    let spec = if whole_lattice { SpaceSpec::whole(lat) } else { SpaceSpec::region(lat, buffered.clone()) };
    let basis = StringNetBasis::enumerate(cat, lat, &spec, basis_cap)?;
    for &v in region {
        let m = basis.vertex_position(v).unwrap();
        if basis.vertex_edges[m].iter().any(|&e| basis.dangling[e] && basis.slots[e] == EdgeSlot::Free) {
            return Err(Error::Geometry(format!("region vertex {v} touches the edge of A(ℓ); increase ell")));
        }
    }
    let model = StringNetModel::new(cat, lat, &basis)?;
    let blocks = if whole_lattice {
        let gs = ground_space(&model, GroundMethod::ProjectorProduct, seed)?;
        vec![(basis.keys().to_vec(), gs)]
    } else {
        ground_space_by_block(&model, seed)?
    };
    let groups: Vec<VectorGroup> = blocks
        .iter()
        .map(|(keys, vecs)| VectorGroup { keys, vecs: vecs.iter().map(|v| v.as_slice()).collect() })
        .collect();
    let (configs, x) = reduced_transitions(&basis, &groups, region)?;
    let ground_dim: usize = groups.iter().map(|g| g.vecs.len()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residuals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let ot = random_hermitian(&mut rng, configs.len()).transpose();
        let gs: Vec<DMatrix<C64>> = x
            .iter()
            .map(|xb| {
                let k = xb.len();
                DMatrix::from_fn(k, k, |i, j| ot.dot(&xb[j][i]))
            })
            .collect();
        let c = gs.iter().map(|g| g.trace().re).sum::<f64>() / ground_dim as f64;
        let r = gs
            .iter()
            .map(|g| {
                let d = g - DMatrix::<C64>::identity(g.nrows(), g.nrows()) * C64::new(c, 0.0);
                linalg::eigvalsh(&d).into_iter().map(f64::abs).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        residuals.push(r);
    }
    Ok(LtqoReport {
        region_size: region.len(),
        ell,
        buffered_size: buffered.len(),
        whole_lattice,
        ground_dim,
        samples,
        max_residual: residuals.iter().copied().fold(0.0, f64::max),
        residuals,
    })
}
