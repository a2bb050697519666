//! Density matrices, entropies and the merging and disentangling
//! primitives.
//!
//! The string-net space is not a tensor product of vertex spaces, but it
//! embeds into one: every vertex owns its three edge labels (shared edges are
//! recorded on both endpoints) and its multiplicity. A configuration restricted
//! to a region is therefore the part of its key covering the region's edges
//! and multiplicities; see [`FactorMap`]. Reduced density matrices come out
//! block diagonal in the labels of the edges crossing the region boundary.
//!
//! Entropies are in nats. Eigenvalues below [`CLIP`] are dropped before
//! logarithms and pseudo-inverses.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::lattice::StringNetBasis;
use crate::linalg::{self, eigh, entropy_of, hermitian_fn, CLIP};
use crate::{par, Error, Result, C64};

/// A mixed state given as weighted pure states over one basis.
pub type Ensemble<'a> = Vec<(f64, &'a [C64])>;

/// Splits every configuration of a basis into (region part, complement
/// part). Both parts are masked configuration keys: the region part keeps
/// the labels of all edges touching region vertices plus their
/// multiplicities; the complement part likewise for the other vertices.
/// Edges crossing the boundary appear in both, and their labels (the
/// `signature`) label the blocks of the reduced density matrix.
#[derive(Clone, Debug)]
pub struct FactorMap {
    pub mask_region: u128,
    pub mask_rest: u128,
    /// Region vertex positions in the basis.
    pub region: Vec<usize>,
}

impl FactorMap {
    /// `region` holds lattice vertex ids, all of which must be in the space.
    pub fn new(basis: &StringNetBasis, region: &BTreeSet<usize>) -> Result<Self> {
        let mut pos = Vec::with_capacity(region.len());
        for &v in region {
            pos.push(
                basis
                    .vertex_position(v)
                    .ok_or_else(|| Error::Geometry(format!("vertex {v} is not in the configuration space")))?,
            );
        }
        let inside: BTreeSet<usize> = pos.iter().copied().collect();
        let mut mask_region = 0u128;
        let mut mask_rest = 0u128;
        for m in 0..basis.vertices.len() {
            let mut mask = if basis.max_mult > 1 { basis.mult_mask(m) } else { 0 };
            for &e in &basis.vertex_edges[m] {
                mask |= basis.label_mask(e);
            }
            if inside.contains(&m) {
                mask_region |= mask;
            } else {
                mask_rest |= mask;
            }
        }
        Ok(FactorMap { mask_region, mask_rest, region: pos })
    }

    pub fn split(&self, key: u128) -> (u128, u128) {
        (key & self.mask_region, key & self.mask_rest)
    }

    pub fn signature(&self, key: u128) -> u128 {
        key & self.mask_region & self.mask_rest
    }
}

/// One block of a pure (or ensemble) state split across a cut: the
/// coefficient matrix `M[region part, (member, complement part)]`.
struct CutBlock {
    rows: Vec<u128>,
    mat: DMatrix<C64>,
}

fn cut_blocks(basis: &StringNetBasis, ens: &[(f64, &[C64])], fm: &FactorMap) -> Vec<CutBlock> {
    // signature -> (region part -> row), ((member, complement) -> col), entries
    let mut by_sig: BTreeMap<u128, Vec<(u128, (usize, u128), C64)>> = BTreeMap::new();
    for (k, (w, psi)) in ens.iter().enumerate() {
        let sw = w.sqrt();
        for (i, &amp) in psi.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let key = basis.key(i);
            let (r, c) = fm.split(key);
            by_sig.entry(fm.signature(key)).or_default().push((r, (k, c), amp * sw));
        }
    }
    let groups: Vec<Vec<(u128, (usize, u128), C64)>> = by_sig.into_values().collect();
    par::map_slice(&groups, |entries| {
        let mut rows: Vec<u128> = entries.iter().map(|e| e.0).collect();
        rows.sort_unstable();
        rows.dedup();
        let mut cols: Vec<(usize, u128)> = entries.iter().map(|e| e.1).collect();
        cols.sort_unstable();
        cols.dedup();
        let mut mat = DMatrix::zeros(rows.len(), cols.len());
        for (r, c, v) in entries {
            let i = rows.binary_search(r).unwrap();
            let j = cols.binary_search(c).unwrap();
            mat[(i, j)] += *v;
        }
        CutBlock { rows, mat }
    })
}

/// Nonzero spectrum of `M M†` through the smaller Gram matrix.
fn gram_spectrum(m: &DMatrix<C64>) -> Vec<f64> {
    let g = if m.nrows() <= m.ncols() { m * m.adjoint() } else { m.adjoint() * m };
    linalg::eigvalsh(&g)
}

/// Spectrum of the reduced state of `ens` on `region` (lattice vertex ids).
pub fn region_spectrum(basis: &StringNetBasis, ens: &[(f64, &[C64])], region: &BTreeSet<usize>) -> Result<Vec<f64>> {
    let fm = FactorMap::new(basis, region)?;
    let blocks = cut_blocks(basis, ens, &fm);
    let spectra = par::map_slice(&blocks, |b| gram_spectrum(&b.mat));
    Ok(spectra.into_iter().flatten().collect())
}

/// Von Neumann entropy of the reduced state on `region`.
pub fn region_entropy(basis: &StringNetBasis, ens: &[(f64, &[C64])], region: &BTreeSet<usize>) -> Result<f64> {
    if region.is_empty() {
        return Ok(0.0);
    }
    Ok(entropy_of(region_spectrum(basis, ens, region)?))
}

fn check_disjoint(sets: &[&BTreeSet<usize>]) -> Result<()> {
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if !sets[i].is_disjoint(sets[j]) {
                return Err(Error::Geometry("regions overlap".into()));
            }
        }
    }
    Ok(())
}

fn union(sets: &[&BTreeSet<usize>]) -> BTreeSet<usize> {
    sets.iter().flat_map(|s| s.iter().copied()).collect()
}

/// `I(A:C|B) = S(AB) + S(BC) − S(B) − S(ABC)`.
pub fn cmi(
    basis: &StringNetBasis,
    ens: &[(f64, &[C64])],
    a: &BTreeSet<usize>,
    b: &BTreeSet<usize>,
    c: &BTreeSet<usize>,
) -> Result<f64> {
    check_disjoint(&[a, b, c])?;
    let s = |r: BTreeSet<usize>| region_entropy(basis, ens, &r);
    Ok(s(union(&[a, b]))? + s(union(&[b, c]))? - s(b.clone())? - s(union(&[a, b, c]))?)
}

/// `I(A:C) = S(A) + S(C) − S(AC)`.
pub fn mutual_information(
    basis: &StringNetBasis,
    ens: &[(f64, &[C64])],
    a: &BTreeSet<usize>,
    c: &BTreeSet<usize>,
) -> Result<f64> {
    check_disjoint(&[a, c])?;
    let s = |r: BTreeSet<usize>| region_entropy(basis, ens, &r);
    Ok(s(a.clone())? + s(c.clone())? - s(union(&[a, c]))?)
}

/// An operator on a set of sites, dense over an explicit list of site
/// configurations (tuples of site-local state indices). Tensor-product
/// systems list every tuple; lattice regions list the stable ones.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    pub sites: Vec<usize>,
    /// Sorted, duplicate-free.
    pub configs: Vec<Vec<u32>>,
    pub mat: DMatrix<C64>,
}

/// A density matrix with its region tag.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub tag: String,
    pub op: LocalOperator,
}

impl DensityMatrix {
    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    pub fn entropy(&self) -> f64 {
        self.op.entropy()
    }

    pub fn purity(&self) -> f64 {
        (&self.op.mat * &self.op.mat).trace().re
    }

    /// PSD within `floor` (eigenvalues ≥ −floor) and unit trace within `tol`.
    pub fn is_valid(&self, floor: f64, tol: f64) -> bool {
        (self.trace() - 1.0).abs() < tol && self.op.spectrum().iter().all(|&x| x >= -floor)
    }
}

/// Von Neumann entropy of a density matrix.
pub fn entropy(rho: &DensityMatrix) -> f64 {
    rho.entropy()
}

impl LocalOperator {
    /// All index tuples of a tensor product of sites with local dimensions
    /// `dims`, in row-major order, with the matching dense matrix.
    pub fn from_dense(sites: Vec<usize>, dims: &[usize], mat: DMatrix<C64>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if sites.len() != dims.len() || mat.nrows() != total || mat.ncols() != total {
            return Err(Error::Precondition("dense operator does not match the site dimensions".into()));
        }
        let mut configs = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut t = vec![0u32; dims.len()];
            for k in (0..dims.len()).rev() {
                t[k] = (idx % dims[k]) as u32;
                idx /= dims[k];
            }
            configs.push(t);
        }
        Ok(LocalOperator { sites, configs, mat })
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn index_of(&self, c: &[u32]) -> Option<usize> {
        self.configs.binary_search_by(|x| x.as_slice().cmp(c)).ok()
    }

    /// Connected components of the nonzero pattern.
    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.dim();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.mat[(i, j)].norm() > 1e-15 || self.mat[(j, i)].norm() > 1e-15 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// Spectrum of a Hermitian operator, computed block by block.
    pub fn spectrum(&self) -> Vec<f64> {
        let comps = self.components();
        let parts = par::map_slice(&comps, |idx| {
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.mat[(idx[i], idx[j])]);
            linalg::eigvalsh(&sub)
        });
        parts.into_iter().flatten().collect()
    }

    pub fn entropy(&self) -> f64 {
        entropy_of(self.spectrum())
    }

    /// Position of each of `sub` in `self.sites`.
    fn positions(&self, sub: &[usize]) -> Result<Vec<usize>> {
        sub.iter()
            .map(|s| {
                self.sites
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| Error::Geometry(format!("site {s} not in operator support")))
            })
            .collect()
    }

    /// Partial trace onto `keep` (in that site order).
    pub fn ptrace(&self, keep: &[usize]) -> Result<LocalOperator> {
        let kp = self.positions(keep)?;
        let keep_set: BTreeSet<usize> = kp.iter().copied().collect();
        let tp: Vec<usize> = (0..self.sites.len()).filter(|i| !keep_set.contains(i)).collect();
        let proj = |c: &Vec<u32>, ps: &[usize]| -> Vec<u32> { ps.iter().map(|&p| c[p]).collect() };
        let mut kept: Vec<Vec<u32>> = self.configs.iter().map(|c| proj(c, &kp)).collect();
        kept.sort();
        kept.dedup();
        let mut by_rest: BTreeMap<Vec<u32>, Vec<(usize, usize)>> = BTreeMap::new();
        for (i, c) in self.configs.iter().enumerate() {
            let k = kept.binary_search(&proj(c, &kp)).unwrap();
            by_rest.entry(proj(c, &tp)).or_default().push((k, i));
        }
        let mut mat = DMatrix::zeros(kept.len(), kept.len());
        for members in by_rest.values() {
            for &(k1, i1) in members {
                for &(k2, i2) in members {
                    mat[(k1, k2)] += self.mat[(i1, i2)];
                }
            }
        }
        Ok(LocalOperator { sites: keep.to_vec(), configs: kept, mat })
    }

    /// Entropy of the marginal on `sites` (empty → 0).
    pub fn marginal_entropy(&self, sites: &[usize]) -> Result<f64> {
        if sites.is_empty() {
            return Ok(0.0);
        }
        Ok(self.ptrace(sites)?.entropy())
    }

    /// `I(A:C|B)` of this state.
    pub fn cmi(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
        let cat = |xs: &[&[usize]]| -> Vec<usize> { xs.iter().flat_map(|x| x.iter().copied()).collect() };
        Ok(self.marginal_entropy(&cat(&[a, b]))? + self.marginal_entropy(&cat(&[b, c]))?
            - self.marginal_entropy(b)?
            - self.marginal_entropy(&cat(&[a, b, c]))?)
    }

    /// Re-expresses the operator with its sites in `order`.
    pub fn reorder(&self, order: &[usize]) -> Result<LocalOperator> {
        if order.len() != self.sites.len() {
            return Err(Error::Geometry("reorder needs a permutation of the sites".into()));
        }
        let p = self.positions(order)?;
        let mut pairs: Vec<(Vec<u32>, usize)> =
            self.configs.iter().enumerate().map(|(i, c)| (p.iter().map(|&k| c[k]).collect(), i)).collect();
        pairs.sort();
        let idx: Vec<usize> = pairs.iter().map(|x| x.1).collect();
        let mat = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.mat[(idx[i], idx[j])]);
        Ok(LocalOperator { sites: order.to_vec(), configs: pairs.into_iter().map(|x| x.0).collect(), mat })
    }

    /// Both operators over the union of their configuration lists (same
    /// site set, any order).
    pub fn aligned(&self, other: &LocalOperator) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
        let o = other.reorder(&self.sites)?;
        let mut all: Vec<Vec<u32>> = self.configs.iter().chain(&o.configs).cloned().collect();
        all.sort();
        all.dedup();
        let embed = |x: &LocalOperator| {
            let map: Vec<usize> = x.configs.iter().map(|c| all.binary_search(c).unwrap()).collect();
            let mut m = DMatrix::zeros(all.len(), all.len());
            for i in 0..map.len() {
                for j in 0..map.len() {
                    m[(map[i], map[j])] = x.mat[(i, j)];
                }
            }
            m
        };
        Ok((embed(self), embed(&o)))
    }
}

/// `½‖ρ − σ‖₁` for operators on the same sites.
pub fn trace_distance(a: &LocalOperator, b: &LocalOperator) -> Result<f64> {
    let (x, y) = a.aligned(b)?;
    Ok(0.5 * linalg::trace_norm(&(x - y)))
}

/// Reduced density matrix of `ens` on `region`, dense over the region
/// configurations in its support. Sites are the region's lattice vertex ids
/// and site states the basis' vertex-local keys.
pub fn reduced_density_matrix(
    basis: &StringNetBasis,
    ens: &[(f64, &[C64])],
    region: &BTreeSet<usize>,
    tag: &str,
) -> Result<DensityMatrix> {
    let fm = FactorMap::new(basis, region)?;
    let blocks = cut_blocks(basis, ens, &fm);
    let decode = |rpart: u128| -> Vec<u32> { fm.region.iter().map(|&m| basis.site_key(rpart, m)).collect() };
    let mut rows: Vec<(Vec<u32>, usize, usize)> = Vec::new();
    for (b, blk) in blocks.iter().enumerate() {
        for (i, &r) in blk.rows.iter().enumerate() {
            rows.push((decode(r), b, i));
        }
    }
    rows.sort();
    let n = rows.len();
    let mut mat = DMatrix::zeros(n, n);
    let mut by_block: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (g, (_, b, i)) in rows.iter().enumerate() {
        by_block.entry(*b).or_default().push((g, *i));
    }
    for (b, members) in by_block {
        let m = &blocks[b].mat;
        let rho = m * m.adjoint();
        for &(g1, i1) in &members {
            for &(g2, i2) in &members {
                mat[(g1, g2)] = rho[(i1, i2)];
            }
        }
    }
    let op = LocalOperator {
        sites: region.iter().copied().collect(),
        configs: rows.into_iter().map(|r| r.0).collect(),
        mat,
    };
    Ok(DensityMatrix { tag: tag.to_string(), op })
}

/// Sites of the four merge roles.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MergeRoles {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub c: Vec<usize>,
    pub d: Vec<usize>,
}

/// Diagnostics of a Petz merge.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MergeReport {
    pub overlap_distance: f64,
    pub cmi_rho: f64,
    pub cmi_lambda: f64,
    pub abc_distance: f64,
    pub bcd_distance: f64,
    pub cmi_a_cd_given_b: f64,
    pub cmi_ab_d_given_c: f64,
    /// Trace of the Petz output on consistent joint configurations before
    /// renormalization (1 unless A and D share edges).
    pub kept_weight: f64,
    /// Set when a conditional marginal had eigenvalues below the clip.
    pub regularized: bool,
    pub merged_dim: usize,
}

/// Lifts `x` (on a subset of `w.sites`) to the configuration list of `w`,
/// acting as the identity on the remaining sites.
fn lift(x: &LocalOperator, w_sites: &[usize], w_configs: &[Vec<u32>]) -> Result<DMatrix<C64>> {
    let pos: Vec<usize> = x
        .sites
        .iter()
        .map(|s| w_sites.iter().position(|t| t == s).ok_or_else(|| Error::Geometry(format!("site {s} missing"))))
        .collect::<Result<_>>()?;
    let pos_set: BTreeSet<usize> = pos.iter().copied().collect();
    let rest: Vec<usize> = (0..w_sites.len()).filter(|i| !pos_set.contains(i)).collect();
    let mut groups: BTreeMap<Vec<u32>, Vec<(usize, Option<usize>)>> = BTreeMap::new();
    for (i, c) in w_configs.iter().enumerate() {
        let xc: Vec<u32> = pos.iter().map(|&p| c[p]).collect();
        let rc: Vec<u32> = rest.iter().map(|&p| c[p]).collect();
        groups.entry(rc).or_default().push((i, x.index_of(&xc)));
    }
    let n = w_configs.len();
    let mut m = DMatrix::zeros(n, n);
    for members in groups.values() {
        for &(i, xi) in members {
            for &(j, xj) in members {
                if let (Some(a), Some(b)) = (xi, xj) {
                    m[(i, j)] = x.mat[(a, b)];
                }
            }
        }
    }
    Ok(m)
}

/// Petz merge of `ρ_ABC` and `λ_BCD`:
/// `τ = λ_CD^{1/2} λ_C^{-1/2} ρ_ABC λ_C^{-1/2} λ_CD^{1/2}` on the joint
/// configurations of ABCD accepted by `compatible` (which sees the full site
/// list `A B C D` and a candidate tuple). Checks the merging hypotheses
/// against `tol` first. The output is renormalized on the accepted
/// configurations; `kept_weight` in the report records the trace before.
pub fn petz_merge(
    rho_abc: &LocalOperator,
    lambda_bcd: &LocalOperator,
    roles: &MergeRoles,
    compatible: &dyn Fn(&[usize], &[u32]) -> bool,
    tol: f64,
) -> Result<(LocalOperator, MergeReport)> {
    let cat = |xs: &[&Vec<usize>]| -> Vec<usize> { xs.iter().flat_map(|x| x.iter().copied()).collect() };
    let abc = cat(&[&roles.a, &roles.b, &roles.c]);
    let bcd = cat(&[&roles.b, &roles.c, &roles.d]);
    let bc = cat(&[&roles.b, &roles.c]);
    let cd = cat(&[&roles.c, &roles.d]);
    let rho = rho_abc.reorder(&abc)?;
    let lam = lambda_bcd.reorder(&bcd)?;
    let overlap_distance = trace_distance(&rho.ptrace(&bc)?, &lam.ptrace(&bc)?)?;
    let cmi_rho = rho.cmi(&roles.a, &roles.b, &roles.c)?;
    let cmi_lambda = lam.cmi(&roles.b, &roles.c, &roles.d)?;
    if overlap_distance > tol || cmi_rho > tol || cmi_lambda > tol {
        return Err(Error::Precondition(format!(
            "merge hypotheses fail: ‖ρ_BC − λ_BC‖ = {overlap_distance:e}, I(A:C|B)_ρ = {cmi_rho:e}, I(B:D|C)_λ = {cmi_lambda:e}"
        )));
    }
    // Joint configurations: ρ's ABC tuples extended by λ's D parts.
    let nbc = bc.len();
    let na = roles.a.len();
    let mut d_parts: BTreeMap<Vec<u32>, Vec<Vec<u32>>> = BTreeMap::new();
    for c in &lam.configs {
        d_parts.entry(c[..nbc].to_vec()).or_default().push(c[nbc..].to_vec());
    }
    let all_sites = cat(&[&roles.a, &roles.b, &roles.c, &roles.d]);
    let mut w: Vec<Vec<u32>> = Vec::new();
    for c in &rho.configs {
        if let Some(ds) = d_parts.get(&c[na..]) {
            for d in ds {
                let mut full = c.clone();
                full.extend_from_slice(d);
                if compatible(&all_sites, &full) {
                    w.push(full);
                }
            }
        }
    }
    w.sort();
    w.dedup();
    let lam_cd = lam.ptrace(&cd)?;
    let lam_c = lam.ptrace(&roles.c)?;
    let regularized = lam_c.spectrum().iter().any(|&x| x.abs() <= CLIP);
    let inv_sqrt_c =
        LocalOperator { mat: hermitian_fn(&lam_c.mat, |x| if x > CLIP { 1.0 / x.sqrt() } else { 0.0 }), ..lam_c };
    let sqrt_cd = LocalOperator { mat: hermitian_fn(&lam_cd.mat, |x| x.max(0.0).sqrt()), ..lam_cd };
    let l = lift(&sqrt_cd, &all_sites, &w)? * lift(&inv_sqrt_c, &all_sites, &w)?;
    let r = lift(&rho, &all_sites, &w)?;
    let tau_m = &l * r * l.adjoint();
    // When A and D share edges, the Petz map also populates tuples whose two
    // copies of a shared edge disagree. Those are not string-net
    // configurations and were dropped from W; the rest is renormalized.
    let kept_weight = tau_m.trace().re;
    if kept_weight <= CLIP {
        return Err(Error::Precondition("merged state has no weight on consistent configurations".into()));
    }
    let tau = LocalOperator {
        sites: all_sites,
        configs: w,
        mat: (&tau_m + tau_m.adjoint()) * C64::new(0.5 / kept_weight, 0.0),
    };
    let abc_distance = trace_distance(&tau.ptrace(&abc)?, &rho)?;
    let bcd_distance = trace_distance(&tau.ptrace(&bcd)?, &lam)?;
    let report = MergeReport {
        overlap_distance,
        cmi_rho,
        cmi_lambda,
        abc_distance,
        bcd_distance,
        cmi_a_cd_given_b: tau.cmi(&roles.a, &roles.b, &cd)?,
        cmi_ab_d_given_c: tau.cmi(&cat(&[&roles.a, &roles.b]), &roles.c, &roles.d)?,
        kept_weight,
        regularized,
        merged_dim: tau.dim(),
    };
    Ok((tau, report))
}

/// Kronecker product.
pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Partial trace of a dense operator on a tensor product with local
/// dimensions `dims`, keeping the subsystems `keep` (ascending).
pub fn partial_trace(m: &DMatrix<C64>, dims: &[usize], keep: &[usize]) -> DMatrix<C64> {
    let n = dims.len();
    let strides: Vec<usize> = (0..n).map(|k| dims[k + 1..].iter().product()).collect();
    let kd: usize = keep.iter().map(|&k| dims[k]).product();
    let total: usize = dims.iter().product();
    let mut out = DMatrix::zeros(kd, kd);
    let split = |idx: usize| -> (usize, usize) {
        // (kept index, traced index) in row-major order
        let mut kept = 0;
        let mut traced = 0;
        for k in 0..n {
            let digit = (idx / strides[k]) % dims[k];
            if keep.contains(&k) {
                kept = kept * dims[k] + digit;
            } else {
                traced = traced * dims[k] + digit;
            }
        }
        (kept, traced)
    };
    let parts: Vec<(usize, usize)> = (0..total).map(split).collect();
    let mut by_traced: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, &(k, t)) in parts.iter().enumerate() {
        by_traced.entry(t).or_default().push((k, i));
    }
    for members in by_traced.values() {
        for &(k1, i1) in members {
            for &(k2, i2) in members {
                out[(k1, k2)] += m[(i1, i2)];
            }
        }
    }
    out
}

/// Dense von Neumann entropy.
pub fn dense_entropy(m: &DMatrix<C64>) -> f64 {
    entropy_of(linalg::eigvalsh(m))
}

/// Outcome of [`uhlmann_disentangler`].
#[derive(Clone, Debug)]
pub struct Disentangler {
    /// Unitary on `B ⊗ C` (dimension `d_B d_C`).
    pub unitary: DMatrix<C64>,
    /// `½‖U σ U† − ρ‖₁` with `U` extended by the identity on `A`.
    pub residual: f64,
    pub hypothesis: [f64; 3],
}

/// Polar factor `U` of `M = U |M|`, restricted to singular values above
/// `tol` (a partial isometry).
fn polar_part(m: &DMatrix<C64>, tol: f64) -> DMatrix<C64> {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            out += u.column(k) * vt.row(k);
        }
    }
    out
}

/// Extends a partial isometry to a unitary by mapping the orthogonal
/// complement of its initial space onto that of its final space.
fn complete_unitary(v: &DMatrix<C64>) -> DMatrix<C64> {
    let n = v.nrows();
    let init = v.adjoint() * v;
    let fin = v * v.adjoint();
    let id = DMatrix::<C64>::identity(n, n);
    let comp_in = linalg::orthonormal_columns(&(&id - init), 1e-8);
    let comp_out = linalg::orthonormal_columns(&(&id - fin), 1e-8);
    let k = comp_in.ncols().min(comp_out.ncols());
    let mut u = v.clone();
    for j in 0..k {
        u += comp_out.column(j) * comp_in.column(j).adjoint();
    }
    u
}

/// `(I_B ⊗ ⟨x|) M (I_B ⊗ |y⟩)` for `M` on `B ⊗ C`.
fn c_matrix_element(m: &DMatrix<C64>, db: usize, dc: usize, x: &[C64], y: &[C64]) -> DMatrix<C64> {
    DMatrix::from_fn(db, db, |i, j| {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..dc {
            for l in 0..dc {
                acc += x[k].conj() * m[(i * dc + k, j * dc + l)] * y[l];
            }
        }
        acc
    })
}

struct Schmidt {
    q: Vec<f64>,
    c: Vec<Vec<C64>>,
    /// `N_{jk} = ⟨c_j|ρ_BC|c_k⟩ / √(q_j q_k)`.
    n: Vec<Vec<DMatrix<C64>>>,
}

fn schmidt_data(rho_bc: &DMatrix<C64>, db: usize, dc: usize) -> Schmidt {
    let rho_c = partial_trace(rho_bc, &[db, dc], &[1]);
    let (vals, vecs) = eigh(&rho_c);
    let keep: Vec<usize> = (0..dc).rev().filter(|&i| vals[i] > 1e-10).collect();
    let q: Vec<f64> = keep.iter().map(|&i| vals[i]).collect();
    let c: Vec<Vec<C64>> = keep.iter().map(|&i| vecs.column(i).iter().copied().collect()).collect();
    let n = (0..q.len())
        .map(|j| {
            (0..q.len())
                .map(|k| c_matrix_element(rho_bc, db, dc, &c[j], &c[k]) / C64::new((q[j] * q[k]).sqrt(), 0.0))
                .collect()
        })
        .collect();
    Schmidt { q, c, n }
}

fn support_projector(m: &DMatrix<C64>) -> DMatrix<C64> {
    hermitian_fn(m, |x| if x > 1e-10 { 1.0 } else { 0.0 })
}

fn pinv(m: &DMatrix<C64>) -> DMatrix<C64> {
    hermitian_fn(m, |x| if x > 1e-10 { 1.0 / x } else { 0.0 })
}

/// Unitary `U_BC` with `U σ U† = ρ` for states on `A ⊗ B ⊗ C` (local
/// dimensions `dims = [d_A, d_B, d_C]`) satisfying `ρ_AB = σ_AB` and
/// `S(BC) + S(C) − S(B) = 0` for both.
///
/// The vanishing combination means `B` splits as `B_L ⊗ B_R` with
/// `ρ = ω_{AB_L} ⊗ φ_{B_R C}` and `φ` pure. The construction reads the
/// Schmidt data of `φ` from the eigenbasis `{c_j, q_j}` of `ρ_C`: the
/// operators `N_{jk} = ⟨c_j|ρ_BC|c_k⟩/√(q_j q_k) = ω_L ⊗ |b_j⟩⟨b_k|` carry
/// the `B_R` Schmidt vectors. `U_B` transports `σ`'s Schmidt vectors onto
/// `ρ`'s (through one linking pair of equal-support projectors), `U_C` maps
/// `σ_C`'s eigenvectors onto `ρ_C`'s with matching eigenvalues, and the
/// product is completed to a unitary.
pub fn uhlmann_disentangler(
    rho: &DMatrix<C64>,
    sigma: &DMatrix<C64>,
    dims: [usize; 3],
    tol: f64,
) -> Result<Disentangler> {
    let [da, db, dc] = dims;
    let total = da * db * dc;
    if rho.nrows() != total || sigma.nrows() != total {
        return Err(Error::Precondition("state dimensions do not match".into()));
    }
    let d3 = [da, db, dc];
    let ab_gap = 0.5 * linalg::trace_norm(&(partial_trace(rho, &d3, &[0, 1]) - partial_trace(sigma, &d3, &[0, 1])));
    let decoupling = |m: &DMatrix<C64>| -> f64 {
        dense_entropy(&partial_trace(m, &d3, &[1, 2])) + dense_entropy(&partial_trace(m, &d3, &[2]))
            - dense_entropy(&partial_trace(m, &d3, &[1]))
    };
    let (hr, hs) = (decoupling(rho), decoupling(sigma));
    let hypothesis = [ab_gap, hr, hs];
    if ab_gap > tol || hr.abs() > tol || hs.abs() > tol {
        return Err(Error::Precondition(format!(
            "decoupling hypothesis fails: ‖ρ_AB − σ_AB‖ = {ab_gap:e}, residuals {hr:e} and {hs:e}"
        )));
    }
    let rbc = partial_trace(rho, &d3, &[1, 2]);
    let sbc = partial_trace(sigma, &d3, &[1, 2]);
    let sr = schmidt_data(&rbc, db, dc);
    let ss = schmidt_data(&sbc, db, dc);
    let r = sr.q.len();
    if r != ss.q.len() {
        return Err(Error::Precondition("Schmidt ranks of ρ_C and σ_C differ".into()));
    }
    // Pair eigenvalues of ρ_C and σ_C: both lists descend, so matching by
    // position pairs equal values; check the match.
    let perm: Vec<usize> = (0..r).collect();
    if let Some(k) = (0..r).find(|&k| (sr.q[k] - ss.q[k]).abs() > 1e-8f64.max(tol)) {
        return Err(Error::Precondition(format!("spectra of ρ_C and σ_C differ at {k}")));
    }
    let proj_r: Vec<DMatrix<C64>> = (0..r).map(|j| support_projector(&sr.n[j][j])).collect();
    let proj_s: Vec<DMatrix<C64>> = (0..r).map(|k| support_projector(&ss.n[k][k])).collect();
    let mut best = (0, 0, -1.0);
    for j in 0..r {
        for k in 0..r {
            let ov = (&proj_r[j] * &proj_s[k]).trace().re;
            if ov > best.2 + 1e-12 {
                best = (j, k, ov);
            }
        }
    }
    let (js, ks, _) = best;
    let link = polar_part(&(&proj_r[js] * &proj_s[ks]), 1e-8);
    let transfer = |s: &Schmidt, j: usize, k: usize| &s.n[j][k] * pinv(&s.n[k][k]);
    let mut ub = DMatrix::zeros(db, db);
    for k in 0..r {
        ub += transfer(&sr, perm[k], js) * &link * transfer(&ss, ks, k);
    }
    let ub = complete_unitary(&polar_part(&ub, 1e-8));
    let mut uc = DMatrix::zeros(dc, dc);
    for k in 0..r {
        let cr = DMatrix::from_column_slice(dc, 1, &sr.c[perm[k]]);
        let cs = DMatrix::from_column_slice(dc, 1, &ss.c[k]);
        uc += cr * cs.adjoint();
    }
    let uc = complete_unitary(&uc);
    let unitary = kron(&ub, &uc);
    let full = kron(&DMatrix::identity(da, da), &unitary);
    let mapped = &full * sigma * full.adjoint();
    let residual = 0.5 * linalg::trace_norm(&(mapped - rho));
    if residual > 10.0 * tol {
        return Err(Error::Convergence(format!("disentangler residual {residual:e} exceeds {:e}", 10.0 * tol)));
    }
    Ok(Disentangler { unitary, residual, hypothesis })
}

/// Vectors over one list of configuration keys (a block of a basis).
#[derive(Clone, Debug)]
pub struct VectorGroup<'a> {
    pub keys: &'a [u128],
    pub vecs: Vec<&'a [C64]>,
}

/// Reduced transition operators `X_ij = Tr_rest |v_i⟩⟨v_j|` onto `region`
/// for every pair inside each group of vectors, over one shared, sorted
/// list of region configurations. Pairs from different groups are not
/// formed. Returns `(configs, per-group X matrices indexed [i][j])`.
pub fn reduced_transitions(
    basis: &StringNetBasis,
    groups: &[VectorGroup],
    region: &BTreeSet<usize>,
) -> Result<(Vec<Vec<u32>>, Vec<Vec<Vec<DMatrix<C64>>>>)> {
    let fm = FactorMap::new(basis, region)?;
    let mut rparts: Vec<u128> = Vec::new();
    for g in groups {
        let mut seen: Vec<u128> = Vec::new();
        for v in &g.vecs {
            for (i, amp) in v.iter().enumerate() {
                if amp.norm_sqr() != 0.0 {
                    seen.push(g.keys[i] & fm.mask_region);
                }
            }
        }
        seen.sort_unstable();
        seen.dedup();
        rparts.extend(seen);
    }
    rparts.sort_unstable();
    rparts.dedup();
    let mut decoded: Vec<(Vec<u32>, usize)> = rparts
        .iter()
        .enumerate()
        .map(|(i, &r)| (fm.region.iter().map(|&m| basis.site_key(r, m)).collect(), i))
        .collect();
    decoded.sort();
    let mut row_of = vec![0usize; rparts.len()];
    for (row, (_, i)) in decoded.iter().enumerate() {
        row_of[*i] = row;
    }
    let n = rparts.len();
    let mats = par::map_slice(groups, |g| {
        let k = g.vecs.len();
        let mut by_rest: BTreeMap<u128, Vec<(usize, usize, C64)>> = BTreeMap::new();
        for (vi, v) in g.vecs.iter().enumerate() {
            for (i, &amp) in v.iter().enumerate() {
                if amp.norm_sqr() == 0.0 {
                    continue;
                }
                let (r, c) = fm.split(g.keys[i]);
                let row = row_of[rparts.binary_search(&r).unwrap()];
                by_rest.entry(c).or_default().push((vi, row, amp));
            }
        }
        let mut x = vec![vec![DMatrix::<C64>::zeros(n, n); k]; k];
        for entries in by_rest.values() {
            for &(i, ra, a) in entries {
                for &(j, rb, b) in entries {
                    x[i][j][(ra, rb)] += a * b.conj();
                }
            }
        }
        x
    });
    Ok((decoded.into_iter().map(|d| d.0).collect(), mats))
}

/// Random Hermitian matrix from the Gaussian unitary ensemble, scaled to
/// unit spectral radius on average.
pub fn random_hermitian(rng: &mut impl rand::Rng, n: usize) -> DMatrix<C64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut g = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            g[(i, j)] = C64::new(re, im);
        }
    }
    (&g + g.adjoint()) * C64::new(0.5 / (n.max(1) as f64).sqrt(), 0.0)
}
