//! Skeletal unitary fusion categories and their consistency checks.
//!
//! Conventions. A left-associated splitting tree `((a b)_e c)_d` re-expands
//! in the right-associated basis as
//!
//! ```text
//! ((a b)_e^μ c)_d^ν = Σ_{f,α,β} [F^{abc}_d]_{(e,μ,ν),(f,α,β)} (a (b c)_f^β)_d^α
//! ```
//!
//! with μ ∈ V_ab^e, ν ∈ V_ec^d, α ∈ V_af^d and β ∈ V_bc^f. Rows and columns of
//! every [`FBlock`] are sorted lexicographically in those triples.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::par;

/// Index of a simple object; 0 is the vacuum.
pub type Label = usize;

/// Row or column key of an F-block: (intermediate label, first mult, second mult).
pub type Triple = (Label, usize, usize);

/// One unitary F-matrix `F^{abc}_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FBlock {
    pub rows: Vec<Triple>,
    pub cols: Vec<Triple>,
    pub mat: DMatrix<C64>,
}

impl FBlock {
    pub fn row(&self, t: Triple) -> Option<usize> {
        self.rows.binary_search(&t).ok()
    }

    pub fn col(&self, t: Triple) -> Option<usize> {
        self.cols.binary_search(&t).ok()
    }

    pub fn get(&self, r: Triple, c: Triple) -> C64 {
        match (self.row(r), self.col(c)) {
            (Some(i), Some(j)) => self.mat[(i, j)],
            _ => C64::new(0.0, 0.0),
        }
    }
}

/// Outcome of a validator: pass flag, worst residual and a capped list of
/// human-readable violations.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ValidationReport {
    pub check: String,
    pub passed: bool,
    pub max_residual: f64,
    pub instances: usize,
    pub violations: Vec<String>,
}

const MAX_LISTED: usize = 32;

impl ValidationReport {
    fn new(check: &str) -> Self {
        Self { check: check.to_string(), passed: true, ..Default::default() }
    }

    fn fail(&mut self, msg: String) {
        self.passed = false;
        if self.violations.len() < MAX_LISTED {
            self.violations.push(msg);
        }
    }
}

/// A skeletal unitary fusion category.
#[derive(Clone, Debug)]
pub struct FusionCategory {
    pub name: String,
    pub labels: Vec<String>,
    pub dual: Vec<Label>,
    /// Flattened `N[a][b][c]`.
    fusion: Vec<u32>,
    pub qdim: Vec<f64>,
    pub total_dim: f64,
    pub kappa: Vec<i8>,
    f: BTreeMap<(Label, Label, Label, Label), FBlock>,
    channels: Vec<Vec<Label>>,
}

impl FusionCategory {
    /// Assembles a category from fusion data and a dense F-entry oracle.
    ///
    /// `entry(a,b,c,d,row,col)` is queried for every row/column of every
    /// admissible block. Quantum dimensions are recomputed when `qdim` is `None`.
    pub fn from_fn<F>(
        name: &str,
        labels: Vec<String>,
        dual: Vec<Label>,
        fusion: &[[usize; 4]],
        qdim: Option<Vec<f64>>,
        entry: F,
    ) -> Result<Self>
    where
        F: Fn(Label, Label, Label, Label, Triple, Triple) -> C64,
    {
        let mut cat = Self::skeleton(name, labels, dual, fusion)?;
        let r = cat.rank();
        for a in 0..r {
            for b in 0..r {
                for c in 0..r {
                    for d in 0..r {
                        if let Some(mut blk) = cat.empty_block(a, b, c, d) {
                            for i in 0..blk.rows.len() {
                                for j in 0..blk.cols.len() {
                                    blk.mat[(i, j)] = entry(a, b, c, d, blk.rows[i], blk.cols[j]);
                                }
                            }
                            cat.f.insert((a, b, c, d), blk);
                        }
                    }
                }
            }
        }
        cat.finish(qdim)?;
        Ok(cat)
    }

    fn skeleton(name: &str, labels: Vec<String>, dual: Vec<Label>, fusion: &[[usize; 4]]) -> Result<Self> {
        let r = labels.len();
        if r == 0 {
            return Err(Error::Structure("category needs at least the vacuum".into()));
        }
        if dual.len() != r {
            return Err(Error::Structure(format!("dual has length {} but rank is {r}", dual.len())));
        }
        if let Some(&x) = dual.iter().find(|&&x| x >= r) {
            return Err(Error::Structure(format!("dual entry {x} out of range")));
        }
        let mut n = vec![0u32; r * r * r];
        for &[a, b, c, m] in fusion {
            if a >= r || b >= r || c >= r {
                return Err(Error::Structure(format!("fusion entry [{a},{b},{c},{m}] out of range")));
            }
            n[(a * r + b) * r + c] = m as u32;
        }
        let mut channels = vec![Vec::new(); r * r];
        for a in 0..r {
            for b in 0..r {
                for c in 0..r {
                    if n[(a * r + b) * r + c] > 0 {
                        channels[a * r + b].push(c);
                    }
                }
            }
        }
        Ok(Self {
            name: name.to_string(),
            labels,
            dual,
            fusion: n,
            qdim: Vec::new(),
            total_dim: 0.0,
            kappa: Vec::new(),
            f: BTreeMap::new(),
            channels,
        })
    }

    fn finish(&mut self, qdim: Option<Vec<f64>>) -> Result<()> {
        let (d, total) = match qdim {
            Some(d) => {
                if d.len() != self.rank() {
                    return Err(Error::Structure("qdim length differs from rank".into()));
                }
                let t = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                (d, t)
            }
            None => compute_quantum_dimensions(self.rank(), &self.fusion)?,
        };
        self.qdim = d;
        self.total_dim = total;
        self.kappa = (0..self.rank()).map(|a| self.raw_kappa(a)).collect();
        Ok(())
    }

    /// Zero block with the row/column keys of `F^{abc}_d`, or `None` when the
    /// four labels are not admissible.
    fn empty_block(&self, a: Label, b: Label, c: Label, d: Label) -> Option<FBlock> {
        let mut rows = Vec::new();
        for &e in self.channels(a, b) {
            for mu in 0..self.n(a, b, e) {
                for nu in 0..self.n(e, c, d) {
                    rows.push((e, mu, nu));
                }
            }
        }
        let mut cols = Vec::new();
        for &f in self.channels(b, c) {
            for al in 0..self.n(a, f, d) {
                for be in 0..self.n(b, c, f) {
                    cols.push((f, al, be));
                }
            }
        }
        if rows.is_empty() && cols.is_empty() {
            return None;
        }
        let mat = DMatrix::zeros(rows.len(), cols.len());
        Some(FBlock { rows, cols, mat })
    }

    pub fn rank(&self) -> usize {
        self.labels.len()
    }

    /// Fusion multiplicity `N_ab^c`.
    #[inline]
    pub fn n(&self, a: Label, b: Label, c: Label) -> usize {
        let r = self.rank();
        self.fusion[(a * r + b) * r + c] as usize
    }

    /// Labels `c` with `N_ab^c > 0`, ascending.
    #[inline]
    pub fn channels(&self, a: Label, b: Label) -> &[Label] {
        &self.channels[a * self.rank() + b]
    }

    #[inline]
    pub fn d(&self, a: Label) -> f64 {
        self.qdim[a]
    }

    pub fn is_multiplicity_free(&self) -> bool {
        self.fusion.iter().all(|&m| m <= 1)
    }

    pub fn max_multiplicity(&self) -> usize {
        self.fusion.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn f_block(&self, a: Label, b: Label, c: Label, d: Label) -> Option<&FBlock> {
        self.f.get(&(a, b, c, d))
    }

    pub fn f_blocks(&self) -> impl Iterator<Item = (&(Label, Label, Label, Label), &FBlock)> {
        self.f.iter()
    }

    /// Entry `[F^{abc}_d]_{row,col}`; zero when inadmissible.
    #[inline]
    pub fn f(&self, a: Label, b: Label, c: Label, d: Label, row: Triple, col: Triple) -> C64 {
        match self.f.get(&(a, b, c, d)) {
            Some(blk) => blk.get(row, col),
            None => C64::new(0.0, 0.0),
        }
    }

    /// Overwrites a single F entry. Intended for building deliberately broken
    /// data in tests; the category is no longer guaranteed valid afterwards.
    pub fn set_f_entry(
        &mut self,
        (a, b, c, d): (Label, Label, Label, Label),
        row: Triple,
        col: Triple,
        value: C64,
    ) -> Result<()> {
        let blk = self
            .f
            .get_mut(&(a, b, c, d))
            .ok_or_else(|| Error::Structure(format!("no F-block for ({a},{b},{c},{d})")))?;
        let (i, j) = match (blk.row(row), blk.col(col)) {
            (Some(i), Some(j)) => (i, j),
            _ => return Err(Error::Structure("F entry index out of block".into())),
        };
        blk.mat[(i, j)] = value;
        Ok(())
    }

    /// Replaces a whole F-block.
    pub fn set_f_block(&mut self, key: (Label, Label, Label, Label), mat: DMatrix<C64>) -> Result<()> {
        let blk = self.f.get_mut(&key).ok_or_else(|| Error::Structure(format!("no F-block for {key:?}")))?;
        if blk.mat.shape() != mat.shape() {
            return Err(Error::Structure(format!(
                "F-block {key:?} has shape {:?}, got {:?}",
                blk.mat.shape(),
                mat.shape()
            )));
        }
        blk.mat = mat;
        Ok(())
    }

    fn raw_kappa(&self, a: Label) -> i8 {
        if a == 0 || a != self.dual[a] {
            return 1;
        }
        let v = self.d(a) * self.f(a, a, a, a, (0, 0, 0), (0, 0, 0)).re;
        if v < 0.0 {
            -1
        } else {
            1
        }
    }

    /// Label index by name.
    pub fn label(&self, name: &str) -> Option<Label> {
        self.labels.iter().position(|l| l == name)
    }
}

// ---------------------------------------------------------------------------
// Quantum dimensions

/// Perron-Frobenius quantum dimensions of a flattened fusion tensor.
///
/// The fusion matrices `(N_a)_{bc} = N_ab^c` commute and share the Perron
/// vector `v_c ∝ d_c`, so a single power iteration on `I + Σ_a N_a` yields all
/// of them at once: `d_a = v_a / v_0`.
pub fn compute_quantum_dimensions(rank: usize, fusion: &[u32]) -> Result<(Vec<f64>, f64)> {
    if fusion.len() != rank * rank * rank {
        return Err(Error::Structure("fusion tensor shape does not match rank".into()));
    }
    let nn = |a: usize, b: usize, c: usize| fusion[(a * rank + b) * rank + c] as f64;
    let mut m = DMatrix::<f64>::identity(rank, rank);
    for a in 0..rank {
        for b in 0..rank {
            for c in 0..rank {
                m[(b, c)] += nn(a, b, c);
            }
        }
    }
    let mut v = nalgebra::DVector::from_element(rank, 1.0);
    let mut converged = false;
    for _ in 0..200_000 {
        let mut w = &m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        w /= norm;
        let diff = (&w - &v).amax();
        v = w;
        if diff < 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged || v[0] <= 0.0 {
        return Err(Error::IllConditioned("power iteration on the fusion matrices did not converge".into()));
    }
    let d: Vec<f64> = (0..rank).map(|a| v[a] / v[0]).collect();
    for a in 0..rank {
        for b in 0..rank {
            let rhs: f64 = (0..rank).map(|c| nn(a, b, c) * d[c]).sum();
            if (d[a] * d[b] - rhs).abs() > 1e-10 * (1.0 + rhs) {
                return Err(Error::IllConditioned(format!("d_{a} d_{b} = {} but Σ_c N d_c = {rhs}", d[a] * d[b])));
            }
        }
    }
    let total = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok((d, total))
}

// ---------------------------------------------------------------------------
// Validators

/// Checks the fusion-ring identities exactly: unit law, duals, dual symmetry
/// of the multiplicities and associativity.
pub fn validate_fusion_ring(cat: &FusionCategory) -> Result<ValidationReport> {
    let r = cat.rank();
    if cat.fusion.len() != r * r * r || cat.dual.len() != r {
        return Err(Error::Structure("fusion tensor shape does not match rank".into()));
    }
    let mut rep = ValidationReport::new("fusion_ring");
    if cat.dual[0] != 0 {
        rep.fail("dual(vacuum) != vacuum".into());
    }
    for a in 0..r {
        if cat.dual[cat.dual[a]] != a {
            rep.fail(format!("dual is not an involution at {a}"));
        }
        for b in 0..r {
            let delta = (a == b) as usize;
            if cat.n(0, a, b) != delta || cat.n(a, 0, b) != delta {
                rep.fail(format!("unit law fails at ({a},{b})"));
            }
            if cat.n(a, b, 0) != (b == cat.dual[a]) as usize {
                rep.fail(format!("N_{{{a},{b}}}^1 is not δ_(b, dual a)"));
            }
            for c in 0..r {
                rep.instances += 1;
                let (ad, bd, cd) = (cat.dual[a], cat.dual[b], cat.dual[c]);
                if ad < r && bd < r && cd < r && cat.n(a, b, c) != cat.n(bd, ad, cd) {
                    rep.fail(format!("N_{{{a}{b}}}^{c} != N_{{b̄ā}}^c̄"));
                }
                for d in 0..r {
                    let lhs: usize = (0..r).map(|e| cat.n(a, b, e) * cat.n(e, c, d)).sum();
                    let rhs: usize = (0..r).map(|f| cat.n(a, f, d) * cat.n(b, c, f)).sum();
                    if lhs != rhs {
                        rep.fail(format!("associativity fails at ({a},{b},{c};{d})"));
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Every admissible F-block must be square and unitary.
pub fn check_unitarity(cat: &FusionCategory, tol: f64) -> Result<ValidationReport> {
    let mut rep = ValidationReport::new("unitarity");
    for (key, blk) in &cat.f {
        if blk.mat.nrows() != blk.mat.ncols() {
            return Err(Error::Structure(format!("F-block {key:?} is {}x{}", blk.mat.nrows(), blk.mat.ncols())));
        }
        rep.instances += 1;
        let n = blk.mat.nrows();
        let res = (blk.mat.adjoint() * &blk.mat - DMatrix::<C64>::identity(n, n))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        rep.max_residual = rep.max_residual.max(res);
        if res >= tol {
            rep.fail(format!("F^{{{},{},{}}}_{} deviates from unitary by {res:.3e}", key.0, key.1, key.2, key.3));
        }
    }
    Ok(rep)
}

/// Checks that F is the identity whenever one of its three upper labels is
/// the vacuum.
pub fn check_vacuum_identity(cat: &FusionCategory, tol: f64) -> ValidationReport {
    let mut rep = ValidationReport::new("vacuum_identity");
    for (&(a, b, c, d), blk) in &cat.f {
        if a != 0 && b != 0 && c != 0 {
            continue;
        }
        rep.instances += 1;
        let n = blk.mat.nrows().min(blk.mat.ncols());
        let res = if blk.mat.nrows() == blk.mat.ncols() {
            (&blk.mat - DMatrix::<C64>::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        rep.max_residual = rep.max_residual.max(res);
        if res >= tol {
            rep.fail(format!("F^{{{a},{b},{c}}}_{d} is not the identity"));
        }
    }
    rep
}

/// Pentagon equation over every admissible five-label instance.
///
/// For leaves `a,b,c,d` and root `e`, start from `(((ab)_f c)_g d)_e` and
/// compare the two-move path (`F^{fcd}_e` then `F^{abl}_e`) with the
/// three-move path (`F^{abc}_g`, `F^{ahd}_e`, `F^{bcd}_k`).
pub fn check_pentagon(cat: &FusionCategory, tol: f64) -> Result<ValidationReport> {
    let r = cat.rank();
    for a in 0..r {
        for b in 0..r {
            for c in 0..r {
                for d in 0..r {
                    let admissible = (0..r).any(|e| cat.n(a, b, e) * cat.n(e, c, d) > 0);
                    if admissible && cat.f_block(a, b, c, d).is_none() {
                        return Err(Error::Structure(format!("missing F-block for admissible ({a},{b},{c},{d})")));
                    }
                }
            }
        }
    }
    let quads: Vec<(usize, usize, usize, usize)> =
        (0..r * r * r * r).map(|i| (i / (r * r * r), (i / (r * r)) % r, (i / r) % r, i % r)).collect();
    let per = par::map_slice(&quads, |&(a, b, c, d)| pentagon_quad(cat, a, b, c, d, tol));
    let mut rep = ValidationReport::new("pentagon");
    for (inst, res, bad) in per {
        rep.instances += inst;
        rep.max_residual = rep.max_residual.max(res);
        for msg in bad {
            rep.fail(msg);
        }
    }
    Ok(rep)
}

fn pentagon_quad(cat: &FusionCategory, a: Label, b: Label, c: Label, d: Label, tol: f64) -> (usize, f64, Vec<String>) {
    let r = cat.rank();
    let mut inst = 0;
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for e in 0..r {
        // source basis (f, μ1, g, μ2, μ3)
        let mut src = Vec::new();
        for &f in cat.channels(a, b) {
            for &g in cat.channels(f, c) {
                if cat.n(g, d, e) == 0 {
                    continue;
                }
                for m1 in 0..cat.n(a, b, f) {
                    for m2 in 0..cat.n(f, c, g) {
                        for m3 in 0..cat.n(g, d, e) {
                            src.push((f, m1, g, m2, m3));
                        }
                    }
                }
            }
        }
        // target basis (l, θ, k, η, ε)
        let mut tgt = Vec::new();
        for &l in cat.channels(c, d) {
            for &k in cat.channels(b, l) {
                if cat.n(a, k, e) == 0 {
                    continue;
                }
                for th in 0..cat.n(c, d, l) {
                    for et in 0..cat.n(b, l, k) {
                        for ep in 0..cat.n(a, k, e) {
                            tgt.push((l, th, k, et, ep));
                        }
                    }
                }
            }
        }
        for &(f, m1, g, m2, m3) in &src {
            for &(l, th, k, et, ep) in &tgt {
                inst += 1;
                let mut lhs = C64::new(0.0, 0.0);
                for al in 0..cat.n(f, l, e) {
                    lhs += cat.f(f, c, d, e, (g, m2, m3), (l, al, th)) * cat.f(a, b, l, e, (f, m1, al), (k, ep, et));
                }
                let mut rhs = C64::new(0.0, 0.0);
                for &h in cat.channels(b, c) {
                    for ga in 0..cat.n(a, h, g) {
                        for de in 0..cat.n(b, c, h) {
                            let x = cat.f(a, b, c, g, (f, m1, m2), (h, ga, de));
                            if x.norm() == 0.0 {
                                continue;
                            }
                            for ze in 0..cat.n(h, d, k) {
                                rhs += x
                                    * cat.f(a, h, d, e, (g, ga, m3), (k, ep, ze))
                                    * cat.f(b, c, d, k, (h, de, ze), (l, et, th));
                            }
                        }
                    }
                }
                let res = (lhs - rhs).norm();
                worst = worst.max(res);
                if res >= tol && bad.len() < MAX_LISTED {
                    bad.push(format!("pentagon ({a},{b},{c},{d};{e}) f={f} g={g} l={l} k={k}: residual {res:.3e}"));
                }
            }
        }
    }
    (inst, worst, bad)
}

/// Frobenius-Schur indicator read from `d_a [F^{a ā a}_a]_{11}`.
pub fn frobenius_schur(cat: &FusionCategory, a: Label, tol: f64) -> Result<i8> {
    if a >= cat.rank() {
        return Err(Error::Structure(format!("label {a} out of range")));
    }
    let ad = cat.dual[a];
    let z = cat.d(a) * cat.f(a, ad, a, a, (0, 0, 0), (0, 0, 0));
    if z.im.abs() > tol || (z.re.abs() - 1.0).abs() > tol {
        return Err(Error::Gauge(format!("indicator of label {a} is {z}, not ±1 after gauge fixing")));
    }
    if a != ad && z.re < 0.0 {
        return Err(Error::Gauge(format!("non-self-dual label {a} has indicator −1; gauge-fix it to +1")));
    }
    Ok(if z.re < 0.0 { -1 } else { 1 })
}

/// Runs every validator and returns the reports in a fixed order.
pub fn validate_all(cat: &FusionCategory, tol: f64) -> Result<Vec<ValidationReport>> {
    let mut out = vec![validate_fusion_ring(cat)?];
    let mut dims = ValidationReport::new("quantum_dimensions");
    match compute_quantum_dimensions(cat.rank(), &cat.fusion) {
        Ok((d, _)) => {
            for a in 0..cat.rank() {
                dims.instances += 1;
                let res = (d[a] - cat.qdim[a]).abs();
                dims.max_residual = dims.max_residual.max(res);
                if res > 1e-10 {
                    dims.fail(format!("stored d_{a} = {} but Perron value is {}", cat.qdim[a], d[a]));
                }
                if (cat.qdim[a] - cat.qdim[cat.dual[a]]).abs() > 1e-12 {
                    dims.fail(format!("d_{a} differs from its dual"));
                }
            }
        }
        Err(e) => dims.fail(e.to_string()),
    }
    out.push(dims);
    out.push(check_unitarity(cat, tol)?);
    out.push(check_vacuum_identity(cat, tol));
    out.push(check_pentagon(cat, tol)?);
    let mut fs = ValidationReport::new("frobenius_schur");
    for a in 0..cat.rank() {
        fs.instances += 1;
        match frobenius_schur(cat, a, 1e-8) {
            Ok(k) if k == cat.kappa[a] => {}
            Ok(k) => fs.fail(format!("κ_{a} stored as {} but F gives {k}", cat.kappa[a])),
            Err(e) => fs.fail(e.to_string()),
        }
    }
    out.push(fs);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Gauge transformations

/// Vertex basis change. `u[(a,b,c)]` is a unitary on `V_ab^c`; the new
/// splitting vectors are `|ab;c,μ⟩' = Σ_ν u_{νμ} |ab;c,ν⟩`. Missing entries
/// are the identity.
pub type VertexGauge = BTreeMap<(Label, Label, Label), DMatrix<C64>>;

/// Applies a vertex gauge transformation, `F' = Lᵀ F conj(R)` with `L` and
/// `R` the induced changes of basis on the left- and right-associated trees.
pub fn gauge_transform(cat: &FusionCategory, u: &VertexGauge) -> Result<FusionCategory> {
    for (&(a, b, c), m) in u {
        let n = cat.n(a, b, c);
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Gauge(format!("u^{{{a}{b}}}_{c} has shape {:?}, expected {n}x{n}", m.shape())));
        }
        let res = max_abs(&(m.adjoint() * m - DMatrix::<C64>::identity(n, n)));
        if res > 1e-10 {
            return Err(Error::Gauge(format!("u^{{{a}{b}}}_{c} is not unitary")));
        }
        if (a == 0 || b == 0) && max_abs(&(m - DMatrix::<C64>::identity(n, n))) > 1e-12 {
            return Err(Error::Gauge(format!("u^{{{a}{b}}}_{c} must be the identity on vacuum vertices")));
        }
    }
    let get = |a: Label, b: Label, c: Label, i: usize, j: usize| -> C64 {
        match u.get(&(a, b, c)) {
            Some(m) => m[(i, j)],
            None => C64::new((i == j) as u8 as f64, 0.0),
        }
    };
    let mut out = cat.clone();
    for (&(a, b, c, d), blk) in out.f.iter_mut() {
        let nr = blk.rows.len();
        let nc = blk.cols.len();
        let mut l = DMatrix::<C64>::zeros(nr, nr);
        for (i, &(e, mu, nu)) in blk.rows.iter().enumerate() {
            for (j, &(e2, mu2, nu2)) in blk.rows.iter().enumerate() {
                if e == e2 {
                    l[(i, j)] = get(a, b, e, mu, mu2) * get(e, c, d, nu, nu2);
                }
            }
        }
        let mut rr = DMatrix::<C64>::zeros(nc, nc);
        for (i, &(f, al, be)) in blk.cols.iter().enumerate() {
            for (j, &(f2, al2, be2)) in blk.cols.iter().enumerate() {
                if f == f2 {
                    rr[(i, j)] = get(a, f, d, al, al2) * get(b, c, f, be, be2);
                }
            }
        }
        blk.mat = l.transpose() * &blk.mat * rr.map(|z| z.conj());
    }
    out.kappa = (0..out.rank()).map(|a| out.raw_kappa(a)).collect();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Builtins

/// Names accepted by [`builtin`].
pub const BUILTINS: [&str; 7] = ["trivial", "vec_z2", "semion", "fibonacci", "ising", "vec_z3", "vec_z4"];

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn mult_free<F>(
    name: &str,
    labs: Vec<String>,
    dual: Vec<Label>,
    fuse: impl Fn(Label, Label) -> Vec<Label>,
    f: F,
) -> Result<FusionCategory>
where
    F: Fn(Label, Label, Label, Label, Label, Label) -> f64,
{
    let r = labs.len();
    let mut fusion = Vec::new();
    for a in 0..r {
        for b in 0..r {
            for c in fuse(a, b) {
                fusion.push([a, b, c, 1]);
            }
        }
    }
    FusionCategory::from_fn(name, labs, dual, &fusion, None, |a, b, c, d, row, col| {
        C64::new(f(a, b, c, d, row.0, col.0), 0.0)
    })
}

fn group_zn(name: &str, n: usize, twisted: bool) -> Result<FusionCategory> {
    let labs: Vec<String> = if n == 2 { labels(&["1", "s"]) } else { (0..n).map(|i| i.to_string()).collect() };
    let dual = (0..n).map(|a| (n - a) % n).collect();
    mult_free(
        name,
        labs,
        dual,
        |a, b| vec![(a + b) % n],
        |a, b, c, _, _, _| {
            if twisted && a == 1 && b == 1 && c == 1 {
                -1.0
            } else {
                1.0
            }
        },
    )
}

/// Shipped categories: `trivial`, `vec_z2`, `semion`, `fibonacci`, `ising`,
/// `vec_z3`, `vec_z4`. All are multiplicity-free.
pub fn builtin(name: &str) -> Result<FusionCategory> {
    match name {
        "trivial" => mult_free(name, labels(&["1"]), vec![0], |_, _| vec![0], |_, _, _, _, _, _| 1.0),
        "vec_z2" => group_zn(name, 2, false),
        "semion" => group_zn(name, 2, true),
        "vec_z3" => group_zn(name, 3, false),
        "vec_z4" => group_zn(name, 4, false),
        "fibonacci" => {
            let phi = (1.0 + 5f64.sqrt()) / 2.0;
            mult_free(
                name,
                labels(&["1", "tau"]),
                vec![0, 1],
                |a, b| match (a, b) {
                    (0, x) | (x, 0) => vec![x],
                    _ => vec![0, 1],
                },
                move |a, b, c, d, e, f| {
                    if (a, b, c, d) == (1, 1, 1, 1) {
                        match (e, f) {
                            (0, 0) => 1.0 / phi,
                            (1, 1) => -1.0 / phi,
                            _ => 1.0 / phi.sqrt(),
                        }
                    } else {
                        1.0
                    }
                },
            )
        }
        "ising" => {
            // 0 = 1, 1 = σ, 2 = ψ
            let h = std::f64::consts::FRAC_1_SQRT_2;
            mult_free(
                name,
                labels(&["1", "sigma", "psi"]),
                vec![0, 1, 2],
                |a, b| match (a, b) {
                    (0, x) | (x, 0) => vec![x],
                    (1, 1) => vec![0, 2],
                    (1, 2) | (2, 1) => vec![1],
                    _ => vec![0],
                },
                move |a, b, c, d, e, f| match (a, b, c, d) {
                    (1, 1, 1, 1) => {
                        if e == 2 && f == 2 {
                            -h
                        } else {
                            h
                        }
                    }
                    (1, 2, 1, 2) | (2, 1, 2, 1) => -1.0,
                    _ => 1.0,
                },
            )
        }
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Num {
    Float(f64),
    Text(String),
}

impl Num {
    fn value(&self) -> Result<f64> {
        match self {
            Num::Float(x) => Ok(*x),
            Num::Text(s) => parse_number(s),
        }
    }
}

/// Parses a decimal or a rational `p/q`.
fn parse_number(s: &str) -> Result<f64> {
    let t = s.trim();
    if let Some((p, q)) = t.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| Error::Parse(format!("bad numerator in `{s}`")))?;
        let q: f64 = q.trim().parse().map_err(|_| Error::Parse(format!("bad denominator in `{s}`")))?;
        if q == 0.0 {
            return Err(Error::Parse(format!("zero denominator in `{s}`")));
        }
        return Ok(p / q);
    }
    t.parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FRecord {
    a: usize,
    b: usize,
    c: usize,
    d: usize,
    e: usize,
    f: usize,
    mu: usize,
    nu: usize,
    alpha: usize,
    beta: usize,
    re: Num,
    im: Num,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CategoryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    labels: Vec<String>,
    dual: Vec<usize>,
    fusion: Vec<[usize; 4]>,
    #[serde(rename = "F")]
    f: Vec<FRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qdim: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<Vec<i8>>,
}

/// Serializes a category to the JSON file format.
pub fn to_json(cat: &FusionCategory) -> Result<String> {
    let r = cat.rank();
    let mut fusion = Vec::new();
    for a in 0..r {
        for b in 0..r {
            for &c in cat.channels(a, b) {
                fusion.push([a, b, c, cat.n(a, b, c)]);
            }
        }
    }
    let mut recs = Vec::new();
    for (&(a, b, c, d), blk) in &cat.f {
        for (i, &(e, mu, nu)) in blk.rows.iter().enumerate() {
            for (j, &(f, alpha, beta)) in blk.cols.iter().enumerate() {
                let z = blk.mat[(i, j)];
                if z.re == 0.0 && z.im == 0.0 {
                    continue;
                }
                recs.push(FRecord {
                    a,
                    b,
                    c,
                    d,
                    e,
                    f,
                    mu,
                    nu,
                    alpha,
                    beta,
                    re: Num::Float(z.re),
                    im: Num::Float(z.im),
                });
            }
        }
    }
    let file = CategoryFile {
        name: Some(cat.name.clone()),
        labels: cat.labels.clone(),
        dual: cat.dual.clone(),
        fusion,
        f: recs,
        qdim: Some(cat.qdim.clone()),
        kappa: Some(cat.kappa.clone()),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Parses the JSON file format. With `force == false` every validator must
/// pass at tolerance `tol`.
pub fn from_json(text: &str, force: bool, tol: f64) -> Result<FusionCategory> {
    let file: CategoryFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let name = file.name.clone().unwrap_or_else(|| "custom".to_string());
    let mut cat = FusionCategory::skeleton(&name, file.labels, file.dual, &file.fusion)?;
    let ring = validate_fusion_ring(&cat)?;
    if !ring.passed && !force {
        return Err(Error::Validation(ring.violations.join("; ")));
    }
    let r = cat.rank();
    for rec in &file.f {
        let key = (rec.a, rec.b, rec.c, rec.d);
        if [rec.a, rec.b, rec.c, rec.d, rec.e, rec.f].iter().any(|&x| x >= r) {
            return Err(Error::Structure(format!("F record {key:?} out of range")));
        }
        if !cat.f.contains_key(&key) {
            match cat.empty_block(rec.a, rec.b, rec.c, rec.d) {
                Some(b) => {
                    cat.f.insert(key, b);
                }
                None => return Err(Error::Structure(format!("F record for inadmissible labels {key:?}"))),
            }
        }
        let blk = cat.f.get_mut(&key).expect("inserted above");
        let (i, j) = match (blk.row((rec.e, rec.mu, rec.nu)), blk.col((rec.f, rec.alpha, rec.beta))) {
            (Some(i), Some(j)) => (i, j),
            _ => {
                return Err(Error::Structure(format!(
                    "F record {key:?} e={} f={} has inadmissible internal labels",
                    rec.e, rec.f
                )))
            }
        };
        blk.mat[(i, j)] = C64::new(rec.re.value()?, rec.im.value()?);
    }
    for a in 0..r {
        for b in 0..r {
            for c in 0..r {
                for d in 0..r {
                    if cat.empty_block(a, b, c, d).is_some() && !cat.f.contains_key(&(a, b, c, d)) {
                        return Err(Error::Structure(format!("missing F records for admissible ({a},{b},{c},{d})")));
                    }
                }
            }
        }
    }
    cat.finish(file.qdim)?;
    if let Some(k) = &file.kappa {
        if k.len() != r {
            return Err(Error::Structure("kappa length differs from rank".into()));
        }
        if !force && *k != cat.kappa {
            return Err(Error::Validation(format!("kappa {:?} disagrees with F data {:?}", k, cat.kappa)));
        }
    }
    if !force {
        let bad: Vec<String> = validate_all(&cat, tol)?
            .into_iter()
            .filter(|r| !r.passed)
            .map(|r| format!("{}: {}", r.check, r.violations.join("; ")))
            .collect();
        if !bad.is_empty() {
            return Err(Error::Validation(bad.join(" | ")));
        }
    }
    Ok(cat)
}

pub fn save_category(cat: &FusionCategory, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(cat)?)?;
    Ok(())
}

pub fn load_category(path: &Path, force: bool) -> Result<FusionCategory> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text, force, 1e-9)
}

/// Resolves `builtin:<name>`, a bare builtin name, or a file path.
pub fn resolve(source: &str, force: bool) -> Result<FusionCategory> {
    if let Some(name) = source.strip_prefix("builtin:") {
        return builtin(name);
    }
    if BUILTINS.contains(&source) {
        return builtin(source);
    }
    load_category(Path::new(source), force)
}
