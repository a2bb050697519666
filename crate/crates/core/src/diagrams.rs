//! Planar fusion-tree calculus.
//!
//! A [`Tree`] is a splitting tree in `Hom(root, x_1 ⊗ … ⊗ x_n)` with arbitrary
//! bracketing; a [`TreeVector`] is a linear combination of trees sharing
//! leaves and root. Amplitudes are taken with respect to *isometric* vertices.
//! Diagrammatic vertices carry the extra factor `(d_a d_b / d_c)^{1/4}`, so
//! that a closed loop evaluates to `d_a`, a cup is `√d_a` times the isometric
//! splitting `1 → a ā`, and the completeness relation reads
//! `id_{a⊗b} = Σ_{c,γ} √(d_c/(d_a d_b)) · split_γ ∘ fuse_γ`.
//!
//! The operations that act on positions ([`split`], [`fuse`], [`cup`],
//! [`cap`]) keep their inputs in left-associated normal form; [`to_left`]
//! brings any vector there.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion_category::{FusionCategory, Label};
use crate::C64;

const DROP: f64 = 1e-15;

/// Binary splitting tree. `Node` joins two subtrees into `charge` through the
/// multiplicity slot `mult` of `V_{ab}^{charge}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Tree {
    /// Tree with no leaves (vacuum root).
    Empty,
    Leaf(Label),
    Node {
        left: Box<Tree>,
        right: Box<Tree>,
        charge: Label,
        mult: usize,
    },
}

impl Tree {
    pub fn node(left: Tree, right: Tree, charge: Label, mult: usize) -> Tree {
        Tree::Node { left: Box::new(left), right: Box::new(right), charge, mult }
    }

    pub fn charge(&self) -> Label {
        match self {
            Tree::Empty => 0,
            Tree::Leaf(a) => *a,
            Tree::Node { charge, .. } => *charge,
        }
    }

    pub fn leaves(&self) -> Vec<Label> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<Label>) {
        match self {
            Tree::Empty => {}
            Tree::Leaf(a) => out.push(*a),
            Tree::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    fn n_leaves(&self) -> usize {
        match self {
            Tree::Empty => 0,
            Tree::Leaf(_) => 1,
            Tree::Node { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// True when every right child is a leaf.
    pub fn is_left_assoc(&self) -> bool {
        match self {
            Tree::Node { left, right, .. } => matches!(**right, Tree::Leaf(_)) && left.is_left_assoc(),
            _ => true,
        }
    }

    /// Every vertex satisfies its branching rule with a valid multiplicity.
    pub fn is_admissible(&self, cat: &FusionCategory) -> bool {
        match self {
            Tree::Node { left, right, charge, mult } => {
                *mult < cat.n(left.charge(), right.charge(), *charge)
                    && left.is_admissible(cat)
                    && right.is_admissible(cat)
            }
            Tree::Leaf(a) => *a < cat.rank(),
            Tree::Empty => true,
        }
    }

    /// Left-associated tree from leaves, intermediate charges
    /// `y_1 .. y_{n-1}` (with `y_1 = x_1` implied) and one multiplicity per
    /// binary vertex.
    pub fn left_assoc(leaves: &[Label], charges: &[Label], mults: &[usize]) -> Tree {
        if leaves.is_empty() {
            return Tree::Empty;
        }
        let mut t = Tree::Leaf(leaves[0]);
        for k in 1..leaves.len() {
            t = Tree::node(t, Tree::Leaf(leaves[k]), charges[k - 1], mults[k - 1]);
        }
        t
    }

    /// Diagram-normalized inner product with a tree of identical shape:
    /// `Π_vertices √(d_a d_b / d_c)` when equal, zero otherwise.
    fn diagram_norm(&self, cat: &FusionCategory) -> f64 {
        match self {
            Tree::Node { left, right, charge, .. } => {
                (cat.d(left.charge()) * cat.d(right.charge()) / cat.d(*charge)).sqrt()
                    * left.diagram_norm(cat)
                    * right.diagram_norm(cat)
            }
            _ => 1.0,
        }
    }
}

/// Sparse linear combination of trees with common leaves and root.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeVector {
    pub leaves: Vec<Label>,
    pub root: Label,
    pub terms: BTreeMap<Tree, C64>,
}

impl TreeVector {
    pub fn zero(leaves: Vec<Label>, root: Label) -> Self {
        Self { leaves, root, terms: BTreeMap::new() }
    }

    pub fn basis(t: Tree) -> Self {
        let mut v = Self::zero(t.leaves(), t.charge());
        v.terms.insert(t, C64::new(1.0, 0.0));
        v
    }

    pub fn add(&mut self, t: Tree, z: C64) {
        if z.norm() <= DROP {
            return;
        }
        let e = self.terms.entry(t).or_insert(C64::new(0.0, 0.0));
        *e += z;
    }

    fn prune(mut self) -> Self {
        self.terms.retain(|_, z| z.norm() > DROP);
        self
    }

    pub fn scale(mut self, s: C64) -> Self {
        for z in self.terms.values_mut() {
            *z *= s;
        }
        self
    }

    pub fn coeff(&self, t: &Tree) -> C64 {
        self.terms.get(t).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|z| z.norm() <= DROP)
    }

    /// Largest coefficient difference against another vector.
    pub fn distance(&self, other: &TreeVector) -> f64 {
        let mut m = 0.0f64;
        for (t, z) in &self.terms {
            m = m.max((z - other.coeff(t)).norm());
        }
        for (t, z) in &other.terms {
            if !self.terms.contains_key(t) {
                m = m.max(z.norm());
            }
        }
        m
    }

    fn map_trees<F>(&self, leaves: Vec<Label>, root: Label, mut f: F) -> TreeVector
    where
        F: FnMut(&Tree, C64, &mut TreeVector),
    {
        let mut out = TreeVector::zero(leaves, root);
        for (t, &z) in &self.terms {
            f(t, z, &mut out);
        }
        out.prune()
    }
}

// ---------------------------------------------------------------------------
// F-moves

/// Direction of an F-move at a vertex pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `((A B)_e C)_d → Σ_f F (A (B C)_f)_d`
    LeftToRight,
    /// `(A (B C)_f)_d → Σ_e F* ((A B)_e C)_d`
    RightToLeft,
}

/// Applies an F-move at the vertex reached from the root by `path`
/// (`false` = left child, `true` = right child).
pub fn f_move(cat: &FusionCategory, v: &TreeVector, path: &[bool], dir: Direction) -> Result<TreeVector> {
    let mut out = TreeVector::zero(v.leaves.clone(), v.root);
    for (t, &z) in &v.terms {
        for (nt, c) in f_move_tree(cat, t, path, dir)? {
            out.add(nt, z * c);
        }
    }
    Ok(out.prune())
}

fn f_move_tree(cat: &FusionCategory, t: &Tree, path: &[bool], dir: Direction) -> Result<Vec<(Tree, C64)>> {
    if let Some((&step, rest)) = path.split_first() {
        let Tree::Node { left, right, charge, mult } = t else {
            return Err(Error::Inadmissible("F-move path leaves the tree".into()));
        };
        let sub = if step { right } else { left };
        let moved = f_move_tree(cat, sub, rest, dir)?;
        return Ok(moved
            .into_iter()
            .map(|(nt, c)| {
                let (l, r) = if step { ((**left).clone(), nt) } else { (nt, (**right).clone()) };
                (Tree::node(l, r, *charge, *mult), c)
            })
            .collect());
    }
    let Tree::Node { left, right, charge: d, mult: top } = t else {
        return Err(Error::Inadmissible("F-move needs a binary vertex".into()));
    };
    let d = *d;
    let mut out = Vec::new();
    match dir {
        Direction::LeftToRight => {
            let Tree::Node { left: ta, right: tb, charge: e, mult: mu } = &**left else {
                return Err(Error::Inadmissible("left child is not a vertex".into()));
            };
            let (a, b, c) = (ta.charge(), tb.charge(), right.charge());
            if let Some(blk) = cat.f_block(a, b, c, d) {
                if let Some(i) = blk.row((*e, *mu, *top)) {
                    for (j, &(f, al, be)) in blk.cols.iter().enumerate() {
                        let x = blk.mat[(i, j)];
                        if x.norm() > DROP {
                            let inner = Tree::node((**tb).clone(), (**right).clone(), f, be);
                            out.push((Tree::node((**ta).clone(), inner, d, al), x));
                        }
                    }
                }
            }
        }
        Direction::RightToLeft => {
            let Tree::Node { left: tb, right: tc, charge: f, mult: be } = &**right else {
                return Err(Error::Inadmissible("right child is not a vertex".into()));
            };
            let (a, b, c) = (left.charge(), tb.charge(), tc.charge());
            if let Some(blk) = cat.f_block(a, b, c, d) {
                if let Some(j) = blk.col((*f, *top, *be)) {
                    for (i, &(e, mu, nu)) in blk.rows.iter().enumerate() {
                        let x = blk.mat[(i, j)].conj();
                        if x.norm() > DROP {
                            let inner = Tree::node((**left).clone(), (**tb).clone(), e, mu);
                            out.push((Tree::node(inner, (**tc).clone(), d, nu), x));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Re-expresses a tree in left-associated normal form.
fn left_normal(cat: &FusionCategory, t: &Tree) -> Vec<(Tree, C64)> {
    match t {
        Tree::Empty | Tree::Leaf(_) => vec![(t.clone(), C64::new(1.0, 0.0))],
        Tree::Node { left, right, charge, mult } => {
            let mut out = Vec::new();
            let ls = left_normal(cat, left);
            let rs = left_normal(cat, right);
            for (lt, lc) in &ls {
                for (rt, rc) in &rs {
                    let joined = Tree::node(lt.clone(), rt.clone(), *charge, *mult);
                    let c = lc * rc;
                    if matches!(rt, Tree::Leaf(_) | Tree::Empty) {
                        out.push((joined, c));
                        continue;
                    }
                    // (A (B C)_f)_d → Σ_e F* ((A B)_e C)_d, then normalize (A B)_e.
                    for (mt, mc) in
                        f_move_tree(cat, &joined, &[], Direction::RightToLeft).expect("right child is a vertex")
                    {
                        let Tree::Node { left: ab, right: cc, charge: d, mult: nu } = mt else { unreachable!() };
                        for (nl, nc) in left_normal(cat, &ab) {
                            out.push((Tree::node(nl, (*cc).clone(), d, nu), c * mc * nc));
                        }
                    }
                }
            }
            out
        }
    }
}

/// Left-associated normal form of a vector.
pub fn to_left(cat: &FusionCategory, v: &TreeVector) -> TreeVector {
    let mut out = TreeVector::zero(v.leaves.clone(), v.root);
    for (t, &z) in &v.terms {
        for (nt, c) in left_normal(cat, t) {
            out.add(nt, z * c);
        }
    }
    out.prune()
}

// ---------------------------------------------------------------------------
// Positional operations on left-associated vectors

fn check_left(v: &TreeVector) -> Result<()> {
    if v.terms.keys().all(Tree::is_left_assoc) {
        Ok(())
    } else {
        Err(Error::Inadmissible("operation needs a left-associated vector".into()))
    }
}

/// Replaces leaf `j` of a tree by `f(leaf)`.
fn replace_leaf(t: &Tree, j: usize, f: &dyn Fn(Label) -> Tree) -> Tree {
    match t {
        Tree::Leaf(a) => {
            debug_assert_eq!(j, 0);
            f(*a)
        }
        Tree::Node { left, right, charge, mult } => {
            let nl = left.n_leaves();
            if j < nl {
                Tree::node(replace_leaf(left, j, f), (**right).clone(), *charge, *mult)
            } else {
                Tree::node((**left).clone(), replace_leaf(right, j - nl, f), *charge, *mult)
            }
        }
        Tree::Empty => f(0),
    }
}

/// Splits leaf `j` (label `c`) into `a ⊗ b` through the diagrammatic vertex
/// with multiplicity `mult`.
pub fn split(cat: &FusionCategory, v: &TreeVector, j: usize, a: Label, b: Label, mult: usize) -> Result<TreeVector> {
    check_left(v)?;
    let c = *v.leaves.get(j).ok_or_else(|| Error::Inadmissible(format!("no leaf {j}")))?;
    let mut leaves = v.leaves.clone();
    leaves.splice(j..=j, [a, b]);
    if mult >= cat.n(a, b, c) {
        return Ok(TreeVector::zero(leaves, v.root));
    }
    let factor = (cat.d(a) * cat.d(b) / cat.d(c)).powf(0.25);
    let raw = v.map_trees(leaves, v.root, |t, z, out| {
        let nt = replace_leaf(t, j, &|x| Tree::node(Tree::Leaf(a), Tree::Leaf(b), x, mult));
        out.add(nt, z * factor);
    });
    Ok(to_left(cat, &raw))
}

/// Fuses leaves `j, j+1` into channel `c` through the diagrammatic fusion
/// vertex with multiplicity `mult`.
pub fn fuse(cat: &FusionCategory, v: &TreeVector, j: usize, c: Label, mult: usize) -> Result<TreeVector> {
    check_left(v)?;
    if j + 1 >= v.leaves.len() {
        return Err(Error::Inadmissible(format!("no leaf pair at {j}")));
    }
    let (a, b) = (v.leaves[j], v.leaves[j + 1]);
    let mut leaves = v.leaves.clone();
    leaves.splice(j..=j + 1, [c]);
    let mut out = TreeVector::zero(leaves, v.root);
    if mult >= cat.n(a, b, c) {
        return Ok(out);
    }
    let factor = (cat.d(a) * cat.d(b) / cat.d(c)).powf(0.25);
    let n = v.leaves.len();
    for (t, &z) in &v.terms {
        // Path from the root to the spine vertex whose right leaf is j+1.
        let depth = n - 2 - j;
        let sib = if j == 0 {
            vec![(t.clone(), C64::new(1.0, 0.0))]
        } else {
            f_move_tree(cat, t, &vec![false; depth], Direction::LeftToRight)?
        };
        for (st, sc) in sib {
            if let Some(nt) = contract_pair(&st, depth, j == 0, c, mult) {
                out.add(nt, z * sc * factor);
            }
        }
    }
    Ok(out.prune())
}

/// Replaces the sibling pair produced by `fuse`'s F-move with a single leaf
/// `c`, or returns `None` if its channel or multiplicity differs.
fn contract_pair(t: &Tree, depth: usize, bottom: bool, c: Label, mult: usize) -> Option<Tree> {
    if depth > 0 {
        let Tree::Node { left, right, charge, mult: m } = t else {
            return None;
        };
        let nl = contract_pair(left, depth - 1, bottom, c, mult)?;
        return Some(Tree::node(nl, (**right).clone(), *charge, *m));
    }
    let Tree::Node { left, right, charge, mult: m } = t else {
        return None;
    };
    if bottom {
        // The whole subtree is the pair.
        return (*charge == c && *m == mult).then_some(Tree::Leaf(c));
    }
    let Tree::Node { charge: f, mult: be, .. } = &**right else {
        return None;
    };
    (*f == c && *be == mult).then(|| Tree::node((**left).clone(), Tree::Leaf(c), *charge, *m))
}

/// Inserts the cup `1 → a ⊗ ā` so that the new strands occupy positions
/// `j, j+1`.
pub fn cup(cat: &FusionCategory, v: &TreeVector, j: usize, a: Label) -> Result<TreeVector> {
    check_left(v)?;
    let n = v.leaves.len();
    if j > n {
        return Err(Error::Inadmissible(format!("cup position {j} beyond {n} leaves")));
    }
    let mut leaves = v.leaves.clone();
    leaves.insert(j, 0);
    let with_vac = v.map_trees(leaves, v.root, |t, z, out| {
        let nt = if n == 0 {
            Tree::Leaf(0)
        } else if j == n {
            Tree::node(t.clone(), Tree::Leaf(0), t.charge(), 0)
        } else {
            replace_leaf(t, j, &|x| Tree::node(Tree::Leaf(0), Tree::Leaf(x), x, 0))
        };
        out.add(nt, z);
    });
    let with_vac = to_left(cat, &with_vac);
    split(cat, &with_vac, j, a, cat.dual[a], 0)
}

/// Caps strands `j, j+1` (which must be `a, ā`) into the vacuum.
pub fn cap(cat: &FusionCategory, v: &TreeVector, j: usize) -> Result<TreeVector> {
    let fused = fuse(cat, v, j, 0, 0)?;
    let mut leaves = fused.leaves.clone();
    leaves.remove(j);
    Ok(fused.map_trees(leaves, v.root, |t, z, out| out.add(remove_vacuum_leaf(t, j), z)))
}

fn remove_vacuum_leaf(t: &Tree, j: usize) -> Tree {
    match t {
        Tree::Leaf(0) => Tree::Empty,
        Tree::Node { left, right, charge, mult } => {
            let nl = left.n_leaves();
            if j < nl {
                if matches!(**left, Tree::Leaf(0)) {
                    return (**right).clone();
                }
                Tree::node(remove_vacuum_leaf(left, j), (**right).clone(), *charge, *mult)
            } else {
                if matches!(**right, Tree::Leaf(0)) {
                    return (**left).clone();
                }
                Tree::node((**left).clone(), remove_vacuum_leaf(right, j - nl), *charge, *mult)
            }
        }
        other => other.clone(),
    }
}

// ---------------------------------------------------------------------------
// Bends, completeness, orthogonality, bubbles

/// Direction of a bend of the last leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bend {
    /// `Hom(1, X ⊗ a) → Hom(ā, X)` by capping the last leaf against a new
    /// input strand.
    Down,
    /// `Hom(r, X) → Hom(1, X ⊗ r̄)` by a cup on the root.
    Up,
}

/// Bends the boundary leaf. Bending down and then up multiplies by `κ_a`.
pub fn bend(cat: &FusionCategory, v: &TreeVector, dir: Bend) -> Result<TreeVector> {
    check_left(v)?;
    match dir {
        Bend::Up => {
            let r = v.root;
            let rb = cat.dual[r];
            let mut leaves = v.leaves.clone();
            leaves.push(rb);
            let s = cat.d(r).sqrt();
            Ok(v.map_trees(leaves, 0, |t, z, out| {
                let nt =
                    if matches!(t, Tree::Empty) { Tree::Leaf(rb) } else { Tree::node(t.clone(), Tree::Leaf(rb), 0, 0) };
                out.add(nt, z * s);
            }))
        }
        Bend::Down => {
            if v.root != 0 || v.leaves.is_empty() {
                return Err(Error::Inadmissible("bending down needs a vacuum root and at least one leaf".into()));
            }
            let a = *v.leaves.last().expect("non-empty");
            let ab = cat.dual[a];
            let mut leaves = v.leaves.clone();
            leaves.pop();
            // (id_X ⊗ cap_{a ā}) ∘ (T ⊗ id_ā), with T = (T' ⊗ id_a) S_{1→ā a}.
            let coef = cat.d(a).sqrt() * cat.f(ab, a, ab, ab, (0, 0, 0), (0, 0, 0));
            Ok(v.map_trees(leaves, ab, |t, z, out| match t {
                Tree::Node { left, .. } => out.add((**left).clone(), z * coef),
                Tree::Leaf(_) => out.add(Tree::Empty, z * coef),
                Tree::Empty => {}
            }))
        }
    }
}

/// Completeness relation on strands `j, j+1`: the vector re-expressed in a
/// basis where the pair is bracketed into a definite channel. Expanding back
/// with [`to_left`] reproduces the input.
pub fn fuse_pair(cat: &FusionCategory, v: &TreeVector, j: usize) -> Result<TreeVector> {
    check_left(v)?;
    let n = v.leaves.len();
    if j + 1 >= n {
        return Err(Error::Inadmissible(format!("no leaf pair at {j}")));
    }
    if j == 0 {
        return Ok(v.clone());
    }
    f_move(cat, v, &vec![false; n - 2 - j], Direction::LeftToRight)
}

/// Channel decomposition produced by the completeness relation: for each
/// `(c, γ)`, the fused vector in which strands `j, j+1` became `c`, and the
/// completeness weight `√(d_c/(d_a d_b))`.
pub fn completeness_terms(
    cat: &FusionCategory,
    v: &TreeVector,
    j: usize,
) -> Result<Vec<(Label, usize, f64, TreeVector)>> {
    let (a, b) = (v.leaves[j], v.leaves[j + 1]);
    let mut out = Vec::new();
    for &c in cat.channels(a, b) {
        for g in 0..cat.n(a, b, c) {
            let w = (cat.d(c) / (cat.d(a) * cat.d(b))).sqrt();
            out.push((c, g, w, fuse(cat, v, j, c, g)?));
        }
    }
    Ok(out)
}

/// Diagram-normalized inner product of two trees with equal boundary:
/// `√(d_a d_b / d_c)` per vertex, after re-expressing both trees in the
/// left-associated basis.
pub fn inner_product(cat: &FusionCategory, t1: &Tree, t2: &Tree) -> Result<C64> {
    if t1.leaves() != t2.leaves() || t1.charge() != t2.charge() {
        return Err(Error::Inadmissible("inner product of trees with different boundary".into()));
    }
    let a = to_left(cat, &TreeVector::basis(t1.clone()));
    let b = to_left(cat, &TreeVector::basis(t2.clone()));
    let mut s = C64::new(0.0, 0.0);
    for (t, z) in &a.terms {
        let w = b.coeff(t);
        if w.norm() > 0.0 {
            s += z.conj() * w * t.diagram_norm(cat);
        }
    }
    Ok(s)
}

/// Removes the bubble formed by strands `j, j+1`, which must carry `(s, s̄)`
/// entirely in the vacuum channel; the result is scaled by the loop value.
pub fn pop_bubble(cat: &FusionCategory, v: &TreeVector, j: usize) -> Result<TreeVector> {
    let (a, b) = match (v.leaves.get(j), v.leaves.get(j + 1)) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Inadmissible(format!("no strand pair at {j}"))),
    };
    if b != cat.dual[a] {
        return Err(Error::Inadmissible("strands are not a dual pair".into()));
    }
    for &c in cat.channels(a, b) {
        if c == 0 {
            continue;
        }
        for g in 0..cat.n(a, b, c) {
            if !fuse(cat, v, j, c, g)?.is_zero() {
                return Err(Error::Inadmissible("strand pair is not a closed bubble".into()));
            }
        }
    }
    cap(cat, v, j)
}

/// For a vector in `Hom(1, a ⊗ b)`: `Some(λ)` with `v = λ · cup_a` when
/// `b = ā`, `None` when the pair cannot fuse to the vacuum.
pub fn vacuum_collapse(cat: &FusionCategory, v: &TreeVector) -> Result<Option<C64>> {
    if v.leaves.len() != 2 || v.root != 0 {
        return Err(Error::Inadmissible("vacuum collapse needs Hom(1, a ⊗ b)".into()));
    }
    let (a, b) = (v.leaves[0], v.leaves[1]);
    if b != cat.dual[a] {
        return Ok(None);
    }
    let t = Tree::node(Tree::Leaf(a), Tree::Leaf(b), 0, 0);
    Ok(Some(v.coeff(&t) / cat.d(a).sqrt()))
}

// ---------------------------------------------------------------------------
// Plaquette coefficients

/// Labels around one vertex of a plaquette.
///
/// Vertices are numbered clockwise from the top: 1 top, 2 upper right,
/// 3 lower right, 4 bottom, 5 lower left, 6 upper left. Ring edge `i_k` joins
/// vertex `k` and `k+1`; vertex `k` touches `i_{k-1}` (`ring.0`) and `i_k`
/// (`ring.1`), plus its outer leg `e`. Primed labels are the ring labels after
/// the `s`-loop has been fused in, and `gamma` the multiplicity slots of the
/// two completeness vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VertexLabels {
    pub e: Label,
    pub ring: (Label, Label),
    pub primed: (Label, Label),
    pub gamma: (usize, usize),
}

/// The matrix `(b_k)_{α α'}` of one plaquette vertex: the vertex decorated by
/// its segment of the `s`-loop equals `Σ_{α'} b_{αα'}` times the bare vertex
/// with primed ring labels. Rows are the old vertex multiplicity, columns the
/// new one. Inadmissible labels give an empty matrix.
pub fn plaquette_coeffs(cat: &FusionCategory, s: Label, kind: usize, lab: VertexLabels) -> Result<DMatrix<C64>> {
    if !(1..=6).contains(&kind) {
        return Err(Error::Inadmissible(format!("vertex kind {kind} not in 1..=6")));
    }
    let sb = cat.dual[s];
    let VertexLabels { e, ring: (ia, ib), primed: (pa, pb), gamma: (ga, gb) } = lab;
    // (old vertex: left, right, top-or-bottom), (new vertex), split-type?
    let (old, new, splitting) = match kind {
        1 => ((ia, ib, e), (pa, pb, e), false),
        2 => ((ia, e, ib), (pa, e, pb), true),
        3 => ((ib, e, ia), (pb, e, pa), false),
        4 => ((ib, ia, e), (pb, pa, e), true),
        5 => ((e, ia, ib), (e, pa, pb), false),
        _ => ((e, ib, ia), (e, pb, pa), true),
    };
    let n_old = cat.n(old.0, old.1, old.2);
    let n_new = cat.n(new.0, new.1, new.2);
    let mut out = DMatrix::zeros(n_old, n_new);
    if n_old == 0 || n_new == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let bare = (cat.d(new.0) * cat.d(new.1) / cat.d(new.2)).powf(0.25);
    for al in 0..n_old {
        for mu in 0..n_new {
            // Split-type vertices start from one strand and read off the new
            // multiplicity; fusion-type start from the new vertex and end on
            // one strand.
            let start =
                if splitting { Tree::Leaf(new.2) } else { Tree::node(Tree::Leaf(new.0), Tree::Leaf(new.1), new.2, mu) };
            let v = TreeVector::basis(start);
            let r = match kind {
                1 => {
                    let v = split(cat, &v, 0, ia, sb, ga)?;
                    let v = split(cat, &v, 2, s, ib, gb)?;
                    let v = cap(cat, &v, 1)?;
                    fuse(cat, &v, 0, e, al)?
                }
                2 => {
                    let v = split(cat, &v, 0, s, ib, gb)?;
                    let v = split(cat, &v, 1, ia, e, al)?;
                    fuse(cat, &v, 0, pa, ga)?
                }
                3 => {
                    let v = split(cat, &v, 0, s, ib, gb)?;
                    let v = fuse(cat, &v, 1, ia, al)?;
                    fuse(cat, &v, 0, pa, ga)?
                }
                4 => {
                    let v = split(cat, &v, 0, ib, ia, al)?;
                    let v = cup(cat, &v, 1, sb)?;
                    let v = fuse(cat, &v, 2, pa, ga)?;
                    fuse(cat, &v, 0, pb, gb)?
                }
                5 => {
                    let v = split(cat, &v, 1, ia, sb, ga)?;
                    let v = fuse(cat, &v, 0, ib, al)?;
                    fuse(cat, &v, 0, pb, gb)?
                }
                _ => {
                    let v = split(cat, &v, 0, ia, sb, ga)?;
                    let v = split(cat, &v, 0, e, ib, al)?;
                    fuse(cat, &v, 1, pb, gb)?
                }
            };
            let target =
                if splitting { Tree::node(Tree::Leaf(new.0), Tree::Leaf(new.1), new.2, mu) } else { Tree::Leaf(new.2) };
            out[(al, mu)] = r.coeff(&target) / bare;
        }
    }
    Ok(out)
}

/// Multiplicity ranges of the completeness vertices on ring edge `k`
/// (1-based): right-side edges fuse `s ⊗ i`, left-side edges `i ⊗ s̄`.
pub fn completeness_mult(cat: &FusionCategory, s: Label, k: usize, i: Label, ip: Label) -> usize {
    if k <= 3 {
        cat.n(s, i, ip)
    } else {
        cat.n(i, cat.dual[s], ip)
    }
}
