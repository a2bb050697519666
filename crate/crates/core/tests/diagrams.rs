use proptest::prelude::*;
use snlab::diagrams::{
    bend, cap, completeness_terms, cup, f_move, fuse_pair, inner_product, plaquette_coeffs, pop_bubble, to_left,
    vacuum_collapse, Bend, Direction, Tree, TreeVector, VertexLabels,
};
use snlab::fusion_category::{builtin, FusionCategory, BUILTINS};
use snlab::C64;

fn leaf(a: usize) -> Tree {
    Tree::Leaf(a)
}

fn pair(a: usize, b: usize, c: usize) -> Tree {
    Tree::node(leaf(a), leaf(b), c, 0)
}

fn phi() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

/// Every admissible multiplicity-free left-associated tree `(((ab)_f c)_g d)_e`.
fn four_leaf_trees(cat: &FusionCategory) -> Vec<Tree> {
    let r = cat.rank();
    let mut out = Vec::new();
    for a in 0..r {
        for b in 0..r {
            for &f in cat.channels(a, b) {
                for cc in 0..r {
                    for &g in cat.channels(f, cc) {
                        for d in 0..r {
                            for &e in cat.channels(g, d) {
                                out.push(Tree::left_assoc(&[a, b, cc, d], &[f, g, e], &[0, 0, 0]));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[test]
fn vacuum_middle_leaf_moves_trivially() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        for a in 0..cat.rank() {
            for cc in 0..cat.rank() {
                for &d in cat.channels(a, cc) {
                    let t = Tree::node(pair(a, 0, a), leaf(cc), d, 0);
                    let moved = f_move(&cat, &TreeVector::basis(t), &[], Direction::LeftToRight).unwrap();
                    let expect = Tree::node(leaf(a), pair(0, cc, cc), d, 0);
                    assert_eq!(moved.terms.len(), 1, "{name}");
                    assert!((moved.coeff(&expect) - C64::new(1.0, 0.0)).norm() < 1e-14);
                }
            }
        }
    }
}

#[test]
fn fibonacci_move_reads_off_the_f_row() {
    let fib = builtin("fibonacci").unwrap();
    let t = Tree::node(pair(1, 1, 0), leaf(1), 1, 0);
    let moved = f_move(&fib, &TreeVector::basis(t), &[], Direction::LeftToRight).unwrap();
    let to_vac = Tree::node(leaf(1), pair(1, 1, 0), 1, 0);
    let to_tau = Tree::node(leaf(1), pair(1, 1, 1), 1, 0);
    assert!((moved.coeff(&to_vac) - C64::new(1.0 / phi(), 0.0)).norm() < 1e-12);
    assert!((moved.coeff(&to_tau) - C64::new(1.0 / phi().sqrt(), 0.0)).norm() < 1e-12);
    assert_eq!(moved.terms.len(), 2);
}

#[test]
fn pentagon_coherence_of_move_sequences() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        for t in four_leaf_trees(&cat) {
            let v = TreeVector::basis(t);
            // Two moves: ((ab)c)d → (ab)(cd) → a(b(cd)).
            let short = f_move(&cat, &v, &[], Direction::LeftToRight).unwrap();
            let short = f_move(&cat, &short, &[], Direction::LeftToRight).unwrap();
            // Three moves: → (a(bc))d → a((bc)d) → a(b(cd)).
            let long = f_move(&cat, &v, &[false], Direction::LeftToRight).unwrap();
            let long = f_move(&cat, &long, &[], Direction::LeftToRight).unwrap();
            let long = f_move(&cat, &long, &[true], Direction::LeftToRight).unwrap();
            assert!(short.distance(&long) < 1e-10, "{name}: {}", short.distance(&long));
        }
    }
}

#[test]
fn zig_zag_is_the_frobenius_schur_indicator() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        for a in 0..cat.rank() {
            let ab = cat.dual[a];
            // Hom(1, ā ⊗ a): bend the a leaf down and back up.
            let v = TreeVector::basis(pair(ab, a, 0));
            let down = bend(&cat, &v, Bend::Down).unwrap();
            let back = bend(&cat, &down, Bend::Up).unwrap();
            let k = f64::from(cat.kappa[a]);
            assert!(back.distance(&v.clone().scale(C64::new(k, 0.0))) < 1e-12, "{name} label {a}");
        }
    }
    let semion = builtin("semion").unwrap();
    let v = TreeVector::basis(pair(1, 1, 0));
    let back = bend(&semion, &bend(&semion, &v, Bend::Down).unwrap(), Bend::Up).unwrap();
    assert!((back.coeff(&pair(1, 1, 0)) + C64::new(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn bending_the_vacuum_leaf_is_the_identity() {
    let fib = builtin("fibonacci").unwrap();
    let v = TreeVector::basis(Tree::node(pair(1, 1, 0), leaf(0), 0, 0));
    let back = bend(&fib, &bend(&fib, &v, Bend::Down).unwrap(), Bend::Up).unwrap();
    assert!(back.distance(&v) < 1e-14);
}

#[test]
fn completeness_weights() {
    let fib = builtin("fibonacci").unwrap();
    let v = TreeVector::basis(Tree::node(pair(0, 1, 1), leaf(1), 1, 0));
    let p = phi();
    // Fusing τ ⊗ τ: channels 1 and τ with weights √(d_c/d_τ²).
    let v2 = TreeVector::basis(Tree::left_assoc(&[1, 1, 1], &[1, 1], &[0, 0]));
    let terms = completeness_terms(&fib, &v2, 1).unwrap();
    let weights: Vec<(usize, f64)> = terms.iter().map(|t| (t.0, t.2)).collect();
    assert_eq!(weights.len(), 2);
    assert!((weights[0].1 - (1.0 / (p * p)).sqrt()).abs() < 1e-14);
    assert!((weights[1].1 - (p / (p * p)).sqrt()).abs() < 1e-14);
    // 1 ⊗ τ has the single channel τ with weight 1.
    let terms = completeness_terms(&fib, &v, 0).unwrap();
    assert_eq!(terms.len(), 1);
    assert_eq!(terms[0].0, 1);
    assert!((terms[0].2 - 1.0).abs() < 1e-14);
    let z2 = builtin("vec_z2").unwrap();
    let v = TreeVector::basis(Tree::left_assoc(&[1, 1, 1], &[0, 1], &[0, 0]));
    let terms = completeness_terms(&z2, &v, 1).unwrap();
    assert_eq!(terms.len(), 1);
    assert_eq!(terms[0].0, 0);
    assert!((terms[0].2 - 1.0).abs() < 1e-14);
}

#[test]
fn inner_products_of_basis_trees() {
    let z2 = builtin("vec_z2").unwrap();
    let t = pair(1, 1, 0);
    assert!((inner_product(&z2, &t, &t).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-14);
    let fib = builtin("fibonacci").unwrap();
    let tt = pair(1, 1, 1);
    assert!((inner_product(&fib, &tt, &tt).unwrap() - C64::new(phi().sqrt(), 0.0)).norm() < 1e-12);
    // ((ττ)_1 τ)_τ and ((ττ)_τ τ)_τ are orthogonal.
    let a = Tree::node(pair(1, 1, 0), leaf(1), 1, 0);
    let b = Tree::node(pair(1, 1, 1), leaf(1), 1, 0);
    assert!(inner_product(&fib, &a, &b).unwrap().norm() < 1e-14);
    // Different boundaries are not comparable.
    assert!(inner_product(&fib, &pair(1, 1, 0), &tt).is_err());
}

#[test]
fn bubbles_pop_to_quantum_dimensions() {
    for (name, label, d) in [("vec_z2", 1, 1.0), ("fibonacci", 1, phi()), ("ising", 1, 2f64.sqrt())] {
        let cat = builtin(name).unwrap();
        let v = TreeVector::basis(leaf(label));
        let with = cup(&cat, &v, 1, label).unwrap();
        let popped = pop_bubble(&cat, &with, 1).unwrap();
        assert!((popped.coeff(&leaf(label)) - C64::new(d, 0.0)).norm() < 1e-12, "{name}");
    }
}

#[test]
fn popping_an_open_pair_is_refused() {
    let fib = builtin("fibonacci").unwrap();
    let v = TreeVector::basis(Tree::left_assoc(&[1, 1, 1], &[1, 1], &[0, 0]));
    assert!(pop_bubble(&fib, &v, 1).is_err());
}

#[test]
fn vacuum_collapse_needs_dual_pairs() {
    let z2 = builtin("vec_z2").unwrap();
    assert!(vacuum_collapse(&z2, &TreeVector::basis(pair(1, 1, 0))).unwrap().is_some());
    let fib = builtin("fibonacci").unwrap();
    let v = TreeVector::zero(vec![1, 0], 0);
    assert!(vacuum_collapse(&fib, &v).unwrap().is_none());
    let ising = builtin("ising").unwrap();
    let v = TreeVector::zero(vec![1, 2], 0);
    assert!(vacuum_collapse(&ising, &v).unwrap().is_none());
}

#[test]
fn cap_after_cup_gives_the_loop_value_for_every_label() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        for a in 0..cat.rank() {
            let v = TreeVector::basis(leaf(a));
            let looped = cap(&cat, &cup(&cat, &v, 1, a).unwrap(), 1).unwrap();
            assert!((looped.coeff(&leaf(a)) - C64::new(cat.d(a), 0.0)).norm() < 1e-12, "{name} {a}");
        }
    }
}

#[test]
fn vacuum_string_coefficients_are_identities() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        let r = cat.rank();
        for kind in 1..=6 {
            for e in 0..r {
                for ia in 0..r {
                    for ib in 0..r {
                        let lab = VertexLabels { e, ring: (ia, ib), primed: (ia, ib), gamma: (0, 0) };
                        let m = plaquette_coeffs(&cat, 0, kind, lab).unwrap();
                        for i in 0..m.nrows() {
                            for j in 0..m.ncols() {
                                let expect = if i == j { 1.0 } else { 0.0 };
                                assert!((m[(i, j)] - C64::new(expect, 0.0)).norm() < 1e-12, "{name} kind {kind}");
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn vertex_kind_out_of_range_is_refused() {
    let z2 = builtin("vec_z2").unwrap();
    let lab = VertexLabels { e: 0, ring: (0, 0), primed: (0, 0), gamma: (0, 0) };
    assert!(plaquette_coeffs(&z2, 1, 7, lab).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn left_then_right_round_trip(which in 0usize..BUILTINS.len(), pick in any::<prop::sample::Index>()) {
        let cat = builtin(BUILTINS[which]).unwrap();
        let trees = four_leaf_trees(&cat);
        let v = TreeVector::basis(trees[pick.index(trees.len())].clone());
        let there = f_move(&cat, &v, &[], Direction::LeftToRight).unwrap();
        let back = f_move(&cat, &there, &[], Direction::RightToLeft).unwrap();
        prop_assert!(back.distance(&v) < 1e-12);
    }

    #[test]
    fn completeness_expansion_returns_the_input(
        which in 0usize..BUILTINS.len(),
        pick in any::<prop::sample::Index>(),
        j in 0usize..3,
    ) {
        let cat = builtin(BUILTINS[which]).unwrap();
        let trees = four_leaf_trees(&cat);
        let v = TreeVector::basis(trees[pick.index(trees.len())].clone());
        let fused = fuse_pair(&cat, &v, j).unwrap();
        prop_assert!(to_left(&cat, &fused).distance(&v) < 1e-12);
    }

    #[test]
    fn normal_form_preserves_the_norm(which in 0usize..BUILTINS.len(), pick in any::<prop::sample::Index>()) {
        // F-moves are unitary, so any rebracketing keeps the coefficient norm.
        let cat = builtin(BUILTINS[which]).unwrap();
        let trees = four_leaf_trees(&cat);
        let v = TreeVector::basis(trees[pick.index(trees.len())].clone());
        let moved = f_move(&cat, &v, &[false], Direction::LeftToRight).unwrap();
        let moved = f_move(&cat, &moved, &[], Direction::LeftToRight).unwrap();
        let n: f64 = moved.terms.values().map(|z| z.norm_sqr()).sum();
        prop_assert!((n - 1.0).abs() < 1e-12);
    }
}
