use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snlab::fusion_category::{builtin, FusionCategory, BUILTINS};
use snlab::hamiltonian::{
    check_ltqo, decode_state, dot, encode_state, ground_space, max_commutator, norm, random_state, state_to_json,
    verify_plaquette_algebra, GroundMethod, StringNetModel,
};
use snlab::lattice::{ECoord, HoneycombLattice, SpaceSpec, StringNetBasis};
use snlab::C64;

const CAP: f64 = 1e7;

fn setup(name: &str, lat: &HoneycombLattice) -> (FusionCategory, StringNetBasis) {
    let cat = builtin(name).unwrap();
    let basis = StringNetBasis::enumerate(&cat, lat, &SpaceSpec::whole(lat), CAP).unwrap();
    (cat, basis)
}

fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn max_entry(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// The toric-code plaquette `∏_{e∈∂p} X_e` on the loop basis: flips the Z2
/// label of every ring edge.
fn pauli_flip(basis: &StringNetBasis, lat: &HoneycombLattice, p: usize, i: usize) -> usize {
    let mut key = basis.key(i);
    for &e in &lat.plaquettes[p].ring {
        let pos = basis.edge_position(e).unwrap();
        key = basis.with_label(key, pos, 1 - basis.label(key, pos));
    }
    basis.index_of(key).expect("flipped loop configuration is a basis state")
}

#[test]
fn toric_code_plaquette_matches_pauli_oracle() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    let (cat, basis) = setup("vec_z2", &lat);
    let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
    let n = basis.len();
    for p in model.plaquette_ids() {
        let mut x = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            x[(pauli_flip(&basis, &lat, p, i), i)] = C64::new(1.0, 0.0);
        }
        let ours = model.plaquette_operator(p, 1).unwrap().to_dense();
        assert!(max_entry(&(&ours - &x)) < 1e-10);
        let projector = (DMatrix::<C64>::identity(n, n) + &x) * C64::new(0.5, 0.0);
        let bp = model.plaquette_projector(p).unwrap().to_dense();
        assert!(max_entry(&(&bp - &projector)) < 1e-10);
        // Rank of B_p is half the configuration space.
        assert!((bp.trace().re - n as f64 / 2.0).abs() < 1e-10);
    }
}

#[test]
fn vacuum_string_acts_as_identity() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    for name in ["fibonacci", "ising"] {
        let (cat, basis) = setup(name, &lat);
        let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
        let b1 = model.plaquette_operator(0, 0).unwrap().to_dense();
        let n = basis.len();
        assert!(max_entry(&(b1 - DMatrix::<C64>::identity(n, n))) < 1e-12, "{name}");
    }
}

/// Dense `B_p^s` for every label.
fn dense_labels(model: &StringNetModel, p: usize) -> Vec<DMatrix<C64>> {
    (0..model.cat.rank()).map(|s| model.plaquette_operator(p, s).unwrap().to_dense()).collect()
}

#[test]
fn plaquette_algebra_by_dense_products() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    for name in BUILTINS {
        let (cat, basis) = setup(name, &lat);
        if basis.len() > 600 {
            continue;
        }
        let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
        let r = cat.rank();
        for p in model.plaquette_ids() {
            let b = dense_labels(&model, p);
            for s in 0..r {
                for t in 0..r {
                    let mut rhs = DMatrix::<C64>::zeros(basis.len(), basis.len());
                    for u in 0..r {
                        rhs += &b[u] * C64::new(cat.n(s, t, u) as f64, 0.0);
                    }
                    assert!(max_entry(&(&b[s] * &b[t] - rhs)) < 1e-9, "{name} p{p}: B^{s} B^{t}");
                }
                assert!(max_entry(&(b[s].adjoint() - &b[cat.dual[s]])) < 1e-10, "{name}: adjoint of B^{s}");
            }
            let bp = model.plaquette_projector(p).unwrap().to_dense();
            assert!(max_entry(&(&bp * &bp - &bp)) < 1e-10, "{name}: idempotence");
            assert!(max_entry(&(bp.adjoint() - &bp)) < 1e-10, "{name}: hermiticity");
        }
        for r in verify_plaquette_algebra(&model, 0, 1e-9).unwrap() {
            assert!(r.passed, "{name}: {} {}", r.check, r.max_residual);
        }
    }
}

#[test]
fn named_fusion_identities() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    // (category, s, t, channels of s ⊗ t)
    for (name, s, t, sum) in [("vec_z2", 1, 1, vec![0]), ("fibonacci", 1, 1, vec![0, 1]), ("ising", 1, 1, vec![0, 2])] {
        let (cat, basis) = setup(name, &lat);
        let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
        let b = dense_labels(&model, 2);
        let rhs = sum.iter().fold(DMatrix::<C64>::zeros(basis.len(), basis.len()), |acc, &u| acc + &b[u]);
        assert!(max_entry(&(&b[s] * &b[t] - rhs)) < 1e-9, "{name}");
    }
}

#[test]
fn plaquettes_commute() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    for name in BUILTINS {
        let (cat, basis) = setup(name, &lat);
        let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
        let c = max_commutator(&model).unwrap();
        assert!(c < 1e-10, "{name}: {c}");
    }
}

#[test]
fn hamiltonian_is_hermitian_and_vertex_terms_are_trivial() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    let (cat, basis) = setup("ising", &lat);
    let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
    assert!(model.hamiltonian().unwrap().is_hermitian(1e-12));
    for v in 0..lat.n_vertices() {
        let q = model.vertex_projector(v).unwrap();
        assert_eq!(q.nnz(), basis.len());
        assert!(q.triplets().all(|(r, c, z)| r == c && z == C64::new(1.0, 0.0)));
    }
}

/// Drinfeld-center ranks: `rank²` for every builtin (all are either abelian
/// group categories or modular).
fn expected_gsd(cat: &FusionCategory) -> usize {
    cat.rank() * cat.rank()
}

#[test]
fn torus_degeneracy_is_stable_across_sizes() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        for (lx, ly) in [(2, 2), (2, 3), (3, 2)] {
            let lat = HoneycombLattice::torus(lx, ly).unwrap();
            let basis = StringNetBasis::enumerate(&cat, &lat, &SpaceSpec::whole(&lat), CAP).unwrap();
            let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
            let gs = ground_space(&model, GroundMethod::ProjectorProduct, 7).unwrap();
            assert_eq!(gs.len(), expected_gsd(&cat), "{name} {lx}x{ly}");
        }
    }
}

#[test]
fn degeneracy_equals_trace_of_projector_product() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    for name in ["vec_z2", "semion", "fibonacci", "ising", "vec_z3"] {
        let (cat, basis) = setup(name, &lat);
        let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
        let n = basis.len();
        let mut prod = DMatrix::<C64>::identity(n, n);
        for p in model.plaquette_ids() {
            prod = model.plaquette_projector(p).unwrap().to_dense() * prod;
        }
        let tr = prod.trace().re;
        assert!((tr - expected_gsd(&cat) as f64).abs() < 1e-8, "{name}: Tr ∏B_p = {tr}");
    }
}

#[test]
fn dense_and_projector_methods_agree() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    for name in ["vec_z2", "fibonacci", "ising"] {
        let (cat, basis) = setup(name, &lat);
        let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
        let a = ground_space(&model, GroundMethod::Dense, 0).unwrap();
        let b = ground_space(&model, GroundMethod::ProjectorProduct, 0).unwrap();
        assert_eq!(a.len(), b.len());
        // Same subspace: each vector of one lies in the span of the other.
        for v in &a {
            let w: f64 = b.iter().map(|u| dot(u, v).norm_sqr()).sum();
            assert!((w - 1.0).abs() < 1e-9, "{name}");
        }
    }
}

#[test]
fn ground_vectors_are_frustration_free() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    let (cat, basis) = setup("vec_z2", &lat);
    let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
    assert_eq!(model.frustration_free_energy(), -12.0);
    let h = model.hamiltonian().unwrap();
    for v in ground_space(&model, GroundMethod::ProjectorProduct, 3).unwrap() {
        let hv = h.matvec(&v);
        let target: Vec<C64> = v.iter().map(|z| z * -12.0).collect();
        assert!(norm(&sub(&hv, &target)) < 1e-9);
        for p in model.plaquette_ids() {
            assert!(norm(&sub(&model.apply_projector(p, &v).unwrap(), &v)) < 1e-9);
        }
    }
}

#[test]
fn open_patch_ground_state_is_unique() {
    for name in BUILTINS {
        let lat = HoneycombLattice::open_patch(2, 2).unwrap();
        let (cat, basis) = setup(name, &lat);
        let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
        let gs = ground_space(&model, GroundMethod::ProjectorProduct, 1).unwrap();
        assert_eq!(gs.len(), 1, "{name}");
    }
}

/// Lattice translation by one cell in x on a torus, as a map on edge ids.
fn translate_edges(lat: &HoneycombLattice) -> Vec<usize> {
    lat.edges
        .iter()
        .map(|e| lat.edge_id(ECoord { kind: e.coord.kind, x: e.coord.x + 1, y: e.coord.y }).unwrap())
        .collect()
}

#[test]
fn translated_plaquettes_are_permutation_conjugate() {
    let lat = HoneycombLattice::torus(3, 2).unwrap();
    let (cat, basis) = setup("fibonacci", &lat);
    assert!(cat.is_multiplicity_free());
    let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
    let te = translate_edges(&lat);
    let perm: Vec<usize> = (0..basis.len())
        .map(|i| {
            let k = basis.key(i);
            let mut nk = 0u128;
            for (e, &to) in te.iter().enumerate() {
                let l = basis.label(k, basis.edge_position(e).unwrap());
                nk = basis.with_label(nk, basis.edge_position(to).unwrap(), l);
            }
            basis.index_of(nk).unwrap()
        })
        .collect();
    let p = lat.plaquette_id(0, 0).unwrap();
    let q = lat.plaquette_id(1, 0).unwrap();
    let entries = |id: usize| -> BTreeMap<(usize, usize), C64> {
        model
            .plaquette_operator(id, 1)
            .unwrap()
            .triplets()
            .filter(|t| t.2.norm() > 1e-14)
            .map(|(r, c, z)| ((r, c), z))
            .collect()
    };
    let bp = entries(p);
    let bq = entries(q);
    assert_eq!(bp.len(), bq.len());
    for (&(r, c), &z) in &bp {
        let w = bq.get(&(perm[r], perm[c])).copied().unwrap_or_default();
        assert!((z - w).norm() < 1e-12);
    }
}

#[test]
fn ltqo_on_a_single_plaquette() {
    let lat = HoneycombLattice::torus(4, 4).unwrap();
    let cat = builtin("vec_z2").unwrap();
    let region = lat.plaquette_vertices(&[5]);
    let r = check_ltqo(&cat, &lat, &region, 1, 20, 0, CAP).unwrap();
    assert!(!r.whole_lattice);
    assert_eq!(r.samples, 20);
    assert_eq!(r.residuals.len(), 20);
    assert!(r.max_residual < 1e-9, "{}", r.max_residual);
}

#[test]
fn ltqo_flags_a_buffer_covering_the_torus() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    let cat = builtin("vec_z2").unwrap();
    let r = check_ltqo(&cat, &lat, &lat.plaquette_vertices(&[0]), 1, 5, 0, CAP).unwrap();
    assert!(r.whole_lattice);
    assert_eq!(r.ground_dim, 4);
}

#[test]
fn ltqo_rejects_an_empty_region() {
    let lat = HoneycombLattice::torus(3, 3).unwrap();
    let cat = builtin("vec_z2").unwrap();
    assert!(check_ltqo(&cat, &lat, &BTreeSet::new(), 1, 5, 0, CAP).is_err());
}

#[test]
fn state_files_round_trip() {
    let lat = HoneycombLattice::torus(2, 2).unwrap();
    let (_, basis) = setup("fibonacci", &lat);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let psi = random_state(&mut rng, basis.len());
    let bytes = encode_state(&basis, &psi);
    assert_eq!(decode_state(&basis, &bytes).unwrap(), psi);
    let (_, other) = setup("ising", &lat);
    assert!(decode_state(&other, &bytes).is_err());
    assert!(decode_state(&basis, &bytes[..bytes.len() - 1]).is_err());
    let v: serde_json::Value = serde_json::from_str(&state_to_json(&basis, &psi).unwrap()).unwrap();
    assert_eq!(v["dim"], basis.len());
}

#[test]
fn ground_space_is_reproducible() {
    let lat = HoneycombLattice::torus(2, 3).unwrap();
    let (cat, basis) = setup("fibonacci", &lat);
    let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
    let a = ground_space(&model, GroundMethod::ProjectorProduct, 5).unwrap();
    let b = ground_space(&model, GroundMethod::ProjectorProduct, 5).unwrap();
    assert_eq!(a, b);
}
