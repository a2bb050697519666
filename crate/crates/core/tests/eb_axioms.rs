use std::collections::BTreeSet;
use std::f64::consts::LN_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snlab::eb_axioms::{
    annulus_closure_merge, area_law_fit, axiom_kinds, doubled_weights, information_convex_sectors, markov_strip_merge,
    sector_count_convergence, sector_entropy_differences, standard_disks, verify_axioms, SectorGeometry,
};
use snlab::fusion_category::{builtin, FusionCategory, BUILTINS};
use snlab::hamiltonian::{ground_space, random_state, GroundMethod, StringNetModel};
use snlab::lattice::{HoneycombLattice, PartitionKind, SpaceSpec, StringNetBasis};
use snlab::{Error, C64};

const CAP: f64 = 1e7;

struct Ground {
    cat: FusionCategory,
    lat: HoneycombLattice,
    basis: StringNetBasis,
    vecs: Vec<Vec<C64>>,
}

fn ground(name: &str, lat: HoneycombLattice) -> Ground {
    let cat = builtin(name).unwrap();
    let basis = StringNetBasis::enumerate(&cat, &lat, &SpaceSpec::whole(&lat), CAP).unwrap();
    let vecs = {
        let model = StringNetModel::new(&cat, &lat, &basis).unwrap();
        ground_space(&model, GroundMethod::ProjectorProduct, 0).unwrap()
    };
    Ground { cat, lat, basis, vecs }
}

impl Ground {
    fn first(&self) -> [(f64, &[C64]); 1] {
        [(1.0, self.vecs[0].as_slice())]
    }
}

fn golden() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

#[test]
fn bulk_axioms_hold_for_abelian_and_fibonacci_ground_states() {
    for name in ["vec_z2", "semion", "fibonacci"] {
        let g = ground(name, HoneycombLattice::torus(3, 3).unwrap());
        let r = verify_axioms(&g.basis, &g.lat, &g.first(), &axiom_kinds(&g.lat), 1, 1e-8).unwrap();
        assert!(r.passed(), "{name}: {}", r.max_abs);
        let kinds: BTreeSet<&str> = r.records.iter().map(|x| x.kind.as_str()).collect();
        assert_eq!(kinds.len(), 2);
    }
}

#[test]
fn boundary_axioms_hold_on_an_open_patch() {
    let g = ground("vec_z2", HoneycombLattice::open_patch(4, 3).unwrap());
    let kinds = axiom_kinds(&g.lat);
    assert_eq!(kinds, vec![PartitionKind::A0Boundary, PartitionKind::A1Boundary]);
    let r = verify_axioms(&g.basis, &g.lat, &g.first(), &kinds, 1, 1e-8).unwrap();
    assert!(r.passed(), "{}", r.max_abs);
    assert!(r.to_csv().lines().count() > r.records.len());
}

#[test]
fn axioms_fail_for_a_generic_state() {
    let g = ground("vec_z2", HoneycombLattice::torus(3, 3).unwrap());
    let psi = random_state(&mut ChaCha8Rng::seed_from_u64(3), g.basis.len());
    let r = verify_axioms(&g.basis, &g.lat, &[(1.0, psi.as_slice())], &axiom_kinds(&g.lat), 1, 1e-8).unwrap();
    assert!(!r.passed());
    assert!(r.max_abs > 0.1, "{}", r.max_abs);
}

#[test]
fn axioms_are_trivial_on_a_product_state() {
    // A single loop configuration has zero entropy on every region.
    let g = ground("vec_z2", HoneycombLattice::torus(3, 3).unwrap());
    let mut e0 = vec![C64::default(); g.basis.len()];
    e0[0] = C64::new(1.0, 0.0);
    let r = verify_axioms(&g.basis, &g.lat, &[(1.0, e0.as_slice())], &axiom_kinds(&g.lat), 1, 1e-12).unwrap();
    assert!(r.max_abs < 1e-12);
}

#[test]
fn small_torus_has_no_width_one_placement() {
    let g = ground("vec_z2", HoneycombLattice::torus(2, 3).unwrap());
    let err = verify_axioms(&g.basis, &g.lat, &g.first(), &axiom_kinds(&g.lat), 1, 1e-8).unwrap_err();
    assert!(matches!(err, Error::Geometry(_)));
}

#[test]
fn area_law_for_z2_and_fibonacci() {
    let phi = golden();
    for (name, gamma) in [("vec_z2", LN_2), ("fibonacci", (1.0 + phi * phi).ln())] {
        let g = ground(name, HoneycombLattice::torus(3, 3).unwrap());
        let disks = standard_disks(&g.lat, 0).unwrap();
        let sizes: Vec<usize> = disks.iter().map(|d| g.lat.boundary_size(d)).collect();
        assert_eq!(sizes, vec![3, 4, 5, 6]);
        let fit = area_law_fit(&g.basis, &g.lat, &g.first(), &disks).unwrap();
        assert!((fit.gamma - gamma).abs() < 1e-6, "{name}: γ = {}", fit.gamma);
        assert!(fit.residual < 1e-8, "{name}: residual {}", fit.residual);
        // γ = 2 ln D for the doubled theory.
        assert!((fit.gamma - 2.0 * g.cat.total_dim.ln()).abs() < 1e-6);
        for anchor in [5, 11, 17] {
            let other = area_law_fit(&g.basis, &g.lat, &g.first(), &standard_disks(&g.lat, anchor).unwrap()).unwrap();
            assert!((other.gamma - fit.gamma).abs() < 1e-6, "{name} anchor {anchor}");
        }
    }
}

#[test]
fn area_law_needs_two_boundary_sizes() {
    let g = ground("vec_z2", HoneycombLattice::torus(3, 3).unwrap());
    let one: BTreeSet<usize> = [0].into();
    assert!(area_law_fit(&g.basis, &g.lat, &g.first(), &[one.clone(), one]).is_err());
}

#[test]
fn z2_annulus_has_four_sectors() {
    let cat = builtin("vec_z2").unwrap();
    let lat = HoneycombLattice::torus(2, 4).unwrap();
    let d = information_convex_sectors(&cat, &lat, SectorGeometry::BulkStrip { row: 1 }, 1, 0, CAP).unwrap();
    assert_eq!(d.n_sectors(), 4);
    assert!(d.consistent);
    let diffs = sector_entropy_differences(&d).unwrap();
    assert!(diffs.iter().all(|x| x.abs() < 1e-8), "{diffs:?}");
}

#[test]
fn fibonacci_annulus_entropy_differences() {
    let cat = builtin("fibonacci").unwrap();
    let lat = HoneycombLattice::torus(2, 4).unwrap();
    let d = information_convex_sectors(&cat, &lat, SectorGeometry::BulkStrip { row: 1 }, 1, 0, CAP).unwrap();
    assert_eq!(d.n_sectors(), 4);
    let mut diffs = sector_entropy_differences(&d).unwrap();
    diffs.sort_by(f64::total_cmp);
    // 2 ln d for the doubled anyons (1,τ), (τ,1), (τ,τ).
    let l = golden().ln();
    let expect = [2.0 * l, 2.0 * l, 4.0 * l];
    for (x, y) in diffs.iter().zip(expect) {
        assert!((x - y).abs() < 1e-7, "{diffs:?}");
    }
}

#[test]
fn z2_half_annulus_has_two_sectors() {
    let cat = builtin("vec_z2").unwrap();
    let lat = HoneycombLattice::open_patch(5, 2).unwrap();
    let d = information_convex_sectors(&cat, &lat, SectorGeometry::BoundaryStrip { column: 2 }, 1, 0, CAP).unwrap();
    assert_eq!(d.n_sectors(), 2);
    assert!(d.consistent);
}

#[test]
fn disks_have_one_sector_for_every_builtin() {
    let lat = HoneycombLattice::torus(3, 3).unwrap();
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        let d =
            information_convex_sectors(&cat, &lat, SectorGeometry::Disk { vertex: 4, radius: 0 }, 1, 0, CAP).unwrap();
        assert_eq!(d.n_sectors(), 1, "{name}");
        assert_eq!(d.vacuum, Some(0));
    }
}

#[test]
fn strip_geometry_is_refused_on_the_wrong_topology() {
    let cat = builtin("vec_z2").unwrap();
    let open = HoneycombLattice::open_patch(4, 3).unwrap();
    assert!(information_convex_sectors(&cat, &open, SectorGeometry::BulkStrip { row: 1 }, 1, 0, CAP).is_err());
    let torus = HoneycombLattice::torus(3, 3).unwrap();
    assert!(information_convex_sectors(&cat, &torus, SectorGeometry::BoundaryStrip { column: 1 }, 1, 0, CAP).is_err());
}

#[test]
fn sector_count_is_stable_under_thickening() {
    let cat = builtin("vec_z2").unwrap();
    let lat = HoneycombLattice::torus(2, 6).unwrap();
    let c = sector_count_convergence(&cat, &lat, SectorGeometry::BulkStrip { row: 2 }, 1, 0, CAP).unwrap();
    assert!(c.converged, "{:?}", c.counts);
    assert_eq!(c.counts, [4, 4]);
}

#[test]
fn unthickened_strip_is_reported_as_not_converged() {
    // Without a plaquette layer around the row nothing ties the loop
    // configurations together, so the count changes on thickening.
    let cat = builtin("vec_z2").unwrap();
    let lat = HoneycombLattice::torus(2, 4).unwrap();
    let c = sector_count_convergence(&cat, &lat, SectorGeometry::BulkStrip { row: 1 }, 0, 0, CAP).unwrap();
    assert!(!c.converged);
    assert_eq!(c.counts[1], 4);
}

#[test]
fn annulus_count_is_translation_invariant() {
    let cat = builtin("vec_z2").unwrap();
    let lat = HoneycombLattice::torus(2, 4).unwrap();
    for row in 0..4 {
        let d = information_convex_sectors(&cat, &lat, SectorGeometry::BulkStrip { row }, 1, 0, CAP).unwrap();
        assert_eq!(d.n_sectors(), 4, "row {row}");
    }
}

#[test]
fn doubled_weights_sum_to_one() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        let w = doubled_weights(&cat);
        assert_eq!(w.len(), cat.rank() * cat.rank());
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let w = doubled_weights(&builtin("vec_z2").unwrap());
    assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
}

#[test]
fn markov_strip_merge_reproduces_the_global_state() {
    let g = ground("vec_z2", HoneycombLattice::torus(3, 4).unwrap());
    let demo = markov_strip_merge(&g.cat, &g.basis, &g.lat, &g.first(), 1, 1e-9).unwrap();
    assert!(demo.target_distance < 1e-9, "{}", demo.target_distance);
    assert!(demo.report.cmi_rho.abs() < 1e-9 && demo.report.cmi_lambda.abs() < 1e-9);
}

#[test]
fn annulus_closure_gives_quantum_dimension_weights() {
    let g = ground("vec_z2", HoneycombLattice::torus(3, 4).unwrap());
    let demo = annulus_closure_merge(&g.cat, &g.basis, &g.lat, &g.first(), 1, 1e-9, 0, CAP).unwrap();
    assert_eq!(demo.sector_weights.len(), 4);
    assert!(demo.weight_error < 1e-8, "{:?}", demo.sector_weights);
    assert!(demo.target_distance < 1e-8, "{}", demo.target_distance);
    for w in &demo.sector_weights {
        assert!((w - 0.25).abs() < 1e-8);
    }
}

#[test]
fn markov_strip_needs_a_long_row() {
    let g = ground("vec_z2", HoneycombLattice::torus(2, 2).unwrap());
    assert!(markov_strip_merge(&g.cat, &g.basis, &g.lat, &g.first(), 0, 1e-9).is_err());
}
