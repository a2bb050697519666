use std::time::Instant;

use nalgebra::DMatrix;
use proptest::prelude::*;
use snlab::fusion_category::{
    builtin, check_pentagon, check_unitarity, compute_quantum_dimensions, frobenius_schur, from_json, gauge_transform,
    resolve, to_json, validate_all, validate_fusion_ring, FusionCategory, VertexGauge, BUILTINS,
};
use snlab::{Error, C64};

fn phi() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `[F^{abc}_d]_{e,f}` for multiplicity-free data.
fn fm(cat: &FusionCategory, a: usize, b: usize, cc: usize, d: usize, e: usize, f: usize) -> C64 {
    cat.f(a, b, cc, d, (e, 0, 0), (f, 0, 0))
}

/// Worst pentagon residual of a multiplicity-free category, summed directly
/// over the two paths between `(((ab)_f c)_g d)_e` and `(a(b(cd)_l)_k)_e`.
fn pentagon_oracle(cat: &FusionCategory) -> f64 {
    let r = cat.rank();
    let adm = |x: usize, y: usize, z: usize| cat.n(x, y, z) > 0;
    let mut worst: f64 = 0.0;
    for a in 0..r {
        for b in 0..r {
            for cc in 0..r {
                for d in 0..r {
                    for e in 0..r {
                        for f in (0..r).filter(|&f| adm(a, b, f)) {
                            for g in (0..r).filter(|&g| adm(f, cc, g) && adm(g, d, e)) {
                                for l in (0..r).filter(|&l| adm(cc, d, l)) {
                                    for k in (0..r).filter(|&k| adm(b, l, k) && adm(a, k, e)) {
                                        let lhs = fm(cat, f, cc, d, e, g, l) * fm(cat, a, b, l, e, f, k);
                                        let rhs: C64 = (0..r)
                                            .map(|h| {
                                                fm(cat, a, b, cc, g, f, h)
                                                    * fm(cat, a, h, d, e, g, k)
                                                    * fm(cat, b, cc, d, k, h, l)
                                            })
                                            .sum();
                                        worst = worst.max((lhs - rhs).norm());
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    worst
}

fn flipped_fibonacci() -> FusionCategory {
    let mut fib = builtin("fibonacci").unwrap();
    fib.set_f_entry((1, 1, 1, 1), (1, 0, 0), (1, 0, 0), c(1.0 / phi())).unwrap();
    fib
}

#[test]
fn every_builtin_passes_every_validator() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        for rep in validate_all(&cat, 1e-9).unwrap() {
            assert!(rep.passed, "{name}: {} failed: {:?}", rep.check, rep.violations);
        }
    }
}

#[test]
fn pentagon_residuals_agree_with_direct_evaluation() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        assert!(cat.is_multiplicity_free());
        let ours = check_pentagon(&cat, 1e-9).unwrap();
        let oracle = pentagon_oracle(&cat);
        assert!(ours.passed && ours.max_residual < 1e-9, "{name}: {}", ours.max_residual);
        assert!(oracle < 1e-9, "{name}: direct pentagon residual {oracle}");
    }
}

#[test]
fn flipped_fibonacci_entry_fails_the_pentagon() {
    let bad = flipped_fibonacci();
    let rep = check_pentagon(&bad, 1e-9).unwrap();
    assert!(!rep.passed);
    assert!(rep.max_residual >= 0.1, "residual {}", rep.max_residual);
    assert!(pentagon_oracle(&bad) >= 0.1);
}

#[test]
fn pentagon_suite_is_fast() {
    let start = Instant::now();
    for name in BUILTINS {
        check_pentagon(&builtin(name).unwrap(), 1e-9).unwrap();
    }
    check_pentagon(&flipped_fibonacci(), 1e-9).unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0, "took {:?}", start.elapsed());
}

#[test]
fn fibonacci_f_matrix_has_the_standard_form() {
    let fib = builtin("fibonacci").unwrap();
    let p = phi();
    let expect = [[1.0 / p, 1.0 / p.sqrt()], [1.0 / p.sqrt(), -1.0 / p]];
    for e in 0..2 {
        for f in 0..2 {
            assert!((fm(&fib, 1, 1, 1, 1, e, f) - c(expect[e][f])).norm() < 1e-12);
        }
    }
}

#[test]
fn ising_sigma_block_is_a_hadamard() {
    let ising = builtin("ising").unwrap();
    let s = 1.0 / 2f64.sqrt();
    let expect = [[s, s], [s, -s]];
    // Rows and columns are the channels 1 and ψ of σ ⊗ σ.
    let ch = [0, 2];
    for i in 0..2 {
        for j in 0..2 {
            assert!((fm(&ising, 1, 1, 1, 1, ch[i], ch[j]) - c(expect[i][j])).norm() < 1e-12);
        }
    }
}

#[test]
fn scaling_an_f_block_breaks_unitarity() {
    let mut ising = builtin("ising").unwrap();
    let blk = ising.f_block(1, 1, 1, 1).unwrap().mat.clone() * c(2.0);
    ising.set_f_block((1, 1, 1, 1), blk).unwrap();
    let rep = check_unitarity(&ising, 1e-9).unwrap();
    assert!(!rep.passed);
    assert!((rep.max_residual - 3.0).abs() < 1e-9, "‖U†U − I‖ = {}", rep.max_residual);
}

#[test]
fn quantum_dimensions_match_known_values() {
    let p = phi();
    let z2 = builtin("vec_z2").unwrap();
    assert_eq!(z2.qdim, vec![1.0, 1.0]);
    assert!((z2.total_dim - 2f64.sqrt()).abs() < 1e-14);
    let fib = builtin("fibonacci").unwrap();
    assert!((fib.d(1) - 1.618_033_988_7).abs() < 1e-10);
    assert!((fib.d(1) - p).abs() < 1e-13);
    let ising = builtin("ising").unwrap();
    assert!((ising.d(1) - 2f64.sqrt()).abs() < 1e-13);
    assert!((ising.d(2) - 1.0).abs() < 1e-13);
    assert!((ising.total_dim - 2.0).abs() < 1e-13);
}

#[test]
fn quantum_dimensions_are_fusion_characters() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        let r = cat.rank();
        for a in 0..r {
            assert_eq!(cat.dual[cat.dual[a]], a);
            assert_eq!(cat.d(a), cat.d(cat.dual[a]));
            for b in 0..r {
                let rhs: f64 = (0..r).map(|x| cat.n(a, b, x) as f64 * cat.d(x)).sum();
                assert!((cat.d(a) * cat.d(b) - rhs).abs() < 1e-12, "{name}: d_{a} d_{b}");
            }
        }
        let d2: f64 = cat.qdim.iter().map(|d| d * d).sum();
        assert!((cat.total_dim - d2.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn perron_frobenius_on_the_fibonacci_ring() {
    // N[a][b][c] flattened, τ ⊗ τ = 1 ⊕ τ.
    let fusion = [1, 0, 0, 1, 0, 1, 1, 1];
    let (d, total) = compute_quantum_dimensions(2, &fusion).unwrap();
    assert!((d[1] - phi()).abs() < 1e-13);
    assert!((total - (1.0 + phi() * phi()).sqrt()).abs() < 1e-13);
}

#[test]
fn frobenius_schur_indicators() {
    assert_eq!(frobenius_schur(&builtin("vec_z2").unwrap(), 1, 1e-9).unwrap(), 1);
    assert_eq!(frobenius_schur(&builtin("semion").unwrap(), 1, 1e-9).unwrap(), -1);
    assert_eq!(frobenius_schur(&builtin("fibonacci").unwrap(), 1, 1e-9).unwrap(), 1);
    let ising = builtin("ising").unwrap();
    assert_eq!(ising.kappa, vec![1, 1, 1]);
}

#[test]
fn vacuum_leg_blocks_are_identities() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        for (&(a, b, cc, _), blk) in cat.f_blocks() {
            if a == 0 || b == 0 || cc == 0 {
                let n = blk.mat.nrows();
                let id = DMatrix::<C64>::identity(n, n);
                assert!((&blk.mat - id).camax() < 1e-14, "{name}");
            }
        }
    }
}

#[test]
fn unknown_builtin_is_an_error() {
    assert!(matches!(builtin("bogus"), Err(Error::UnknownBuiltin(_))));
    assert!(matches!(resolve("builtin:bogus", false), Err(Error::UnknownBuiltin(_))));
}

#[test]
fn resolve_accepts_prefixed_and_bare_names() {
    assert_eq!(resolve("builtin:ising", false).unwrap().rank(), 3);
    assert_eq!(resolve("fibonacci", false).unwrap().rank(), 2);
}

#[test]
fn json_round_trip_is_exact() {
    for name in BUILTINS {
        let cat = builtin(name).unwrap();
        let back = from_json(&to_json(&cat).unwrap(), false, 1e-9).unwrap();
        assert_eq!(back.labels, cat.labels);
        assert_eq!(back.dual, cat.dual);
        assert_eq!(back.qdim, cat.qdim);
        assert_eq!(back.kappa, cat.kappa);
        for (key, blk) in cat.f_blocks() {
            let other = back.f_block(key.0, key.1, key.2, key.3).unwrap();
            assert_eq!(blk, other, "{name} {key:?}");
        }
    }
}

#[test]
fn save_and_load_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fib.json");
    let fib = builtin("fibonacci").unwrap();
    snlab::fusion_category::save_category(&fib, &path).unwrap();
    let back = snlab::fusion_category::load_category(&path, false).unwrap();
    assert!(validate_all(&back, 1e-9).unwrap().iter().all(|r| r.passed));
}

fn fib_file() -> serde_json::Value {
    serde_json::from_str(&to_json(&builtin("fibonacci").unwrap()).unwrap()).unwrap()
}

#[test]
fn rational_entries_are_evaluated_at_load() {
    let mut v: serde_json::Value = serde_json::from_str(&to_json(&builtin("vec_z2").unwrap()).unwrap()).unwrap();
    for rec in v["F"].as_array_mut().unwrap() {
        rec["re"] = serde_json::json!("2/2");
        rec["im"] = serde_json::json!("0/5");
    }
    let cat = from_json(&v.to_string(), false, 1e-9).unwrap();
    assert!(check_pentagon(&cat, 1e-12).unwrap().passed);
}

#[test]
fn missing_qdim_is_recomputed() {
    let mut v = fib_file();
    v.as_object_mut().unwrap().remove("qdim");
    let cat = from_json(&v.to_string(), false, 1e-9).unwrap();
    assert!((cat.d(1) - phi()).abs() < 1e-13);
}

#[test]
fn non_involutive_dual_is_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(&to_json(&builtin("vec_z3").unwrap()).unwrap()).unwrap();
    v["dual"] = serde_json::json!([0, 1, 1]);
    assert!(from_json(&v.to_string(), false, 1e-9).is_err());
}

#[test]
fn invalid_f_data_needs_force() {
    let text = to_json(&flipped_fibonacci()).unwrap();
    assert!(matches!(from_json(&text, false, 1e-9), Err(Error::Validation(_))));
    let forced = from_json(&text, true, 1e-9).unwrap();
    assert!(!check_pentagon(&forced, 1e-9).unwrap().passed);
}

#[test]
fn corrupt_text_is_a_parse_error() {
    assert!(matches!(from_json("{not json", false, 1e-9), Err(Error::Parse(_))));
}

#[test]
fn broken_unit_law_is_reported() {
    let mut v = fib_file();
    // Drop 1 ⊗ τ → τ.
    let fusion = v["fusion"].as_array_mut().unwrap();
    fusion.retain(|r| r != &serde_json::json!([0, 1, 1, 1]));
    let forced = from_json(&v.to_string(), true, 1e-9);
    match forced {
        Ok(cat) => assert!(!validate_fusion_ring(&cat).unwrap().passed),
        Err(e) => assert!(matches!(e, Error::Structure(_) | Error::Validation(_)), "{e}"),
    }
    assert!(from_json(&v.to_string(), false, 1e-9).is_err());
}

#[test]
fn identity_gauge_changes_nothing() {
    let fib = builtin("fibonacci").unwrap();
    let same = gauge_transform(&fib, &VertexGauge::new()).unwrap();
    for (key, blk) in fib.f_blocks() {
        assert_eq!(blk, same.f_block(key.0, key.1, key.2, key.3).unwrap());
    }
}

#[test]
fn fibonacci_sign_gauge_on_the_vacuum_channel_flips_off_diagonal_entries() {
    let fib = builtin("fibonacci").unwrap();
    let mut u = VertexGauge::new();
    u.insert((1, 1, 0), DMatrix::from_element(1, 1, c(-1.0)));
    let g = gauge_transform(&fib, &u).unwrap();
    for (e, f) in [(0, 1), (1, 0)] {
        assert!((fm(&g, 1, 1, 1, 1, e, f) + fm(&fib, 1, 1, 1, 1, e, f)).norm() < 1e-14);
    }
    for e in 0..2 {
        assert!((fm(&g, 1, 1, 1, 1, e, e) - fm(&fib, 1, 1, 1, 1, e, e)).norm() < 1e-14);
    }
    assert!(check_pentagon(&g, 1e-9).unwrap().passed);
    assert_eq!(g.kappa, fib.kappa);
}

#[test]
fn fibonacci_sign_gauge_on_the_tau_channel_leaves_the_tau_block_alone() {
    // The phase of u^{ττ}_τ enters F^{τττ}_τ squared in every entry.
    let fib = builtin("fibonacci").unwrap();
    let mut u = VertexGauge::new();
    u.insert((1, 1, 1), DMatrix::from_element(1, 1, c(-1.0)));
    let g = gauge_transform(&fib, &u).unwrap();
    let a = &fib.f_block(1, 1, 1, 1).unwrap().mat;
    let b = &g.f_block(1, 1, 1, 1).unwrap().mat;
    assert!((a - b).camax() < 1e-14);
    assert!(check_pentagon(&g, 1e-9).unwrap().passed);
}

#[test]
fn vec_z2_phase_gauge_cancels_in_the_pentagon() {
    let z2 = builtin("vec_z2").unwrap();
    let mut u = VertexGauge::new();
    u.insert((1, 1, 0), DMatrix::from_element(1, 1, C64::from_polar(1.0, 0.7)));
    let g = gauge_transform(&z2, &u).unwrap();
    assert!(check_pentagon(&g, 1e-12).unwrap().passed);
    assert!(pentagon_oracle(&g) < 1e-12);
}

#[test]
fn gauge_on_a_vacuum_vertex_is_refused() {
    let z2 = builtin("vec_z2").unwrap();
    let mut u = VertexGauge::new();
    u.insert((0, 1, 1), DMatrix::from_element(1, 1, C64::from_polar(1.0, 0.3)));
    assert!(matches!(gauge_transform(&z2, &u), Err(Error::Gauge(_))));
}

fn random_gauge(cat: &FusionCategory, phases: &[f64]) -> VertexGauge {
    let r = cat.rank();
    let mut u = VertexGauge::new();
    let mut k = 0;
    for a in 1..r {
        for b in 1..r {
            for x in 0..r {
                if cat.n(a, b, x) > 0 {
                    u.insert((a, b, x), DMatrix::from_element(1, 1, C64::from_polar(1.0, phases[k % phases.len()])));
                    k += 1;
                }
            }
        }
    }
    u
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gauge_preserves_invariants(
        which in 0usize..BUILTINS.len(),
        phases in prop::collection::vec(0.0..std::f64::consts::TAU, 1..12),
    ) {
        let cat = builtin(BUILTINS[which]).unwrap();
        let g = gauge_transform(&cat, &random_gauge(&cat, &phases)).unwrap();
        prop_assert_eq!(&g.qdim, &cat.qdim);
        prop_assert_eq!(&g.kappa, &cat.kappa);
        let r = cat.rank();
        for a in 0..r { for b in 0..r { for x in 0..r {
            prop_assert_eq!(g.n(a, b, x), cat.n(a, b, x));
        }}}
        let rep = check_pentagon(&g, 1e-9).unwrap();
        prop_assert!(rep.max_residual < 1e-9, "{}", rep.max_residual);
        prop_assert!(check_unitarity(&g, 1e-9).unwrap().passed);
    }

    #[test]
    fn perturbing_any_entry_is_detected(which in 0usize..BUILTINS.len(), pick in any::<prop::sample::Index>(), delta in 0.05f64..0.5) {
        let mut cat = builtin(BUILTINS[which]).unwrap();
        let keys: Vec<_> = cat.f_blocks().map(|(k, b)| (*k, b.rows[0], b.cols[0], b.mat[(0, 0)])).collect();
        let (key, row, col, z) = keys[pick.index(keys.len())];
        cat.set_f_entry(key, row, col, z + c(delta)).unwrap();
        let failed = validate_all(&cat, 1e-9).unwrap().iter().any(|r| !r.passed);
        prop_assert!(failed);
    }
}
