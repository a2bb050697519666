use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn snlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snlab")).args(args).env_remove("SNLAB_CACHE_DIR").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn report(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("not JSON ({e}): {}\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
    })
}

#[test]
fn validate_fibonacci_passes() {
    let o = snlab(&["category", "validate", "builtin:fibonacci"]);
    assert_eq!(code(&o), 0);
    let r = report(&o);
    assert_eq!(r["command"], "category-validate");
    assert_eq!(r["passed"], true);
    assert!(r["report"]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn show_ising_total_dimension() {
    let o = snlab(&["category", "show", "builtin:ising"]);
    assert_eq!(code(&o), 0);
    let r = report(&o);
    assert!((r["report"]["total_dimension"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(r["report"]["rank"], 3);
    assert_eq!(r["report"]["frobenius_schur"], serde_json::json!([1, 1, 1]));
}

#[test]
fn corrupt_category_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    let o = snlab(&["category", "validate", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn convert_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fib.json");
    let o = snlab(&["category", "convert", "builtin:fibonacci", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = snlab(&["category", "validate", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = snlab(&["--category", path.to_str().unwrap(), "gs"]);
    assert_eq!(report(&o)["report"]["degeneracy"], 4);
}

#[test]
fn validation_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("fib.json");
    assert_eq!(code(&snlab(&["category", "convert", "builtin:fibonacci", good.to_str().unwrap()])), 0);
    // Rescale every F entry: the pentagon then fails.
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&good).unwrap()).unwrap();
    let text = serde_json::to_string(&v).unwrap();
    assert!(text.contains("\"F\""), "unexpected category file layout");
    scale_numbers(&mut v["F"], 2.0);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    let o = snlab(&["category", "validate", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&o)["passed"], false);
}

fn scale_numbers(v: &mut Value, k: f64) {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                if !n.is_u64() {
                    *v = serde_json::json!(x * k);
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(|x| scale_numbers(x, k)),
        Value::Object(o) => o.values_mut().for_each(|x| scale_numbers(x, k)),
        _ => {}
    }
}

#[test]
fn ground_space_degeneracies() {
    for (args, gsd) in
        [(vec!["gs"], 4), (vec!["--category", "builtin:fibonacci", "gs"], 4), (vec!["--topology", "open", "gs"], 1)]
    {
        let o = snlab(&args);
        assert_eq!(code(&o), 0, "{args:?}");
        let r = report(&o);
        assert_eq!(r["report"]["degeneracy"], gsd, "{args:?}");
        assert!(r["report"]["max_residual"].as_f64().unwrap() < 1e-9);
        assert_eq!(r["config"]["tol_alg"], 1e-9);
    }
}

#[test]
fn ground_states_are_written_as_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = snlab(&["--out", dir.path().to_str().unwrap(), "gs"]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("gs.json")).unwrap()).unwrap();
    let files = r["report"]["state_files"].as_array().unwrap();
    assert_eq!(files.len(), 4);
    for f in files {
        let bytes = std::fs::read(dir.path().join(f.as_str().unwrap())).unwrap();
        let dim = r["report"]["dimension"].as_u64().unwrap() as usize;
        assert_eq!(bytes.len(), 24 + 16 * dim);
    }
}

#[test]
fn basis_cap_exits_three() {
    let o = snlab(&["--lx", "3", "--ly", "3", "--basis-cap", "100", "gs"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(code(&snlab(&["frobnicate"])), 1);
    assert_eq!(code(&snlab(&["--tol-alg", "-1", "gs"])), 1);
    assert_eq!(code(&snlab(&["--threads", "0", "gs"])), 1);
    assert_eq!(code(&snlab(&["--category", "builtin:nope", "gs"])), 1);
    assert_eq!(code(&snlab(&["--help"])), 0);
}

#[test]
fn check_ops_passes_for_z2() {
    let o = snlab(&["check", "ops"]);
    assert_eq!(code(&o), 0);
    assert_eq!(report(&o)["passed"], true);
}

#[test]
fn check_ops_csv_table() {
    let o = snlab(&["--format", "csv", "check", "ops"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    assert!(rows.headers().unwrap().iter().any(|h| h == "check"));
    assert!(rows.records().count() > 3);
}

#[test]
fn check_tee_fibonacci() {
    let o = snlab(&["--category", "builtin:fibonacci", "--lx", "3", "--ly", "3", "check", "tee"]);
    assert_eq!(code(&o), 0);
    let gamma = report(&o)["report"]["fit"]["gamma"].as_f64().unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((gamma - (1.0 + phi * phi).ln()).abs() < 1e-7, "{gamma}");
}

#[test]
fn check_convex_annulus_z2() {
    let o = snlab(&["--ly", "4", "check", "convex", "--region", "annulus", "--expect", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = snlab(&["--ly", "4", "check", "convex", "--region", "annulus", "--expect", "3"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn check_ltqo_and_merges() {
    let o = snlab(&["--lx", "4", "--ly", "4", "check", "ltqo", "--plaquettes", "5"]);
    assert_eq!(code(&o), 0);
    for kind in ["markov-strip", "annulus-closure"] {
        let o = snlab(&["--lx", "3", "--ly", "4", "check", "merge-demo", "--kind", kind]);
        assert_eq!(code(&o), 0, "{kind}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn check_axioms_reports_failure_on_small_torus() {
    // The 2×3 torus admits no width-1 placement; that is a geometry error.
    let o = snlab(&["--ly", "3", "check", "axioms"]);
    assert_eq!(code(&o), 1);
    let o = snlab(&["--lx", "3", "--ly", "3", "--format", "csv", "check", "axioms"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().lines().count() > 1);
}

#[test]
fn lattice_dump_counts() {
    let r = report(&snlab(&["--lx", "3", "--ly", "2", "lattice"]));
    assert_eq!(r["report"]["vertices"].as_array().unwrap().len(), 12);
    assert_eq!(r["report"]["edges"].as_array().unwrap().len(), 18);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["--category", "builtin:fibonacci", "--seed", "5", "gs"];
    let a = snlab(&args);
    let b = snlab(&args);
    assert_eq!(a.stdout, b.stdout);
    let mut seq = args.to_vec();
    seq.insert(0, "1");
    seq.insert(0, "--threads");
    assert_eq!(snlab(&seq).stdout, a.stdout);
}

fn cache_files(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("gs-"))
        .count()
}

#[test]
fn ground_space_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_snlab"))
            .args(["--category", "builtin:fibonacci", "gs"])
            .env("SNLAB_CACHE_DIR", dir.path())
            .output()
            .unwrap()
    };
    let first = run();
    assert_eq!(cache_files(dir.path()), 1);
    let second = run();
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(cache_files(dir.path()), 1);
    // A damaged cache entry is ignored and rewritten.
    let entry = std::fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    std::fs::write(&entry, b"garbage").unwrap();
    let third = run();
    assert_eq!(code(&third), 0);
    assert_eq!(first.stdout, third.stdout);
}
