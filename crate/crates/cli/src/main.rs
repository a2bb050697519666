//! `snlab`: string-net ground spaces and entanglement-bootstrap checks from
//! the command line.
//!
//! Exit codes: 0 when every check passes, 1 on I/O, parse or usage errors,
//! 2 when a check fails (reports are still written) and 3 when a basis
//! exceeds `--basis-cap`.

mod cache;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use snlab::eb_axioms::{
    annulus_closure_merge, area_law_fit, axiom_kinds, information_convex_sectors, markov_strip_merge,
    sector_count_convergence, sector_entropy_differences, standard_disks, verify_axioms, SectorGeometry,
};
use snlab::fusion_category::{resolve, save_category, validate_all, FusionCategory};
use snlab::hamiltonian::{
    check_ltqo, dot, ground_space, max_commutator, norm, random_state, verify_plaquette_algebra, CheckRecord,
    GroundMethod, StringNetModel, DENSE_LIMIT,
};
use snlab::lattice::{HoneycombLattice, SpaceSpec, StringNetBasis};
use snlab::{par, Error, C64};

use crate::cache::GroundCache;
use crate::output::{write_file, Report};

#[derive(Parser, Debug)]
#[command(name = "snlab", version, about = "String-net ground spaces and entanglement-bootstrap checks")]
struct Cli {
    #[command(flatten)]
    cfg: RunConfig,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Everything except the output
/// location and thread count is echoed into reports.
#[derive(Args, Debug, Clone, Serialize)]
pub struct RunConfig {
    /// Category source: `builtin:NAME`, a builtin name, or a JSON file.
    #[arg(long, global = true, default_value = "builtin:vec_z2")]
    category: String,
    #[arg(long, global = true, default_value_t = 2)]
    lx: usize,
    #[arg(long, global = true, default_value_t = 2)]
    ly: usize,
    #[arg(long, global = true, value_enum, default_value_t = TopologyArg::Torus)]
    topology: TopologyArg,
    /// Tolerance for algebraic and operator checks.
    #[arg(long = "tol-alg", global = true, default_value_t = 1e-9, value_parser = positive)]
    tol_alg: f64,
    /// Tolerance for entropy checks.
    #[arg(long = "tol-ent", global = true, default_value_t = 1e-7, value_parser = positive)]
    tol_ent: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory; reports go to stdout when absent.
    #[arg(long, global = true)]
    #[serde(skip)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads for the library's data-parallel loops (1 runs them
    /// sequentially).
    #[arg(long, global = true)]
    #[serde(skip)]
    threads: Option<usize>,
    /// Largest basis size to enumerate.
    #[arg(long = "basis-cap", global = true, default_value_t = 4e6, value_parser = positive)]
    basis_cap: f64,
    /// Load category files even when they fail validation.
    #[arg(long, global = true)]
    force: bool,
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(_) => Err("must be a positive number".into()),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TopologyArg {
    Torus,
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate, inspect or convert a fusion category.
    Category {
        #[command(subcommand)]
        action: CategoryAction,
    },
    /// Ground space of the string-net Hamiltonian: summary report plus one
    /// binary state file per ground vector in the output directory.
    Gs,
    /// Vertex, edge and plaquette ids and incidence of the configured lattice.
    Lattice,
    /// Operator, entanglement and merging checks.
    Check {
        #[command(subcommand)]
        check: CheckCommand,
    },
}

#[derive(Subcommand, Debug)]
enum CategoryAction {
    /// Run every validator (files are loaded without validation first).
    Validate { source: Option<String> },
    /// Rank, quantum dimensions, total dimension and Frobenius-Schur indicators.
    Show { source: Option<String> },
    /// Rewrite a category as canonical JSON.
    Convert { source: String, dest: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RegionArg {
    Annulus,
    HalfAnnulus,
    Disk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MergeKind {
    MarkovStrip,
    AnnulusClosure,
}

#[derive(Subcommand, Debug)]
enum CheckCommand {
    /// Plaquette algebra, projector, Hermiticity and commutation checks.
    Ops,
    /// Local topological order on a region given as plaquette ids.
    Ltqo {
        #[arg(long, value_delimiter = ',', default_value = "0")]
        plaquettes: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        ell: usize,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// A0/A1 on every placement of the given width (boundary versions on
    /// open patches).
    Axioms {
        #[arg(long, default_value_t = 1)]
        width: usize,
    },
    /// Area-law fit of disk entropies and the topological entanglement entropy.
    Tee {
        /// Vertex the disks grow from.
        #[arg(long, default_value_t = 0)]
        vertex: usize,
    },
    /// Orthogonal extreme points of an information convex set.
    Convex {
        #[arg(long, value_enum, default_value_t = RegionArg::Annulus)]
        region: RegionArg,
        /// Torus row of the annulus.
        #[arg(long, default_value_t = 1)]
        row: usize,
        /// Plaquette column of the half-annulus.
        #[arg(long, default_value_t = 2)]
        column: usize,
        /// Center of the disk.
        #[arg(long, default_value_t = 0)]
        vertex: usize,
        #[arg(long, default_value_t = 0)]
        radius: usize,
        #[arg(long, default_value_t = 1)]
        thickening: usize,
        /// Fail unless exactly this many sectors are found.
        #[arg(long)]
        expect: Option<usize>,
        /// Also count sectors at the next thickening and require agreement.
        #[arg(long)]
        convergence: bool,
    },
    /// Petz-map merging of reduced ground states along a torus row.
    MergeDemo {
        #[arg(long, value_enum, default_value_t = MergeKind::MarkovStrip)]
        kind: MergeKind,
        #[arg(long, default_value_t = 1)]
        row: usize,
    },
}

/// Everything a lattice-level command needs.
struct Setup {
    cat: FusionCategory,
    lat: HoneycombLattice,
}

impl Setup {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let cat = resolve(&cfg.category, cfg.force).with_context(|| format!("loading category {}", cfg.category))?;
        let lat = match cfg.topology {
            TopologyArg::Torus => HoneycombLattice::torus(cfg.lx, cfg.ly)?,
            TopologyArg::Open => HoneycombLattice::open_patch(cfg.lx, cfg.ly)?,
        };
        Ok(Setup { cat, lat })
    }

    fn basis(&self, cfg: &RunConfig) -> Result<StringNetBasis> {
        Ok(StringNetBasis::enumerate(&self.cat, &self.lat, &SpaceSpec::whole(&self.lat), cfg.basis_cap)?)
    }

    fn lattice_tag(&self, cfg: &RunConfig) -> String {
        format!("{:?}:{}x{}", cfg.topology, cfg.lx, cfg.ly)
    }

    /// Orthonormal ground vectors, memoized under `SNLAB_CACHE_DIR`.
    fn ground(&self, cfg: &RunConfig, model: &StringNetModel) -> Result<Vec<Vec<C64>>> {
        let cache = GroundCache::open(&self.cat, model.basis, &self.lattice_tag(cfg), cfg.seed);
        if let Some(v) = cache.as_ref().and_then(|c| c.load(model.basis)) {
            return Ok(v);
        }
        let vecs = ground_space(model, GroundMethod::ProjectorProduct, cfg.seed)?;
        if let Some(c) = cache {
            c.store(model.basis, &vecs);
        }
        Ok(vecs)
    }
}

/// The first ground vector as a pure-state ensemble. Every region the
/// entropy checks use is a disk or an open arc, on which all ground states
/// have the same reduction, so one vector stands for the whole ground space.
fn first_ground(vecs: &[Vec<C64>]) -> Vec<(f64, &[C64])> {
    vec![(1.0, vecs[0].as_slice())]
}

fn require_ground(vecs: &[Vec<C64>]) -> Result<()> {
    if vecs.is_empty() {
        return Err(Error::Convergence("the Hamiltonian has no ground states on this lattice".into()).into());
    }
    Ok(())
}

fn category_cmd(cfg: &RunConfig, action: &CategoryAction) -> Result<Report> {
    let source = |s: &Option<String>| s.clone().unwrap_or_else(|| cfg.category.clone());
    match action {
        CategoryAction::Validate { source: s } => {
            let src = source(s);
            let cat = resolve(&src, true).with_context(|| format!("loading category {src}"))?;
            let reports = validate_all(&cat, cfg.tol_alg)?;
            let passed = reports.iter().all(|r| r.passed);
            Ok(Report::new("category-validate", passed, json!({ "category": cat.name, "checks": reports })))
        }
        CategoryAction::Show { source: s } => {
            let src = source(s);
            let cat = resolve(&src, cfg.force).with_context(|| format!("loading category {src}"))?;
            let body = json!({
                "name": cat.name,
                "rank": cat.rank(),
                "labels": cat.labels,
                "dual": cat.dual,
                "quantum_dimensions": cat.qdim,
                "total_dimension": cat.total_dim,
                "frobenius_schur": cat.kappa,
                "multiplicity_free": cat.is_multiplicity_free(),
            });
            Ok(Report::new("category-show", true, body))
        }
        CategoryAction::Convert { source: src, dest } => {
            let cat = resolve(src, cfg.force).with_context(|| format!("loading category {src}"))?;
            save_category(&cat, dest).with_context(|| format!("writing {}", dest.display()))?;
            Ok(Report::new("category-convert", true, json!({ "category": cat.name, "written": dest })))
        }
    }
}

fn gs_cmd(cfg: &RunConfig) -> Result<Report> {
    let s = Setup::new(cfg)?;
    let basis = s.basis(cfg)?;
    let model = StringNetModel::new(&s.cat, &s.lat, &basis)?;
    let vecs = s.ground(cfg, &model)?;
    let energy = model.frustration_free_energy();
    // Every configuration obeys the branching rule, so the vertex terms are
    // satisfied identically; a ground vector must be fixed by each B_p.
    let residuals: Vec<f64> = par::map_slice(&vecs, |v| {
        model
            .plaquette_ids()
            .into_iter()
            .map(|p| {
                let bv = model.apply_projector(p, v).unwrap_or_default();
                norm(&bv.iter().zip(v).map(|(a, b)| a - b).collect::<Vec<_>>())
            })
            .fold(0.0, f64::max)
    });
    let mut ortho: f64 = 0.0;
    for i in 0..vecs.len() {
        for j in 0..vecs.len() {
            let target = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((dot(&vecs[i], &vecs[j]) - target).norm());
        }
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let passed = !vecs.is_empty() && max_residual < cfg.tol_alg && ortho < cfg.tol_alg;
    let mut files = Vec::new();
    if let Some(dir) = &cfg.out {
        for (i, v) in vecs.iter().enumerate() {
            let name = format!("state_{i}.bin");
            write_file(&dir.join(&name), &snlab::hamiltonian::encode_state(&basis, v))?;
            files.push(name);
        }
    }
    let body = json!({
        "dimension": basis.len(),
        "fingerprint": format!("{:016x}", basis.fingerprint()),
        "vertices": s.lat.n_vertices(),
        "edges": s.lat.n_edges(),
        "plaquettes": s.lat.n_plaquettes(),
        "degeneracy": vecs.len(),
        "energies": vec![energy; vecs.len()],
        "plaquette_residuals": residuals,
        "max_residual": max_residual,
        "orthonormality_defect": ortho,
        "tolerance": cfg.tol_alg,
        "state_files": files,
    });
    Ok(Report::new("gs", passed, body))
}

/// Largest `‖[B_p, B_q] ψ‖` over random probes and plaquette pairs.
fn probe_commutator(model: &StringNetModel, seed: u64) -> Result<f64> {
    let ids = model.plaquette_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let psi = random_state(&mut rng, model.dim());
        let single: Vec<Vec<C64>> =
            ids.iter().map(|&p| model.apply_projector(p, &psi)).collect::<snlab::Result<_>>()?;
        for (i, &p) in ids.iter().enumerate() {
            for (j, &q) in ids.iter().enumerate().skip(i + 1) {
                let pq = model.apply_projector(p, &single[j])?;
                let qp = model.apply_projector(q, &single[i])?;
                worst = worst.max(norm(&pq.iter().zip(&qp).map(|(a, b)| a - b).collect::<Vec<_>>()));
            }
        }
    }
    Ok(worst)
}

fn ops_cmd(cfg: &RunConfig) -> Result<Report> {
    let s = Setup::new(cfg)?;
    let basis = s.basis(cfg)?;
    let model = StringNetModel::new(&s.cat, &s.lat, &basis)?;
    let mut records = Vec::new();
    for p in model.plaquette_ids() {
        for r in verify_plaquette_algebra(&model, p, cfg.tol_alg)? {
            records.push(CheckRecord { check: format!("plaquette {p}: {}", r.check), ..r });
        }
    }
    let comm = if basis.len() <= DENSE_LIMIT { max_commutator(&model)? } else { probe_commutator(&model, cfg.seed)? };
    records.push(CheckRecord::new("commutation", comm, cfg.tol_alg));
    let herm = model.hamiltonian()?.hermiticity_defect();
    records.push(CheckRecord::new("hamiltonian hermiticity", herm, cfg.tol_alg));
    let passed = records.iter().all(|r| r.passed);
    let mut table = String::from("check,passed,max_residual,tolerance\n");
    for r in &records {
        table.push_str(&format!("{},{},{:e},{:e}\n", r.check, r.passed, r.max_residual, r.tolerance));
    }
    let body = json!({ "dimension": basis.len(), "records": records });
    Ok(Report::new("ops", passed, body).with_table(table))
}

fn check_cmd(cfg: &RunConfig, check: &CheckCommand) -> Result<Report> {
    match check {
        CheckCommand::Ops => ops_cmd(cfg),
        CheckCommand::Ltqo { plaquettes, ell, samples } => {
            let s = Setup::new(cfg)?;
            if let Some(p) = plaquettes.iter().find(|&&p| p >= s.lat.n_plaquettes()) {
                return Err(Error::Geometry(format!("plaquette {p} is not on the lattice")).into());
            }
            let region = s.lat.plaquette_vertices(plaquettes);
            let r = check_ltqo(&s.cat, &s.lat, &region, *ell, *samples, cfg.seed, cfg.basis_cap)?;
            let passed = r.max_residual < cfg.tol_alg;
            Ok(Report::new("ltqo", passed, json!({ "plaquettes": plaquettes, "tolerance": cfg.tol_alg, "result": r })))
        }
        CheckCommand::Axioms { width } => {
            let s = Setup::new(cfg)?;
            let basis = s.basis(cfg)?;
            let model = StringNetModel::new(&s.cat, &s.lat, &basis)?;
            let vecs = s.ground(cfg, &model)?;
            require_ground(&vecs)?;
            let report =
                verify_axioms(&basis, &s.lat, &first_ground(&vecs), &axiom_kinds(&s.lat), *width, cfg.tol_ent)?;
            let table = report.to_csv();
            Ok(Report::new("axioms", report.passed(), serde_json::to_value(&report)?).with_table(table))
        }
        CheckCommand::Tee { vertex } => {
            let s = Setup::new(cfg)?;
            if *vertex >= s.lat.n_vertices() {
                return Err(Error::Geometry(format!("vertex {vertex} is not on the lattice")).into());
            }
            let basis = s.basis(cfg)?;
            let model = StringNetModel::new(&s.cat, &s.lat, &basis)?;
            let vecs = s.ground(cfg, &model)?;
            require_ground(&vecs)?;
            let regions = standard_disks(&s.lat, *vertex)?;
            let fit = area_law_fit(&basis, &s.lat, &first_ground(&vecs), &regions)?;
            let expected = 2.0 * s.cat.total_dim.ln();
            let gamma_error = (fit.gamma - expected).abs();
            let passed = gamma_error < cfg.tol_ent && fit.residual < cfg.tol_ent;
            let body = json!({
                "fit": fit,
                "expected_gamma": expected,
                "gamma_error": gamma_error,
                "tolerance": cfg.tol_ent,
            });
            Ok(Report::new("tee", passed, body))
        }
        CheckCommand::Convex { region, row, column, vertex, radius, thickening, expect, convergence } => {
            let s = Setup::new(cfg)?;
            let geometry = match region {
                RegionArg::Annulus => SectorGeometry::BulkStrip { row: *row },
                RegionArg::HalfAnnulus => SectorGeometry::BoundaryStrip { column: *column },
                RegionArg::Disk => SectorGeometry::Disk { vertex: *vertex, radius: *radius },
            };
            let d = information_convex_sectors(&s.cat, &s.lat, geometry, *thickening, cfg.seed, cfg.basis_cap)?;
            let diffs = sector_entropy_differences(&d)?;
            let conv = if *convergence {
                Some(sector_count_convergence(&s.cat, &s.lat, geometry, *thickening, cfg.seed, cfg.basis_cap)?)
            } else {
                None
            };
            let passed =
                d.consistent && expect.is_none_or(|n| n == d.n_sectors()) && conv.as_ref().is_none_or(|c| c.converged);
            let body = json!({
                "sectors": d.n_sectors(),
                "expected_sectors": expect,
                "entropy_differences": diffs,
                "decomposition": d,
                "convergence": conv,
            });
            Ok(Report::new("convex", passed, body))
        }
        CheckCommand::MergeDemo { kind, row } => {
            let s = Setup::new(cfg)?;
            let basis = s.basis(cfg)?;
            let model = StringNetModel::new(&s.cat, &s.lat, &basis)?;
            let vecs = s.ground(cfg, &model)?;
            require_ground(&vecs)?;
            let ens = first_ground(&vecs);
            let demo = match kind {
                MergeKind::MarkovStrip => markov_strip_merge(&s.cat, &basis, &s.lat, &ens, *row, cfg.tol_alg)?,
                MergeKind::AnnulusClosure => {
                    annulus_closure_merge(&s.cat, &basis, &s.lat, &ens, *row, cfg.tol_alg, cfg.seed, cfg.basis_cap)?
                }
            };
            let passed = demo.target_distance < cfg.tol_alg && demo.weight_error < cfg.tol_alg;
            Ok(Report::new("merge-demo", passed, json!({ "tolerance": cfg.tol_alg, "result": demo })))
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = &cli.cfg;
    match cfg.threads {
        Some(0) => anyhow::bail!("--threads must be positive"),
        Some(1) => par::set_sequential(true),
        Some(n) => par::set_threads(n),
        None => {}
    }
    let report = match &cli.command {
        Command::Category { action } => category_cmd(cfg, action)?,
        Command::Gs => gs_cmd(cfg)?,
        Command::Lattice => {
            let s = Setup::new(cfg)?;
            let lat: serde_json::Value = serde_json::from_str(&s.lat.to_json()?)?;
            Report::new("lattice", true, lat)
        }
        Command::Check { check } => check_cmd(cfg, check)?,
    };
    report.emit(cfg)?;
    Ok(report.passed)
}

/// Library errors that stand for a failed check rather than bad input.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Cap { .. }) => 3,
        Some(Error::Validation(_) | Error::Convergence(_) | Error::IllConditioned(_) | Error::Precondition(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
