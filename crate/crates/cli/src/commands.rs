//! The five verbs. Each returns its outputs instead of printing so that the
//! binary stays a thin dispatcher.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use isogftns::checkpoint;
use isogftns::extras::{quantum_double_checks, schedule_circuit, CircuitSchedule, GroupTable};
use isogftns::gaussian::bond_dimension;
use isogftns::iso::{iso_bond_ratio, random_init, ArrowPattern, IsoParams};
use isogftns::linalg::{max_abs_c, purity_defect, CMat};
use isogftns::observables::{
    realspace_chern, realspace_correlator, unfolded_occupation, RealSpaceCovariance, RegionPartition,
};
use isogftns::optimize::{expectation_energy, minimize_from, physical_covariances, OptimReport};
use isogftns::{Boundary, CellShape, ModelKind, ModelSpec, MomentumGrid};
use serde::Serialize;

use crate::config::{parse_pattern, ValidatedConfig};
use crate::output::{num, Csv, Provenance};
use crate::CliError;

/// Per-run record written as JSON next to the checkpoint. Excludes timing
/// so that reruns are byte-identical.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub model: String,
    pub pattern: String,
    pub n_v: usize,
    pub chi: f64,
    pub lx: usize,
    pub ly: usize,
    pub seed: u64,
    pub best_start: usize,
    pub best_energy: f64,
    pub exact_energy: f64,
    pub error_per_site: f64,
    pub final_grad_norm: f64,
    pub converged: bool,
    pub flagged_kpoints: Vec<usize>,
    pub max_imag_residue: f64,
    pub iterations: usize,
    pub evaluations: u64,
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub records: Vec<RunRecord>,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn run_tag(pattern: &ArrowPattern, index: usize, n_v: usize) -> String {
    match pattern {
        ArrowPattern::Custom(_) => format!("custom{index}_nv{n_v}"),
        _ => format!("{}_nv{n_v}", pattern.name()),
    }
}

fn trajectory_csv(report: &OptimReport, provenance: &Provenance) -> Csv {
    let mut csv = Csv::new(provenance, &["run", "seed", "iteration", "energy", "grad_norm"]);
    let runs = report
        .starts
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("start{i}"), t))
        .chain(std::iter::once(("refine".to_string(), &report.refinement)));
    for (name, t) in runs {
        for (it, (e, g)) in t.energies.iter().zip(&t.grad_norms).enumerate() {
            csv.row(&[name.clone(), t.seed.to_string(), it.to_string(), num(*e), num(*g)]);
        }
    }
    csv
}

/// Runs every `(pattern, n_v)` pair of the config and writes reports,
/// checkpoints, trajectories, `summary.csv` and `timing.csv` into `out`.
pub fn optimize(cfg: &ValidatedConfig, out: &Path) -> Result<OptimizeOutcome, CliError> {
    std::fs::create_dir_all(out)?;
    let provenance = Provenance::new(&cfg.hash, cfg.seed()).with("model", cfg.raw.model.name());
    let mut summary = Csv::new(
        &provenance,
        &[
            "pattern",
            "n_v",
            "chi",
            "best_energy",
            "exact_energy",
            "error_per_site",
            "grad_norm",
            "converged",
        ],
    );
    let mut timing = Csv::new(&provenance, &["pattern", "n_v", "wall_seconds"]);
    let mut outcome = OptimizeOutcome {
        records: Vec::new(),
        files: Vec::new(),
        warnings: Vec::new(),
    };
    let mut previous: HashMap<usize, (usize, IsoParams)> = HashMap::new();
    for (pi, pattern) in cfg.patterns.iter().enumerate() {
        let model = cfg.model_for(pattern)?;
        for &n_v in &cfg.raw.n_v {
            let tag = run_tag(pattern, pi, n_v);
            let init = match previous.get(&pi) {
                Some((prev_nv, params)) if cfg.optimizer.warm_start && *prev_nv + 1 == n_v => Some(params.embed(n_v)?),
                _ => None,
            };
            eprintln!("[{tag}] optimizing {} on {}x{}", model.kind.name(), model.grid.lx, model.grid.ly);
            let report = minimize_from(&model, pattern, n_v, &cfg.optimizer, init.as_ref())?;
            let params = report
                .params
                .clone()
                .ok_or_else(|| CliError::Run("optimizer returned no parameters".into()))?;
            if !report.converged {
                let w = format!("[{tag}] not converged: gradient norm {:e}", report.final_grad_norm);
                eprintln!("warning: {w}");
                outcome.warnings.push(w);
            }
            if !report.flagged_kpoints.is_empty() {
                let w = format!("[{tag}] {} k-points needed a regularised contraction", report.flagged_kpoints.len());
                eprintln!("warning: {w}");
                outcome.warnings.push(w);
            }
            let record = RunRecord {
                model: report.model.clone(),
                pattern: cfg.raw.patterns[pi].clone(),
                n_v,
                chi: bond_dimension(n_v),
                lx: report.lx,
                ly: report.ly,
                seed: cfg.seed(),
                best_start: report.best_start,
                best_energy: report.best_energy,
                exact_energy: report.exact_energy,
                error_per_site: report.error_per_site,
                final_grad_norm: report.final_grad_norm,
                converged: report.converged,
                flagged_kpoints: report.flagged_kpoints.clone(),
                max_imag_residue: report.max_imag_residue,
                iterations: report.starts.iter().map(|t| t.energies.len()).sum::<usize>() + report.refinement.energies.len(),
                evaluations: report.starts.iter().map(|t| t.evaluations).sum::<u64>() + report.refinement.evaluations,
            };
            summary.row(&[
                record.pattern.clone(),
                n_v.to_string(),
                num(record.chi),
                num(record.best_energy),
                num(record.exact_energy),
                num(record.error_per_site),
                num(record.final_grad_norm),
                record.converged.to_string(),
            ]);
            timing.row(&[record.pattern.clone(), n_v.to_string(), format!("{:.3}", report.wall_seconds)]);
            let ckpt = out.join(format!("{tag}.ckpt"));
            checkpoint::save(&ckpt, &params)?;
            let json = out.join(format!("{tag}.json"));
            let text = serde_json::to_string_pretty(&record).map_err(|e| CliError::Run(e.to_string()))?;
            std::fs::write(&json, text + "\n")?;
            let traj = out.join(format!("{tag}_trajectory.csv"));
            trajectory_csv(&report, &provenance.clone().with("run", &tag)).write(&traj)?;
            outcome.files.extend([ckpt, json, traj]);
            eprintln!(
                "[{tag}] error per site {:e}, gradient norm {:e}, {:.1}s",
                report.error_per_site, report.final_grad_norm, report.wall_seconds
            );
            previous.insert(pi, (n_v, params));
            outcome.records.push(record);
        }
    }
    let path = out.join("summary.csv");
    summary.write(&path)?;
    outcome.files.push(path);
    let path = out.join("timing.csv");
    timing.write(&path)?;
    outcome.files.push(path);
    Ok(outcome)
}

/// Where the state for `observe` comes from.
#[derive(Clone, Debug)]
pub enum StateSource {
    Checkpoint(PathBuf),
    /// Exact ground state of the configured model.
    Exact,
}

fn describe_params(p: &IsoParams) -> String {
    format!("pattern={} n_v={} cell={}", p.pattern.name(), p.n_v, p.cell)
}

/// Checks a checkpoint against the config; on mismatch both headers are
/// part of the message.
pub fn check_compatible(cfg: &ValidatedConfig, params: &IsoParams) -> Result<ModelSpec, CliError> {
    let pattern_ok = cfg.patterns.contains(&params.pattern);
    let nv_ok = cfg.raw.n_v.contains(&params.n_v);
    let cell_ok = cfg.cell_for(&params.pattern) == params.cell;
    if !(pattern_ok && nv_ok && cell_ok) {
        return Err(CliError::Config(format!(
            "checkpoint does not match the config\n  checkpoint: {}\n  config:     {}",
            describe_params(params),
            cfg.describe()
        )));
    }
    cfg.model_with_cell(params.cell)
}

/// Loads the state and the model it lives on, with `Γ(k)` over the grid.
pub fn load_state(cfg: &ValidatedConfig, source: &StateSource) -> Result<(ModelSpec, Vec<CMat>, String), CliError> {
    match source {
        StateSource::Exact => {
            let model = cfg.model_with_cell(cfg.raw.model.min_cell())?;
            let gammas = model.exact_state()?;
            Ok((model, gammas, "exact".into()))
        }
        StateSource::Checkpoint(path) => {
            let params = checkpoint::load(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let model = check_compatible(cfg, &params)?;
            let eval = expectation_energy(&params, &model)?;
            if !eval.flagged.is_empty() {
                eprintln!("warning: {} k-points needed a regularised contraction", eval.flagged.len());
            }
            let gammas = physical_covariances(&params, &model)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "state".into());
            Ok((model, gammas, stem))
        }
    }
}

/// Writes the requested observables and returns the file paths.
pub fn observe(cfg: &ValidatedConfig, source: &StateSource, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let req = &cfg.raw.observables;
    if !req.occupation && req.correlator_max_x.is_none() && req.chern_radii.is_empty() {
        return Err(CliError::Config("field `observables`: nothing requested".into()));
    }
    std::fs::create_dir_all(out)?;
    let (model, gammas, stem) = load_state(cfg, source)?;
    let provenance = Provenance::new(&cfg.hash, cfg.seed())
        .with("model", model.kind.name())
        .with("state", &stem);
    let mut files = Vec::new();
    let grid = &model.grid;
    if req.occupation {
        let occ = unfolded_occupation(&gammas, grid)?;
        let twist = |bc: Boundary| if bc == Boundary::AntiPeriodic { 0.5 } else { 0.0 };
        let mut csv = Csv::new(&provenance, &["qx", "qy", "kx", "ky", "n"]);
        for qy in 0..grid.ly {
            for qx in 0..grid.lx {
                let kx = 2.0 * std::f64::consts::PI * (qx as f64 + twist(grid.bc_x)) / grid.lx as f64;
                let ky = 2.0 * std::f64::consts::PI * (qy as f64 + twist(grid.bc_y)) / grid.ly as f64;
                csv.row(&[qx.to_string(), qy.to_string(), num(kx), num(ky), num(occ[qx + grid.lx * qy])]);
            }
        }
        let path = out.join(format!("{stem}_occupation.csv"));
        csv.write(&path)?;
        files.push(path);
    }
    let real = RealSpaceCovariance::from_momentum(&gammas, grid)?;
    if let Some(max_x) = req.correlator_max_x {
        let max_x = max_x.min(grid.lx - 1);
        // the exact column is left empty when the exact state is degenerate
        let exact = cfg
            .model_with_cell(cfg.raw.model.min_cell())
            .ok()
            .and_then(|m| m.exact_state().ok().map(|g| (m, g)))
            .and_then(|(m, g)| RealSpaceCovariance::from_momentum(&g, &m.grid).ok());
        let mut csv = Csv::new(&provenance, &["x", "correlator", "exact"]);
        for x in 0..=max_x {
            let c = realspace_correlator(&real, x as i64)?;
            let e = match &exact {
                Some(r) => num(realspace_correlator(r, x as i64)?),
                None => String::new(),
            };
            csv.row(&[x.to_string(), num(c), e]);
        }
        let path = out.join(format!("{stem}_correlator.csv"));
        csv.write(&path)?;
        files.push(path);
    }
    if !req.chern_radii.is_empty() {
        let mut csv = Csv::new(&provenance, &["radius", "nu"]);
        for &r in &req.chern_radii {
            let partition = RegionPartition::new(grid.lx, grid.ly, r);
            csv.row(&[num(r), num(realspace_chern(&real, &gammas, &partition)?)]);
        }
        let path = out.join(format!("{stem}_chern.csv"));
        csv.write(&path)?;
        files.push(path);
    }
    Ok(files)
}

pub fn circuit(layout: &str, lx: usize, ly: usize, chi: usize) -> Result<CircuitSchedule, CliError> {
    let pattern = parse_pattern(layout).map_err(CliError::Config)?;
    schedule_circuit(&pattern, lx, ly, chi).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Clone, Debug, Serialize)]
pub struct PairCheck {
    pub legs: [&'static str; 2],
    pub passes: bool,
    pub constant: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct QdReport {
    pub group: String,
    pub order: usize,
    pub passes: bool,
    pub checks: Vec<PairCheck>,
}

/// Isometry check of the quantum-double tensor for all six pairs of
/// virtual legs; passes only if every pair passes with the same constant.
pub fn qdcheck(group: &str) -> Result<QdReport, CliError> {
    let g = GroupTable::by_name(group).map_err(|e| CliError::Config(e.to_string()))?;
    let checks: Vec<PairCheck> = quantum_double_checks(&g)
        .into_iter()
        .map(|(legs, c)| PairCheck {
            legs,
            passes: c.passes,
            constant: c.constant,
            residual: c.residual,
        })
        .collect();
    let same = checks.windows(2).all(|w| w[0].constant == w[1].constant);
    Ok(QdReport {
        group: g.name().to_string(),
        order: g.order(),
        passes: same && checks.iter().all(|c| c.passes),
        checks,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn small_grid(l: usize, cell: CellShape) -> Result<MomentumGrid, CliError> {
    Ok(MomentumGrid::new(l, l, Boundary::AntiPeriodic, Boundary::Periodic, cell)?)
}

/// Fast built-in checks of the core invariants.
pub fn selftest() -> Result<Vec<CheckLine>, CliError> {
    let mut lines = Vec::new();

    let mut worst_purity: f64 = 0.0;
    let mut worst_reality: f64 = 0.0;
    for (i, (pattern, cell)) in [
        (ArrowPattern::Uniform, CellShape::SINGLE),
        (ArrowPattern::Alternating, CellShape::COLUMN_PAIR),
    ]
    .into_iter()
    .enumerate()
    {
        for n_v in 1..=3 {
            let params = random_init(&pattern, n_v, cell, 17 * i as u64 + n_v as u64)?;
            let model = ModelSpec::new(ModelKind::FermiSurface, small_grid(4, cell)?)?;
            let gammas = physical_covariances(&params, &model)?;
            for (k, g) in gammas.iter().enumerate() {
                worst_purity = worst_purity.max(purity_defect(g));
                let minus = &gammas[model.grid.neg_index(k)];
                worst_reality = worst_reality.max(max_abs_c(&(minus + g.transpose())));
            }
        }
    }
    lines.push(CheckLine {
        name: "purity",
        passed: worst_purity < 1e-10 && worst_reality < 1e-10,
        detail: format!("max |GG^+ - I| = {worst_purity:e}, max |G(-k) + G(k)^T| = {worst_reality:e}"),
    });

    let fs = ModelSpec::new(ModelKind::FermiSurface, MomentumGrid::new(2, 2, Boundary::Periodic, Boundary::Periodic, CellShape::SINGLE)?)?;
    let e = fs.exact_ground_energy();
    lines.push(CheckLine {
        name: "exact-oracle",
        passed: (e + 4.0).abs() < 1e-12,
        detail: format!("fermi-surface 2x2 ground energy {e}"),
    });

    let s = schedule_circuit(&ArrowPattern::Uniform, 3, 3, 2)?;
    lines.push(CheckLine {
        name: "circuit",
        passed: s.depth == 5,
        detail: format!("uniform 3x3 depth {}", s.depth),
    });

    let qd = qdcheck("Z2")?;
    let c = qd.checks.first().map(|c| c.constant).unwrap_or(0.0);
    lines.push(CheckLine {
        name: "quantum-double",
        passed: qd.passes && c == 8.0,
        detail: format!("Z2 constant {c}"),
    });

    let params = random_init(&ArrowPattern::Alternating, 2, CellShape::COLUMN_PAIR, 3)?;
    let mut buf = Vec::new();
    checkpoint::write_checkpoint(&mut buf, &params)?;
    let back = checkpoint::read_checkpoint(&mut buf.as_slice())?;
    lines.push(CheckLine {
        name: "checkpoint",
        passed: back == params,
        detail: format!("{} bytes", buf.len()),
    });

    let ratio = iso_bond_ratio(2.0);
    lines.push(CheckLine {
        name: "manifold-dimension",
        passed: (ratio * 100.0).round() == 107.0,
        detail: format!("bond ratio at d = 2 is {ratio:.4}"),
    });
    Ok(lines)
}
