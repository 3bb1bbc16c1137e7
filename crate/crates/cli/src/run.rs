//! Experiment orchestration.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use peaklab::analysis::{
    adams_check, asymptotic_fit, concentration_report, peak_vs_robin, pohozaev_check, pohozaev_radial,
    ConcentrationReport, FitSummary, PohozaevReport, MASS_RADII,
};
use peaklab::green::{find_critical_points, green_bundle, robin_lattice, CriticalPoint};
use peaklab::leastenergy::{minimize_cp, rescale_to_solution, solve_fixed_point, EnergyReport, SolutionPair};
use peaklab::radial::{radial_energy_report, solve_radial, RadialOptions, RadialSolution};
use peaklab::{boundary_facets, build_grid, Error as CoreError, Grid64};

use crate::config::{deserialize, validate, ConfigError, ExperimentKind, MethodName, RunConfig};
use crate::store::{num, CsvTable, ResultStore, RunStatus, StoreError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn is_nonconvergence(e: &CoreError) -> bool {
    match e {
        CoreError::NotConverged { .. }
        | CoreError::SolverDiverged { .. }
        | CoreError::ShootFailed { .. }
        | CoreError::StiffFailure(_)
        | CoreError::NegativePhase => true,
        CoreError::AtExponent { source, .. } => is_nonconvergence(source),
        _ => false,
    }
}

impl RunError {
    /// 2 for solver non-convergence, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(e) if is_nonconvergence(e) => 2,
            _ => 1,
        }
    }
}

/// Command-line level settings.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub kind: ExperimentKind,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// Parses the config and checks it against the subcommand.
pub fn load_config(kind: ExperimentKind, text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = deserialize(text)?;
    match cfg.kind {
        Some(k) if k != kind => {
            return Err(ConfigError {
                field: Some("kind".into()),
                line: text.lines().position(|l| l.contains("\"kind\"")).map(|i| i + 1),
                column: None,
                message: format!("config declares `{}` but the command is `{}`", k.name(), kind.name()),
            })
        }
        _ => cfg.kind = Some(kind),
    }
    validate(&cfg, text)?;
    Ok(cfg)
}

/// Output directory: `PEAKLAB_OUT`, then `--out`, then the config, then `peaklab-out`.
pub fn output_dir(cli_out: Option<&Path>, cfg: Option<&RunConfig>) -> PathBuf {
    if let Some(env) = std::env::var_os("PEAKLAB_OUT").filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    if let Some(o) = cli_out {
        return o.to_path_buf();
    }
    if let Some(o) = cfg.and_then(|c| c.output.as_ref()) {
        return PathBuf::from(o);
    }
    PathBuf::from("peaklab-out")
}

/// Runs one invocation and returns the process exit code.
pub fn execute(inv: &Invocation) -> i32 {
    match execute_inner(inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("peaklab: {e}");
            e.exit_code()
        }
    }
}

fn execute_inner(inv: &Invocation) -> Result<(), RunError> {
    let text = std::fs::read_to_string(&inv.config).map_err(|source| RunError::Read {
        path: inv.config.clone(),
        source,
    })?;
    let cfg = match load_config(inv.kind, &text) {
        Ok(c) => c,
        Err(e) => {
            let dir = output_dir(inv.out.as_deref(), None);
            write_rejection(&dir, inv.kind, &e.to_string());
            return Err(e.into());
        }
    };
    let dir = output_dir(inv.out.as_deref(), Some(&cfg));
    let mut store = ResultStore::create(&dir, inv.kind.name(), &cfg)?;
    log::info!("writing results to {}", dir.display());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = inv.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;
    let result = pool.install(|| run_experiment(&cfg, &mut store));
    match &result {
        Ok(()) => store.finish(RunStatus::Ok, None)?,
        Err(e) => {
            let status = if e.exit_code() == 2 {
                RunStatus::NotConverged
            } else {
                RunStatus::Failed
            };
            store.finish(status, Some(e.to_string()))?
        }
    }
    result
}

/// Manifest for a configuration that never validated.
fn write_rejection(dir: &Path, kind: ExperimentKind, error: &str) {
    if std::fs::create_dir_all(dir).is_err() {
        return;
    }
    let doc = json!({
        "tool": "peaklab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": kind.name(),
        "config": Value::Null,
        "status": "failed",
        "errors": [error],
    });
    let _ = std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&doc).expect("json serializes") + "\n",
    );
}

/// Runs the configured experiment against an open store.
pub fn run_experiment(cfg: &RunConfig, store: &mut ResultStore) -> Result<(), RunError> {
    match cfg.kind() {
        ExperimentKind::Solve | ExperimentKind::Sweep => {
            if cfg.radial {
                radial_schedule(cfg, store, false).map(|_| ())
            } else {
                let grid = make_grid(cfg)?;
                grid_schedule(cfg, &grid, store, |_, _, _| Ok(())).map(|_| ())
            }
        }
        ExperimentKind::Green => run_green(cfg, store),
        ExperimentKind::Robin => {
            let grid = make_grid(cfg)?;
            run_robin(cfg, &grid, store).map(|_| ())
        }
        ExperimentKind::Pohozaev => {
            if cfg.radial {
                radial_schedule(cfg, store, true).map(|_| ())
            } else {
                run_pohozaev(cfg, store)
            }
        }
        ExperimentKind::Concentration => {
            let grid = make_grid(cfg)?;
            run_concentration(cfg, &grid, store).map(|_| ())
        }
        ExperimentKind::FullReport => run_full_report(cfg, store),
    }
}

fn make_grid(cfg: &RunConfig) -> Result<Arc<Grid64>, RunError> {
    let grid = build_grid(cfg.domain_spec()?, cfg.grid_h())?;
    log::info!("grid {} with {} nodes", grid.domain().label(), grid.len());
    Ok(grid)
}

fn p_tag(p: f64) -> String {
    format!("{p}").replace('.', "_")
}

pub fn sweep_header() -> Vec<String> {
    [
        "p",
        "c_p",
        "cp_scaled",
        "gamma_p",
        "mass_p",
        "lambda_p",
        "L0_running",
        "energy_pplus1",
        "energy_scaled",
        "residual",
        "iterations",
        "seconds",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn sweep_row(dim: usize, r: &EnergyReport<f64>, residual: f64, iterations: usize, secs: f64) -> Vec<String> {
    vec![
        num(r.p),
        num(r.c_p),
        num(r.cp_scaled(dim)),
        num(r.gamma_p),
        num(r.mass_p),
        num(r.lambda_p),
        num(r.l0_running()),
        num(r.energy_pplus1),
        num(r.energy_scaled(dim)),
        num(residual),
        iterations.to_string(),
        format!("{secs:.3}"),
    ]
}

fn solve_one(
    cfg: &RunConfig,
    grid: &Arc<Grid64>,
    p: f64,
    init: Option<&peaklab::Field64>,
) -> Result<SolutionPair<f64>, CoreError> {
    let opts = cfg.solver.nonlinear();
    match cfg.solver.method {
        MethodName::FixedPoint => solve_fixed_point(grid, p, init, &opts),
        MethodName::Minimization => {
            let m = minimize_cp(grid, p, init, &opts)?;
            let mut pair = rescale_to_solution(&m.w, m.c_p, p)?;
            pair.iterations = m.iterations;
            Ok(pair)
        }
    }
}

type Solved = (SolutionPair<f64>, EnergyReport<f64>);

/// Grid solves over the exponent schedule, persisting a sweep row and
/// snapshots per exponent before handing each solution to `each`.
fn grid_schedule(
    cfg: &RunConfig,
    grid: &Arc<Grid64>,
    store: &mut ResultStore,
    mut each: impl FnMut(&mut ResultStore, &SolutionPair<f64>, &EnergyReport<f64>) -> Result<(), RunError>,
) -> Result<Vec<Solved>, RunError> {
    let dim = grid.dim();
    let name = if cfg.kind() == ExperimentKind::Solve { "solve" } else { "sweep" };
    let mut table = store.table(name, &sweep_header())?;
    let mut out: Vec<Solved> = Vec::new();
    let mut persist = |store: &mut ResultStore,
                       table: &mut CsvTable,
                       pair: SolutionPair<f64>,
                       secs: f64,
                       out: &mut Vec<Solved>|
     -> Result<(), RunError> {
        let rep = pair.energy_report();
        table.row(sweep_row(dim, &rep, pair.max_residual(), pair.iterations, secs))?;
        log::info!(
            "p = {}: c_p p^((N-2)/N) = {:.6}, {} iterations",
            pair.p,
            rep.cp_scaled(dim),
            pair.iterations
        );
        if !pair.accepted(cfg.solver.residual_tolerance) {
            store.warn(format!(
                "p = {}: residual {:e} above the acceptance tolerance",
                pair.p,
                pair.max_residual()
            ))?;
        }
        if cfg.snapshots {
            store.snapshot(&format!("u_p{}", p_tag(pair.p)), &pair.u)?;
            store.snapshot(&format!("v_p{}", p_tag(pair.p)), &pair.v)?;
        }
        each(store, &pair, &rep)?;
        out.push((pair, rep));
        Ok(())
    };
    let sequential = cfg.solver.continuation && cfg.kind() != ExperimentKind::Solve;
    if sequential {
        for &p in &cfg.p {
            let t = Instant::now();
            let init = out.last().map(|(s, _)| s.u.clone());
            let pair = solve_one(cfg, grid, p, init.as_ref()).map_err(|e| CoreError::AtExponent {
                p,
                source: Box::new(e),
            })?;
            persist(store, &mut table, pair, t.elapsed().as_secs_f64(), &mut out)?;
        }
    } else {
        let results: Vec<(Result<SolutionPair<f64>, CoreError>, f64)> = cfg
            .p
            .par_iter()
            .map(|&p| {
                let t = Instant::now();
                let r = solve_one(cfg, grid, p, None);
                (r, t.elapsed().as_secs_f64())
            })
            .collect();
        for (&p, (r, secs)) in cfg.p.iter().zip(results) {
            let pair = r.map_err(|e| CoreError::AtExponent {
                p,
                source: Box::new(e),
            })?;
            persist(store, &mut table, pair, secs, &mut out)?;
        }
    }
    if out.len() >= 4 {
        let reports: Vec<EnergyReport<f64>> = out.iter().map(|(_, r)| r.clone()).collect();
        write_fit(store, &reports, dim)?;
    }
    Ok(out)
}

fn fit_json(fit: &FitSummary<f64>) -> Value {
    json!({
        "rows": fit.rows.iter().map(|r| json!({
            "quantity": r.name,
            "q_inf": r.q_inf,
            "a": r.a,
            "b": r.b,
            "target": r.target,
            "rel_gap": r.rel_gap,
            "monotone_tail": r.monotone_tail,
        })).collect::<Vec<_>>(),
        "fit_from_p": fit.fit_from,
        "L0": fit.l0,
        "L0_bracket": [fit.l0_bracket.0, fit.l0_bracket.1],
        "L0_in_bracket": fit.l0_in_bracket,
    })
}

fn write_fit(store: &mut ResultStore, reports: &[EnergyReport<f64>], dim: usize) -> Result<(), RunError> {
    let fit = asymptotic_fit(reports, dim)?;
    let header: Vec<String> = ["quantity", "q_inf", "a", "b", "target", "rel_gap", "monotone_tail", "fit_from_p"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut t = store.table("fit", &header)?;
    for r in &fit.rows {
        t.row([
            r.name.to_string(),
            num(r.q_inf),
            num(r.a),
            num(r.b),
            num(r.target),
            num(r.rel_gap),
            r.monotone_tail.to_string(),
            num(fit.fit_from),
        ])?;
    }
    let mut raw = store.table(
        "fit_raw",
        &["p", "cp_scaled", "energy_scaled", "dirichlet_scaled"].map(String::from),
    )?;
    for r in reports {
        raw.row([
            num(r.p),
            num(r.cp_scaled(dim)),
            num(r.energy_scaled(dim)),
            num(r.dirichlet_scaled(dim)),
        ])?;
    }
    store.set_summary("fit", fit_json(&fit))?;
    Ok(())
}

/// Independent radial solves, optionally with the boundary identity table.
fn radial_schedule(
    cfg: &RunConfig,
    store: &mut ResultStore,
    pohozaev: bool,
) -> Result<Vec<RadialSolution<f64>>, RunError> {
    let dim = cfg.dim;
    let radius = cfg.radius.unwrap_or(1.0);
    let opts = RadialOptions { tol: cfg.radial_tol };
    let results: Vec<(Result<RadialSolution<f64>, CoreError>, f64)> = cfg
        .p
        .par_iter()
        .map(|&p| {
            let t = Instant::now();
            (solve_radial(dim, p, radius, &opts), t.elapsed().as_secs_f64())
        })
        .collect();
    let name = if cfg.kind() == ExperimentKind::Solve { "solve" } else { "sweep" };
    let mut table = store.table(name, &sweep_header())?;
    let mut ptable = if pohozaev {
        Some(store.table("pohozaev", &pohozaev_header(dim))?)
    } else {
        None
    };
    let mut radial_table = store.table(
        "radial",
        &["p", "regime", "hybrid", "beta", "u_r_R", "v_r_R", "mismatch"].map(String::from),
    )?;
    let mut out = Vec::new();
    let mut reports = Vec::new();
    for (&p, (r, secs)) in cfg.p.iter().zip(results) {
        let sol = r.map_err(|e| CoreError::AtExponent {
            p,
            source: Box::new(e),
        })?;
        let rep = radial_energy_report(&sol);
        table.row(sweep_row(dim, &rep, sol.mismatch, 0, secs))?;
        radial_table.row([
            num(p),
            sol.regime.label().to_string(),
            sol.hybrid.to_string(),
            num(sol.shoot_params.1),
            num(sol.boundary_slopes.0),
            num(sol.boundary_slopes.1),
            num(sol.mismatch),
        ])?;
        if let Some(t) = ptable.as_mut() {
            t.row(pohozaev_row(&pohozaev_radial(&sol)))?;
        }
        reports.push(rep);
        out.push(sol);
    }
    if let Some(s) = out.first() {
        store.set_summary("regime", json!(s.regime.label()))?;
    }
    if reports.len() >= 4 {
        write_fit(store, &reports, dim)?;
    }
    Ok(out)
}

fn pohozaev_header(dim: usize) -> Vec<String> {
    let mut h = vec!["p".to_string()];
    h.extend((1..=dim).map(|a| format!("y_{a}")));
    h.extend(["lhs", "rhs", "rel_residual"].map(String::from));
    h.extend((1..=dim).map(|a| format!("grad_{a}")));
    h.extend(["grad_norm", "fallbacks"].map(String::from));
    h
}

fn pohozaev_row(r: &PohozaevReport<f64>) -> Vec<String> {
    let mut row = vec![num(r.p)];
    row.extend(r.y.iter().map(|x| num(*x)));
    row.extend([num(r.lhs), num(r.rhs), num(r.rel_residual)]);
    row.extend(r.grad_vector.iter().map(|x| num(*x)));
    row.push(num(r.grad_vector.iter().map(|g| g * g).sum::<f64>().sqrt()));
    row.push(r.fallbacks.to_string());
    row
}

fn run_green(cfg: &RunConfig, store: &mut ResultStore) -> Result<(), RunError> {
    let grid = make_grid(cfg)?;
    let y = cfg.source_point();
    let b = green_bundle(&grid, &y, &cfg.solver.linear())?;
    let dim = grid.dim();
    let mut header: Vec<String> = (1..=dim).map(|a| format!("y_{a}")).collect();
    header.extend(["g_diag", "phi_diag"].map(String::from));
    let mut t = store.table("green", &header)?;
    let mut row: Vec<String> = y.iter().map(|x| num(*x)).collect();
    row.extend([num(b.g_diag), num(b.phi_diag)]);
    t.row(row)?;
    if cfg.snapshots {
        store.snapshot("green", &b.green)?;
        store.snapshot("green_regular", &b.regular)?;
        store.snapshot("green_tilde", &b.tilde)?;
        store.snapshot("green_tilde_regular", &b.tilde_regular)?;
    }
    store.set_summary("g_diag", json!(b.g_diag))?;
    store.set_summary("phi_diag", json!(b.phi_diag))?;
    Ok(())
}

fn run_robin(
    cfg: &RunConfig,
    grid: &Arc<Grid64>,
    store: &mut ResultStore,
) -> Result<Vec<CriticalPoint<f64>>, RunError> {
    let dim = grid.dim();
    let lat = robin_lattice(
        grid,
        cfg.robin_spacing(),
        cfg.robin_margin(),
        cfg.robin_symmetric(),
        &cfg.solver.linear(),
    )?;
    let mut header: Vec<String> = (1..=dim).map(|a| format!("x_{a}")).collect();
    header.push("phi_tilde".into());
    let mut t = store.table("robin", &header)?;
    for i in 0..lat.len() {
        if let Some(v) = lat.values[i] {
            let mut row: Vec<String> = lat.point(&lat.multi_index(i)).iter().map(|x| num(*x)).collect();
            row.push(num(v));
            t.row(row)?;
        }
    }
    let cps = match find_critical_points(&lat, cfg.robin_threshold()) {
        Ok(c) => c,
        Err(CoreError::NoCriticalPoint) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut header = vec!["kind".to_string(), "value".to_string()];
    header.extend((1..=dim).map(|a| format!("x_{a}")));
    header.extend((1..=dim).map(|a| format!("eig_{a}")));
    let mut ct = store.table("critical_points", &header)?;
    for c in &cps {
        let mut row = vec![c.kind.label().to_string(), num(c.value)];
        row.extend(c.position.iter().map(|x| num(*x)));
        row.extend(c.hessian_eigenvalues.iter().map(|x| num(*x)));
        ct.row(row)?;
    }
    if cps.is_empty() {
        store.warn("no critical point of the Robin map was found".into())?;
    }
    store.set_summary("critical_points", json!(cps.len()))?;
    Ok(cps)
}

fn run_pohozaev(cfg: &RunConfig, store: &mut ResultStore) -> Result<(), RunError> {
    let grid = make_grid(cfg)?;
    let facets = boundary_facets(&grid)?;
    let y = cfg.source_point();
    let mut t = store.table("pohozaev", &pohozaev_header(grid.dim()))?;
    grid_schedule(cfg, &grid, store, |store, pair, _| {
        let r = pohozaev_check(pair, &y, &facets)?;
        if r.fallbacks > 0 {
            store.warn(format!(
                "p = {}: {} facets used a first-order normal derivative",
                r.p, r.fallbacks
            ))?;
        }
        t.row(pohozaev_row(&r))?;
        Ok(())
    })?;
    Ok(())
}

fn concentration_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["p", "lambda_p", "L0_running", "card_S"].map(String::from).to_vec();
    h.extend((1..=dim).map(|a| format!("peak_{a}")));
    h.extend(["peak_height", "peak_on_boundary", "gtilde_compare", "r_star"].map(String::from));
    h.extend(MASS_RADII.iter().map(|f| format!("mass_in_{f}")));
    h.extend(MASS_RADII.iter().map(|f| format!("mass_out_{f}")));
    h
}

fn concentration_row(r: &ConcentrationReport<f64>) -> Vec<String> {
    let mut row = vec![
        num(r.p),
        num(r.lambda_p),
        num(r.l0_running),
        r.card_s_estimate.to_string(),
    ];
    row.extend(r.peaks[0].position.iter().map(|x| num(*x)));
    row.push(num(r.peaks[0].height));
    row.push(r.peak_on_boundary.to_string());
    row.push(r.gtilde_compare.map(num).unwrap_or_default());
    row.push(num(r.r_star));
    row.extend(r.f_mass_profile.iter().map(|(_, m)| num(*m)));
    row.extend(r.f_mass_outside.iter().map(|(_, m)| num(*m)));
    row
}

fn run_concentration(
    cfg: &RunConfig,
    grid: &Arc<Grid64>,
    store: &mut ResultStore,
) -> Result<Vec<(Solved, ConcentrationReport<f64>)>, RunError> {
    let dim = grid.dim();
    let mut t = store.table("concentration", &concentration_header(dim))?;
    let mut peaks_header: Vec<String> = ["p", "rank"].map(String::from).to_vec();
    peaks_header.extend((1..=dim).map(|a| format!("x_{a}")));
    peaks_header.extend(["height", "on_boundary", "clustered"].map(String::from));
    let mut pt = store.table("peaks", &peaks_header)?;
    let linear = cfg.solver.linear();
    let mut reports = Vec::new();
    let solved = grid_schedule(cfg, grid, store, |store, pair, _| {
        let first = concentration_report(pair, None)?;
        let peak = first.peaks[0].position.clone();
        let report = match green_bundle(grid, &peak, &linear) {
            Ok(b) => match concentration_report(pair, Some(&b)) {
                Ok(r) => r,
                Err(CoreError::InsufficientData(m)) => {
                    store.warn(format!("p = {}: {m}", pair.p))?;
                    first
                }
                Err(e) => return Err(e.into()),
            },
            Err(CoreError::SourceTooCloseToBoundary { .. }) => {
                store.warn(format!(
                    "p = {}: peak too close to the boundary for the Green comparison",
                    pair.p
                ))?;
                first
            }
            Err(e) => return Err(e.into()),
        };
        if report.peak_on_boundary {
            store.warn(format!("p = {}: peak on the boundary (falsification event)", pair.p))?;
        }
        if report.two_peaks() {
            store.warn(format!(
                "p = {}: {} separated peaks detected",
                pair.p, report.card_s_estimate
            ))?;
        }
        t.row(concentration_row(&report))?;
        for (rank, pk) in report.raw_maxima.iter().enumerate() {
            let clustered = report.peaks.iter().any(|q| q.node == pk.node);
            let mut row = vec![num(pair.p), rank.to_string()];
            row.extend(pk.position.iter().map(|x| num(*x)));
            row.extend([num(pk.height), pk.on_boundary.to_string(), clustered.to_string()]);
            pt.row(row)?;
        }
        if cfg.snapshots {
            store.snapshot(&format!("w_p{}", p_tag(pair.p)), &report.w)?;
        }
        reports.push(report);
        Ok(())
    })?;
    Ok(solved.into_iter().zip(reports).collect())
}

fn run_full_report(cfg: &RunConfig, store: &mut ResultStore) -> Result<(), RunError> {
    let grid = make_grid(cfg)?;
    let dim = grid.dim();
    let facets = boundary_facets(&grid)?;
    let y = cfg.source_point();
    let runs = run_concentration(cfg, &grid, store)?;
    let mut t = store.table("pohozaev", &pohozaev_header(dim))?;
    let mut last_pohozaev = None;
    for ((pair, _), conc) in &runs {
        let r = pohozaev_check(pair, &y, &facets)?;
        t.row(pohozaev_row(&r))?;
        if conc.card_s_estimate == 1 {
            last_pohozaev = Some(pohozaev_check(pair, &conc.peaks[0].position, &facets)?);
        }
    }
    let cps = run_robin(cfg, &grid, store)?;
    let mut summary = json!({});
    if let Some(((_, _), conc)) = runs.last() {
        summary["card_S"] = json!(conc.card_s_estimate);
        summary["peak"] = json!(conc.peaks[0].position);
        summary["peak_on_boundary"] = json!(conc.peak_on_boundary);
        summary["gtilde_compare"] = json!(conc.gtilde_compare);
        if conc.card_s_estimate == 1 && !cps.is_empty() {
            let pr = peak_vs_robin(conc, &cps, last_pohozaev.as_ref())?;
            summary["peak_vs_robin"] = json!({
                "peak": pr.peak,
                "critical_point": pr.critical_point,
                "distance": pr.distance,
                "distance_in_h": pr.distance_in_h,
                "distance_in_inradius": pr.distance_in_inradius,
                "grad_norm": pr.grad_norm,
            });
        }
    }
    let samples: Vec<peaklab::Field64> = runs.iter().map(|((s, _), _)| s.u.clone()).collect();
    let n = dim as f64;
    let adams = adams_check(&samples, &[n / 2.0, n, 4.0 * n])?;
    let mut at = store.table("adams", &["t", "max_ratio", "dt_limit"].map(String::from))?;
    for r in &adams.rows {
        at.row([num(r.t), num(r.max_ratio), num(adams.dt_limit)])?;
    }
    summary["smooth_boundary"] = json!(grid.domain().has_smooth_boundary());
    if !grid.domain().has_smooth_boundary() {
        store.warn("box domains lie outside the smooth-boundary hypothesis".into())?;
    }
    store.json("summary", &summary)?;
    store.set_summary("report", summary)?;
    Ok(())
}
