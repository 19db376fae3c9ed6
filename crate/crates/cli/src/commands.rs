//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use mpark::harness::{
    self, classify_curve, find_largest_stable_dt, ladder_reference, plateau_onset, powers_of_two, run_convergence,
    run_efficiency, write_atomic, ConvergenceReport, HarnessError, LadderSpec, MethodSpec, ReferenceSpec, RunMetadata,
    StableDtRow, SweepSpec,
};
use mpark::integrator::{integrate, IntegrationError, IntegratorConfig, RunStatus};
use mpark::precision::{PrecisionLevel, VectorField};
use mpark::problems::{heat_operators, OdeProblem};
use mpark::stability::{
    mixed_model_radius, mixed_model_radius_dense, sensitivity_curve, stability_region, GridSpec, MixedModelSpec,
    StabilityError,
};
use mpark::tableau::{order_report, Method, MpTableau, TableauError};
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::args::*;
use crate::svg::{self, Axes, Series};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Tableau(#[from] TableauError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("run ended with status {status}: {reason}")]
    RunFailed { status: &'static str, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Header-first CSV table built on the csv writer.
struct Table(csv::Writer<Vec<u8>>);

impl Table {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        // writing into a Vec cannot fail
        w.write_record(header).expect("in-memory csv");
        Self(w)
    }

    fn row(&mut self, fields: &[String]) -> Result<(), csv::Error> {
        self.0.write_record(fields)
    }

    fn into_bytes(self) -> Result<Vec<u8>, CliError> {
        self.0.into_inner().map_err(|e| CliError::Config(format!("csv buffer: {e}")))
    }
}

impl CliError {
    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Tableau(_) => 2,
            CliError::Harness(HarnessError::InvalidSweep(_) | HarnessError::Tableau(_)) => 2,
            CliError::Integration(IntegrationError::StepCount { .. }) => 2,
            CliError::Stability(StabilityError::Grid(_)) => 2,
            _ => 1,
        }
    }
}

/// Resolved global options shared by every subcommand.
pub struct Context {
    pub out: PathBuf,
    pub name: String,
    pub seed: u64,
    pub verbose: u8,
    pub config: serde_json::Value,
}

impl Context {
    fn path(&self, ext: &str) -> PathBuf {
        self.out.join(format!("{}.{ext}", self.name))
    }

    fn write(&self, ext: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(ext);
        write_atomic(&path, bytes)?;
        if self.verbose > 0 {
            eprintln!("wrote {}", path.display());
        }
        Ok(path)
    }

    fn metadata(&self, command: &str, extra: serde_json::Value) -> Result<(), CliError> {
        let mut meta = RunMetadata::new(command, self.seed, self.config.clone());
        meta.extra = extra;
        meta.write(&self.path("meta.json"))?;
        Ok(())
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn dispatch(cmd: &Command, ctx: &Context) -> Result<(), CliError> {
    match cmd {
        Command::Run(a) => run(a, ctx),
        Command::Converge(a) => sweep(a, ctx, false),
        Command::Efficiency(a) => sweep(a, ctx, true),
        Command::StableDt(a) => stable_dt(a, ctx),
        Command::Stability(a) => stability(a, ctx),
        Command::MixedModel(a) => mixed_model(a, ctx),
        Command::Sensitivity(a) => sensitivity(a, ctx),
        Command::OrderCheck(a) => order_check(a, ctx),
    }
}

fn run(a: &RunArgs, ctx: &Context) -> Result<(), CliError> {
    if a.store_every == 0 {
        return Err(CliError::Config("--store-every must be at least 1".into()));
    }
    let problem = a.problem.spec().build();
    let tableau = a.method.spec().tableau()?;
    let mut cfg = IntegratorConfig::new(tableau, a.pair, a.dt, problem.t_final())?;
    cfg.store_every = Some(a.store_every);
    let traj = integrate(&problem, &cfg);
    let mut header = vec!["t".to_string()];
    header.extend((0..problem.dim()).map(|i| format!("u{i}")));
    let mut table = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (t, u) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![format!("{t:e}")];
        row.extend(u.iter().map(|v| format!("{:e}", v.to_f64())));
        table.row(&row)?;
    }
    ctx.write("csv", &table.into_bytes()?)?;
    let status = traj.status();
    ctx.metadata(
        "run",
        json!({
            "problem": problem.label(),
            "status": status.as_str(),
            "steps_completed": traj.steps_completed,
            "newton_iters_mean": traj.newton_iters_mean(),
            "max_stage_residual": traj.max_stage_residual,
        }),
    )?;
    println!(
        "{} {} c={} {} dt={}: {} after {} steps, newton iterations/solve {:.2}",
        problem.label(),
        cfg.tableau.name(),
        cfg.tableau.corrections(),
        a.pair,
        a.dt,
        status.as_str(),
        traj.steps_completed,
        traj.newton_iters_mean()
    );
    match traj.failure {
        None => Ok(()),
        Some(e) => Err(CliError::RunFailed { status: status.as_str(), reason: e.to_string() }),
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Sweep description from a TOML file or from the flags.
pub fn sweep_spec(a: &SweepArgs, efficiency: bool) -> Result<SweepSpec, CliError> {
    if let Some(path) = &a.config {
        let text = read_to_string(path)?;
        return toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
    }
    let dts = if a.dts.is_empty() { powers_of_two(a.pow2.0, a.pow2.1) } else { a.dts.clone() };
    let reference = if a.exact_reference {
        ReferenceSpec::Exact
    } else {
        ReferenceSpec::Rk4 { dt_ref: a.dt_ref, level: PrecisionLevel::Extended, self_check: a.reference_check }
    };
    Ok(SweepSpec {
        reference,
        repetitions: a.repetitions.unwrap_or(if efficiency { 3 } else { 1 }),
        timing_exclusive: a.timing_exclusive,
        ..SweepSpec::new(a.problem.spec(), a.method.spec(), a.pairs.clone(), dts)
    })
}

fn sweep(a: &SweepArgs, ctx: &Context, efficiency: bool) -> Result<(), CliError> {
    let spec = sweep_spec(a, efficiency)?;
    ctx.log(format!("sweeping {} cells", spec.pairs.len() * spec.dts.len()));
    let report = if efficiency { run_efficiency(&spec)? } else { run_convergence(&spec)? };
    ctx.write("csv", &harness::convergence_csv(&report.rows)?)?;
    let command = if efficiency { "efficiency" } else { "converge" };
    let summary = summarize(&report);
    let title = format!("{} {} c={}", report.problem, spec.method.method, spec.method.corrections);
    let series: Vec<Series> = spec
        .pairs
        .iter()
        .map(|&p| {
            let rows = report.rows.iter().filter(|r| r.pair == p && r.status == RunStatus::Ok);
            let points = if efficiency { rows.map(|r| (r.wall_time_s, r.error)).collect() } else { rows.map(|r| (r.dt, r.error)).collect() };
            Series { label: p.to_string(), points }
        })
        .collect();
    let axes = Axes {
        title: &title,
        x_label: if efficiency { "wall time (s)" } else { "dt" },
        y_label: "max-norm error at t_final",
        log_x: true,
        log_y: true,
    };
    ctx.write("svg", svg::line_plot(&axes, &series).as_bytes())?;
    ctx.metadata(
        command,
        json!({
            "sweep": spec,
            "reference_dt": report.reference_dt,
            "reference_norm": report.reference_norm,
            "reference_self_check_gap": report.reference_self_check_gap,
            "reference_consistent": report.reference_is_consistent(),
            "pairs": summary,
        }),
    )?;
    println!("{:<10} {:>12} {:>12} {:>12} {:>14} {:>8}", "pair", "dt", "error", "time (s)", "status", "newton");
    for r in &report.rows {
        println!(
            "{:<10} {:>12.4e} {:>12.4e} {:>12.4e} {:>14} {:>8.2}",
            r.pair.to_string(),
            r.dt,
            r.error,
            r.wall_time_s,
            r.status.as_str(),
            r.newton_iters_mean
        );
    }
    for s in summary {
        println!("{}", s);
    }
    Ok(())
}

fn summarize(report: &ConvergenceReport) -> Vec<serde_json::Value> {
    let design = report.spec.method.method.design_order();
    report
        .spec
        .pairs
        .iter()
        .map(|&p| {
            let pts = report.errors(p);
            json!({
                "pair": p,
                "observed_order": report.observed_order(p, None).ok(),
                "shape": classify_curve(&pts, design).ok(),
                "plateau_onset_dt": plateau_onset(&pts),
            })
        })
        .collect()
}

fn stable_dt(a: &StableDtArgs, ctx: &Context) -> Result<(), CliError> {
    let problem = a.problem.spec();
    let problem = &problem;
    let specs: Vec<LadderSpec> = a
        .corrections
        .iter()
        .flat_map(|&c| {
            a.pairs.iter().map(move |&pair| LadderSpec {
                problem: problem.clone(),
                method: MethodSpec::new(a.method, c),
                pair,
                dt_max: a.dt_max,
                levels: a.levels,
                exhaustive: a.exhaustive,
            })
        })
        .collect();
    for s in &specs {
        s.method.tableau()?;
    }
    let Some(first) = specs.first() else {
        return Err(CliError::Config("need at least one correction count and pair".into()));
    };
    ctx.log("computing ladder reference");
    let reference = ladder_reference(first)?;
    let rows: Vec<StableDtRow> =
        specs.par_iter().map(|s| find_largest_stable_dt(s, &reference)).collect::<Result<_, _>>()?;
    let mut table = Table::new(&["method", "corrections", "pair", "largest_stable_dt", "label", "rungs"]);
    for r in &rows {
        let rungs: Vec<String> =
            r.rungs.iter().map(|g| format!("{}:{}:{}", g.dt, g.status.as_str(), if g.stable { "stable" } else { "unstable" })).collect();
        table.row(&[
            r.method.clone(),
            r.corrections.to_string(),
            r.pair.to_string(),
            r.largest_stable_dt.map_or("none".into(), |d| d.to_string()),
            r.label(),
            rungs.join(";"),
        ])?;
        println!("{} c={} {}: {}", r.method, r.corrections, r.pair, r.label());
    }
    ctx.write("csv", &table.into_bytes()?)?;
    ctx.metadata("stable-dt", json!({ "ladders": specs, "rows": rows }))
}

fn stability(a: &StabilityArgs, ctx: &Context) -> Result<(), CliError> {
    let t = a.method.spec().tableau()?;
    let spec = GridSpec {
        re_range: (a.window.0, a.window.1),
        im_range: (a.window.2, a.window.3),
        resolution: a.res,
        eps_tilde: a.eps_tilde,
        samples: a.samples,
        seed: ctx.seed,
    };
    let grid = stability_region(&t, &spec)?;
    let mut table = Table::new(&["re", "im", "stable"]);
    for (j, row) in grid.cells.iter().enumerate() {
        for (i, &c) in row.iter().enumerate() {
            let z = spec.point(i, j);
            table.row(&[format!("{}", z.re), format!("{}", z.im), (c as u8).to_string()])?;
        }
    }
    ctx.write("csv", &table.into_bytes()?)?;
    if a.svg {
        let title = format!("{} c={} eps_tilde={:e}", t.name(), t.corrections(), a.eps_tilde);
        ctx.write("svg", svg::stability_raster(&grid, &title).as_bytes())?;
    }
    let fraction = grid.stable_fraction();
    println!("{} c={} eps_tilde={:e}: stable fraction {:.6}", t.name(), t.corrections(), a.eps_tilde, fraction);
    ctx.metadata("stability", json!({ "grid": spec, "stable_fraction": fraction }))
}

fn mixed_model(a: &MixedModelArgs, ctx: &Context) -> Result<(), CliError> {
    if a.nx < 4 || !a.nx.is_multiple_of(2) {
        return Err(CliError::Config("--nx must be even and at least 4".into()));
    }
    let ops = heat_operators(a.nx);
    let cfls = sweep_points(a.cfl_sweep);
    let header: &[&str] = if a.dense_check { &["cfl", "rho", "rho_dense"] } else { &["cfl", "rho"] };
    let mut table = Table::new(header);
    let mut points = Vec::new();
    for &cfl in &cfls {
        let spec = MixedModelSpec::new(ops.clone(), a.corrections, cfl).with_operators(a.explicit.into(), a.implicit.into());
        let rho = mixed_model_radius(&spec);
        let mut row = vec![format!("{cfl}"), format!("{rho:e}")];
        if a.dense_check {
            row.push(format!("{:e}", mixed_model_radius_dense(&spec)));
        }
        table.row(&row)?;
        println!("cfl {cfl:.4}: rho {rho:.12}");
        points.push((cfl, rho));
    }
    ctx.write("csv", &table.into_bytes()?)?;
    let title = format!("nx={} c={} explicit {:?} implicit {:?}", a.nx, a.corrections, a.explicit, a.implicit);
    let axes = Axes { title: &title, x_label: "dt / dx^2", y_label: "spectral radius", log_x: false, log_y: false };
    ctx.write("svg", svg::line_plot(&axes, &[Series { label: "rho(P)".into(), points }]).as_bytes())?;
    ctx.metadata("mixed-model", json!({ "nx": a.nx, "dx": ops.dx }))
}

/// Every requested (family, corrections) combination the family supports.
fn tableaus(methods: &[Method], corrections: &[usize]) -> Vec<MpTableau> {
    methods.iter().flat_map(|m| corrections.iter().filter_map(move |&c| m.tableau(c).ok())).collect()
}

fn sensitivity(a: &SensitivityArgs, ctx: &Context) -> Result<(), CliError> {
    if a.points < 2 {
        return Err(CliError::Config("--points must be at least 2".into()));
    }
    let ts = tableaus(&a.methods, &a.corrections);
    if ts.is_empty() {
        return Err(CliError::Config("no method accepts the requested correction counts".into()));
    }
    let (z0, z1) = a.z;
    let zs: Vec<f64> = (0..a.points).map(|k| z0 + (z1 - z0) * k as f64 / (a.points - 1) as f64).collect();
    let curves: Vec<_> = ts.iter().map(|t| sensitivity_curve(t, &zs)).collect();
    let labels: Vec<String> = curves.iter().map(|c| c.label.replace(' ', "_")).collect();
    let mut header = vec!["z"];
    header.extend(labels.iter().map(String::as_str));
    let mut table = Table::new(&header);
    for (k, z) in zs.iter().enumerate() {
        let mut row = vec![format!("{z}")];
        row.extend(curves.iter().map(|c| format!("{:e}", c.metric[k])));
        table.row(&row)?;
    }
    ctx.write("csv", &table.into_bytes()?)?;
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series { label: c.label.clone(), points: c.z_values.iter().copied().zip(c.metric.iter().copied()).collect() })
        .collect();
    let axes = Axes { title: "roundoff sensitivity", x_label: "z", y_label: "|Psi| A_eps e", log_x: false, log_y: true };
    ctx.write("svg", svg::line_plot(&axes, &series).as_bytes())?;
    for c in &curves {
        println!("{}: metric at z={} is {:e}", c.label, zs[0], c.metric[0]);
    }
    ctx.metadata("sensitivity", json!({ "labels": labels }))
}

fn order_check(a: &OrderCheckArgs, ctx: &Context) -> Result<(), CliError> {
    let t = match &a.tableau {
        Some(path) => MpTableau::from_text(&read_to_string(path)?)?,
        None => a.method.spec().tableau()?,
    };
    let report = order_report(&t);
    print!("{report}");
    ctx.write("json", serde_json::to_string_pretty(&report)?.as_bytes())?;
    ctx.metadata("order-check", json!({ "max_scheme_residual": report.max_scheme_residual(t.design_order()) }))
}
