//! Convergence sweeps, efficiency studies and stable time-step searches.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{integrate, rk4_reference, steps_for, IntegrationError, IntegratorConfig, RunStatus};
use crate::precision::{DoubleDouble, PrecisionLevel, PrecisionPair};
use crate::problems::{dahlquist_complex, heat, van_der_pol, viscous_burgers, HeatOperator, OdeProblem, Problem};
use crate::tableau::{Method, MpTableau, TableauError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Tableau(#[from] TableauError),
    #[error("reference solution failed: {0}")]
    Reference(IntegrationError),
    #[error("observed order needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Serializable description of a test problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    VanDerPol { alpha: f64 },
    Burgers { nx: usize },
    Dahlquist { re: f64, #[serde(default)] im: f64 },
    Heat { nx: usize, operator: HeatOperator },
}

impl ProblemSpec {
    pub fn build(&self) -> Problem {
        match *self {
            ProblemSpec::VanDerPol { alpha } => van_der_pol(alpha).into(),
            ProblemSpec::Burgers { nx } => viscous_burgers(nx).into(),
            ProblemSpec::Dahlquist { re, im } if im == 0.0 => crate::problems::dahlquist(re).into(),
            ProblemSpec::Dahlquist { re, im } => dahlquist_complex(re, im).into(),
            ProblemSpec::Heat { nx, operator } => heat(nx, operator).into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default)]
    pub corrections: usize,
}

impl MethodSpec {
    pub fn new(method: Method, corrections: usize) -> Self {
        Self { method, corrections }
    }

    pub fn tableau(&self) -> Result<MpTableau, TableauError> {
        self.method.tableau(self.corrections)
    }
}

/// How the reference solution is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSpec {
    /// Classical RK4; `dt_ref` defaults to `min(dt) / 20`.
    Rk4 {
        #[serde(default)]
        dt_ref: Option<f64>,
        #[serde(default = "extended")]
        level: PrecisionLevel,
        /// Also integrate at `dt_ref / 2` and record the disagreement.
        #[serde(default)]
        self_check: bool,
    },
    /// The problem's closed-form solution.
    Exact,
}

fn extended() -> PrecisionLevel {
    PrecisionLevel::Extended
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec::Rk4 { dt_ref: None, level: PrecisionLevel::Extended, self_check: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub problem: ProblemSpec,
    pub method: MethodSpec,
    pub pairs: Vec<PrecisionPair>,
    pub dts: Vec<f64>,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Run cells one at a time so wall times are not skewed by contention.
    #[serde(default)]
    pub timing_exclusive: bool,
}

fn one() -> usize {
    1
}

impl SweepSpec {
    pub fn new(problem: ProblemSpec, method: MethodSpec, pairs: Vec<PrecisionPair>, dts: Vec<f64>) -> Self {
        Self { problem, method, pairs, dts, reference: ReferenceSpec::default(), repetitions: 1, timing_exclusive: false }
    }

    fn min_dt(&self) -> f64 {
        self.dts.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn dt_ref(&self) -> Option<f64> {
        match self.reference {
            ReferenceSpec::Rk4 { dt_ref, .. } => Some(dt_ref.unwrap_or(self.min_dt() / 20.0)),
            ReferenceSpec::Exact => None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSweep(m));
        if self.dts.is_empty() || self.pairs.is_empty() {
            return bad("need at least one dt and one precision pair".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        let t_final = self.problem.build().t_final();
        for &dt in &self.dts {
            if steps_for(dt, t_final).is_err() {
                return bad(format!("dt = {dt} does not divide t_final = {t_final}"));
            }
        }
        if let Some(dt_ref) = self.dt_ref() {
            if dt_ref > self.min_dt() / 20.0 * (1.0 + 1e-12) {
                return bad(format!("dt_ref = {dt_ref} exceeds min(dt)/20 = {}", self.min_dt() / 20.0));
            }
            if steps_for(dt_ref, t_final).is_err() {
                return bad(format!("dt_ref = {dt_ref} does not divide t_final = {t_final}"));
            }
        }
        self.method.tableau()?;
        Ok(())
    }
}

/// `2^-from, 2^-(from+1), ..., 2^-to`.
pub fn powers_of_two(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

/// Max-norm difference computed in double-double.
pub fn error_ext(a: &[DoubleDouble], b: &[DoubleDouble]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x - *y).abs().to_f64()).fold(0.0, f64::max)
}

/// Max-norm of a state.
pub fn norm_ext(a: &[DoubleDouble]) -> f64 {
    a.iter().map(|x| x.abs().to_f64()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub state: Vec<DoubleDouble>,
    pub dt_ref: Option<f64>,
    /// Max-norm gap between references at `dt_ref` and `dt_ref / 2`.
    pub self_check_gap: Option<f64>,
}

pub fn reference_solution(problem: &Problem, spec: &ReferenceSpec, dt_ref: f64) -> Result<Reference, HarnessError> {
    match *spec {
        ReferenceSpec::Exact => {
            let exact = problem
                .exact(problem.t_final())
                .ok_or_else(|| HarnessError::InvalidSweep(format!("{} has no closed form", problem.label())))?;
            Ok(Reference { state: exact.into_iter().map(DoubleDouble::from_f64).collect(), dt_ref: None, self_check_gap: None })
        }
        ReferenceSpec::Rk4 { level, self_check, .. } => {
            let state = rk4_reference(problem, dt_ref, level).map_err(HarnessError::Reference)?;
            let self_check_gap = if self_check {
                let fine = rk4_reference(problem, dt_ref / 2.0, level).map_err(HarnessError::Reference)?;
                Some(error_ext(&state, &fine))
            } else {
                None
            };
            Ok(Reference { state, dt_ref: Some(dt_ref), self_check_gap })
        }
    }
}

/// One (pair, dt) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub method: String,
    pub corrections: usize,
    pub pair: PrecisionPair,
    pub dt: f64,
    /// `NaN` when the run did not complete.
    pub error: f64,
    pub wall_time_s: f64,
    pub status: RunStatus,
    pub newton_iters_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub spec: SweepSpec,
    pub reference_dt: Option<f64>,
    pub reference_norm: f64,
    pub reference_self_check_gap: Option<f64>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// `(dt, error)` of completed runs for `pair`, largest dt first.
    pub fn errors(&self, pair: PrecisionPair) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.pair == pair && r.status == RunStatus::Ok)
            .map(|r| (r.dt, r.error))
            .collect();
        v.sort_by(|a, b| b.0.total_cmp(&a.0));
        v
    }

    pub fn row(&self, pair: PrecisionPair, dt: f64) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.pair == pair && r.dt == dt)
    }

    pub fn observed_order(&self, pair: PrecisionPair, window: Option<(f64, f64)>) -> Result<f64, HarnessError> {
        observed_order(&self.errors(pair), window)
    }

    /// Whether the reference disagreement is below 1% of the smallest
    /// measured error; `None` without a self-check.
    pub fn reference_is_consistent(&self) -> Option<bool> {
        let gap = self.reference_self_check_gap?;
        let smallest = self.rows.iter().filter(|r| r.error > 0.0).map(|r| r.error).fold(f64::INFINITY, f64::min);
        Some(gap <= 1e-2 * smallest)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Cell {
    pair: PrecisionPair,
    dt: f64,
}

fn run_cell(
    problem: &Problem,
    tableau: &MpTableau,
    cell: &Cell,
    reference: &[DoubleDouble],
    repetitions: usize,
    warm_up: bool,
) -> ConvergenceRow {
    let cfg = IntegratorConfig::new(tableau.clone(), cell.pair, cell.dt, problem.t_final())
        .expect("sweep dt validated against t_final");
    if warm_up {
        integrate(problem, &cfg);
    }
    let mut times = Vec::with_capacity(repetitions);
    let mut last = None;
    for _ in 0..repetitions {
        let start = Instant::now();
        let traj = integrate(problem, &cfg);
        times.push(start.elapsed().as_secs_f64());
        last = Some(traj);
    }
    let traj = last.expect("at least one repetition");
    let status = traj.status();
    let error = if status == RunStatus::Ok { error_ext(traj.final_state(), reference) } else { f64::NAN };
    ConvergenceRow {
        method: tableau.name().to_string(),
        corrections: tableau.corrections(),
        pair: cell.pair,
        dt: cell.dt,
        error,
        wall_time_s: median(times),
        status,
        newton_iters_mean: traj.newton_iters_mean(),
    }
}

fn sweep(spec: &SweepSpec, warm_up: bool, exclusive: bool) -> Result<ConvergenceReport, HarnessError> {
    spec.validate()?;
    let problem = spec.problem.build();
    let tableau = spec.method.tableau()?;
    let reference = reference_solution(&problem, &spec.reference, spec.dt_ref().unwrap_or(0.0))?;
    let cells: Vec<Cell> =
        spec.pairs.iter().flat_map(|&pair| spec.dts.iter().map(move |&dt| Cell { pair, dt })).collect();
    let run = |c: &Cell| run_cell(&problem, &tableau, c, &reference.state, spec.repetitions, warm_up);
    let rows = if exclusive { cells.iter().map(run).collect() } else { cells.par_iter().map(run).collect() };
    Ok(ConvergenceReport {
        problem: problem.label(),
        spec: spec.clone(),
        reference_dt: reference.dt_ref,
        reference_norm: norm_ext(&reference.state),
        reference_self_check_gap: reference.self_check_gap,
        rows,
    })
}

/// Integrates every (pair, dt) cell and measures the max-norm error at
/// `t_final` against the reference. Failed runs are recorded, never fatal.
pub fn run_convergence(spec: &SweepSpec) -> Result<ConvergenceReport, HarnessError> {
    sweep(spec, false, spec.timing_exclusive)
}

/// As [`run_convergence`], but each cell gets an untimed warm-up run and
/// cells run one at a time. Needs at least 3 repetitions.
pub fn run_efficiency(spec: &SweepSpec) -> Result<ConvergenceReport, HarnessError> {
    if spec.repetitions < 3 {
        return Err(HarnessError::InvalidSweep("efficiency runs need at least 3 repetitions".into()));
    }
    sweep(spec, true, true)
}

/// Least-squares slope of `log(error)` against `log(dt)` over the points
/// with `lo <= dt <= hi`. Returns `+inf` if any error is zero.
pub fn observed_order(points: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<f64, HarnessError> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(dt, _)| window.is_none_or(|(lo, hi)| *dt >= lo && *dt <= hi))
        .collect();
    if pts.len() < 2 {
        return Err(HarnessError::TooFewPoints(pts.len()));
    }
    if pts.iter().any(|&(_, e)| e == 0.0) {
        return Ok(f64::INFINITY);
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::InvalidSweep("all dt values coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Slope below which an error curve counts as flat.
pub const FLAT_SLOPE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveShape {
    /// Converges at the start of the sweep and flattens at the end.
    Plateau,
    /// Still converging near the design order at the end of the sweep.
    Converging,
    Irregular,
}

fn sorted_desc(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut v = points.to_vec();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v
}

/// Plateau iff the slope over the last three points is below
/// [`FLAT_SLOPE`] while the slope over the first three is at least
/// `design_order - 0.5`.
pub fn classify_curve(points: &[(f64, f64)], design_order: u32) -> Result<CurveShape, HarnessError> {
    let v = sorted_desc(points);
    if v.len() < 3 {
        return Err(HarnessError::TooFewPoints(v.len()));
    }
    let target = design_order as f64 - 0.5;
    let first = observed_order(&v[..3], None)?;
    let last = observed_order(&v[v.len() - 3..], None)?;
    Ok(if last < FLAT_SLOPE && first >= target {
        CurveShape::Plateau
    } else if last >= target {
        CurveShape::Converging
    } else {
        CurveShape::Irregular
    })
}

/// Largest dt from which every remaining window of three consecutive
/// points has slope below [`FLAT_SLOPE`]: refining past it no longer
/// reduces the error. `None` if the final window still converges.
pub fn plateau_onset(points: &[(f64, f64)]) -> Option<f64> {
    let v = sorted_desc(points);
    if v.len() < 3 {
        return None;
    }
    let mut onset = None;
    for i in (0..=v.len() - 3).rev() {
        match observed_order(&v[i..i + 3], None) {
            Ok(s) if s < FLAT_SLOPE => onset = Some(v[i].0),
            _ => break,
        }
    }
    onset
}

/// Wall time at `target` error, interpolated linearly in log-log space
/// between the two bracketing completed runs.
pub fn time_at_error(rows: &[ConvergenceRow], target: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.status == RunStatus::Ok && r.error > 0.0)
        .map(|r| (r.error.ln(), r.wall_time_s.ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t = target.ln();
    pts.windows(2).find_map(|w| {
        let ((e0, w0), (e1, w1)) = (w[0], w[1]);
        (e0 <= t && t <= e1).then(|| if e1 == e0 { w0.exp() } else { (w0 + (w1 - w0) * (t - e0) / (e1 - e0)).exp() })
    })
}

/// A blown-up run is one whose final error exceeds this multiple of the
/// reference max-norm.
pub const BLOW_UP_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub problem: ProblemSpec,
    pub method: MethodSpec,
    pub pair: PrecisionPair,
    pub dt_max: f64,
    pub levels: usize,
    /// Try every rung instead of stopping at the first stable one.
    #[serde(default)]
    pub exhaustive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub dt: f64,
    pub status: RunStatus,
    pub error: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableDtRow {
    pub method: String,
    pub corrections: usize,
    pub pair: PrecisionPair,
    pub largest_stable_dt: Option<f64>,
    pub rungs: Vec<Rung>,
}

impl StableDtRow {
    /// Whether the largest rung was stable.
    pub fn stable_at_dt_max(&self) -> bool {
        self.rungs.first().is_some_and(|r| r.stable)
    }

    pub fn all_tried_stable(&self) -> bool {
        self.rungs.iter().all(|r| r.stable)
    }

    /// `"all"` when the largest rung is stable, the dt otherwise, `"none"`
    /// when no rung is.
    pub fn label(&self) -> String {
        match self.largest_stable_dt {
            _ if self.stable_at_dt_max() => "all".into(),
            Some(dt) => format!("{dt}"),
            None => "none".into(),
        }
    }
}

/// Walks `dt_max, dt_max/2, ...` (`levels` rungs) until a run completes
/// with final error at most [`BLOW_UP_FACTOR`] times `||reference||`.
pub fn find_largest_stable_dt(spec: &LadderSpec, reference: &[DoubleDouble]) -> Result<StableDtRow, HarnessError> {
    if !(spec.dt_max > 0.0) || spec.levels == 0 {
        return Err(HarnessError::InvalidSweep("ladder needs dt_max > 0 and at least one level".into()));
    }
    let problem = spec.problem.build();
    let tableau = spec.method.tableau()?;
    let threshold = BLOW_UP_FACTOR * norm_ext(reference);
    let mut rungs = Vec::new();
    let mut largest = None;
    for k in 0..spec.levels {
        let dt = spec.dt_max / 2f64.powi(k as i32);
        let cfg = IntegratorConfig::new(tableau.clone(), spec.pair, dt, problem.t_final())
            .map_err(|e| HarnessError::InvalidSweep(e.to_string()))?;
        let traj = integrate(&problem, &cfg);
        let status = traj.status();
        let error = if status == RunStatus::Ok { error_ext(traj.final_state(), reference) } else { f64::NAN };
        let stable = status == RunStatus::Ok && error <= threshold;
        rungs.push(Rung { dt, status, error, stable });
        if stable && largest.is_none() {
            largest = Some(dt);
            if !spec.exhaustive {
                break;
            }
        }
    }
    Ok(StableDtRow {
        method: tableau.name().into(),
        corrections: tableau.corrections(),
        pair: spec.pair,
        largest_stable_dt: largest,
        rungs,
    })
}

/// Ladder reference: RK4 at Extended with `dt_ref = smallest rung / 20`.
pub fn ladder_reference(spec: &LadderSpec) -> Result<Vec<DoubleDouble>, HarnessError> {
    let dt_min = spec.dt_max / 2f64.powi(spec.levels.saturating_sub(1) as i32);
    rk4_reference(&spec.problem.build(), dt_min / 20.0, PrecisionLevel::Extended).map_err(HarnessError::Reference)
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub const CSV_COLUMNS: [&str; 8] =
    ["method", "corrections", "pair", "dt", "error", "wall_time_s", "status", "newton_iters_mean"];

pub fn convergence_csv(rows: &[ConvergenceRow]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.corrections.to_string(),
            r.pair.to_string(),
            format!("{:e}", r.dt),
            format!("{:e}", r.error),
            format!("{:e}", r.wall_time_s),
            r.status.as_str().to_string(),
            format!("{}", r.newton_iters_mean),
        ])?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<(), HarnessError> {
    write_atomic(path, &convergence_csv(rows)?)
}

/// Run metadata: the resolved configuration plus the norms, thresholds and
/// unit roundoffs the numbers depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub error_norm: String,
    pub blow_up_factor: f64,
    pub unit_roundoffs: Vec<(PrecisionLevel, f64)>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl RunMetadata {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            seed,
            config,
            error_norm: "max norm at t_final, differenced in double-double".into(),
            blow_up_factor: BLOW_UP_FACTOR,
            unit_roundoffs: PrecisionLevel::ALL.iter().map(|&l| (l, l.unit_roundoff())).collect(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}
