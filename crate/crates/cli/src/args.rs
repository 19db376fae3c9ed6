//! Command-line surface and value parsers.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpark::harness::{MethodSpec, ProblemSpec};
use mpark::precision::PrecisionPair;
use mpark::problems::HeatOperator;
use mpark::tableau::Method;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[command(name = "mpark", version, about = "Mixed-precision additive Runge-Kutta experiments")]
pub struct Cli {
    /// Seed for every stochastic component.
    #[arg(long, global = true, env = "MPARK_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel sweeps and scans (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory receiving CSV, SVG and metadata files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Base name of the output files (default: the subcommand name).
    #[arg(long, global = true)]
    pub name: Option<String>,
    /// Print progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Command {
    /// Integrate one problem and write the trajectory.
    Run(RunArgs),
    /// Error against a reference over a dt sweep.
    Converge(SweepArgs),
    /// Error against median wall time over a dt sweep.
    Efficiency(SweepArgs),
    /// Largest stable dt on a descending power-of-two ladder.
    StableDt(StableDtArgs),
    /// Linear stability region of the perturbed stability function.
    Stability(StabilityArgs),
    /// Spectral radius of the mixed-model heat step against CFL.
    MixedModel(MixedModelArgs),
    /// Roundoff sensitivity |Psi| A_eps e over real z.
    Sensitivity(SensitivityArgs),
    /// Order-condition and perturbation residuals of a tableau.
    OrderCheck(OrderCheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Run(_) => "run",
            Command::Converge(_) => "converge",
            Command::Efficiency(_) => "efficiency",
            Command::StableDt(_) => "stable-dt",
            Command::Stability(_) => "stability",
            Command::MixedModel(_) => "mixed-model",
            Command::Sensitivity(_) => "sensitivity",
            Command::OrderCheck(_) => "order-check",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Vdp,
    Burgers,
    Dahlquist,
    Heat,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorArg {
    Centered,
    Spectral,
}

impl From<OperatorArg> for HeatOperator {
    fn from(o: OperatorArg) -> Self {
        match o {
            OperatorArg::Centered => HeatOperator::Centered,
            OperatorArg::Spectral => HeatOperator::Spectral,
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value = "vdp")]
    pub problem: ProblemKind,
    /// Van der Pol stiffness.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Grid size (default 200 for burgers, 64 for heat).
    #[arg(long)]
    pub nx: Option<usize>,
    /// Dahlquist eigenvalue, real part.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub lambda: f64,
    /// Dahlquist eigenvalue, imaginary part.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lambda_im: f64,
    /// Heat-equation differentiation matrix.
    #[arg(long, value_enum, default_value = "spectral")]
    pub operator: OperatorArg,
}

impl ProblemArgs {
    pub fn spec(&self) -> ProblemSpec {
        match self.problem {
            ProblemKind::Vdp => ProblemSpec::VanDerPol { alpha: self.alpha },
            ProblemKind::Burgers => ProblemSpec::Burgers { nx: self.nx.unwrap_or(200) },
            ProblemKind::Dahlquist => ProblemSpec::Dahlquist { re: self.lambda, im: self.lambda_im },
            ProblemKind::Heat => ProblemSpec::Heat { nx: self.nx.unwrap_or(64), operator: self.operator.into() },
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodArgs {
    #[arg(long, value_parser = parse_method, default_value = "imr")]
    pub method: Method,
    /// Explicit high-precision corrections after each implicit stage.
    #[arg(long, default_value_t = 0)]
    pub corrections: usize,
}

impl MethodArgs {
    pub fn spec(&self) -> MethodSpec {
        MethodSpec::new(self.method, self.corrections)
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_parser = parse_pair, default_value = "f64/f64")]
    pub pair: PrecisionPair,
    /// Step size: decimal, fraction (1/320) or power of two (2^-6).
    #[arg(long, value_parser = parse_real)]
    pub dt: f64,
    /// Keep every k-th state in the written trajectory.
    #[arg(long, default_value_t = 1)]
    pub store_every: usize,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepArgs {
    /// TOML sweep description; replaces the problem, method and dt flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Comma-separated precision pairs.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair, default_value = "f64/f64")]
    pub pairs: Vec<PrecisionPair>,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',', value_parser = parse_real, conflicts_with = "pow2")]
    pub dts: Vec<f64>,
    /// Step sizes 2^-a .. 2^-b, written `a:b`.
    #[arg(long, value_parser = parse_pow2, default_value = "3:10")]
    pub pow2: (i32, i32),
    /// Reference RK4 step (default: smallest dt / 20).
    #[arg(long, value_parser = parse_real)]
    pub dt_ref: Option<f64>,
    /// Use the problem's closed-form solution as reference.
    #[arg(long)]
    pub exact_reference: bool,
    /// Also compute the reference at dt_ref / 2 and record the gap.
    #[arg(long)]
    pub reference_check: bool,
    /// Timed repetitions per cell (efficiency needs at least 3).
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Run cells one at a time for undisturbed timings.
    #[arg(long)]
    pub timing_exclusive: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableDtArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_parser = parse_method, default_value = "sdirk")]
    pub method: Method,
    /// Comma-separated correction counts.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub corrections: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_pair, default_value = "f64/f32,f64/f16")]
    pub pairs: Vec<PrecisionPair>,
    #[arg(long, value_parser = parse_real, default_value = "0.05")]
    pub dt_max: f64,
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
    /// Try every rung instead of stopping at the first stable one.
    #[arg(long)]
    pub exhaustive: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_parser = parse_real, default_value = "0")]
    pub eps_tilde: f64,
    /// `re_min:re_max:im_min:im_max`.
    #[arg(long, value_parser = parse_window, default_value = "-40:5:-20:20", allow_hyphen_values = true)]
    pub window: (f64, f64, f64, f64),
    /// `NXxNY` cells.
    #[arg(long, value_parser = parse_resolution, default_value = "400x400")]
    pub res: (usize, usize),
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    /// Also write an SVG raster of the stable cells.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedModelArgs {
    #[arg(long, default_value_t = 64)]
    pub nx: usize,
    #[arg(long, default_value_t = 0)]
    pub corrections: usize,
    /// `start:stop:step`.
    #[arg(long, value_parser = parse_sweep, default_value = "0.05:1.0:0.05")]
    pub cfl_sweep: (f64, f64, f64),
    /// Operator in the explicit role.
    #[arg(long, value_enum, default_value = "spectral")]
    pub explicit: OperatorArg,
    /// Operator in the implicit role.
    #[arg(long, value_enum, default_value = "centered")]
    pub implicit: OperatorArg,
    /// Also compute the radius from dense eigenvalues.
    #[arg(long)]
    pub dense_check: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "imr,sdirk,novela")]
    pub methods: Vec<Method>,
    /// Correction counts to include for families that accept them.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub corrections: Vec<usize>,
    /// `z_min:z_max`.
    #[arg(long, value_parser = parse_interval, default_value = "-10000:0", allow_hyphen_values = true)]
    pub z: (f64, f64),
    #[arg(long, default_value_t = 1001)]
    pub points: usize,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCheckArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    /// Check a tableau from a text file instead of a shipped method.
    #[arg(long)]
    pub tableau: Option<PathBuf>,
}

pub fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e| format!("{e}"))
}

pub fn parse_pair(s: &str) -> Result<PrecisionPair, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Decimal, `a/b` fraction or `2^k` power.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let bad = || format!("not a number: {s:?}");
    let v = if let Some((n, d)) = s.split_once('/') {
        let n: f64 = n.trim().parse().map_err(|_| bad())?;
        let d: f64 = d.trim().parse().map_err(|_| bad())?;
        n / d
    } else if let Some((b, e)) = s.split_once('^') {
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        let e: i32 = e.trim().parse().map_err(|_| bad())?;
        b.powi(e)
    } else {
        s.parse().map_err(|_| bad())?
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn parse_fields<const N: usize>(s: &str, what: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != N {
        return Err(format!("expected {what}, got {s:?}"));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_real(p)?;
    }
    Ok(out)
}

pub fn parse_pow2(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got {s:?}"))?;
    let a: i32 = a.trim().parse().map_err(|_| format!("bad exponent {a:?}"))?;
    let b: i32 = b.trim().parse().map_err(|_| format!("bad exponent {b:?}"))?;
    if a > b {
        return Err(format!("exponent range {a}:{b} is empty"));
    }
    Ok((a, b))
}

pub fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let [a, b] = parse_fields::<2>(s, "min:max")?;
    if a >= b {
        return Err(format!("interval {s:?} is empty"));
    }
    Ok((a, b))
}

pub fn parse_window(s: &str) -> Result<(f64, f64, f64, f64), String> {
    let [a, b, c, d] = parse_fields::<4>(s, "re_min:re_max:im_min:im_max")?;
    if a >= b || c >= d {
        return Err(format!("window {s:?} is empty"));
    }
    Ok((a, b, c, d))
}

pub fn parse_sweep(s: &str) -> Result<(f64, f64, f64), String> {
    let [a, b, step] = parse_fields::<3>(s, "start:stop:step")?;
    if !(step > 0.0) || a > b || a <= 0.0 {
        return Err(format!("sweep {s:?} needs 0 < start <= stop and step > 0"));
    }
    Ok((a, b, step))
}

pub fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("expected NXxNY, got {s:?}"))?;
    let a = a.trim().parse().map_err(|_| format!("bad resolution {s:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad resolution {s:?}"))?;
    Ok((a, b))
}

/// Points `start, start + step, ...` up to `stop` (inclusive within rounding).
pub fn sweep_points((start, stop, step): (f64, f64, f64)) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}
