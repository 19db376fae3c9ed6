//! Time stepping of MP-ARK methods under a (high, low) precision pair.
//!
//! Stages with a nonzero `A_eps` diagonal are solved by Newton at the low
//! precision and promoted exactly to the high precision. Explicit stages,
//! stages with a nonzero `A` diagonal and the update run at the high
//! precision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::newton::{solve_stage_in, NewtonConfig, NewtonError, Workspace};
use crate::precision::{
    dispatch_level, dispatch_pair, norm_inf, DoubleDouble, LevelVisitor, PairVisitor, PrecisionLevel, PrecisionPair,
    Real,
};
use crate::problems::OdeProblem;
use crate::tableau::MpTableau;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("step {step}, stage {stage}: {source}")]
    Newton { step: usize, stage: usize, source: NewtonError },
    #[error("non-finite state at step {step}")]
    Overflow { step: usize },
    #[error("dt = {dt} does not divide t_final = {t_final}")]
    StepCount { dt: f64, t_final: f64 },
}

impl IntegrationError {
    /// Whether the failure is an overflow rather than a solver failure.
    pub fn is_overflow(&self) -> bool {
        matches!(
            self,
            IntegrationError::Overflow { .. } | IntegrationError::Newton { source: NewtonError::RangeFault(_), .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub tableau: MpTableau,
    pub pair: PrecisionPair,
    pub dt: f64,
    pub steps: usize,
    pub newton_max_iters: usize,
    pub newton_tol_factor: f64,
    /// Keep every `k`-th state in the trajectory (the final state is
    /// always kept); `None` keeps only the initial and final states.
    pub store_every: Option<usize>,
}

impl IntegratorConfig {
    /// Derives the step count as `round(t_final / dt)`.
    pub fn new(tableau: MpTableau, pair: PrecisionPair, dt: f64, t_final: f64) -> Result<Self, IntegrationError> {
        let steps = steps_for(dt, t_final)?;
        Ok(Self {
            tableau,
            pair,
            dt,
            steps,
            newton_max_iters: NewtonConfig::DEFAULT_MAX_ITERS,
            newton_tol_factor: NewtonConfig::DEFAULT_TOL_FACTOR,
            store_every: None,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.steps as f64
    }

    fn newton(&self, level: PrecisionLevel) -> NewtonConfig {
        NewtonConfig { level, max_iters: self.newton_max_iters, tol_factor: self.newton_tol_factor }
    }
}

/// `round(t_final / dt)`, checking that `dt` divides `t_final`.
pub fn steps_for(dt: f64, t_final: f64) -> Result<usize, IntegrationError> {
    let err = IntegrationError::StepCount { dt, t_final };
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(err);
    }
    let steps = (t_final / dt).round();
    if steps < 1.0 || ((steps * dt - t_final).abs() > 1e-9 * t_final.abs().max(dt)) {
        return Err(err);
    }
    Ok(steps as usize)
}

/// An additive forcing `q` in the equation of one low-precision stage:
/// `y = base + dt A_eps_ii F_eps(y) + q`, applied at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct StageInjection {
    pub stage: usize,
    pub forcing: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    NotConverged,
    Overflow,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::NotConverged => "not_converged",
            RunStatus::Overflow => "overflow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// States promoted exactly from the high precision.
    pub states: Vec<Vec<DoubleDouble>>,
    /// Newton iterations summed over the implicit stages of each step.
    pub newton_iterations: Vec<u32>,
    pub newton_solves: usize,
    pub max_stage_residual: f64,
    pub steps_completed: usize,
    pub failure: Option<IntegrationError>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[DoubleDouble] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_state_f64(&self) -> Vec<f64> {
        self.final_state().iter().map(|v| v.to_f64()).collect()
    }

    pub fn status(&self) -> RunStatus {
        match &self.failure {
            None => RunStatus::Ok,
            Some(e) if e.is_overflow() => RunStatus::Overflow,
            Some(_) => RunStatus::NotConverged,
        }
    }

    /// Mean Newton iterations per implicit stage solve.
    pub fn newton_iters_mean(&self) -> f64 {
        if self.newton_solves == 0 {
            0.0
        } else {
            self.newton_iterations.iter().map(|&v| v as f64).sum::<f64>() / self.newton_solves as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StageKind {
    Explicit,
    LowImplicit,
    HighImplicit,
}

/// One-step state machine for a tableau at levels `H` (high) and `L` (low).
pub struct Stepper<'a, H: Real, L: Real, P: OdeProblem> {
    problem: &'a P,
    kinds: Vec<StageKind>,
    a: Vec<Vec<H>>,
    a_eps: Vec<Vec<H>>,
    b: Vec<H>,
    b_eps: Vec<H>,
    dt: H,
    /// `dt * A_eps_ii` rounded to `L`, per stage.
    h_low: Vec<L>,
    /// `dt * A_ii`, per stage.
    h_high: Vec<H>,
    needs_f: Vec<bool>,
    needs_f_eps: Vec<bool>,
    low_cfg: NewtonConfig,
    high_cfg: NewtonConfig,
    ys: Vec<Vec<H>>,
    fs: Vec<Vec<H>>,
    f_eps: Vec<Vec<H>>,
    acc: Vec<H>,
    base_low: Vec<L>,
    y_low: Vec<L>,
    f_low: Vec<L>,
    ws_low: Workspace<L>,
    ws_high: Workspace<H>,
    injection: Option<(usize, Vec<L>)>,
    pub iterations_last_step: u32,
    pub solves_last_step: usize,
    pub max_residual_last_step: f64,
}

impl<'a, H: Real, L: Real, P: OdeProblem> Stepper<'a, H, L, P> {
    pub fn new(problem: &'a P, cfg: &IntegratorConfig) -> Self {
        let t = &cfg.tableau;
        let s = t.stages();
        let n = problem.dim();
        let dt = H::from_f64(cfg.t_final()) / H::from_usize(cfg.steps);
        let conv = |v: DoubleDouble| H::from_dd(v);
        let a: Vec<Vec<H>> = (0..s).map(|i| (0..s).map(|j| conv(t.a_dd(i, j))).collect()).collect();
        let a_eps: Vec<Vec<H>> = (0..s).map(|i| (0..s).map(|j| conv(t.a_eps_dd(i, j))).collect()).collect();
        let b: Vec<H> = (0..s).map(|j| conv(t.b_dd(j))).collect();
        let b_eps: Vec<H> = (0..s).map(|j| conv(t.b_eps_dd(j))).collect();
        let kinds = (0..s)
            .map(|i| {
                if t.is_low_implicit(i) {
                    StageKind::LowImplicit
                } else if t.is_high_implicit(i) {
                    StageKind::HighImplicit
                } else {
                    StageKind::Explicit
                }
            })
            .collect();
        let h_low = (0..s).map(|i| (a_eps[i][i] * dt).cast::<L>()).collect();
        let h_high = (0..s).map(|i| a[i][i] * dt).collect();
        let zero = H::zero();
        let needs_f = (0..s).map(|j| b[j] != zero || (j + 1..s).any(|k| a[k][j] != zero)).collect();
        let needs_f_eps = (0..s).map(|j| b_eps[j] != zero || (j + 1..s).any(|k| a_eps[k][j] != zero)).collect();
        Self {
            problem,
            kinds,
            a,
            a_eps,
            b,
            b_eps,
            dt,
            h_low,
            h_high,
            needs_f,
            needs_f_eps,
            low_cfg: cfg.newton(L::LEVEL),
            high_cfg: cfg.newton(H::LEVEL),
            ys: vec![vec![H::zero(); n]; s],
            fs: vec![vec![H::zero(); n]; s],
            f_eps: vec![vec![H::zero(); n]; s],
            acc: vec![H::zero(); n],
            base_low: vec![L::zero(); n],
            y_low: vec![L::zero(); n],
            f_low: vec![L::zero(); n],
            ws_low: Workspace::new(n),
            ws_high: Workspace::new(n),
            injection: None,
            iterations_last_step: 0,
            solves_last_step: 0,
            max_residual_last_step: 0.0,
        }
    }

    pub fn set_injection(&mut self, injection: Option<&StageInjection>) {
        self.injection = injection.map(|inj| (inj.stage, inj.forcing.iter().map(|&v| L::from_f64(v)).collect()));
    }

    /// Advances `u` by one step in place.
    pub fn step(&mut self, u: &mut [H], step_index: usize) -> Result<(), IntegrationError> {
        let s = self.kinds.len();
        let n = u.len();
        self.iterations_last_step = 0;
        self.solves_last_step = 0;
        self.max_residual_last_step = 0.0;
        for i in 0..s {
            // base = u + dt * sum_{j<i} (A_ij F(y_j) + A_eps_ij F_eps(y_j))
            self.acc.iter_mut().for_each(|v| *v = H::zero());
            for j in 0..i {
                let (c, ce) = (self.a[i][j], self.a_eps[i][j]);
                if c != H::zero() {
                    for (acc, f) in self.acc.iter_mut().zip(&self.fs[j]) {
                        *acc += c * *f;
                    }
                }
                if ce != H::zero() {
                    for (acc, f) in self.acc.iter_mut().zip(&self.f_eps[j]) {
                        *acc += ce * *f;
                    }
                }
            }
            let dt = self.dt;
            {
                let y = &mut self.ys[i];
                for k in 0..n {
                    y[k] = u[k] + dt * self.acc[k];
                }
            }
            match self.kinds[i] {
                StageKind::Explicit => {}
                StageKind::LowImplicit => {
                    for (bl, y) in self.base_low.iter_mut().zip(&self.ys[i]) {
                        *bl = y.cast::<L>();
                    }
                    if self.base_low.iter().any(|v| !v.is_finite()) {
                        return Err(IntegrationError::Newton {
                            step: step_index,
                            stage: i,
                            source: NewtonError::RangeFault(L::LEVEL),
                        });
                    }
                    let forcing = match &self.injection {
                        Some((stage, q)) if *stage == i => Some(q.as_slice()),
                        _ => None,
                    };
                    let conv = solve_stage_in(
                        self.problem,
                        &mut self.y_low,
                        &self.base_low,
                        self.h_low[i],
                        forcing,
                        &self.low_cfg,
                        &mut self.ws_low,
                    )
                    .map_err(|source| IntegrationError::Newton { step: step_index, stage: i, source })?;
                    self.record(conv);
                    for (y, yl) in self.ys[i].iter_mut().zip(&self.y_low) {
                        *y = yl.cast::<H>();
                    }
                }
                StageKind::HighImplicit => {
                    let base = self.ys[i].clone();
                    let conv = solve_stage_in(
                        self.problem,
                        &mut self.ys[i],
                        &base,
                        self.h_high[i],
                        None,
                        &self.high_cfg,
                        &mut self.ws_high,
                    )
                    .map_err(|source| IntegrationError::Newton { step: step_index, stage: i, source })?;
                    self.record(conv);
                }
            }
            if self.needs_f[i] {
                self.problem.eval(&self.ys[i], &mut self.fs[i]);
            }
            if self.needs_f_eps[i] {
                // F_eps of the promoted stage value, evaluated at the low level
                for (yl, y) in self.y_low.iter_mut().zip(&self.ys[i]) {
                    *yl = y.cast::<L>();
                }
                self.problem.eval(&self.y_low, &mut self.f_low);
                for (fe, fl) in self.f_eps[i].iter_mut().zip(&self.f_low) {
                    *fe = fl.cast::<H>();
                }
            }
        }
        self.acc.iter_mut().for_each(|v| *v = H::zero());
        for j in 0..s {
            if self.b[j] != H::zero() {
                for (acc, f) in self.acc.iter_mut().zip(&self.fs[j]) {
                    *acc += self.b[j] * *f;
                }
            }
            if self.b_eps[j] != H::zero() {
                for (acc, f) in self.acc.iter_mut().zip(&self.f_eps[j]) {
                    *acc += self.b_eps[j] * *f;
                }
            }
        }
        for k in 0..n {
            u[k] += self.dt * self.acc[k];
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(IntegrationError::Overflow { step: step_index });
        }
        Ok(())
    }

    fn record(&mut self, conv: crate::newton::Convergence) {
        self.iterations_last_step += conv.iterations as u32;
        self.solves_last_step += 1;
        self.max_residual_last_step = self.max_residual_last_step.max(conv.residual_norm);
    }
}

struct Run<'a, P> {
    problem: &'a P,
    cfg: &'a IntegratorConfig,
    u0: &'a [f64],
    injection: Option<&'a StageInjection>,
}

impl<P: OdeProblem> PairVisitor for Run<'_, P> {
    type Output = Trajectory;

    fn visit<H: Real, L: Real>(self) -> Trajectory {
        let cfg = self.cfg;
        let mut stepper = Stepper::<H, L, P>::new(self.problem, cfg);
        stepper.set_injection(self.injection);
        let mut u: Vec<H> = self.u0.iter().map(|&v| H::from_f64(v)).collect();
        let promote = |u: &[H]| u.iter().map(|v| v.to_dd()).collect::<Vec<_>>();
        let mut traj = Trajectory {
            times: vec![0.0],
            states: vec![promote(&u)],
            newton_iterations: Vec::with_capacity(cfg.steps),
            newton_solves: 0,
            max_stage_residual: 0.0,
            steps_completed: 0,
            failure: None,
        };
        for k in 0..cfg.steps {
            if let Err(e) = stepper.step(&mut u, k) {
                traj.failure = Some(e);
                break;
            }
            traj.steps_completed = k + 1;
            traj.newton_iterations.push(stepper.iterations_last_step);
            traj.newton_solves += stepper.solves_last_step;
            traj.max_stage_residual = traj.max_stage_residual.max(stepper.max_residual_last_step);
            let last = k + 1 == cfg.steps;
            let strided = cfg.store_every.is_some_and(|e| e > 0 && (k + 1) % e == 0);
            if last || strided {
                traj.times.push((k + 1) as f64 * cfg.dt);
                traj.states.push(promote(&u));
            }
        }
        if traj.failure.is_some() {
            traj.times.push(traj.steps_completed as f64 * cfg.dt);
            traj.states.push(promote(&u));
        }
        traj
    }
}

/// Integrates `problem` from its initial state over `cfg.steps` steps.
///
/// Failures stop the run; the trajectory then ends with the last completed
/// state and carries the error.
pub fn integrate<P: OdeProblem>(problem: &P, cfg: &IntegratorConfig) -> Trajectory {
    let y0 = problem.y0();
    dispatch_pair(cfg.pair, Run { problem, cfg, u0: &y0, injection: None })
}

/// Like [`integrate`] from `u0`, with an optional stage forcing.
pub fn integrate_from<P: OdeProblem>(
    problem: &P,
    cfg: &IntegratorConfig,
    u0: &[f64],
    injection: Option<&StageInjection>,
) -> Trajectory {
    dispatch_pair(cfg.pair, Run { problem, cfg, u0, injection })
}

/// One step from `u_n`, returned as binary64.
pub fn step<P: OdeProblem>(u_n: &[f64], cfg: &IntegratorConfig, problem: &P) -> Result<Vec<f64>, IntegrationError> {
    step_with_injection(u_n, cfg, problem, None)
}

/// One step from `u_n` with an optional stage forcing.
pub fn step_with_injection<P: OdeProblem>(
    u_n: &[f64],
    cfg: &IntegratorConfig,
    problem: &P,
    injection: Option<&StageInjection>,
) -> Result<Vec<f64>, IntegrationError> {
    let one = IntegratorConfig { steps: 1, ..cfg.clone() };
    let traj = integrate_from(problem, &one, u_n, injection);
    match traj.failure {
        Some(e) => Err(e),
        None => Ok(traj.final_state_f64()),
    }
}

/// Classical fourth-order Runge-Kutta at `level`, returning the final state.
pub fn rk4_reference<P: OdeProblem>(
    problem: &P,
    dt_ref: f64,
    level: PrecisionLevel,
) -> Result<Vec<DoubleDouble>, IntegrationError> {
    struct Rk4<'a, P> {
        problem: &'a P,
        steps: usize,
    }
    impl<P: OdeProblem> LevelVisitor for Rk4<'_, P> {
        type Output = Result<Vec<DoubleDouble>, IntegrationError>;
        fn visit<T: Real>(self) -> Self::Output {
            let p = self.problem;
            let n = p.dim();
            let dt = T::from_f64(p.t_final()) / T::from_usize(self.steps);
            let half = T::from_f64(0.5);
            let sixth = T::one() / T::from_f64(6.0);
            let two = T::from_f64(2.0);
            let mut u: Vec<T> = p.y0().iter().map(|&v| T::from_f64(v)).collect();
            let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
                (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
            for step in 0..self.steps {
                p.eval(&u, &mut k1);
                for i in 0..n {
                    tmp[i] = u[i] + half * dt * k1[i];
                }
                p.eval(&tmp, &mut k2);
                for i in 0..n {
                    tmp[i] = u[i] + half * dt * k2[i];
                }
                p.eval(&tmp, &mut k3);
                for i in 0..n {
                    tmp[i] = u[i] + dt * k3[i];
                }
                p.eval(&tmp, &mut k4);
                for i in 0..n {
                    u[i] += dt * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
                }
                if !norm_inf(&u).is_finite() {
                    return Err(IntegrationError::Overflow { step });
                }
            }
            Ok(u.into_iter().map(Real::to_dd).collect())
        }
    }
    let steps = steps_for(dt_ref, problem.t_final())?;
    dispatch_level(level, Rk4 { problem, steps })
}
