//! Newton iteration for implicit stage equations at a chosen precision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinearSolveError, Matrix};
use crate::precision::{dispatch_level, norm_inf, unit_roundoff, LevelVisitor, PrecisionLevel, Real};
use crate::problems::OdeProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64, last: Vec<f64> },
    #[error("singular Newton matrix at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("overflow at {0} precision")]
    RangeFault(PrecisionLevel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub level: PrecisionLevel,
    pub max_iters: usize,
    pub tol_factor: f64,
}

impl NewtonConfig {
    pub const DEFAULT_MAX_ITERS: usize = 20;
    pub const DEFAULT_TOL_FACTOR: f64 = 10.0;

    pub fn new(level: PrecisionLevel) -> Self {
        Self { level, max_iters: Self::DEFAULT_MAX_ITERS, tol_factor: Self::DEFAULT_TOL_FACTOR }
    }

    /// Convergence threshold for an iterate of max norm `y_norm`.
    pub fn tolerance(&self, y_norm: f64) -> f64 {
        tolerance(self.tol_factor, self.level, y_norm)
    }
}

/// `tol_factor * u(level) * (1 + |y|_inf)`.
pub fn tolerance(tol_factor: f64, level: PrecisionLevel, y_norm: f64) -> f64 {
    tol_factor * unit_roundoff(level) * (1.0 + y_norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub y: Vec<f64>,
    pub iterations: usize,
    /// `|G(y)|_inf` at the returned iterate.
    pub residual_norm: f64,
    pub converged: bool,
}

/// Iteration statistics of a converged solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    /// Number of linear solves performed.
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Scratch space reused across solves of one dimension.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    g: Vec<T>,
    f: Vec<T>,
    jac: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Workspace<T> {
    pub fn new(n: usize) -> Self {
        Self { g: vec![T::zero(); n], f: vec![T::zero(); n], jac: Matrix::zeros(n), perm: Vec::with_capacity(n) }
    }
}

/// Plain Newton on `g(y) = 0` in the arithmetic of `T`, starting from `y`.
///
/// `residual` fills `g(y)`, `jacobian` fills `g'(y)`. Stops as soon as
/// `|g(y)|_inf` or the last Newton increment `|dy|_inf` is at most
/// `tol_factor * u * (1 + |y|_inf)`. The increment test matters for stiff
/// stages, where rounding noise in `g` itself exceeds that threshold.
/// `y` holds the last iterate on return, including on error.
pub fn newton_kernel<T: Real>(
    y: &mut [T],
    mut residual: impl FnMut(&[T], &mut [T]),
    mut jacobian: impl FnMut(&[T], &mut Matrix<T>),
    tol_factor: f64,
    max_iters: usize,
    ws: &mut Workspace<T>,
) -> Result<Convergence, NewtonError> {
    let mut iterations = 0;
    loop {
        residual(y, &mut ws.g);
        let r = norm_inf(&ws.g);
        if !r.is_finite() {
            return Err(NewtonError::RangeFault(T::LEVEL));
        }
        if r <= tolerance(tol_factor, T::LEVEL, norm_inf(y)) {
            return Ok(Convergence { iterations, residual_norm: r });
        }
        if iterations == max_iters {
            return Err(NewtonError::NotConverged {
                iterations,
                residual: r,
                last: y.iter().map(|v| v.to_f64()).collect(),
            });
        }
        jacobian(y, &mut ws.jac);
        ws.jac.solve_in_place(&mut ws.g, &mut ws.perm).map_err(|e| match e {
            LinearSolveError::Singular { .. } | LinearSolveError::Dimension { .. } => {
                NewtonError::SingularJacobian { iteration: iterations }
            }
        })?;
        for (yi, di) in y.iter_mut().zip(&ws.g) {
            *yi -= *di;
        }
        iterations += 1;
        if norm_inf(&ws.g) <= tolerance(tol_factor, T::LEVEL, norm_inf(y)) {
            residual(y, &mut ws.g);
            let r = norm_inf(&ws.g);
            if !r.is_finite() {
                return Err(NewtonError::RangeFault(T::LEVEL));
            }
            return Ok(Convergence { iterations, residual_norm: r });
        }
    }
}

/// Solves `y = base + h F(y) + forcing` in the arithmetic of `T`, starting
/// from `y = base`.
///
/// `y` receives the solution; `base`, `h` and `forcing` are already values
/// of `T`.
pub fn solve_stage_in<T: Real, P: OdeProblem>(
    problem: &P,
    y: &mut [T],
    base: &[T],
    h: T,
    forcing: Option<&[T]>,
    cfg: &NewtonConfig,
    ws: &mut Workspace<T>,
) -> Result<Convergence, NewtonError> {
    y.copy_from_slice(base);
    let mut f = std::mem::take(&mut ws.f);
    let result = newton_kernel(
        y,
        |y, g| {
            problem.eval(y, &mut f);
            for i in 0..g.len() {
                let mut v = y[i] - base[i] - h * f[i];
                if let Some(q) = forcing {
                    v -= q[i];
                }
                g[i] = v;
            }
        },
        |y, jac| {
            problem.jac(y, jac);
            let n = jac.dim();
            for i in 0..n {
                for j in 0..n {
                    let d = if i == j { T::one() } else { T::zero() };
                    jac[(i, j)] = d - h * jac[(i, j)];
                }
            }
        },
        cfg.tol_factor,
        cfg.max_iters,
        ws,
    );
    ws.f = f;
    result
}

/// Solves the stage equation `y = base + coeff dt F(y)` with every
/// operation rounded to `cfg.level`; `coeff * dt` and `base` are rounded to
/// the level first. The solution is returned as binary64 values that are
/// representable at the level.
pub fn solve_stage<P: OdeProblem>(
    base: &[f64],
    coeff: f64,
    dt: f64,
    problem: &P,
    cfg: &NewtonConfig,
) -> Result<NewtonResult, NewtonError> {
    struct Solve<'a, P> {
        base: &'a [f64],
        h: f64,
        problem: &'a P,
        cfg: &'a NewtonConfig,
    }
    impl<P: OdeProblem> LevelVisitor for Solve<'_, P> {
        type Output = Result<NewtonResult, NewtonError>;
        fn visit<T: Real>(self) -> Self::Output {
            let n = self.base.len();
            let base: Vec<T> = self.base.iter().map(|&v| T::from_f64(v)).collect();
            if base.iter().any(|v| !v.is_finite()) {
                return Err(NewtonError::RangeFault(T::LEVEL));
            }
            let mut y = vec![T::zero(); n];
            let mut ws = Workspace::new(n);
            let c = solve_stage_in(self.problem, &mut y, &base, T::from_f64(self.h), None, self.cfg, &mut ws)?;
            Ok(NewtonResult {
                y: y.into_iter().map(Real::to_f64).collect(),
                iterations: c.iterations,
                residual_norm: c.residual_norm,
                converged: true,
            })
        }
    }
    dispatch_level(cfg.level, Solve { base, h: coeff * dt, problem, cfg })
}
