//! Test systems: van der Pol, viscous Burgers, Dahlquist and the periodic
//! heat equation, together with the heat-equation differentiation matrices.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::precision::{Real, VectorField};

/// An autonomous ODE `y' = F(y)` with an analytic Jacobian.
///
/// `F` and its Jacobian are generic over the arithmetic level, so the same
/// problem is evaluated at whatever precision the caller instantiates.
pub trait OdeProblem: VectorField + Sync {
    fn label(&self) -> String;
    fn y0(&self) -> Vec<f64>;
    fn t_final(&self) -> f64;
    fn jac<T: Real>(&self, y: &[T], out: &mut Matrix<T>);

    /// Closed-form solution at time `t`, when known.
    fn exact(&self, _t: f64) -> Option<Vec<f64>> {
        None
    }
}

/// `y1' = y2`, `y2' = alpha y2 (1 - y1^2) - y1`, from `(2, 0)` over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanDerPol {
    pub alpha: f64,
}

pub fn van_der_pol(alpha: f64) -> VanDerPol {
    assert!(alpha > 0.0, "van der Pol needs alpha > 0");
    VanDerPol { alpha }
}

impl VectorField for VanDerPol {
    fn dim(&self) -> usize {
        2
    }

    fn eval<T: Real>(&self, y: &[T], out: &mut [T]) {
        let alpha = T::from_f64(self.alpha);
        out[0] = y[1];
        out[1] = alpha * y[1] * (T::one() - y[0] * y[0]) - y[0];
    }
}

impl OdeProblem for VanDerPol {
    fn label(&self) -> String {
        format!("vdp(alpha={})", self.alpha)
    }

    fn y0(&self) -> Vec<f64> {
        vec![2.0, 0.0]
    }

    fn t_final(&self) -> f64 {
        1.0
    }

    fn jac<T: Real>(&self, y: &[T], out: &mut Matrix<T>) {
        let alpha = T::from_f64(self.alpha);
        let two = T::from_f64(2.0);
        out[(0, 0)] = T::zero();
        out[(0, 1)] = T::one();
        out[(1, 0)] = -(two * alpha * y[0] * y[1]) - T::one();
        out[(1, 1)] = alpha * (T::one() - y[0] * y[0]);
    }
}

/// `u_t + (u^2/2)_x = nu u_xx` on `(0, 1)` with zero Dirichlet data,
/// discretized on `nx` interior points `x_i = i dx`, `dx = 1/(nx+1)`.
///
/// The flux uses the one-sided difference `(f_{i+1} - f_i)/dx`, the
/// diffusion the centered three-point stencil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burgers {
    pub nx: usize,
}

pub const BURGERS_VISCOSITY: f64 = 0.01;

pub fn viscous_burgers(nx: usize) -> Burgers {
    assert!(nx >= 3, "Burgers needs nx >= 3");
    Burgers { nx }
}

impl Burgers {
    pub fn dx(&self) -> f64 {
        1.0 / (self.nx + 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (1..=self.nx).map(|i| i as f64 * self.dx()).collect()
    }

    /// `(1/dx, nu/dx^2)` in the arithmetic of `T`.
    fn coefficients<T: Real>(&self) -> (T, T) {
        let inv_dx = T::from_usize(self.nx + 1);
        let nu = T::one() / T::from_f64(100.0);
        (inv_dx, nu * inv_dx * inv_dx)
    }
}

impl VectorField for Burgers {
    fn dim(&self) -> usize {
        self.nx
    }

    fn eval<T: Real>(&self, u: &[T], out: &mut [T]) {
        let n = self.nx;
        let (inv_dx, diff) = self.coefficients::<T>();
        let half = T::from_f64(0.5);
        let two = T::from_f64(2.0);
        for i in 0..n {
            let left = if i == 0 { T::zero() } else { u[i - 1] };
            let right = if i + 1 == n { T::zero() } else { u[i + 1] };
            let flux = (half * right * right - half * u[i] * u[i]) * inv_dx;
            out[i] = diff * (right - two * u[i] + left) - flux;
        }
    }
}

impl OdeProblem for Burgers {
    fn label(&self) -> String {
        format!("burgers(nx={})", self.nx)
    }

    fn y0(&self) -> Vec<f64> {
        self.grid().into_iter().map(|x| (2.0 * PI * x).sin()).collect()
    }

    fn t_final(&self) -> f64 {
        1.0
    }

    fn jac<T: Real>(&self, u: &[T], out: &mut Matrix<T>) {
        let n = self.nx;
        let (inv_dx, diff) = self.coefficients::<T>();
        let two = T::from_f64(2.0);
        out.fill_zero();
        for i in 0..n {
            out[(i, i)] = u[i] * inv_dx - two * diff;
            if i > 0 {
                out[(i, i - 1)] = diff;
            }
            if i + 1 < n {
                out[(i, i + 1)] = diff - u[i + 1] * inv_dx;
            }
        }
    }
}

/// `u' = lambda u` from `u(0) = 1` over `[0, 1]`.
///
/// A real `lambda` gives a scalar problem; a complex one is carried as the
/// real 2x2 system `[[re, -im], [im, re]]` acting on `(Re u, Im u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dahlquist {
    pub re: f64,
    pub im: f64,
    /// Carry the state as `(Re u, Im u)` even when `im` is zero.
    pub complex: bool,
}

pub fn dahlquist(lambda: f64) -> Dahlquist {
    Dahlquist { re: lambda, im: 0.0, complex: false }
}

pub fn dahlquist_complex(re: f64, im: f64) -> Dahlquist {
    Dahlquist { re, im, complex: true }
}

impl Dahlquist {
    pub fn is_real(&self) -> bool {
        !self.complex
    }
}

impl VectorField for Dahlquist {
    fn dim(&self) -> usize {
        if self.is_real() {
            1
        } else {
            2
        }
    }

    fn eval<T: Real>(&self, y: &[T], out: &mut [T]) {
        let re = T::from_f64(self.re);
        if self.is_real() {
            out[0] = re * y[0];
        } else {
            let im = T::from_f64(self.im);
            out[0] = re * y[0] - im * y[1];
            out[1] = im * y[0] + re * y[1];
        }
    }
}

impl OdeProblem for Dahlquist {
    fn label(&self) -> String {
        if self.is_real() {
            format!("dahlquist(lambda={})", self.re)
        } else {
            format!("dahlquist(lambda={}{:+}i)", self.re, self.im)
        }
    }

    fn y0(&self) -> Vec<f64> {
        if self.is_real() {
            vec![1.0]
        } else {
            vec![1.0, 0.0]
        }
    }

    fn t_final(&self) -> f64 {
        1.0
    }

    fn jac<T: Real>(&self, _y: &[T], out: &mut Matrix<T>) {
        let re = T::from_f64(self.re);
        if self.is_real() {
            out[(0, 0)] = re;
        } else {
            let im = T::from_f64(self.im);
            out[(0, 0)] = re;
            out[(0, 1)] = -im;
            out[(1, 0)] = im;
            out[(1, 1)] = re;
        }
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        let g = (self.re * t).exp();
        if self.is_real() {
            Some(vec![g])
        } else {
            Some(vec![g * (self.im * t).cos(), g * (self.im * t).sin()])
        }
    }
}

/// Periodic second-derivative matrices on `nx` equispaced points of
/// `[0, 2 pi)`: the centered three-point stencil `d_c` and the Fourier
/// spectral matrix `d_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatOperators {
    pub nx: usize,
    pub dx: f64,
    pub d_c: Vec<Vec<f64>>,
    pub d_s: Vec<Vec<f64>>,
}

pub fn heat_operators(nx: usize) -> HeatOperators {
    assert!(nx >= 4 && nx.is_multiple_of(2), "heat operators need even nx >= 4");
    let h = 2.0 * PI / nx as f64;
    let mut d_c = vec![vec![0.0; nx]; nx];
    let inv = 1.0 / (h * h);
    for i in 0..nx {
        d_c[i][i] = -2.0 * inv;
        d_c[i][(i + 1) % nx] += inv;
        d_c[i][(i + nx - 1) % nx] += inv;
    }
    let diag = -PI * PI / (3.0 * h * h) - 1.0 / 6.0;
    let mut d_s = vec![vec![0.0; nx]; nx];
    for (j, row) in d_s.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = if j == k {
                diag
            } else {
                let d = j as i64 - k as i64;
                let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let s = (d as f64 * h / 2.0).sin();
                -sign / (2.0 * s * s)
            };
        }
    }
    HeatOperators { nx, dx: h, d_c, d_s }
}

impl HeatOperators {
    pub fn grid(&self) -> Vec<f64> {
        (0..self.nx).map(|j| j as f64 * self.dx).collect()
    }

    /// Eigenvalue of `d_c` on the Fourier mode `k`.
    pub fn centered_eigenvalue(&self, k: usize) -> f64 {
        -(2.0 - 2.0 * (k as f64 * self.dx).cos()) / (self.dx * self.dx)
    }

    /// Eigenvalue of `d_s` on the Fourier mode `k`, `0 <= k <= nx/2`.
    pub fn spectral_eigenvalue(&self, k: usize) -> f64 {
        -((k * k) as f64)
    }
}

/// Which differentiation matrix a heat problem uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatOperator {
    Centered,
    Spectral,
}

impl fmt::Display for HeatOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeatOperator::Centered => "centered",
            HeatOperator::Spectral => "spectral",
        })
    }
}

/// `u_t = D u` on the periodic grid from `u(x, 0) = (1 + sin x)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heat {
    ops: HeatOperators,
    operator: HeatOperator,
}

pub fn heat(nx: usize, operator: HeatOperator) -> Heat {
    Heat { ops: heat_operators(nx), operator }
}

impl Heat {
    pub fn operators(&self) -> &HeatOperators {
        &self.ops
    }

    fn matrix(&self) -> &[Vec<f64>] {
        match self.operator {
            HeatOperator::Centered => &self.ops.d_c,
            HeatOperator::Spectral => &self.ops.d_s,
        }
    }
}

impl VectorField for Heat {
    fn dim(&self) -> usize {
        self.ops.nx
    }

    fn eval<T: Real>(&self, y: &[T], out: &mut [T]) {
        for (o, row) in out.iter_mut().zip(self.matrix()) {
            let mut acc = T::zero();
            for (a, v) in row.iter().zip(y) {
                acc += T::from_f64(*a) * *v;
            }
            *o = acc;
        }
    }
}

impl OdeProblem for Heat {
    fn label(&self) -> String {
        format!("heat(nx={}, {})", self.ops.nx, self.operator)
    }

    fn y0(&self) -> Vec<f64> {
        self.ops.grid().into_iter().map(|x| 0.5 * (1.0 + x.sin())).collect()
    }

    fn t_final(&self) -> f64 {
        1.0
    }

    fn jac<T: Real>(&self, _y: &[T], out: &mut Matrix<T>) {
        for (i, row) in self.matrix().iter().enumerate() {
            for (j, a) in row.iter().enumerate() {
                out[(i, j)] = T::from_f64(*a);
            }
        }
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        let decay = match self.operator {
            HeatOperator::Spectral => (-t).exp(),
            HeatOperator::Centered => (self.ops.centered_eigenvalue(1) * t).exp(),
        };
        Some(self.ops.grid().into_iter().map(|x| 0.5 * (1.0 + decay * x.sin())).collect())
    }
}

/// Any of the shipped problems, selected at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    VanDerPol(VanDerPol),
    Burgers(Burgers),
    Dahlquist(Dahlquist),
    Heat(Heat),
}

macro_rules! each_problem {
    ($self:expr, $p:ident => $body:expr) => {
        match $self {
            Problem::VanDerPol($p) => $body,
            Problem::Burgers($p) => $body,
            Problem::Dahlquist($p) => $body,
            Problem::Heat($p) => $body,
        }
    };
}

impl VectorField for Problem {
    fn dim(&self) -> usize {
        each_problem!(self, p => p.dim())
    }

    fn eval<T: Real>(&self, y: &[T], out: &mut [T]) {
        each_problem!(self, p => p.eval(y, out))
    }
}

impl OdeProblem for Problem {
    fn label(&self) -> String {
        each_problem!(self, p => p.label())
    }

    fn y0(&self) -> Vec<f64> {
        each_problem!(self, p => p.y0())
    }

    fn t_final(&self) -> f64 {
        each_problem!(self, p => p.t_final())
    }

    fn jac<T: Real>(&self, y: &[T], out: &mut Matrix<T>) {
        each_problem!(self, p => p.jac(y, out))
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        each_problem!(self, p => p.exact(t))
    }
}

impl From<VanDerPol> for Problem {
    fn from(p: VanDerPol) -> Self {
        Problem::VanDerPol(p)
    }
}

impl From<Burgers> for Problem {
    fn from(p: Burgers) -> Self {
        Problem::Burgers(p)
    }
}

impl From<Dahlquist> for Problem {
    fn from(p: Dahlquist) -> Self {
        Problem::Dahlquist(p)
    }
}

impl From<Heat> for Problem {
    fn from(p: Heat) -> Self {
        Problem::Heat(p)
    }
}

/// Evaluates `F(y)` in binary64.
pub fn rhs<P: VectorField>(p: &P, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.dim()];
    p.eval(y, &mut out);
    out
}

/// Evaluates the Jacobian in binary64 as nested rows.
pub fn jacobian<P: OdeProblem>(p: &P, y: &[f64]) -> Vec<Vec<f64>> {
    let n = p.dim();
    let mut m = Matrix::<f64>::zeros(n);
    p.jac(y, &mut m);
    (0..n).map(|i| m.row(i).to_vec()).collect()
}
