//! Linear stability and roundoff sensitivity of mixed-precision tableaus.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::problems::{HeatOperator, HeatOperators};
use crate::tableau::MpTableau;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("resolvent matrix is singular at z = {re}{im:+}i")]
    SingularResolvent { re: f64, im: f64 },
    #[error("pole at z = 2")]
    Pole,
    #[error("method is not linearly stable here: |1 + Psi e| = {amplification} > 1")]
    Unstable { amplification: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
}

fn singular(z: Complex64) -> StabilityError {
    StabilityError::SingularResolvent { re: z.re, im: z.im }
}

/// Perturbed stability function
/// `1 + z b (I - z (A + A_eps) - z eps_tilde diag(tau))^{-1} e`.
pub fn psi_eps(t: &MpTableau, z: Complex64, eps_tilde: f64, tau: &[f64]) -> Result<Complex64, StabilityError> {
    let s = t.stages();
    assert_eq!(tau.len(), s, "one tau per stage");
    let a = t.a_tilde();
    let b = t.b_tilde();
    let m = DMatrix::from_fn(s, s, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        let pert = if i == j { eps_tilde * tau[i] } else { 0.0 };
        Complex64::new(id, 0.0) - z * (a[i][j] + pert)
    });
    let e = DVector::from_element(s, Complex64::new(1.0, 0.0));
    let y = m.lu().solve(&e).ok_or_else(|| singular(z))?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(singular(z));
    }
    let by: Complex64 = b.iter().zip(y.iter()).map(|(bj, yj)| *yj * *bj).sum();
    Ok(Complex64::new(1.0, 0.0) + z * by)
}

/// Parameters of a stability scan over a rectangle of the complex plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub re_range: (f64, f64),
    pub im_range: (f64, f64),
    pub resolution: (usize, usize),
    pub eps_tilde: f64,
    pub samples: usize,
    pub seed: u64,
}

impl GridSpec {
    pub const DEFAULT_SAMPLES: usize = 16;

    pub fn new(re_range: (f64, f64), im_range: (f64, f64), resolution: (usize, usize), eps_tilde: f64) -> Self {
        Self { re_range, im_range, resolution, eps_tilde, samples: Self::DEFAULT_SAMPLES, seed: 0 }
    }

    /// Cell centre `z` of column `i` (real axis) and row `j` (imaginary axis).
    pub fn point(&self, i: usize, j: usize) -> Complex64 {
        let (nx, ny) = self.resolution;
        let (r0, r1) = self.re_range;
        let (i0, i1) = self.im_range;
        let re = r0 + (r1 - r0) * (i as f64 + 0.5) / nx as f64;
        let im = i0 + (i1 - i0) * (j as f64 + 0.5) / ny as f64;
        Complex64::new(re, im)
    }

    fn validate(&self) -> Result<(), StabilityError> {
        let (nx, ny) = self.resolution;
        if nx < 2 || ny < 2 {
            return Err(StabilityError::Grid(format!("resolution {nx}x{ny} is below 2x2")));
        }
        if self.samples == 0 {
            return Err(StabilityError::Grid("samples must be at least 1".into()));
        }
        if !(self.re_range.0 < self.re_range.1 && self.im_range.0 < self.im_range.1) {
            return Err(StabilityError::Grid("window bounds must be increasing".into()));
        }
        Ok(())
    }
}

/// Stable-cell classification of a [`GridSpec`] window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityGrid {
    pub spec: GridSpec,
    /// `cells[j][i]`: row `j` along the imaginary axis, column `i` along the real axis.
    pub cells: Vec<Vec<bool>>,
}

impl StabilityGrid {
    pub fn stable_fraction(&self) -> f64 {
        let total: usize = self.cells.iter().map(Vec::len).sum();
        let stable: usize = self.cells.iter().map(|r| r.iter().filter(|&&c| c).count()).sum();
        stable as f64 / total as f64
    }

    /// Fraction of stable cells among those with `Re z <= 0`.
    pub fn left_half_stable_fraction(&self) -> f64 {
        let (mut total, mut stable) = (0usize, 0usize);
        for (j, row) in self.cells.iter().enumerate() {
            for (i, &c) in row.iter().enumerate() {
                if self.spec.point(i, j).re <= 0.0 {
                    total += 1;
                    stable += c as usize;
                }
            }
        }
        stable as f64 / total.max(1) as f64
    }
}

/// Seed for one cell, independent of scan order and thread count.
fn cell_seed(seed: u64, i: usize, j: usize) -> u64 {
    let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [i as u64, j as u64] {
        x = x.wrapping_add(v).wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

/// Classifies each cell stable iff `|psi_eps| <= 1` for every sampled `tau`.
///
/// Each cell draws its `tau` vectors from its own stream, so a larger
/// `samples` extends the draws of a smaller one.
pub fn stability_region(t: &MpTableau, spec: &GridSpec) -> Result<StabilityGrid, StabilityError> {
    spec.validate()?;
    let (nx, ny) = spec.resolution;
    let s = t.stages();
    let cells = (0..ny)
        .into_par_iter()
        .map(|j| {
            let mut tau = vec![0.0; s];
            (0..nx)
                .map(|i| {
                    let z = spec.point(i, j);
                    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(spec.seed, i, j));
                    (0..spec.samples).all(|_| {
                        tau.iter_mut().for_each(|v| *v = rng.random_range(-0.5..=0.5));
                        matches!(psi_eps(t, z, spec.eps_tilde, &tau), Ok(p) if p.norm() <= 1.0)
                    })
                })
                .collect()
        })
        .collect();
    Ok(StabilityGrid { spec: spec.clone(), cells })
}

/// The one-step heat-equation matrix
/// `P = I + dt D_e (I + dt/2 D_e)^c (I - dt/2 D_i)^{-1}` with `dt = cfl dx^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedModelSpec {
    pub ops: HeatOperators,
    pub corrections: usize,
    pub cfl: f64,
    /// Operator in the explicit, high-precision role.
    pub explicit: HeatOperator,
    /// Operator in the implicit, low-precision role.
    pub implicit: HeatOperator,
}

impl MixedModelSpec {
    /// Spectral operator explicit, centered operator implicit.
    pub fn new(ops: HeatOperators, corrections: usize, cfl: f64) -> Self {
        Self { ops, corrections, cfl, explicit: HeatOperator::Spectral, implicit: HeatOperator::Centered }
    }

    pub fn with_operators(mut self, explicit: HeatOperator, implicit: HeatOperator) -> Self {
        self.explicit = explicit;
        self.implicit = implicit;
        self
    }

    pub fn dt(&self) -> f64 {
        self.cfl * self.ops.dx * self.ops.dx
    }

    fn eigenvalue(&self, op: HeatOperator, k: usize) -> f64 {
        match op {
            HeatOperator::Centered => self.ops.centered_eigenvalue(k),
            HeatOperator::Spectral => self.ops.spectral_eigenvalue(k),
        }
    }

    fn matrix(&self, op: HeatOperator) -> DMatrix<f64> {
        let d = match op {
            HeatOperator::Centered => &self.ops.d_c,
            HeatOperator::Spectral => &self.ops.d_s,
        };
        let n = self.ops.nx;
        DMatrix::from_fn(n, n, |i, j| d[i][j])
    }
}

/// Spectral radius of the mixed-model matrix, one Fourier mode at a time.
pub fn mixed_model_radius(spec: &MixedModelSpec) -> f64 {
    assert!(spec.cfl > 0.0, "cfl must be positive");
    let dt = spec.dt();
    (0..=spec.ops.nx / 2)
        .map(|k| {
            let le = spec.eigenvalue(spec.explicit, k);
            let li = spec.eigenvalue(spec.implicit, k);
            let growth = (1.0 + 0.5 * dt * le).powi(spec.corrections as i32);
            (1.0 + dt * le * growth / (1.0 - 0.5 * dt * li)).abs()
        })
        .fold(0.0, f64::max)
}

/// Spectral radius of the assembled mixed-model matrix via a dense
/// eigenvalue computation. Cubic in `nx`; used to cross-check the modal path.
pub fn mixed_model_radius_dense(spec: &MixedModelSpec) -> f64 {
    let n = spec.ops.nx;
    let dt = spec.dt();
    let id = DMatrix::<f64>::identity(n, n);
    let de = spec.matrix(spec.explicit);
    let di = spec.matrix(spec.implicit);
    let inv = (&id - &di * (0.5 * dt)).try_inverse().expect("implicit operator is invertible");
    let step = &id + &de * (0.5 * dt);
    let mut prod = &de * dt;
    for _ in 0..spec.corrections {
        prod = &prod * &step;
    }
    let p = id + prod * inv;
    p.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// `Psi = z b_tilde (I - z A_tilde)^{-1}` at real `z`.
fn psi_row(t: &MpTableau, z: f64) -> Result<Vec<f64>, StabilityError> {
    let s = t.stages();
    let a = t.a_tilde();
    // Psi^T solves (I - z A_tilde)^T x = z b_tilde^T
    let mut m = Matrix::<f64>::identity(s);
    for i in 0..s {
        for j in 0..s {
            m[(j, i)] -= z * a[i][j];
        }
    }
    let mut x: Vec<f64> = t.b_tilde().iter().map(|b| z * b).collect();
    m.solve_in_place(&mut x, &mut Vec::new()).map_err(|_| singular(Complex64::new(z, 0.0)))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(singular(Complex64::new(z, 0.0)));
    }
    Ok(x)
}

fn a_eps_row_sums(t: &MpTableau) -> Vec<f64> {
    t.a_eps().iter().map(|r| r.iter().sum()).collect()
}

/// Roundoff sensitivity `sum_j |Psi_j| (A_eps e)_j` at real `z`.
pub fn sensitivity_metric(t: &MpTableau, z: f64) -> Result<f64, StabilityError> {
    let psi = psi_row(t, z)?;
    Ok(psi.iter().zip(a_eps_row_sums(t)).map(|(p, w)| p.abs() * w).sum())
}

/// Sensitivity metric sampled over real `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub label: String,
    pub z_values: Vec<f64>,
    pub metric: Vec<f64>,
}

/// Evaluates [`sensitivity_metric`] at each `z`; singular points become NaN.
pub fn sensitivity_curve(t: &MpTableau, z_values: &[f64]) -> SensitivityCurve {
    SensitivityCurve {
        label: format!("{} c={}", t.name(), t.corrections()),
        z_values: z_values.to_vec(),
        metric: z_values.iter().map(|&z| sensitivity_metric(t, z).unwrap_or(f64::NAN)).collect(),
    }
}

/// Where low-precision rounding enters a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Only the low-precision function values are perturbed, so each step
    /// adds `eps dt / 2 |Psi| A_eps e`.
    FunctionEval,
    /// Stage values are computed in low precision and recast, so each step
    /// adds `eps / 2 |Psi| A_eps e` independent of `dt`.
    Recast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundoffBound {
    /// Per-step growth summed over `n` steps.
    pub linear: f64,
    /// Geometric-series cap, present when `|1 + Psi e| < 1`.
    pub geometric: Option<f64>,
}

impl RoundoffBound {
    pub fn value(&self) -> f64 {
        self.geometric.map_or(self.linear, |g| g.min(self.linear))
    }
}

/// Bound on `|u^n - U^n|` between the perturbed and exact evolutions of
/// `u' = lambda u + eps tau` with `|tau| <= 1/2`, `z = lambda dt`.
pub fn roundoff_growth_bound(
    t: &MpTableau,
    z: f64,
    dt: f64,
    eps: f64,
    n_steps: usize,
    mode: BoundMode,
) -> Result<RoundoffBound, StabilityError> {
    let psi = psi_row(t, z)?;
    let amplification = (1.0 + psi.iter().sum::<f64>()).abs();
    if amplification > 1.0 {
        return Err(StabilityError::Unstable { amplification });
    }
    let metric: f64 = psi.iter().zip(a_eps_row_sums(t)).map(|(p, w)| p.abs() * w).sum();
    let per_step = match mode {
        BoundMode::FunctionEval => 0.5 * eps * dt * metric,
        BoundMode::Recast => 0.5 * eps * metric,
    };
    Ok(RoundoffBound {
        linear: per_step * n_steps as f64,
        geometric: (amplification < 1.0).then(|| per_step / (1.0 - amplification)),
    })
}

/// Simulates the tableau on `u' = lambda u + eps tau` with fresh uniform
/// `tau` in `[-1/2, 1/2]` per stage and step, returning `|u^n - U^n|`
/// against the unperturbed evolution from the same `u^0 = 1`.
pub fn perturbed_dahlquist_error(t: &MpTableau, lambda: f64, dt: f64, eps: f64, n_steps: usize, seed: u64) -> f64 {
    let s = t.stages();
    let z = lambda * dt;
    let a = t.a_tilde();
    let a_eps = t.a_eps();
    let b = t.b_tilde();
    let mut m = Matrix::<f64>::identity(s);
    for i in 0..s {
        for j in 0..s {
            m[(i, j)] -= z * a[i][j];
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut u, mut exact) = (1.0f64, 1.0f64);
    let mut tau = vec![0.0; s];
    for _ in 0..n_steps {
        tau.iter_mut().for_each(|v| *v = rng.random_range(-0.5..=0.5));
        let mut perturbed: Vec<f64> = (0..s)
            .map(|i| u + dt * eps * (0..s).map(|j| a_eps[i][j] * tau[j]).sum::<f64>())
            .collect();
        let mut clean = vec![exact; s];
        m.clone().solve_in_place(&mut perturbed, &mut Vec::new()).expect("resolvent is nonsingular");
        m.clone().solve_in_place(&mut clean, &mut Vec::new()).expect("resolvent is nonsingular");
        u += z * b.iter().zip(&perturbed).map(|(bj, y)| bj * y).sum::<f64>();
        exact += z * b.iter().zip(&clean).map(|(bj, y)| bj * y).sum::<f64>();
    }
    (u - exact).abs()
}

/// Per-step amplification `(z/2)^{c+1} / (1 - z/2)` of a stage perturbation
/// through the implicit midpoint rule with `c` corrections.
pub fn closed_form_imr_perturbation(z: f64, corrections: u32) -> Result<f64, StabilityError> {
    if z == 2.0 {
        return Err(StabilityError::Pole);
    }
    Ok((0.5 * z).powi(corrections as i32 + 1) / (1.0 - 0.5 * z))
}
