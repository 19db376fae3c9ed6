//! Cross-module properties of the integrator, stability analysis and
//! harness, each checked against an oracle computed independently here.

use mpark::harness::{observed_order, powers_of_two, run_convergence, MethodSpec, ProblemSpec, ReferenceSpec, SweepSpec};
use mpark::integrator::{integrate, step, IntegratorConfig};
use mpark::precision::{PrecisionLevel, PrecisionPair};
use mpark::problems::{dahlquist, dahlquist_complex};
use mpark::stability::{perturbed_dahlquist_error, psi_eps, roundoff_growth_bound, BoundMode};
use mpark::tableau::{Method, MpTableau};
use num_complex::Complex64;
use proptest::prelude::*;

fn double() -> PrecisionPair {
    PrecisionPair::uniform(PrecisionLevel::Double)
}

fn method_and_corrections() -> impl Strategy<Value = MpTableau> {
    prop_oneof![
        (0usize..=3).prop_map(|c| Method::Imr.tableau(c).unwrap()),
        (0usize..=2).prop_map(|c| Method::Sdirk.tableau(c).unwrap()),
        Just(Method::NovelA.tableau(0).unwrap()),
    ]
}

/// `1 + z b~ (I - z A~)^{-1} e` for a lower triangular `A~`.
fn amplification(t: &MpTableau, z: Complex64) -> Complex64 {
    let (a, b) = (t.a_tilde(), t.b_tilde());
    let one = Complex64::new(1.0, 0.0);
    let mut y: Vec<Complex64> = Vec::new();
    for (i, row) in a.iter().enumerate() {
        let rhs = one + (0..i).map(|j| z * row[j] * y[j]).sum::<Complex64>();
        y.push(rhs / (one - z * row[i]));
    }
    one + z * b.iter().zip(&y).map(|(bj, yj)| *bj * yj).sum::<Complex64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_step_matches_rational_amplification(t in method_and_corrections(), re in -8.0f64..-1e-3, im in -8.0f64..8.0) {
        let p = dahlquist_complex(re, im);
        let cfg = IntegratorConfig::new(t.clone(), double(), 1.0, 1.0).unwrap();
        let u = step(&[1.0, 0.0], &cfg, &p).unwrap();
        let want = amplification(&t, Complex64::new(re, im));
        let gap = (Complex64::new(u[0], u[1]) - want).norm();
        // each correction carries the Newton-tolerance stage error forward scaled by |z a_ii|
        let growth = (1.0 + Complex64::new(re, im).norm()).powi(t.corrections() as i32);
        prop_assert!(gap <= 10.0 * 10.0 * f64::EPSILON * (1.0 + want.norm()) * growth, "gap {gap:e}");
    }

    #[test]
    fn corrections_are_no_ops_at_uniform_precision(c in 1usize..=3, z in -6.0f64..-0.01, n in 1usize..8) {
        let p = dahlquist(z * n as f64);
        let dt = 1.0 / n as f64;
        let base = integrate(&p, &IntegratorConfig::new(Method::Imr.tableau(0).unwrap(), double(), dt, 1.0).unwrap());
        let corr = integrate(&p, &IntegratorConfig::new(Method::Imr.tableau(c).unwrap(), double(), dt, 1.0).unwrap());
        let (a, b) = (base.final_state_f64()[0], corr.final_state_f64()[0]);
        let growth = (1.0 + z.abs() / 2.0).powi(c as i32);
        prop_assert!((a - b).abs() <= n as f64 * 10.0 * f64::EPSILON * growth, "{a} vs {b}");
    }

    #[test]
    fn unperturbed_psi_reduces_to_amplification(t in method_and_corrections(), re in -20.0f64..0.0, im in -20.0f64..20.0) {
        let z = Complex64::new(re, im);
        let tau = vec![0.0; t.stages()];
        let psi = psi_eps(&t, z, 1e-3, &tau).unwrap();
        let want = amplification(&t, z);
        prop_assert!((psi - want).norm() <= 1e-12 * (1.0 + want.norm()));
    }

    #[test]
    fn simulated_roundoff_stays_below_bound(
        c in 0usize..=2,
        lambda in -50.0f64..-0.1,
        seed in any::<u64>(),
    ) {
        let t = Method::Imr.tableau(c).unwrap();
        let (dt, eps, n) = (0.01, 1e-3, 100);
        let bound = roundoff_growth_bound(&t, lambda * dt, dt, eps, n, BoundMode::FunctionEval).unwrap().value();
        let err = perturbed_dahlquist_error(&t, lambda, dt, eps, n, seed);
        prop_assert!(err <= bound, "error {err:e} above bound {bound:e}");
    }
}

#[test]
fn dahlquist_sweep_recovers_second_order_against_exact_solution() {
    let spec = SweepSpec {
        reference: ReferenceSpec::Exact,
        ..SweepSpec::new(ProblemSpec::Dahlquist { re: -1.0, im: 0.0 }, MethodSpec::new(Method::Imr, 0), vec![double()], powers_of_two(3, 10))
    };
    let report = run_convergence(&spec).unwrap();
    // independent oracle: errors of the exact rational recursion
    let points: Vec<(f64, f64)> = spec
        .dts
        .iter()
        .map(|&dt| {
            let z = -dt;
            let phi = (1.0 + z / 2.0) / (1.0 - z / 2.0);
            (dt, (phi.powi((1.0 / dt).round() as i32) - (-1f64).exp()).abs())
        })
        .collect();
    let oracle = observed_order(&points, None).unwrap();
    let got = report.observed_order(double(), None).unwrap();
    assert!((got - 2.0).abs() <= 0.1, "order {got}");
    assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
}

#[test]
fn half_precision_stage_error_floors_the_uncorrected_midpoint_rule() {
    let pairs = vec![double(), "f64/f16".parse().unwrap()];
    let spec = SweepSpec {
        reference: ReferenceSpec::Exact,
        ..SweepSpec::new(ProblemSpec::Dahlquist { re: -1.0, im: 0.0 }, MethodSpec::new(Method::Imr, 0), pairs.clone(), powers_of_two(4, 12))
    };
    let report = run_convergence(&spec).unwrap();
    let (full, half) = (report.errors(pairs[0]), report.errors(pairs[1]));
    let (e_full, e_half) = (full.last().unwrap().1, half.last().unwrap().1);
    assert!(e_half > 100.0 * e_full, "f16 {e_half:e} vs f64 {e_full:e}");
    // the low-precision error stays near binary16 roundoff times the solution scale
    assert!(e_half > 1e-6 && e_half < 1e-2, "{e_half:e}");
}
