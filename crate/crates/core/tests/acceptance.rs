//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! values. Set `MPARK_ACCEPTANCE_STRICT=1` to exit non-zero on any FAIL.

use std::process::ExitCode;
use std::time::Instant;

use mpark::harness::{
    classify_curve, find_largest_stable_dt, ladder_reference, plateau_onset, powers_of_two, run_convergence,
    run_efficiency, time_at_error, CurveShape, LadderSpec, MethodSpec, ProblemSpec, ReferenceSpec, SweepSpec,
};
use mpark::integrator::{integrate, step_with_injection, IntegratorConfig, StageInjection, Stepper};
use mpark::precision::{PrecisionLevel, PrecisionPair};
use mpark::problems::{dahlquist, dahlquist_complex, heat_operators, Dahlquist, HeatOperator};
use mpark::stability::{
    closed_form_imr_perturbation, mixed_model_radius, mixed_model_radius_dense, roundoff_growth_bound,
    sensitivity_metric, stability_region, BoundMode, GridSpec, MixedModelSpec,
};
use mpark::tableau::{imr_tableau, novel_a_tableau, order_report, sdirk_tableau, Method, MpTableau};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20240917;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn pair(s: &str) -> PrecisionPair {
    s.parse().expect("valid pair")
}

fn double() -> PrecisionPair {
    PrecisionPair::uniform(PrecisionLevel::Double)
}

/// IMR m = 0..3, SDIRK m = 1..3 and NovelA, as (label, tableau).
fn order_suite() -> Vec<(String, MpTableau)> {
    let mut v: Vec<(String, MpTableau)> = (0..=3).map(|m| (format!("imr m={m}"), imr_tableau(m))).collect();
    v.extend((1..=3).map(|m| (format!("sdirk m={m}"), sdirk_tableau(m))));
    v.push(("novela".into(), novel_a_tableau()));
    v
}

fn order_conditions() -> Outcome {
    let mut worst = 0.0f64;
    let mut beps_nonzero = Vec::new();
    for (label, t) in order_suite() {
        let r = order_report(&t);
        worst = worst.max(r.max_scheme_residual(t.design_order()));
        if r.nonsmooth("abs(b_eps)*e") != Some(0.0) {
            beps_nonzero.push(label);
        }
    }
    let gamma = (3f64.sqrt() + 3.0) / 6.0;
    let got = order_report(&sdirk_tableau(1)).nonsmooth("abs(b_tilde)*abs(c_eps)").unwrap_or(f64::NAN);
    let gap = (got - gamma).abs();
    outcome(
        worst < 1e-12 && beps_nonzero.is_empty() && gap <= 1e-14,
        format!("max scheme residual {worst:.2e} (< 1e-12), |b_eps|e nonzero for {beps_nonzero:?}, sdirk m=1 |b~||c_eps| - gamma = {gap:.1e} (<= 1e-14)"),
    )
}

/// `1 + z b~ (I - z A~)^{-1} e` by forward substitution on the lower
/// triangular stage matrix.
fn stability_function(t: &MpTableau, z: Complex64) -> Complex64 {
    let a = t.a_tilde();
    let b = t.b_tilde();
    let s = a.len();
    let mut y = vec![Complex64::new(0.0, 0.0); s];
    for i in 0..s {
        assert!(a[i][i + 1..].iter().all(|&v| v == 0.0), "stage matrix is lower triangular");
        let rhs = Complex64::new(1.0, 0.0) + (0..i).map(|j| z * a[i][j] * y[j]).sum::<Complex64>();
        y[i] = rhs / (Complex64::new(1.0, 0.0) - z * a[i][i]);
    }
    Complex64::new(1.0, 0.0) + z * (0..s).map(|j| b[j] * y[j]).sum::<Complex64>()
}

fn linear_oracle() -> Outcome {
    let n = 20;
    let dt = 1.0 / n as f64;
    let tol = 20.0 * 10.0 * 2f64.powi(-53);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let zs: Vec<Complex64> =
        (0..50).map(|_| Complex64::new(-rng.random_range(1e-3..4.0), rng.random_range(-4.0..4.0))).collect();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut worst_rel = 0.0f64;
    for (label, t) in order_suite() {
        for &z in &zs {
            let p = dahlquist_complex(z.re / dt, z.im / dt);
            let cfg = IntegratorConfig::new(t.clone(), double(), dt, 1.0).unwrap();
            let traj = integrate(&p, &cfg);
            let u = traj.final_state_f64();
            let want = stability_function(&t, z).powu(n as u32);
            let gap = (Complex64::new(u[0], u[1]) - want).norm();
            worst_rel = worst_rel.max(gap / want.norm());
            // relative on the Newton tolerance scale 1 + |u|
            let scaled = gap / (1.0 + want.norm());
            if !(scaled <= worst) {
                worst = scaled;
                worst_at = format!("{label} z={z:.3}");
            }
        }
    }
    outcome(
        worst <= tol,
        format!("worst gap / (1 + |phi^n|) {worst:.2e} at {worst_at} (<= {tol:.2e}); plain relative gap {worst_rel:.2e}"),
    )
}

fn classical_convergence() -> Outcome {
    let dts = powers_of_two(5, 12);
    let problem = ProblemSpec::VanDerPol { alpha: 1.0 };
    let cases = [(Method::Imr, 0, 2.0, 0.2), (Method::Sdirk, 0, 3.0, 0.3), (Method::NovelA, 0, 3.0, 0.3)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, c, want, tol) in cases {
        let spec = SweepSpec::new(problem.clone(), MethodSpec::new(m, c), vec![double()], dts.clone());
        let order = run_convergence(&spec).and_then(|r| r.observed_order(double(), None)).unwrap_or(f64::NAN);
        pass &= (order - want).abs() <= tol;
        parts.push(format!("{} {order:.3} (want {want}+-{tol})", m.name()));
    }
    outcome(pass, parts.join(", "))
}

fn plateau_and_repair() -> Outcome {
    let dts = powers_of_two(1, 20);
    let problem = ProblemSpec::VanDerPol { alpha: 3.0 };
    let reference = ReferenceSpec::Rk4 { dt_ref: Some(2f64.powi(-20) / 20.0), level: PrecisionLevel::Extended, self_check: false };
    let half = pair("f64/f16");
    let sweep = |m: Method, c: usize, pairs: Vec<PrecisionPair>| {
        let spec = SweepSpec { reference: reference.clone(), ..SweepSpec::new(problem.clone(), MethodSpec::new(m, c), pairs, dts.clone()) };
        run_convergence(&spec).expect("sweep runs")
    };
    let imr0 = sweep(Method::Imr, 0, vec![half]).errors(half);
    let imr2 = sweep(Method::Imr, 2, vec![half]).errors(half);
    let sdirk = sweep(Method::Sdirk, 2, vec![half, double()]);

    let shape = classify_curve(&imr0, 2).ok();
    let onset0 = plateau_onset(&imr0);
    let onset2 = plateau_onset(&imr2);
    let onset_ok = match (onset0, onset2) {
        (Some(a), Some(b)) => b < a,
        (Some(_), None) => true,
        _ => false,
    };
    let (lo, hi) = (sdirk.errors(half), sdirk.errors(double()));
    let mut worst_ratio = 0.0f64;
    let mut worst_dt = f64::NAN;
    for (&(dt, e_hi), &(_, e_lo)) in hi.iter().zip(&lo).take_while(|((_, e_hi), _)| *e_hi >= 1e-10) {
        let ratio = e_lo / e_hi;
        if !(ratio <= worst_ratio) {
            worst_ratio = ratio;
            worst_dt = dt;
        }
    }
    let reached = lo.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let tracks = hi.len() == lo.len() && worst_ratio <= 10.0 && reached <= 1e-10;
    let fmt = |o: Option<f64>| o.map_or("none".into(), |d| format!("2^{}", d.log2().round()));
    outcome(
        shape == Some(CurveShape::Plateau) && onset_ok && tracks,
        format!(
            "imr m=0 shape {shape:?}, plateau onset imr m=0 {} vs m=2 {}, sdirk m=3 f64/f16 worst ratio {worst_ratio:.2}x at dt=2^{} (<= 10x), smallest f64/f16 error {reached:.2e} (<= 1e-10)",
            fmt(onset0),
            fmt(onset2),
            worst_dt.log2().round()
        ),
    )
}

fn correction_growth() -> Outcome {
    let mut worst = 0.0f64;
    for c in 0..3u32 {
        for z in [-0.5, -1.0, -4.0] {
            let p = dahlquist(z);
            let cfg = IntegratorConfig::new(imr_tableau(c as usize), double(), 1.0, 1.0).unwrap();
            // from u = 0 the step output is the propagated stage perturbation alone
            let inj = StageInjection { stage: 0, forcing: vec![0.5] };
            let got = step_with_injection(&[0.0], &cfg, &p, Some(&inj)).unwrap()[0];
            let want = closed_form_imr_perturbation(z, c).unwrap();
            worst = worst.max((got - want).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max gap to (z/2)^(c+1)/(1-z/2) {worst:.1e} (<= 1e-12)"))
}

fn mixed_model() -> Outcome {
    let ops = heat_operators(64);
    let rho = |cfl: f64, ex: HeatOperator, im: HeatOperator| {
        mixed_model_radius(&MixedModelSpec::new(ops.clone(), 0, cfl).with_operators(ex, im))
    };
    let (s, c) = (HeatOperator::Spectral, HeatOperator::Centered);
    let low = [0.05, 0.1, 0.15, 0.2, 0.25].map(|k| rho(k, s, c)).into_iter().fold(0.0, f64::max);
    let high = [0.5, 1.0, 2.0, 10.0, 100.0].map(|k| rho(k, s, c)).into_iter().fold(f64::INFINITY, f64::min);
    let cfls = [0.01, 0.1, 0.25, 0.5, 1.0, 10.0, 100.0, 1000.0];
    let pure = cfls.iter().flat_map(|&k| [rho(k, c, c), rho(k, s, s)]).fold(0.0, f64::max);
    let mut gap = 0.0f64;
    for cfl in [0.1, 0.3, 0.5, 2.0] {
        for nx in [16, 64] {
            let spec = MixedModelSpec::new(heat_operators(nx), 0, cfl);
            gap = gap.max((mixed_model_radius(&spec) - mixed_model_radius_dense(&spec)).abs());
        }
    }
    outcome(
        low <= 1.0 && high > 1.0 && pure <= 1.0 + 1e-12 && gap <= 1e-8,
        format!("max rho for cfl <= 0.25 {low:.6}, min rho for cfl >= 0.5 {high:.4}, pure operators max rho {pure:.15}, modal vs dense {gap:.1e}"),
    )
}

fn stability_monotonicity() -> Outcome {
    let grid = |t: &MpTableau, eps: f64| {
        let spec = GridSpec { seed: SEED, ..GridSpec::new((-40.0, 5.0), (-20.0, 20.0), (200, 200), eps) };
        stability_region(t, &spec).expect("grid").stable_fraction()
    };
    let imr: Vec<f64> = (0..=2).map(|m| grid(&imr_tableau(m), 1e-4)).collect();
    let sdirk: Vec<f64> = [1e-8, 1e-6, 1e-4].iter().map(|&e| grid(&sdirk_tableau(2), e)).collect();
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]) && v[v.len() - 1] < v[0];
    outcome(
        dec(&imr) && dec(&sdirk),
        format!("imr m=0..2 at eps~=1e-4 {imr:.4?}, sdirk m=2 at eps~=1e-8,1e-6,1e-4 {sdirk:.4?}"),
    )
}

fn sensitivity_ordering() -> Outcome {
    let metric = |m: Method, c: usize, z: f64| sensitivity_metric(&m.tableau(c).unwrap(), z).unwrap();
    let mut orderings = true;
    let mut novel = true;
    let mut parts = Vec::new();
    for z in [-10.0, -1000.0] {
        for m in [Method::Imr, Method::Sdirk] {
            let v: Vec<f64> = (0..=2).map(|c| metric(m, c, z)).collect();
            orderings &= v[0] < v[1] && v[1] < v[2];
            parts.push(format!("{} z={z} {v:.3?}", m.name()));
        }
        let a = metric(Method::NovelA, 0, z);
        let (i1, s1) = (metric(Method::Imr, 1, z), metric(Method::Sdirk, 1, z));
        novel &= a < i1 && a < s1;
        parts.push(format!("novela z={z} {a:.3} vs one-correction imr {i1:.3} sdirk {s1:.3}"));
    }
    let closed = sensitivity_metric(&imr_tableau(0), -2.0).unwrap();
    let closed_ok = (closed - 0.5).abs() <= 1e-14 && (closed_form_imr_perturbation(-2.0, 0).unwrap().abs() - 0.5).abs() <= 1e-14;
    parts.push(format!("imr m=0 at z=-2 {closed:.17}"));
    outcome(
        orderings && novel && closed_ok,
        format!("correction orderings {}, novela below one-correction {}, closed form {}: {}", ok(orderings), ok(novel), ok(closed_ok), parts.join("; ")),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "violated"
    }
}

fn roundoff_bound() -> Outcome {
    let (lambda, dt, eps, n) = (-1.0, 0.01, 1e-3, 100);
    let t = imr_tableau(0);
    let a_eps = t.a_eps()[0][0];
    let bound = roundoff_growth_bound(&t, lambda * dt, dt, eps, n, BoundMode::FunctionEval).unwrap().value();
    let p: Dahlquist = dahlquist(lambda);
    let cfg = IntegratorConfig::new(t, double(), dt, n as f64 * dt).unwrap();
    let trials = 1000;
    let mut passed = 0;
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ trial as u64);
        let mut clean = Stepper::<f64, f64, Dahlquist>::new(&p, &cfg);
        let mut noisy = Stepper::<f64, f64, Dahlquist>::new(&p, &cfg);
        let (mut u, mut v) = ([1.0f64], [1.0f64]);
        for k in 0..n {
            let tau: f64 = rng.random_range(-0.5..=0.5);
            noisy.set_injection(Some(&StageInjection { stage: 0, forcing: vec![dt * a_eps * eps * tau] }));
            clean.step(&mut u, k).unwrap();
            noisy.step(&mut v, k).unwrap();
        }
        let err = (u[0] - v[0]).abs();
        worst = worst.max(err / bound);
        passed += usize::from(err <= bound);
    }
    let rate = passed as f64 / trials as f64;
    outcome(rate >= 0.99, format!("{passed}/{trials} trials within bound {bound:.3e} (>= 99%), worst error/bound {worst:.3}"))
}

fn ladder(method: Method, c: usize, pair_: &str, exhaustive: bool) -> LadderSpec {
    LadderSpec {
        problem: ProblemSpec::Burgers { nx: 200 },
        method: MethodSpec::new(method, c),
        pair: pair(pair_),
        dt_max: 0.05,
        levels: 6,
        exhaustive,
    }
}

fn stable_dt_ladder() -> Outcome {
    let base = ladder(Method::Sdirk, 0, "f64/f16", true);
    let reference = ladder_reference(&base).expect("reference");
    let run = |spec: LadderSpec| find_largest_stable_dt(&spec, &reference).expect("ladder");
    let sdirk1 = [run(ladder(Method::Sdirk, 0, "f64/f32", true)), run(ladder(Method::Sdirk, 0, "f64/f16", true))];
    let novel16 = run(ladder(Method::NovelA, 0, "f64/f16", false));
    let novel32 = run(ladder(Method::NovelA, 0, "f64/f32", true));
    let corrected = [run(ladder(Method::Sdirk, 1, "f64/f16", false)), run(ladder(Method::Sdirk, 2, "f64/f16", false))];
    let sdirk1_ok = sdirk1.iter().all(|r| r.all_tried_stable());
    let threshold = novel16.largest_stable_dt.unwrap_or(0.0);
    let corrected_ok = corrected.iter().all(|r| r.largest_stable_dt.is_some_and(|d| d < threshold && d <= 0.00625));
    let novel_ok = novel32.all_tried_stable();
    let labels = |rows: &[mpark::harness::StableDtRow]| {
        rows.iter().map(|r| format!("{} c={} {}: {}", r.method, r.corrections, r.pair, r.label())).collect::<Vec<_>>().join(", ")
    };
    outcome(
        sdirk1_ok && corrected_ok && novel_ok,
        format!(
            "sdirk m=1 all rungs stable {} [{}]; corrected below novela f64/f16 threshold {} {} [{}]; novela f64/f32 all rungs stable {} [{}]",
            ok(sdirk1_ok),
            labels(&sdirk1),
            novel16.label(),
            ok(corrected_ok),
            labels(&corrected),
            ok(novel_ok),
            novel32.label()
        ),
    )
}

fn efficiency_direction() -> Outcome {
    let target = 1e-9;
    // each pair gets a dt range that brackets the target error
    let sweep = |p: PrecisionPair, from: i32, to: i32| {
        let spec = SweepSpec {
            repetitions: 3,
            timing_exclusive: true,
            ..SweepSpec::new(ProblemSpec::Burgers { nx: 50 }, MethodSpec::new(Method::Sdirk, 1), vec![p], powers_of_two(from, to))
        };
        run_efficiency(&spec).expect("efficiency sweep")
    };
    let (half, full) = (pair("f64/f16"), double());
    let (rh, rf) = (sweep(half, 8, 17), sweep(full, 4, 12));
    let errs = |r: &mpark::harness::ConvergenceReport, p| r.errors(p).iter().map(|e| format!("{:.1e}", e.1)).collect::<Vec<_>>().join(" ");
    match (time_at_error(&rh.rows, target), time_at_error(&rf.rows, target)) {
        (Some(a), Some(b)) => outcome(
            a < b,
            format!("time at error {target:e}: f64/f16 {a:.4e} s, f64/f64 {b:.4e} s, ratio f16/f64 {:.3}", a / b),
        ),
        _ => outcome(
            false,
            format!("error {target:e} not bracketed: f64/f16 errors [{}], f64/f64 errors [{}]", errs(&rh, half), errs(&rf, full)),
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, f64); 11] = [
        ("order conditions", order_conditions, 1.0),
        ("linear oracle equivalence", linear_oracle, 5.0),
        ("classical convergence", classical_convergence, 60.0),
        ("mixed-precision plateau and correction repair", plateau_and_repair, 120.0),
        ("correction-growth closed form", correction_growth, f64::INFINITY),
        ("mixed-model instability threshold", mixed_model, 10.0),
        ("stability-region monotonicity", stability_monotonicity, 30.0),
        ("sensitivity ordering", sensitivity_ordering, f64::INFINITY),
        ("roundoff bound", roundoff_bound, f64::INFINITY),
        ("stable-dt ladder", stable_dt_ladder, 300.0),
        ("efficiency direction", efficiency_direction, f64::INFINITY),
    ];
    let mut passed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs < *budget;
        let pass = out.pass && in_time;
        passed += usize::from(pass);
        let timing = if budget.is_finite() { format!("{secs:.2} s of {budget} s") } else { format!("{secs:.2} s") };
        println!("{} {:>2} {name}: {} [{timing}]", if pass { "PASS" } else { "FAIL" }, k + 1, out.detail);
    }
    println!("{passed}/{} criteria passed", criteria.len());
    let strict = std::env::var("MPARK_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < criteria.len() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
