mod common;

use common::{mixture, reference_model, trapezoid_tail, weibull_half_survival, WEIBULL};
use subexp_ruin::asymptotics::*;
use subexp_ruin::model::{IncrementModel, Weight};
use subexp_ruin::radial::RadialLaw;
use subexp_ruin::rng::{domain, open01, stream};
use subexp_ruin::taildiag::{check_a1_tail, default_grid, ln_integrated_tail_raw, TailFunction, Verdict};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn closed_form_examples() {
    let e = asymptotic_ruin(&RadialLaw::Exponential { rate: 1.0 }, &[1.0, 1.0], 3.0).unwrap();
    assert!(rel(e.value, (-3.0f64).exp() / 2.0) < 1e-12);
    assert_eq!(e.method, ApproxMethod::ClosedForm);
    let p = asymptotic_ruin(&RadialLaw::Pareto { alpha: 2.0, x_m: 1.0 }, &[0.5, 0.5], 10.0).unwrap();
    assert!(rel(p.value, 0.1) < 1e-12);
    assert!(asymptotic_ruin(&RadialLaw::Pareto { alpha: 0.8, x_m: 1.0 }, &[0.5, 0.5], 10.0).is_err());
}

#[test]
fn weibull_matches_trapezoid_oracle() {
    for u in [1.0, 10.0, 50.0, 150.0] {
        let a = asymptotic_ruin(&WEIBULL, &[0.5, 0.5], u).unwrap();
        let oracle = trapezoid_tail(weibull_half_survival, u, 1.0 + 2.0 * u.sqrt(), 10_000_000);
        assert!(rel(a.value, oracle) < 1e-8, "u={u}: {} vs {oracle}", a.value);
    }
}

/// `E[(T − u)^+] / ‖c‖` from an independent sampler of the coordinate sum:
/// `T = R` on the core branch, `T = −R` off it.
fn mc_halfspace(kappa: f64, norm: f64, u: f64, draws: u64, seed: u64) -> (f64, f64) {
    let mut rng = stream(seed, domain::TEST, 9);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let r = open01(&mut rng).ln().powi(2);
        let core = open01(&mut rng) < r / (r + kappa);
        let t = if core { r } else { -r };
        let y = (t - u).max(0.0);
        s += y;
        s2 += y * y;
    }
    let n = draws as f64;
    let m = s / n;
    (m / norm, ((s2 / n - m * m) / n).sqrt() / norm)
}

#[test]
fn halfspace_integral_matches_monte_carlo_of_the_coordinate_sum() {
    let model = reference_model(20.0);
    for (i, u) in [5.0, 10.0, 20.0].into_iter().enumerate() {
        let h = halfspace_integral(&model, u).unwrap();
        let (mc, se) = mc_halfspace(20.0, model.c_norm(), u, 10_000_000, i as u64);
        assert!((h - mc).abs() < 3.0 * se, "u={u}: {h} vs {mc} ± {se}");
    }
}

#[test]
fn sandwich_and_monotonicity() {
    let models = [
        reference_model(20.0),
        reference_model(100.0),
        IncrementModel::new(WEIBULL, mixture(&[0.55, 0.45], 0.05, Weight::Exponential { kappa: 40.0 })).unwrap(),
        IncrementModel::from_spec(&common::model_spec(common::LOGNORMAL, 20.0)).unwrap(),
    ];
    for m in &models {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for i in 0..40 {
            let u = 0.5 * 1.25f64.powi(i);
            let a = asymptotic_ruin(m.radial(), m.c(), u).unwrap().value;
            let h = halfspace_integral(m, u).unwrap();
            assert!(a >= h * (1.0 - 1e-12), "u={u}: {a} < {h}");
            assert!(a < prev.0 && h < prev.1, "u={u}");
            prev = (a, h);
        }
    }
}

#[test]
fn halfspace_tail_is_a_survival_function() {
    let model = reference_model(20.0);
    let tail = HalfspaceTail::new(&model).unwrap();
    let mut prev = 1.0;
    for i in 0..200 {
        let u = 0.1 * i as f64;
        let v = tail.value(u);
        assert!((0.0..=1.0).contains(&v) && v <= prev);
        prev = v;
    }
}

#[test]
fn degenerate_weights() {
    let one = IncrementModel::with_drift(WEIBULL, mixture(&[0.5, 0.5], 0.0, Weight::Constant { value: 1.0 }), &[0.5, 0.5]).unwrap();
    for u in [0.5, 10.0, 30.0, 100.0] {
        assert_eq!(equivalence_gap(&one, u).unwrap(), Some(0.0));
        assert_eq!(halfspace_integral(&one, u).unwrap(), asymptotic_ruin(&WEIBULL, &[0.5, 0.5], u).unwrap().value);
    }
    let zero = IncrementModel::new(WEIBULL, mixture(&[0.5, 0.5], 0.05, Weight::Constant { value: 0.0 })).unwrap();
    assert_eq!(halfspace_integral(&zero, 1.0).unwrap(), 0.0);
    assert_eq!(check_a5(&zero).verdict, Verdict::Consistent);
}

#[test]
fn equivalence_gap_sweeps() {
    // the gap does not depend on c, so the unit-κ weight is probed with a
    // supplied drift
    let probe = |kappa: f64| {
        IncrementModel::with_drift(WEIBULL, mixture(&[0.5, 0.5], 0.05, Weight::Rational { kappa }), &[0.5, 0.5]).unwrap()
    };
    let one = probe(1.0);
    let gaps: Vec<f64> = [10.0, 30.0, 100.0].iter().map(|&u| equivalence_gap(&one, u).unwrap().unwrap().abs()).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    let hundred = probe(100.0);
    for u in [10.0, 30.0, 100.0] {
        assert!(equivalence_gap(&hundred, u).unwrap().unwrap().abs() > equivalence_gap(&one, u).unwrap().unwrap().abs());
    }
    let certified = reference_model(20.0);
    let g20 = equivalence_gap(&certified, 30.0).unwrap().unwrap();
    let p20 = IncrementModel::with_drift(WEIBULL, mixture(&[0.5, 0.5], 0.05, Weight::Rational { kappa: 20.0 }), &[0.1, 0.3]).unwrap();
    assert!(rel(equivalence_gap(&p20, 30.0).unwrap().unwrap(), g20) < 1e-9);
}

#[test]
fn a5_examples() {
    let rep = check_a5(&reference_model(20.0));
    assert_eq!(rep.verdict, Verdict::Consistent);
    assert!(rep.rows.last().unwrap().ratio.unwrap().is_finite());
    let heavy = IncrementModel::with_drift(
        RadialLaw::Pareto { alpha: 0.8, x_m: 1.0 },
        mixture(&[0.5, 0.5], 0.05, Weight::Rational { kappa: 20.0 }),
        &[0.5, 0.5],
    )
    .unwrap();
    assert_eq!(check_a5(&heavy).verdict, Verdict::Inconsistent);
}

/// `min(1, ∫_u^∞ F̄ / ‖c‖)` with `‖c‖ = 2 = E[R]`, so it never clips.
struct ScaledIntegratedTail;

impl TailFunction for ScaledIntegratedTail {
    fn log_survival(&self, x: f64) -> f64 {
        ln_integrated_tail_raw(&WEIBULL, x).unwrap() - 2f64.ln()
    }
    fn density(&self, x: f64) -> f64 {
        0.5 * WEIBULL.survival(x)
    }
    fn breakpoints(&self, _lo: f64, _hi: f64) -> Vec<f64> {
        Vec::new()
    }
}

#[test]
fn a6_examples() {
    let grid = default_grid(&WEIBULL, 12);
    assert_eq!(check_a6(&reference_model(20.0), &grid).unwrap().verdict, Verdict::Consistent);
    let exp = RadialLaw::Exponential { rate: 1.0 };
    let light = IncrementModel::with_drift(exp, mixture(&[0.5, 0.5], 0.05, Weight::Rational { kappa: 1.0 }), &[0.5, 0.5]).unwrap();
    assert_eq!(check_a6(&light, &default_grid(&exp, 12)).unwrap().verdict, Verdict::Inconsistent);

    let one = IncrementModel::with_drift(WEIBULL, mixture(&[0.5, 0.5], 0.0, Weight::Constant { value: 1.0 }), &[1.0, 1.0]).unwrap();
    let a6 = check_a6(&one, &grid).unwrap();
    let a1 = check_a1_tail("A1", "integrated_tail", &ScaledIntegratedTail, &grid).unwrap();
    assert_eq!(a6.verdict, a1.verdict);
    for (p, q) in a6.rows.iter().zip(&a1.rows) {
        match (p.ratio, q.ratio) {
            (Some(x), Some(y)) => assert!(rel(x, y) < 1e-5, "{x} vs {y}"),
            (x, y) => assert_eq!(x.is_none(), y.is_none()),
        }
    }
}

#[test]
fn table_runs_in_parallel_and_sequentially_alike() {
    let m = reference_model(20.0);
    let grid = [58.6, 88.0, 161.9];
    let a = asymptotic_table(&m, &grid, subexp_ruin::par::Execution::Sequential).unwrap();
    let b = asymptotic_table(&m, &grid, subexp_ruin::par::Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert!((a[0].1.value - 1.0e-2).abs() < 1e-4 && (a[2].1.value - 1.0e-4).abs() < 1e-6);
}
