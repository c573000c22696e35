mod common;

use common::{mixture, reference_model, reference_theta, WEIBULL};
use proptest::prelude::*;
use subexp_ruin::asymptotics::asymptotic_ruin;
use subexp_ruin::geometry::{AngularSet, Direction, Target};
use subexp_ruin::model::{AngularMixture, IncrementModel, Weight};
use subexp_ruin::par::Execution;
use subexp_ruin::radial::RadialLaw;
use subexp_ruin::rng::{domain, open01, stream};
use subexp_ruin::simulate::*;

const DELTA: f64 = 0.3;

fn cone(u: f64) -> Target {
    cone_target(&reference_theta(), DELTA, u).unwrap()
}

#[test]
fn zero_weight_never_ruins() {
    let model = IncrementModel::new(WEIBULL, mixture(&[0.5, 0.5], 0.05, Weight::Constant { value: 0.0 })).unwrap();
    let rule = StoppingRule::default_for(&model, 10.0).unwrap();
    let theta = reference_theta();
    let crude = ruin_mc_cone(&model, &theta, DELTA, 10.0, 5000, &rule, 0, Execution::Parallel).unwrap();
    assert_eq!((crude.hits, crude.hit_probability), (0, 0.0));
    assert!(crude.below_resolution && crude.ci_high > 0.0);
    assert_eq!(ruin_mc_halfspace(&model, 10.0, 5000, &rule, 0, Execution::Parallel).unwrap().hit_probability, 0.0);
    assert_eq!(ruin_mc_bigjump(&model, &theta, DELTA, 10.0, 5000, &rule, 0, None, Execution::Parallel).unwrap().hit_probability, 0.0);
}

#[test]
fn first_step_ruin_with_point_mass() {
    let law = RadialLaw::PointMass { value: 12.0 };
    let model = IncrementModel::with_drift(law, mixture(&[0.5, 0.5], 0.0, Weight::Constant { value: 1.0 }), &[0.5, 0.5]).unwrap();
    let rule = StoppingRule::default_for(&model, 10.0).unwrap();
    let theta = reference_theta();
    let crude = ruin_mc_cone(&model, &theta, DELTA, 10.0, 1000, &rule, 0, Execution::Parallel).unwrap();
    assert_eq!(crude.hit_probability, 1.0);
    assert_eq!(crude.mean_hit_time, 1.0);
    let bj = ruin_mc_bigjump(&model, &theta, DELTA, 10.0, 1000, &rule, 0, None, Execution::Parallel);
    assert!(matches!(bj, Err(subexp_ruin::Error::Unsupported(_))));
}

#[test]
fn preconditions() {
    let model = reference_model(20.0);
    let rule = StoppingRule::default_for(&model, 20.0).unwrap();
    let theta = reference_theta();
    assert!(ruin_mc_bigjump(&model, &theta, DELTA, 20.0, 10, &rule, 0, Some(20.0), Execution::Sequential).is_err());
    assert!(ruin_mc_cone(&model, &theta, 5.0, 20.0, 10, &rule, 0, Execution::Sequential).is_err());
    assert!(StoppingRule::new(&model, 20.0, 10, 1.0).is_err());
    assert!(StoppingRule::new(&model, 20.0, 10_000, 0.5).is_err());
    assert!(two_cone_mc(&model, &theta, &theta, DELTA, 20.0, 10, &rule, 0, Execution::Sequential).is_err());
}

#[test]
fn ku_schedules() {
    let ln = RadialLaw::Lognormal { mu: 0.0, sigma: 1.0 };
    assert_eq!(ku_schedule(&ln, 50.0, 0.1, u64::MAX).unwrap().k, 2500);
    let w = ku_schedule(&WEIBULL, 100.0, 0.1, u64::MAX).unwrap();
    assert_eq!(w.k, 7);
    assert!(w.alternative.is_some());
    let clamped = ku_schedule(&ln, 1e4, 0.1, 1000).unwrap();
    assert!(clamped.clamped && clamped.k == 1000);
    assert!(ku_schedule(&RadialLaw::Exponential { rate: 1.0 }, 10.0, 0.1, 100).is_err());
}

#[test]
fn execution_mode_does_not_change_results() {
    let model = reference_model(20.0);
    let theta = reference_theta();
    let u = 25.0;
    let rule = StoppingRule::default_for(&model, u).unwrap();
    let targets = [cone(u), Target::halfspace(u).unwrap()];
    let s = crude_estimates(&model, &targets, 3000, &rule, 9, Execution::Sequential);
    let p = crude_estimates(&model, &targets, 3000, &rule, 9, Execution::Parallel);
    assert_eq!(s, p);
    let s = ruin_mc_bigjump(&model, &theta, DELTA, u, 3000, &rule, 9, None, Execution::Sequential).unwrap();
    let p = ruin_mc_bigjump(&model, &theta, DELTA, u, 3000, &rule, 9, None, Execution::Parallel).unwrap();
    assert_eq!(s, p);
    assert_eq!(s.hit_probability.to_bits(), p.hit_probability.to_bits());
}

#[test]
fn two_cone_accounting() {
    let model = reference_model(20.0);
    let a = AngularSet::cap(&[0.7, 0.3], 0.05).unwrap();
    let b = AngularSet::cap(&[0.3, 0.7], 0.05).unwrap();
    let rule = StoppingRule::default_for(&model, 15.0).unwrap();
    let t = two_cone_mc(&model, &a, &b, 0.1, 15.0, 20_000, &rule, 3, Execution::Parallel).unwrap();
    assert!(t.distance > 0.0);
    assert_eq!(t.p_a.hits + t.p_b.hits - t.p_both.hits, t.p_union.hits);
    let s = two_cone_mc(&model, &a, &b, 0.1, 15.0, 20_000, &rule, 3, Execution::Sequential).unwrap();
    assert_eq!(format!("{s:?}"), format!("{t:?}"));

    let only_a = AngularMixture::new(a.clone(), vec![1.0], Direction::new(&[-0.5, -0.5]).unwrap(), Weight::Rational { kappa: 20.0 }).unwrap();
    let model = IncrementModel::new(WEIBULL, only_a).unwrap();
    let rule = StoppingRule::default_for(&model, 15.0).unwrap();
    let t = two_cone_mc(&model, &a, &b, 0.1, 15.0, 20_000, &rule, 3, Execution::Parallel).unwrap();
    assert!(t.p_a.hits > 0);
    assert_eq!((t.p_b.hits, t.p_both.hits), (0, 0));
}

#[test]
fn truncation_and_estimator_agreement() {
    let model = reference_model(20.0);
    let theta = reference_theta();
    let u = 100.0;
    let rule = StoppingRule::default_for(&model, u).unwrap();
    let crude = ruin_mc_cone(&model, &theta, DELTA, u, 200_000, &rule, 1, Execution::Parallel).unwrap();
    let long = ruin_mc_cone(&model, &theta, DELTA, u, 200_000, &rule.scaled(2.0), 1, Execution::Parallel).unwrap();
    assert!(long.hits >= crude.hits);
    assert!((long.hit_probability - crude.hit_probability).abs() < crude.half_width(), "{crude:?} vs {long:?}");
    let bj = ruin_mc_bigjump(&model, &theta, DELTA, u, 20_000, &rule, 2, None, Execution::Parallel).unwrap();
    assert!(bj.overlaps(&crude), "{bj:?} vs {crude:?}");
}

/// Independent walk for the equal-component model: `W_n = Σ ±R_i` with the
/// `+` branch taken with probability `R/(R+κ)`, stopped as the engine does.
fn one_dimensional_ruin(kappa: f64, u: f64, min_c: f64, n_max: u64, rho: f64, paths: u64) -> (u64, u64) {
    let mut hits = 0;
    for i in 0..paths {
        let mut rng = stream(4242, domain::TEST, i);
        let mut w = 0.0;
        let mut n = 0u64;
        loop {
            n += 1;
            let r = open01(&mut rng).ln().powi(2);
            w += if open01(&mut rng) < r / (r + kappa) { r } else { -r };
            if w > u {
                hits += 1;
                break;
            }
            if n >= n_max || (w < -rho * u && n as f64 > u / min_c) {
                break;
            }
        }
    }
    (hits, paths)
}

#[test]
fn equal_components_reduce_to_one_dimensional_ruin() {
    let model = IncrementModel::new(WEIBULL, mixture(&[0.5, 0.5], 0.0, Weight::Rational { kappa: 20.0 })).unwrap();
    let u = 30.0;
    let rule = StoppingRule::default_for(&model, u).unwrap();
    let est = ruin_mc_halfspace(&model, u, 200_000, &rule, 5, Execution::Parallel).unwrap();
    let (k, n) = one_dimensional_ruin(20.0, u, rule.min_c, rule.n_max, rule.rho, 200_000);
    let (lo, hi) = subexp_ruin::stats::wilson(k, n, subexp_ruin::stats::Z95);
    assert!(est.ci_low <= hi && lo <= est.ci_high, "{est:?} vs {k}/{n}");
}

/// `u` with asymptotic value `target`, by bisection.
fn level_for(model: &IncrementModel, target: f64) -> f64 {
    let (mut lo, mut hi) = (1.0, 1000.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if asymptotic_ruin(model.radial(), model.c(), mid).unwrap().value > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn independent_runs_agree_at_one_in_a_thousand() {
    let model = reference_model(20.0);
    let u = level_for(&model, 1e-3);
    let rule = StoppingRule::default_for(&model, u).unwrap();
    let theta = reference_theta();
    let a = ruin_mc_cone(&model, &theta, DELTA, u, 1_000_000, &rule, 100, Execution::Parallel).unwrap();
    let b = ruin_mc_cone(&model, &theta, DELTA, u, 1_000_000, &rule, 200, Execution::Parallel).unwrap();
    assert!(a.overlaps(&b), "{a:?} vs {b:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hitting_sets_nest_path_by_path(seed in any::<u64>(), u in 5.0f64..40.0) {
        let model = reference_model(20.0);
        let levels = [u, 1.5 * u, 2.0 * u];
        let rule = StoppingRule::default_for(&model, 2.0 * u).unwrap();
        let mut targets: Vec<Target> = levels.iter().map(|&l| cone(l)).collect();
        targets.push(Target::halfspace(u).unwrap());
        for o in path_outcomes(&model, &targets, 300, &rule, seed, Execution::Parallel) {
            for k in 0..2 {
                if let Some(t) = o.first_hit[k + 1] {
                    prop_assert!(o.first_hit[k].is_some_and(|s| s <= t));
                }
            }
            if let Some(t) = o.first_hit[0] {
                prop_assert!(o.first_hit[3].is_some_and(|s| s <= t));
            }
        }
    }

    #[test]
    fn estimates_are_well_formed(seed in any::<u64>(), u in 2.0f64..30.0) {
        let model = reference_model(20.0);
        let rule = StoppingRule::default_for(&model, u).unwrap();
        let e = ruin_mc_cone(&model, &reference_theta(), DELTA, u, 500, &rule, seed, Execution::Parallel).unwrap();
        prop_assert!(e.ci_low <= e.hit_probability && e.hit_probability <= e.ci_high);
        prop_assert!(e.truncated_paths + e.capped_paths + e.hits <= e.n_paths);
        let b = ruin_mc_bigjump(&model, &reference_theta(), DELTA, u, 200, &rule, seed, None, Execution::Parallel).unwrap();
        prop_assert!(b.ci_low <= b.hit_probability && b.hit_probability <= b.ci_high && b.hit_probability >= 0.0);
    }
}
