mod common;

use common::{mixture, reference_model, WEIBULL};
use proptest::prelude::*;
use subexp_ruin::geometry::{Coords, Direction};
use subexp_ruin::model::*;
use subexp_ruin::par::Execution;
use subexp_ruin::radial::RadialLaw;
use subexp_ruin::rng::{domain, open01, stream};

#[test]
fn increment_norm_follows_the_radial_law() {
    let model = reference_model(20.0);
    let n = 100_000;
    let mut rng = stream(5, domain::TEST, 0);
    let mut x = Coords::new();
    let mut norms: Vec<f64> = (0..n)
        .map(|_| {
            model.sample_increment(&mut rng, &mut x);
            x.iter().map(|v| v.abs()).sum()
        })
        .collect();
    norms.sort_by(f64::total_cmp);
    let ks = norms
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let f = WEIBULL.cdf(v);
            (f - k as f64 / n as f64).abs().max(((k + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.6276 / (n as f64).sqrt(), "{ks}");
}

#[test]
fn zero_weight_always_points_off() {
    let model = IncrementModel::new(WEIBULL, mixture(&[0.5, 0.5], 0.05, Weight::Constant { value: 0.0 })).unwrap();
    let core = model.angular().core().clone();
    let mut rng = stream(1, domain::TEST, 0);
    let mut x = Coords::new();
    for _ in 0..10_000 {
        let r = model.sample_increment(&mut rng, &mut x);
        assert_eq!(x.as_slice(), &[-0.5 * r, -0.5 * r]);
        let n = r;
        let dir: Vec<f64> = x.iter().map(|v| v / n).collect();
        assert!(!core.contains(&dir));
    }
}

#[test]
fn unit_weight_point_core_is_deterministic_direction() {
    let angular = mixture(&[0.5, 0.5], 0.0, Weight::Constant { value: 1.0 });
    assert!(matches!(IncrementModel::new(WEIBULL, angular.clone()), Err(subexp_ruin::Error::DriftNotCertified(_))));
    let model = IncrementModel::uncertified(WEIBULL, angular).unwrap();
    assert!(model.c().iter().all(|c| (c + 1.0).abs() < 1e-12));
    let mut rng = stream(2, domain::TEST, 0);
    let mut x = Coords::new();
    for _ in 0..1000 {
        let r = model.sample_increment(&mut rng, &mut x);
        assert_eq!(x.as_slice(), &[0.5 * r, 0.5 * r]);
    }
}

#[test]
fn constant_weight_drift_closed_form() {
    let model = IncrementModel::new(WEIBULL, mixture(&[0.5, 0.5], 0.0, Weight::Constant { value: 0.25 })).unwrap();
    assert_eq!(model.drift().method, DriftMethod::ClosedForm);
    for c in model.c() {
        assert!((c - 0.5).abs() < 1e-12);
    }
}

/// `−E[X]` for the reference geometry from an independent sampler:
/// `R = (−ln U)²`, core with probability `R/(R+κ)`, and the core draw
/// averages to the cap center by symmetry of the perturbation.
fn oracle_drift(kappa: f64, draws: u64) -> (f64, f64) {
    let mut rng = stream(77, domain::TEST, 3);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let r = open01(&mut rng).ln().powi(2);
        let core = open01(&mut rng) < r / (r + kappa);
        let a = open01(&mut rng) - 0.5;
        // first component of the increment
        let x = if core { r * (0.5 + 0.05 * a) } else { -0.5 * r };
        s += -x;
        s2 += x * x;
    }
    let n = draws as f64;
    let m = s / n;
    (m, ((s2 / n - m * m) / n).sqrt())
}

#[test]
fn drift_matches_independent_monte_carlo() {
    for kappa in [20.0, 40.0] {
        let model = reference_model(kappa);
        let (m, se) = oracle_drift(kappa, 20_000_000);
        let c = model.c()[0];
        assert!((c - m).abs() < 3.0 * se + model.drift().radius[0], "kappa {kappa}: {c} vs {m} ± {se}");
        let check = model.drift().mc_check.as_ref().unwrap();
        assert!(check.agrees);
        let own = model.drift_mc(1_000_000, 3, Execution::Sequential);
        assert!((own.estimate[0] - m).abs() < own.radius99[0] + 3.0 * se);
    }
    assert!((reference_model(20.0).c_norm() - 0.818_364_173_153_148_6).abs() < 1e-9);
}

#[test]
fn unit_kappa_reference_fails_a4() {
    let err = IncrementModel::from_spec(&common::model_spec(WEIBULL, 1.0)).unwrap_err();
    assert!(matches!(err, subexp_ruin::Error::DriftNotCertified(_)), "{err}");
}

#[test]
fn infinite_mean_is_rejected() {
    let law = RadialLaw::Pareto { alpha: 0.8, x_m: 1.0 };
    assert!(IncrementModel::new(law, mixture(&[0.5, 0.5], 0.05, Weight::Constant { value: 0.0 })).is_err());
}

#[test]
fn conditional_angle_examples() {
    let one = IncrementModel::uncertified(WEIBULL, mixture(&[0.5, 0.5], 0.05, Weight::Constant { value: 1.0 })).unwrap();
    for h in [1.0, 10.0, 100.0] {
        assert_eq!(conditional_angle_prob(&one, 0.01, h, 10_000, 0).unwrap().estimate, 1.0);
    }
    let rational = IncrementModel::uncertified(WEIBULL, mixture(&[0.5, 0.5], 0.05, Weight::Rational { kappa: 1.0 })).unwrap();
    let p = conditional_angle_prob(&rational, 0.05, 99.0, 1_000_000, 1).unwrap();
    assert!(p.estimate >= 0.99, "{p:?}");
    let sweep: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&h| conditional_angle_prob(&rational, 0.05, h, 200_000, 4).unwrap().estimate).collect();
    assert!(sweep.windows(2).all(|w| w[1] >= w[0]) && sweep[2] > 0.99, "{sweep:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn certified_drift_is_positive(kappa in 0.5f64..200.0, x in 0.2f64..0.8, r in 0.0f64..0.15, exp_weight in any::<bool>()) {
        let weight = if exp_weight { Weight::Exponential { kappa } } else { Weight::Rational { kappa } };
        let core = subexp_ruin::geometry::AngularSet::cap(&[x, 1.0 - x], r.min(x.min(1.0 - x) * 0.9)).unwrap();
        let angular = AngularMixture::new(core, vec![1.0], Direction::new(&[-0.5, -0.5]).unwrap(), weight).unwrap();
        if let Ok(m) = IncrementModel::with_check_draws(WEIBULL, angular, 20_000) {
            prop_assert!(m.drift().certified);
            for (c, rad) in m.c().iter().zip(&m.drift().radius) {
                prop_assert!(c - rad > 0.0);
            }
        }
    }

    #[test]
    fn conditional_probability_monotone_in_h(seed in any::<u64>(), kappa in 0.5f64..50.0, h in 1.0f64..200.0) {
        let m = IncrementModel::uncertified(WEIBULL, mixture(&[0.5, 0.5], 0.05, Weight::Rational { kappa })).unwrap();
        let a = conditional_angle_prob(&m, 0.05, h, 2000, seed).unwrap().estimate;
        let b = conditional_angle_prob(&m, 0.05, 2.0 * h, 2000, seed).unwrap().estimate;
        prop_assert!(b >= a);
    }
}
