use carnot_core::mc::{
    approximation_decay_study, estimate, fit_line, rate_reference, slope_study, sphere_directions, wilson_interval,
    EventSpec, McEstimate, ReferenceSettings,
};
use carnot_core::par::{set_execution_mode, ExecutionMode};
use carnot_core::rate::ModelKind;
use carnot_core::walk::StepDistribution;
use carnot_core::CarnotGroup;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn wilson_interval_reference_values() {
    // textbook value for 10 successes in 100 trials
    let (lo, hi) = wilson_interval(10, 100);
    assert!((lo - 0.0552).abs() < 1e-4 && (hi - 0.1744).abs() < 1e-4, "({lo}, {hi})");
    let (lo, hi) = wilson_interval(0, 1_000_000);
    assert_eq!(lo, 0.0);
    // close to the rule of three
    assert!((hi - 3.0e-6).abs() < 1e-8, "{hi}");
    let (lo, hi) = wilson_interval(100, 100);
    assert!(hi == 1.0 && lo > 0.96);
}

#[test]
fn wilson_interval_covers() {
    let p = 0.1;
    let trials = 200u64;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut covered = 0;
    for _ in 0..200 {
        let hits = (0..trials).filter(|_| rng.random::<f64>() < p).count() as u64;
        let (lo, hi) = wilson_interval(hits, trials);
        covered += (lo <= p && p <= hi) as usize;
    }
    assert!(covered >= 180, "{covered} / 200");
}

#[test]
fn scalar_tail_matches_the_normal_oracle() {
    // S_n / n ~ N(0, 1/n), so P(|S_n/n| >= a) = 2 (1 - Phi(a sqrt(n)))
    let g = CarnotGroup::euclidean(1).unwrap();
    let dist = StepDistribution::new(ModelKind::Gaussian, &g);
    let event = EventSpec::HorizontalExceedance { threshold: 0.5 };
    let n = 25;
    let e = estimate(&g, &dist, &event, n, 1_000_000, 4).unwrap();
    let phi = Normal::new(0.0, 1.0).unwrap();
    let exact = 2.0 * (1.0 - phi.cdf(0.5 * (n as f64).sqrt()));
    let sd = (exact * (1.0 - exact) / 1e6).sqrt();
    assert!((e.p_hat - exact).abs() < 5.0 * sd, "{} vs {exact}", e.p_hat);
    assert!(e.ci_low <= exact && exact <= e.ci_high);
}

#[test]
fn exact_lines_are_recovered() {
    let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 2.0 - 0.25 * i as f64)).collect();
    let fit = fit_line(&pts).unwrap();
    assert!((fit.slope + 0.25).abs() < 1e-14 && (fit.intercept - 2.0).abs() < 1e-14);
    let (lo, hi) = fit.slope_ci.unwrap();
    assert!((lo + 0.25).abs() < 1e-12 && (hi + 0.25).abs() < 1e-12);
    assert!(fit_line(&pts[..2]).unwrap().slope_ci.is_none());
    assert!(fit_line(&pts[..1]).is_none());
    assert!(fit_line(&[(1.0, 0.0), (1.0, 2.0)]).is_none());
}

#[test]
fn studies_do_not_depend_on_execution_mode() {
    let g = CarnotGroup::heisenberg(2).unwrap();
    let dist = StepDistribution::new(ModelKind::Gaussian, &g);
    let event = EventSpec::NormExceedance { threshold: 0.8 };
    let run = || {
        let slope = slope_study(&g, &dist, &event, &[4, 6, 8], 20_000, 5, None).unwrap();
        let decay = approximation_decay_study(&g, &dist, 0.05, &[64], &[1, 8, 64], 50, 5).unwrap();
        (slope, decay)
    };
    set_execution_mode(ExecutionMode::Sequential);
    let a = run();
    set_execution_mode(ExecutionMode::Parallel);
    let b = run();
    assert_eq!(a, b);
}

#[test]
fn ball_around_identity_has_flat_slope() {
    let g = CarnotGroup::heisenberg(2).unwrap();
    let dist = StepDistribution::new(ModelKind::Gaussian, &g);
    let event = EventSpec::Ball {
        center: vec![0.0; 3],
        radius: 0.6,
    };
    let settings = ReferenceSettings::default();
    let report = slope_study(&g, &dist, &event, &[10, 20, 40], 20_000, 3, Some(&settings)).unwrap();
    assert!(report.slope().unwrap().abs() < 0.01, "{:?}", report.fit);
    let reference = report.reference.unwrap();
    assert_eq!(reference.inf_rate, 0.0);
    assert_eq!(reference.provenance, "identity_in_event");
}

#[test]
fn horizontal_reference_is_the_legendre_minimum() {
    let settings = ReferenceSettings::default();
    let event = EventSpec::HorizontalExceedance { threshold: 0.5 };
    let line = CarnotGroup::euclidean(1).unwrap();
    let r = rate_reference(
        &line,
        &StepDistribution::new(ModelKind::Gaussian, &line),
        &event,
        &settings,
    )
    .unwrap();
    assert!((r.inf_rate - 0.125).abs() < 1e-12);
    assert_eq!(r.provenance, "legendre_on_horizontal_sphere");
    let h = CarnotGroup::heisenberg(2).unwrap();
    let r = rate_reference(&h, &StepDistribution::new(ModelKind::Gaussian, &h), &event, &settings).unwrap();
    assert!((r.inf_rate - 0.125).abs() < 1e-9);
    // cube steps: Lambda* along a coordinate axis is the cheapest direction
    let r = rate_reference(
        &h,
        &StepDistribution::new(ModelKind::UniformCube, &h),
        &event,
        &settings,
    )
    .unwrap();
    let axis = carnot_core::rate::CumulantModel::uniform_cube(&h)
        .legendre(&[0.5, 0.0])
        .unwrap();
    assert!(
        r.inf_rate <= axis * (1.0 + 1e-9) && r.inf_rate > 0.0,
        "{} vs {axis}",
        r.inf_rate
    );
}

#[test]
fn boundary_scan_bounds_the_infimum_from_above() {
    // the infimum a^2 / 2 sits on the horizontal boundary; a coarse scan only bounds it from above
    let g = CarnotGroup::heisenberg(2).unwrap();
    let dist = StepDistribution::new(ModelKind::Gaussian, &g);
    let settings = ReferenceSettings {
        boundary_points: 16,
        refine_points: 0,
        m: 16,
        ..ReferenceSettings::default()
    };
    let event = EventSpec::NormExceedance { threshold: 1.0 };
    let r = rate_reference(&g, &dist, &event, &settings).unwrap();
    assert_eq!(r.provenance, "boundary_scan");
    assert!(r.inf_rate >= 0.5 * (1.0 - 1e-6) && r.inf_rate <= 0.55, "{}", r.inf_rate);
    assert_eq!(r.points_failed, 0);
    assert_eq!(r.monotone(), Some(true));
}

#[test]
fn full_resolution_rows_are_censored() {
    let g = CarnotGroup::engel();
    let dist = StepDistribution::new(ModelKind::UniformCube, &g);
    let study = approximation_decay_study(&g, &dist, 0.01, &[32], &[1, 32], 40, 8).unwrap();
    let full = study.row(32, 32).unwrap();
    assert_eq!(full.zero_gaps, 40);
    assert_eq!(full.median_gap, 0.0);
    assert!(full.censored && full.log_rate.is_none());
    assert!(study.row(1, 32).unwrap().median_gap > 0.0);
    assert!(approximation_decay_study(&g, &dist, 0.01, &[8], &[16], 4, 8).is_err());
    assert!(approximation_decay_study(&g, &dist, 0.0, &[8], &[4], 4, 8).is_err());
}

#[test]
fn low_count_estimates_enter_the_fit_with_a_warning() {
    // P(|S_n/n| >= 1/2) = 2 (1 - Phi(sqrt(n)/2)): about 0.32, 0.046, 0.0027
    let g = CarnotGroup::euclidean(1).unwrap();
    let dist = StepDistribution::new(ModelKind::Gaussian, &g);
    let event = EventSpec::HorizontalExceedance { threshold: 0.5 };
    let report = slope_study(&g, &dist, &event, &[4, 16, 36], 2000, 17, None).unwrap();
    let last = &report.estimates[2];
    assert!(last.hits > 0 && last.hits < 30, "{last:?}");
    assert_eq!(report.fit_points.len(), 3);
    assert!(report.fit.is_some());
    assert!(
        report.warnings.iter().any(|w| w.starts_with("n = 36")),
        "{:?}",
        report.warnings
    );
}

#[test]
fn zero_hits_keep_a_one_sided_interval() {
    let e = McEstimate::from_counts(10, 1000, 0);
    assert_eq!(e.p_hat, 0.0);
    assert!(e.log_rate.is_none() && !e.usable());
    assert!(e.ci_high > 0.0);
}

#[test]
fn events_are_validated() {
    let g = CarnotGroup::heisenberg(2).unwrap();
    let dist = StepDistribution::new(ModelKind::Gaussian, &g);
    let bad = [
        EventSpec::NormExceedance { threshold: -1.0 },
        EventSpec::Ball {
            center: vec![0.0; 2],
            radius: 1.0,
        },
        EventSpec::Ball {
            center: vec![0.0; 3],
            radius: 0.0,
        },
        EventSpec::HorizontalExceedance { threshold: f64::NAN },
    ];
    for ev in bad {
        assert!(estimate(&g, &dist, &ev, 4, 10, 0).is_err(), "{ev:?}");
    }
    let ok = EventSpec::NormExceedance { threshold: 1.0 };
    assert!(estimate(&g, &dist, &ok, 0, 10, 0).is_err());
    assert!(estimate(&g, &dist, &ok, 4, 0, 0).is_err());
    assert!(slope_study(&g, &dist, &ok, &[8, 4], 10, 0, None).is_err());
    let parsed: EventSpec = serde_json::from_str(r#"{"kind": "norm_exceedance", "threshold": 1.2}"#).unwrap();
    assert_eq!(parsed, EventSpec::NormExceedance { threshold: 1.2 });
}

proptest! {
    #[test]
    fn directions_are_unit_vectors(dim in 1usize..6, count in 1usize..100, seed in any::<u64>()) {
        let dirs = sphere_directions(dim, count, seed);
        prop_assert!(!dirs.is_empty());
        for d in &dirs {
            prop_assert_eq!(d.len(), dim);
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wilson_interval_contains_the_estimate(trials in 1u64..100_000, frac in 0.0f64..=1.0) {
        let hits = ((trials as f64) * frac).floor() as u64;
        let (lo, hi) = wilson_interval(hits, trials);
        let p = hits as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }
}
