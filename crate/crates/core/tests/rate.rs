use carnot_core::rate::{
    cc_distance, discrete_rate, minimize_rate, rate_limit, CumulantModel, ModelKind, RateProblem, RateSettings,
};
use carnot_core::{CarnotGroup, Error};
use proptest::prelude::*;

fn kinds() -> Vec<ModelKind> {
    vec![
        ModelKind::Gaussian,
        ModelKind::UniformCube,
        ModelKind::Rademacher,
        ModelKind::Sphere { radius: 1.5 },
        ModelKind::Ball { radius: 0.8 },
    ]
}

/// A point strictly inside the effective domain of `kind`, from raw values in (-1, 1).
fn interior(kind: ModelKind, raw: &[f64]) -> Vec<f64> {
    match kind {
        ModelKind::Gaussian => raw.iter().map(|v| 3.0 * v).collect(),
        ModelKind::UniformCube | ModelKind::Rademacher => raw.iter().map(|v| 0.95 * v).collect(),
        ModelKind::Sphere { radius } | ModelKind::Ball { radius } => {
            let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            raw.iter().map(|v| 0.95 * radius * v / n).collect()
        }
    }
}

fn quick() -> RateSettings {
    RateSettings {
        restarts: 2,
        ..RateSettings::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fenchel_young(ki in 0usize..5, raw in prop::collection::vec(-1.0f64..1.0, 2), lam in prop::collection::vec(-4.0f64..4.0, 2)) {
        let kind = kinds()[ki];
        let model = CumulantModel::standard(kind, 2);
        let u = interior(kind, &raw);
        let star = model.legendre(&u).unwrap();
        let cgf = model.cgf(&lam).unwrap();
        let pair = u[0] * lam[0] + u[1] * lam[1];
        prop_assert!(star >= 0.0);
        prop_assert!(cgf + star >= pair - 1e-9 * (1.0 + pair.abs()), "{kind:?}: {cgf} + {star} < {pair}");
    }

    #[test]
    fn legendre_matches_numeric_sup(ki in 0usize..5, raw in prop::collection::vec(-1.0f64..1.0, 2)) {
        let kind = kinds()[ki];
        let model = CumulantModel::standard(kind, 2);
        let u = interior(kind, &raw);
        let a = model.legendre(&u).unwrap();
        let b = model.legendre_numeric(&u).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{kind:?} at {u:?}: {a} vs {b}");
    }

    #[test]
    fn legendre_gradient_is_the_dual_point(ki in 0usize..5, raw in prop::collection::vec(-1.0f64..1.0, 2)) {
        let kind = kinds()[ki];
        let model = CumulantModel::standard(kind, 2);
        let u = interior(kind, &raw);
        let (_, lam) = model.legendre_with_grad(&u).unwrap();
        let back = model.cgf_grad(&lam).unwrap();
        for (a, b) in back.iter().zip(&u) {
            prop_assert!((a - b).abs() <= 1e-7 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn horizontal_targets_cost_the_legendre_value(h in prop::collection::vec(-1.5f64..1.5, 2), m in 1usize..12) {
        let g = CarnotGroup::heisenberg(2).unwrap();
        let model = CumulantModel::gaussian(&g);
        let res = minimize_rate(&RateProblem { group: &g, model: &model, target: vec![h[0], h[1], 0.0], m, settings: quick() }).unwrap();
        let want = 0.5 * (h[0] * h[0] + h[1] * h[1]);
        prop_assert!((res.value - want).abs() <= 1e-3 * want.max(1e-12));
    }

    #[test]
    fn rate_of_constant_increments(ki in 0usize..5, raw in prop::collection::vec(-1.0f64..1.0, 2), m in 1usize..9) {
        let kind = kinds()[ki];
        let model = CumulantModel::standard(kind, 2);
        let u = interior(kind, &raw);
        let incs = vec![u.iter().map(|v| v / m as f64).collect::<Vec<_>>(); m];
        let a = discrete_rate(&model, &incs).unwrap();
        let b = model.legendre(&u).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
    }
}

#[test]
fn legendre_vanishes_at_the_mean() {
    for kind in kinds() {
        let model = CumulantModel::standard(kind, 3);
        assert_eq!(model.legendre(&[0.0; 3]).unwrap(), 0.0, "{kind:?}");
        assert_eq!(model.cgf(&[0.0; 3]).unwrap(), 0.0, "{kind:?}");
    }
}

#[test]
fn scalar_gaussian_and_rademacher_closed_forms() {
    let g = CumulantModel::standard(ModelKind::Gaussian, 1);
    assert!((g.legendre(&[0.5]).unwrap() - 0.125).abs() < 1e-15);
    let r = CumulantModel::standard(ModelKind::Rademacher, 1);
    // ((1+z) ln(1+z) + (1-z) ln(1-z)) / 2
    let z: f64 = 0.6;
    let want = 0.5 * ((1.0 + z) * (1.0 + z).ln() + (1.0 - z) * (1.0 - z).ln());
    assert!((r.legendre(&[z]).unwrap() - want).abs() < 1e-12);
}

#[test]
fn bounded_models_are_infinite_outside_support() {
    let cube = CumulantModel::standard(ModelKind::UniformCube, 2);
    assert_eq!(cube.legendre(&[1.2, 0.0]).unwrap(), f64::INFINITY);
    let sphere = CumulantModel::standard(ModelKind::Sphere { radius: 2.0 }, 2);
    assert_eq!(sphere.legendre(&[2.0, 0.5]).unwrap(), f64::INFINITY);
}

#[test]
fn vertical_target_matches_inscribed_polygon() {
    // Optimal m-gon bounding unit area has perimeter^2 = 4 m tan(pi/m)
    let g = CarnotGroup::heisenberg(2).unwrap();
    let model = CumulantModel::gaussian(&g);
    let m = 16;
    let res = minimize_rate(&RateProblem {
        group: &g,
        model: &model,
        target: vec![0.0, 0.0, 1.0],
        m,
        settings: RateSettings::default(),
    })
    .unwrap();
    let polygon = 4.0 * m as f64 * (std::f64::consts::PI / m as f64).tan();
    assert!(
        (2.0 * res.value - polygon).abs() < 1e-3 * polygon,
        "{} vs {polygon}",
        2.0 * res.value
    );
    assert!(res.residual <= 1e-6);
}

#[test]
fn cc_distance_scales_with_dilation() {
    let g = CarnotGroup::heisenberg(2).unwrap();
    let x = vec![0.4, -0.3, 0.25];
    let settings = RateSettings::default();
    let base = cc_distance(&g, &x, 16, &settings).unwrap();
    for a in [0.5, 2.0] {
        let d = cc_distance(&g, &g.dilate(a, &x).unwrap(), 16, &settings).unwrap();
        assert!((d - a * base).abs() < 1e-3 * a * base, "a={a}: {d} vs {}", a * base);
    }
}

#[test]
fn schedule_is_non_increasing_and_validated() {
    let g = CarnotGroup::heisenberg(2).unwrap();
    let model = CumulantModel::gaussian(&g);
    let lim = rate_limit(&g, &model, &[0.2, 0.1, 0.3], &[4, 8, 16], &quick(), None).unwrap();
    assert!(lim.warnings.is_empty(), "{:?}", lim.warnings);
    assert_eq!(lim.estimate, lim.entries.last().unwrap().value);
    assert!(rate_limit(&g, &model, &[0.0; 3], &[8, 4], &quick(), None).is_err());
}

#[test]
fn unreachable_targets_report_infeasibility() {
    // one segment can only reach the horizontal layer
    let g = CarnotGroup::heisenberg(2).unwrap();
    let model = CumulantModel::gaussian(&g);
    let err = minimize_rate(&RateProblem {
        group: &g,
        model: &model,
        target: vec![0.0, 0.0, 1.0],
        m: 1,
        settings: quick(),
    })
    .unwrap_err();
    assert!(matches!(err, Error::Infeasible { .. }), "{err:?}");
}

#[test]
fn restarts_do_not_depend_on_execution_mode() {
    use carnot_core::par::{set_execution_mode, ExecutionMode};
    let g = CarnotGroup::engel();
    let model = CumulantModel::gaussian(&g);
    let problem = RateProblem {
        group: &g,
        model: &model,
        target: vec![0.3, 0.2, 0.1, 0.05],
        m: 8,
        settings: RateSettings::default(),
    };
    set_execution_mode(ExecutionMode::Sequential);
    let a = minimize_rate(&problem).unwrap();
    set_execution_mode(ExecutionMode::Parallel);
    let b = minimize_rate(&problem).unwrap();
    assert_eq!(a, b);
}
