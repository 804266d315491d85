use carnot_core::mc::{approximation_decay_study, estimate, EventSpec};
use carnot_core::par::{set_execution_mode, ExecutionMode};
use carnot_core::rate::{minimize_rate, CumulantModel, ModelKind, RateProblem, RateSettings};
use carnot_core::walk::StepDistribution;
use carnot_core::CarnotGroup;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(ExecutionMode, &str); 2] = [
    (ExecutionMode::Sequential, "sequential"),
    (ExecutionMode::Parallel, "parallel"),
];

fn monte_carlo(c: &mut Criterion) {
    let g = CarnotGroup::heisenberg(2).unwrap();
    let dist = StepDistribution::new(ModelKind::Gaussian, &g);
    let event = EventSpec::NormExceedance { threshold: 1.2 };
    let mut group = c.benchmark_group("mc_estimate_n16_20k");
    group.sample_size(10);
    for (mode, name) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            set_execution_mode(mode);
            b.iter(|| estimate(&g, &dist, &event, 16, 20_000, 1).unwrap())
        });
    }
    group.finish();
}

fn approximation(c: &mut Criterion) {
    let g = CarnotGroup::engel();
    let dist = StepDistribution::new(ModelKind::UniformCube, &g);
    let mut group = c.benchmark_group("approx_study_n512_50");
    group.sample_size(10);
    for (mode, name) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            set_execution_mode(mode);
            b.iter(|| approximation_decay_study(&g, &dist, 0.05, &[512], &[1, 16, 512], 50, 3).unwrap())
        });
    }
    group.finish();
}

fn rate_restarts(c: &mut Criterion) {
    let g = CarnotGroup::heisenberg(2).unwrap();
    let model = CumulantModel::gaussian(&g);
    let problem = RateProblem {
        group: &g,
        model: &model,
        target: vec![0.3, -0.2, 0.4],
        m: 16,
        settings: RateSettings::default(),
    };
    let mut group = c.benchmark_group("rate_m16_8_restarts");
    group.sample_size(10);
    for (mode, name) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            set_execution_mode(mode);
            b.iter(|| minimize_rate(&problem).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, approximation, rate_restarts);
criterion_main!(benches);
