use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use mlmc_core::{
    sample_level, GreekMethod, GreekSampler, LevelSampler, ModelSpec, PayoffSpec, PricingSampler, Quantity, SchemeMode,
};

const SAMPLES: u64 = 1024;

fn gbm() -> ModelSpec {
    ModelSpec::gbm(0.05, 0.2, 1.0).unwrap()
}

fn bench_levels(c: &mut Criterion, name: &str, sampler: &dyn LevelSampler) {
    let mut group = c.benchmark_group(name);
    group.throughput(Throughput::Elements(SAMPLES));
    for level in [2u32, 5, 8] {
        group.bench_with_input(BenchmarkId::from_parameter(level), &level, |b, &l| {
            b.iter(|| sample_level(sampler, l, 1, 0, 0, SAMPLES).unwrap())
        });
    }
    group.finish();
}

fn pricing(c: &mut Criterion) {
    let call = PricingSampler::new(gbm(), PayoffSpec::call(1.0, SchemeMode::MilsteinSmoothed), 1.0).unwrap();
    bench_levels(c, "milstein_call", &call);
    let euler = PricingSampler::new(gbm(), PayoffSpec::call(1.0, SchemeMode::Euler), 1.0).unwrap();
    bench_levels(c, "euler_call", &euler);

    let cc = ModelSpec::clark_cameron([1.0, 1.0]);
    let anti = PricingSampler::new(cc, PayoffSpec::call(1.0, SchemeMode::Antithetic).with_component(1), 1.0).unwrap();
    bench_levels(c, "antithetic_clark_cameron", &anti);

    let merton = ModelSpec::merton(0.05, 0.2, 1.0, 1.0, -0.1, 0.2).unwrap();
    let jumps = PricingSampler::new(merton, PayoffSpec::call(1.0, SchemeMode::MilsteinSmoothed), 1.0).unwrap();
    bench_levels(c, "merton_call", &jumps);
}

fn greeks(c: &mut Criterion) {
    let spec = PayoffSpec::call(1.0, SchemeMode::MilsteinSmoothed);
    let vibrato = GreekSampler::new(gbm(), spec, 1.0, GreekMethod::Vibrato(10), Quantity::DELTA).unwrap();
    bench_levels(c, "vibrato_delta", &vibrato);
    let smoothed = GreekSampler::new(gbm(), spec, 1.0, GreekMethod::Smoothed, Quantity::DELTA).unwrap();
    bench_levels(c, "smoothed_delta", &smoothed);
}

criterion_group!(benches, pricing, greeks);
criterion_main!(benches);
