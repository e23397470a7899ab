use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use unitdub::diffusion::{sample, SamplerConfig, SourceContext};
use unitdub::par::{map_range, map_range_seq};
use unitdub::rng::derive_seed;
use unitdub::toy::{
    adapt_corpus, generate_corpus, generate_pair, train_count_denoiser, ToyTaskSpec, TrainConfig,
};

fn corpus_generation(c: &mut Criterion) {
    let spec = ToyTaskSpec::standard();
    let mut group = c.benchmark_group("generate_pairs");
    for n in [1_000usize, 10_000] {
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| map_range(n, |i| generate_pair(&spec, i as u64).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| map_range_seq(n, |i| generate_pair(&spec, i as u64).unwrap()))
        });
    }
    group.finish();
}

fn translation(c: &mut Criterion) {
    let spec = ToyTaskSpec::standard();
    let train = adapt_corpus(&generate_corpus(&spec, 1_000).unwrap(), true).unwrap();
    let cfg = TrainConfig {
        steps: 10_000,
        ..TrainConfig::default()
    };
    let model = train_count_denoiser(&train, &cfg).unwrap().model;
    let contexts: Vec<SourceContext> = train[..500]
        .iter()
        .map(|p| SourceContext::new(p.src.clone()).unwrap())
        .collect();
    let sampler = SamplerConfig::default();
    let translate = |i: usize| {
        let ctx = &contexts[i];
        let cfg = sampler.with_seed(derive_seed(sampler.seed, i as u64));
        sample(&model, ctx, ctx.src_units.len(), &cfg).unwrap()
    };

    let mut group = c.benchmark_group("translate_500_pairs");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(map_range(contexts.len(), translate)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(map_range_seq(contexts.len(), translate)))
    });
    group.finish();
}

criterion_group!(benches, corpus_generation, translation);
criterion_main!(benches);
