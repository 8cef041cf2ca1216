use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedrobust_core::data::LabeledDataset;
use fedrobust_core::nn::train::{init_model, train_step};
use fedrobust_core::nn::{ArchConfig, ModelSpec, ModelVariant};
use fedrobust_core::{rng, NoiseConfig, Tensor};
use rand::Rng;

fn dataset(n: usize) -> LabeledDataset {
    let mut r = rng::stream(3);
    let samples = Tensor::new(vec![n, 28, 28, 1], (0..n * 784).map(|_| r.random::<f64>()).collect()).unwrap();
    let labels = (0..n).map(|i| i % 10).collect();
    LabeledDataset::new(samples, labels, 10).unwrap()
}

fn train_steps(c: &mut Criterion) {
    let data = dataset(64);
    let batch: Vec<usize> = (0..32).collect();
    let mut group = c.benchmark_group("train_step");
    for variant in [ModelVariant::Cnn, ModelVariant::Dipsen] {
        let spec = ModelSpec::build(variant, [28, 28, 1], 10, &ArchConfig::default(), &NoiseConfig::default()).unwrap();
        let mut model = init_model(&spec, 1).unwrap();
        let mut r = rng::stream(2);
        group.bench_function(BenchmarkId::from_parameter(variant.as_str()), |b| {
            b.iter(|| train_step(&model.spec, &mut model.params, &data, &batch, 0.01, &mut r).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(30);
    targets = train_steps
}
criterion_main!(benches);
