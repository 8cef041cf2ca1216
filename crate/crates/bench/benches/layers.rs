use criterion::{criterion_group, criterion_main, Criterion};
use fedrobust_core::nn::layers::{conv2d_forward, maxpool_forward};
use fedrobust_core::nn::{alpha_dropout, selu, Mode};
use fedrobust_core::noise::add_noise_in_place;
use fedrobust_core::{rng, Tensor};
use rand::Rng;

fn uniform(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::stream(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random::<f64>() - 0.5).collect()).unwrap()
}

fn layers(c: &mut Criterion) {
    let x = uniform(&[32, 13, 13, 32], 1);
    let w = uniform(&[3, 3, 32, 64], 2);
    let b = uniform(&[64], 3);
    c.bench_function("conv2d_forward 32x13x13x32 -> 64", |bench| bench.iter(|| conv2d_forward(&x, &w, &b).unwrap()));
    c.bench_function("maxpool_forward 32x13x13x32", |bench| bench.iter(|| maxpool_forward(&x, 2).unwrap()));

    let mut r = rng::stream(4);
    let mut noisy = x.clone();
    c.bench_function("gaussian noise 173k", |bench| bench.iter(|| add_noise_in_place(&mut noisy, 0.5, &mut r)));

    let h = uniform(&[32, 1600], 5);
    c.bench_function("selu 51k", |bench| bench.iter(|| h.map(selu)));
    c.bench_function("alpha_dropout 51k", |bench| bench.iter(|| alpha_dropout(&h, 0.1, Mode::Train, &mut r).unwrap()));
}

criterion_group!(benches, layers);
criterion_main!(benches);
