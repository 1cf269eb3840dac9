use criterion::{black_box, criterion_group, criterion_main, Criterion};

use krawtex::haze::dcp_dehaze;
use krawtex::neural::conv::{conv2d_backward, conv2d_forward, Padding};
use krawtex::neural::generator::{ikcl_inverse_weights, kcl_weights, IKCL_PADDING};
use krawtex::transform::{ikcl_exact, kcl_apply};
use krawtex::{BasisSet, CubeMode, Generator, GeneratorConfig, Tensor4};
use krawtex_bench::{luma, luma_batch, rgb_scene};

fn block_transform(c: &mut Criterion) {
    let basis = BasisSet::with_p(0.5).unwrap();
    let y = luma(256);
    c.bench_function("kcl block 256", |b| {
        b.iter(|| kcl_apply(black_box(&y), &basis, CubeMode::Block).unwrap())
    });
    c.bench_function("kcl sliding 256", |b| {
        b.iter(|| kcl_apply(black_box(&y), &basis, CubeMode::Sliding).unwrap())
    });
    let cube = kcl_apply(&y, &basis, CubeMode::Block).unwrap();
    c.bench_function("ikcl exact 256", |b| b.iter(|| ikcl_exact(black_box(&cube), &basis).unwrap()));
}

fn convolution(c: &mut Criterion) {
    let basis = BasisSet::with_p(0.5).unwrap();
    let x = luma_batch(4, 64);
    let w = kcl_weights(&basis);
    c.bench_function("conv kcl 4x64", |b| {
        b.iter(|| conv2d_forward(black_box(&x), &w, None, 1, Padding::same(8)).unwrap())
    });
    let cube = conv2d_forward(&x, &w, None, 1, Padding::same(8)).unwrap();
    let inv = ikcl_inverse_weights(&basis);
    c.bench_function("conv ikcl 4x64", |b| {
        b.iter(|| conv2d_forward(black_box(&cube), &inv, None, 1, IKCL_PADDING).unwrap())
    });
    let grad = Tensor4::full(x.shape(), 1.0);
    c.bench_function("conv ikcl backward 4x64", |b| {
        b.iter(|| conv2d_backward(black_box(&cube), &inv, &grad, 1, IKCL_PADDING).unwrap())
    });
}

fn networks(c: &mut Criterion) {
    let generator = Generator::new(GeneratorConfig::scaled(0.25), 1).unwrap();
    let x = luma_batch(1, 64);
    c.bench_function("generator infer 64", |b| b.iter(|| generator.infer(black_box(&x)).unwrap()));
    let hazy = rgb_scene(128);
    c.bench_function("dcp 128", |b| b.iter(|| dcp_dehaze(black_box(&hazy), 0.1, 15).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = block_transform, convolution, networks
}
criterion_main!(benches);
