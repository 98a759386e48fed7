//! Rayon versus single-worker execution of the data-parallel kernels.
//!
//! Build with `--no-default-features` to benchmark the plain sequential
//! fallback instead of a one-thread pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use xlmimo::channel::{ArrayConfig, ChannelConfig};
use xlmimo::harness::{generate_dataset, SnrPolicy};
use xlmimo::model::{MatCenet, MatCenetConfig};
use xlmimo::nn::{matmul, Layer, MatRef, Mode, Tensor};
use xlmimo::par::run_sequential;
use xlmimo::rng::{stream_rng, Stream};

fn modes() -> [(&'static str, bool); 2] {
    [("rayon", false), ("sequential", true)]
}

fn run<R: Send>(sequential: bool, f: impl FnOnce() -> R + Send) -> R {
    if sequential {
        run_sequential(f)
    } else {
        f()
    }
}

fn bench_gemm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemm_512");
    let mut rng = stream_rng(1, Stream::Custom(0));
    let a = Tensor::<f32>::uniform(&[512, 512], 1.0, &mut rng);
    let b = Tensor::<f32>::uniform(&[512, 512], 1.0, &mut rng);
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| run(seq, || matmul(MatRef::new(a.data(), 512, 512), MatRef::new(b.data(), 512, 512))))
        });
    }
    group.finish();
}

fn bench_forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("matcenet_forward_m64_batch32");
    group.sample_size(10);
    let mut rng = stream_rng(1, Stream::Init);
    let cfg = MatCenetConfig::with_width(64, 32);
    let mut net = MatCenet::<f32>::new(cfg, &mut rng).unwrap();
    let x = Tensor::<f32>::uniform(&[32, 8, 8, 2], 1.0, &mut rng);
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| run(seq, || net.forward(&x, Mode::Infer).unwrap()))
        });
    }
    group.finish();
}

fn bench_dataset(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_dataset_m256_n500");
    group.sample_size(10);
    let array = ArrayConfig::new(256, 0.01).unwrap();
    let chan = ChannelConfig::new(array, 6, 1, (10.0, 80.0)).unwrap();
    let snr = SnrPolicy::Fixed { snr_db: 10.0 };
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| run(seq, || generate_dataset(&chan, &snr, 500, 1, Stream::Test).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gemm, bench_forward, bench_dataset);
criterion_main!(benches);
