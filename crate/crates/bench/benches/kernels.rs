use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mixprec_core::codec::{self, FloatFormat, RoundingMode};
use mixprec_core::dyadic::{parse_decimal, Dyadic, ExtendedReal};
use mixprec_core::linalg::{self, kernel, AccumulationPolicy, Matrix};
use mixprec_core::RandomSource;

fn codec_round_trip(c: &mut Criterion) {
    let mut g = c.benchmark_group("codec");
    let tenth = parse_decimal("0.1").unwrap();
    for fmt in [FloatFormat::HALF, FloatFormat::DOUBLE, FloatFormat::OCTUPLE] {
        g.bench_with_input(
            BenchmarkId::new("encode_decimal", fmt.name()),
            &fmt,
            |b, f| {
                b.iter(|| codec::encode_rational(black_box(&tenth), f, RoundingMode::NearestEven))
            },
        );
        let p = codec::encode_rational(&tenth, &fmt, RoundingMode::NearestEven);
        g.bench_with_input(BenchmarkId::new("decode", fmt.name()), &fmt, |b, f| {
            b.iter(|| codec::decode(black_box(&p), f).unwrap())
        });
    }
    let x = ExtendedReal::Finite(Dyadic::from_f64(std::f64::consts::PI).unwrap());
    g.bench_function("encode_dyadic/single", |b| {
        b.iter(|| {
            codec::encode(
                black_box(&x),
                &FloatFormat::SINGLE,
                RoundingMode::NearestEven,
            )
        })
    });
    g.bench_function("enumerate/half", |b| {
        b.iter(|| codec::binade_counts_by_enumeration(&FloatFormat::HALF).unwrap())
    });
    g.finish();
}

fn scalar_kernel(c: &mut Criterion) {
    let h = FloatFormat::HALF;
    let mut rng = RandomSource::new(1);
    let v: Vec<f64> = (0..3 * 1024)
        .map(|_| kernel::round_to(rng.uniform_range(-2.0, 2.0), &h, RoundingMode::NearestEven))
        .collect();
    let mut g = c.benchmark_group("half_kernel");
    g.bench_function("fma_1024", |b| {
        b.iter(|| {
            v.chunks_exact(3)
                .map(|t| kernel::fma(t[0], t[1], t[2], &h))
                .sum::<f64>()
        })
    });
    g.bench_function("mul_add_1024", |b| {
        b.iter(|| {
            v.chunks_exact(3)
                .map(|t| {
                    let p = kernel::mul(t[0], t[1], &h, RoundingMode::NearestEven);
                    kernel::add(p, t[2], &h, RoundingMode::NearestEven)
                })
                .sum::<f64>()
        })
    });
    g.finish();
}

fn gemm(c: &mut Criterion) {
    let h = FloatFormat::HALF;
    let policy = AccumulationPolicy::half_into_single();
    let mut g = c.benchmark_group("gemm");
    g.sample_size(10);
    for n in [16, 32, 64] {
        let mut rng = RandomSource::new(n as u64);
        let a = Matrix::random_uniform(n, n, h, -1.0, 1.0, &mut rng).unwrap();
        let bm = Matrix::random_uniform(n, n, h, -1.0, 1.0, &mut rng).unwrap();
        g.bench_with_input(BenchmarkId::new("mixed_half_single", n), &n, |b, _| {
            b.iter(|| linalg::gemm_mixed(black_box(&a), black_box(&bm), &policy).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("uniform_half", n), &n, |b, _| {
            b.iter(|| linalg::gemm_uniform(black_box(&a), black_box(&bm), h).unwrap())
        });
        if n <= 32 {
            g.bench_with_input(BenchmarkId::new("exact_oracle", n), &n, |b, _| {
                b.iter(|| linalg::gemm_oracle(black_box(&a), black_box(&bm)).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, codec_round_trip, scalar_kernel, gemm);
criterion_main!(benches);
