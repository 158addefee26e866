use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use schatten_bench::sketch;
use schatten_core::{gram, theta_hat, Workspace};

fn bench_theta_hat(c: &mut Criterion) {
    let mut group = c.benchmark_group("theta_hat");
    for k in [20, 80, 320] {
        let y = sketch(100, k);
        for p in [2, 4, 8] {
            group.throughput(Throughput::Elements(1));
            group.bench_with_input(BenchmarkId::new(format!("p{p}"), k), &y, |b, y| {
                let mut ws = Workspace::new();
                b.iter(|| ws.theta_hat(y.data(), p).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_one_shot(c: &mut Criterion) {
    let y = sketch(100, 80);
    c.bench_function("theta_hat_fresh_workspace/k80_p4", |b| {
        b.iter(|| theta_hat(&y, 4).unwrap().value)
    });
}

fn bench_gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram");
    for k in [20, 80, 320, 1280] {
        let y = sketch(100, k);
        group.bench_with_input(BenchmarkId::from_parameter(k), &y, |b, y| {
            b.iter(|| gram(y))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_theta_hat, bench_one_shot, bench_gram);
criterion_main!(benches);
