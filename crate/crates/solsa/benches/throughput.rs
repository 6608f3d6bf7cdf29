//! Evaluation throughput: rayon-parallel sequence mapping vs. the
//! sequential fallback, across a few dataset sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use solsa::data::{generate_synthetic, SyntheticSpec, SyntheticTask};
use solsa::dynamics::NetworkParams;
use solsa::trainer::{evaluate, evaluate_sequential};

fn bench_evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    for &n_seqs in &[8usize, 32, 128] {
        let spec = SyntheticSpec {
            task: SyntheticTask::Order,
            dim: 4,
            classes: 2,
            steps: 100,
            train: n_seqs,
            test: n_seqs,
            noise: 0.2,
        };
        let data = generate_synthetic(&spec, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params =
            NetworkParams::new_random(&[4, 64, 2], 0.9, 1.0, 0.4, 0.9, 0.9, &mut rng).unwrap();

        group.bench_with_input(BenchmarkId::new("parallel", n_seqs), &data.test, |b, seqs| {
            b.iter(|| evaluate(&params, seqs).unwrap());
        });
        group.bench_with_input(
            BenchmarkId::new("sequential", n_seqs),
            &data.test,
            |b, seqs| {
                b.iter(|| evaluate_sequential(&params, seqs).unwrap());
            },
        );
    }
    group.finish();
}

criterion_group!(benches, bench_evaluation);
criterion_main!(benches);
