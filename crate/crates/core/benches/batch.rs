use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fibertwin::grad::{loss_and_grad, BatchItem, LossSpec, ParameterVector};
use fibertwin::nlse::{GridSpec, Propagator};
use fibertwin::trainer::{build_dataset, sample_coordinates, Scenario};
use fibertwin::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench_loss_and_grad(c: &mut Criterion) {
    let scenario = Scenario::default();
    let data = build_dataset(20, &scenario, 1, Exec::Parallel).unwrap();
    let (x0, _) = &data.pairs[0];
    let grid = GridSpec::new(x0.len(), x0.dt_ps, 4, 1.0).unwrap();
    let prop = Propagator::new(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch: Vec<BatchItem> = data
        .pairs
        .iter()
        .map(|(x, y)| BatchItem {
            input: x.samples.clone(),
            reference: y.samples.clone(),
            coords: sample_coordinates(&grid, 800, &mut rng),
        })
        .collect();
    let params = ParameterVector::from_values(vec![-0.9, 1.1, -1.0, 0.9, -1.1, 1.0, -1.0, 1.05, -0.8, 0.7]).unwrap();
    let spec = LossSpec {
        scales: scenario.scales(),
        ..LossSpec::default()
    };

    let mut g = c.benchmark_group("loss_and_grad/20x800");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| loss_and_grad(&prop, &batch, &params, &spec, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_build_dataset(c: &mut Criterion) {
    let scenario = Scenario::default();
    let mut g = c.benchmark_group("build_dataset/16");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_dataset(16, &scenario, 1, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_loss_and_grad, bench_build_dataset);
criterion_main!(benches);
