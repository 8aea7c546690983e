use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmra::equilibrium::{check_expost, DeviationFamily, TypeGrid};
use cmra::mechanism::{solve_closing_levels, AuctionConfig, TieBreak};
use cmra::par::Exec;
use cmra::scenario::{sweep_rows, Scenario};
use cmra::{Money, QuantityGrid, StrategyTag, ValuationModel};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn closing(c: &mut Criterion) {
    let mut group = c.benchmark_group("closing");
    for n in [512usize, 2048] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let mut levels = || -> Vec<Option<Money>> {
            (0..=n).map(|_| rng.gen_bool(0.8).then(|| Money(rng.gen_range(0..1_000_000)))).collect()
        };
        let (l1, l2) = (levels(), levels());
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| solve_closing_levels(black_box(&l1), black_box(&l2), n, TieBreak::default(), exec))
            });
        }
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let s = Scenario::from_json(
        r#"{
          "name": "bench-sweep", "mode": "sweep",
          "environment": { "cap": 0.75, "family": { "kind": "power", "alpha": 2.0 }, "thetas": [0.8, 0.5] },
          "auction": { "eps": 0.01, "grid": 8 },
          "runs": [ { "label": "truthful", "strategies": ["cmra-truthful", "cmra-truthful"] } ],
          "sweep": { "theta1": { "low": 0.1, "high": 1.0, "points": 6 }, "theta2": { "low": 0.1, "high": 1.0, "points": 6 } }
        }"#,
    )
    .unwrap();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| sweep_rows(black_box(&s), exec).unwrap()));
    }
    group.finish();
}

fn deviation_search(c: &mut Criterion) {
    let model = ValuationModel::power(2.0, 0.75, 0.5).unwrap().with_support(0.1, 1.0);
    let grid = TypeGrid::linspace(model, 0.1, 1.0, 2);
    let family = DeviationFamily::default();
    let mut group = c.benchmark_group("deviation_search");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = AuctionConfig::new(QuantityGrid::new(4, 0.75).unwrap(), 0.02, 10.0);
        cfg.record_log = false;
        cfg.exec = exec;
        group.bench_function(name, |b| {
            b.iter(|| check_expost(StrategyTag::ClockTruthful, black_box(&grid), &family, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, closing, sweep, deviation_search);
criterion_main!(benches);
