use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use watchdog_core::bssn::{compress_inputs, invert, partition, run_round};
use watchdog_core::scenario::{Epoch, Scenario};
use watchdog_core::{make_reference_sut, BssnParams, IntervalBox};

fn round(c: &mut Criterion) {
    let scenario = Scenario::two_row(0);
    let params = BssnParams::default();
    let sut = make_reference_sut(&scenario.epoch_sut(Epoch::Pre)).unwrap();
    let region = sut.input_space().bounds();
    c.bench_function("run_round_m500", |b| {
        b.iter_batched(
            || (sut.clone(), ChaCha8Rng::seed_from_u64(2)),
            |(mut sut, mut rng)| {
                black_box(run_round(
                    &params,
                    &mut sut,
                    &scenario.checker,
                    &region,
                    &[],
                    1,
                    &mut rng,
                ))
            },
            BatchSize::SmallInput,
        )
    });
}

fn partition_impure(c: &mut Criterion) {
    let scenario = Scenario::two_row(0);
    let params = BssnParams::default();
    let mut sut = make_reference_sut(&scenario.epoch_sut(Epoch::Pre)).unwrap();
    let region = sut.input_space().bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sample = run_round(&params, &mut sut, &scenario.checker, &region, &[], 1, &mut rng);
    let clusters = compress_inputs(&sample, &params);
    c.bench_function("partition_round_hulls", |b| {
        b.iter_batched(
            || (sut.clone(), ChaCha8Rng::seed_from_u64(4)),
            |(mut sut, mut rng)| {
                for cl in &clusters {
                    black_box(partition(cl, &mut sut, &scenario.checker, &params, 1, &mut rng));
                }
            },
            BatchSize::SmallInput,
        )
    });
}

fn inversion(c: &mut Criterion) {
    let scenario = Scenario::two_row(0);
    let sut = make_reference_sut(&scenario.epoch_sut(Epoch::Pre)).unwrap();
    let region = sut.input_space().bounds();
    let target = IntervalBox::from_bounds(&[(4.9, 5.1), (3.4, 3.6)]).unwrap();
    c.bench_function("invert_to_cell_k", |b| {
        b.iter_batched(
            || (sut.clone(), ChaCha8Rng::seed_from_u64(5)),
            |(mut sut, mut rng)| black_box(invert(&mut sut, &region, &target, 400, &mut rng)),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, round, partition_impure, inversion);
criterion_main!(benches);
