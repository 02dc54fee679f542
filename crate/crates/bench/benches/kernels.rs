use criterion::{criterion_group, criterion_main, Criterion};
use freelab_core::extensional::{enumerate_circle_union, verify_extensional_suite};
use freelab_core::metric::{build_circle, build_circle_union};
use freelab_core::retraction::random_system;
use freelab_core::search::{certify_circle_lower_bound, SearchOptions, Target};
use freelab_core::basis::projections_from_system;
use freelab_core::{kr_norm, operator_norm, Measure, Rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn transport(c: &mut Criterion) {
    let space = build_circle(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mu = Measure::zero(&space);
    for x in 0..space.len() {
        mu.add_at(x, Rational::new(rng.gen_range(-9..=9), rng.gen_range(1..=4)));
    }
    c.bench_function("kr_norm C16", |b| b.iter(|| kr_norm(black_box(&space), black_box(&mu))));
}

fn operator(c: &mut Criterion) {
    let space = build_circle(12).unwrap();
    let sys = random_system(&space, &mut ChaCha8Rng::seed_from_u64(2));
    let fam = projections_from_system(&space, &sys);
    let p = fam.get(sys.last() / 2);
    c.bench_function("operator_norm C12", |b| b.iter(|| operator_norm(black_box(&space), black_box(p))));
}

fn search(c: &mut Criterion) {
    let mut g = c.benchmark_group("search");
    g.sample_size(10);
    g.bench_function("circle n=12", |b| {
        b.iter(|| certify_circle_lower_bound(12, &Target::theorem32(12), &SearchOptions::default(), None).unwrap())
    });
    g.finish();
}

fn extensional(c: &mut Criterion) {
    let en = enumerate_circle_union(2).unwrap();
    let space = build_circle_union(2).unwrap();
    let mut g = c.benchmark_group("extensional");
    g.sample_size(10);
    g.bench_function("verify k=2", |b| b.iter(|| verify_extensional_suite(&en, &space, 0..en.len(), 1, 0).unwrap()));
    g.finish();
}

criterion_group!(benches, transport, operator, search, extensional);
criterion_main!(benches);
