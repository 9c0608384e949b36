use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use bia_core::bcgm::{verify_alignment, BcgmScheme, SchemeParams};
use bia_core::channel::random_symbols;
use bia_core::mapreduce::{build_job, random_payloads, run_job, ShuffleConfig};
use bia_core::metrics::{estimate_rate_curve, Setting};
use bia_core::sim::{simulate_bcgm, RunConfig};

const CASES: [(usize, usize, usize); 4] = [(4, 3, 2), (3, 2, 3), (5, 3, 2), (5, 4, 3)];

fn construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("construct");
    for (k, g, m) in CASES {
        let p = SchemeParams::new(k, g, m).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{k}-{g}-{m}")), &p, |b, p| {
            b.iter(|| BcgmScheme::new(*p).unwrap())
        });
    }
    group.finish();
}

fn alignment_and_decoders(c: &mut Criterion) {
    let mut group = c.benchmark_group("receiver");
    for (k, g, m) in CASES {
        let scheme = BcgmScheme::new(SchemeParams::new(k, g, m).unwrap()).unwrap();
        let id = format!("{k}-{g}-{m}");
        group.bench_function(BenchmarkId::new("verify_alignment", &id), |b| {
            let p = scheme.pattern(1);
            b.iter(|| verify_alignment(black_box(&p.first_phase), &p.desired, &scheme.params))
        });
        group.bench_function(BenchmarkId::new("staged_decoders", &id), |b| b.iter(|| scheme.decoders(1).unwrap()));
    }
    group.finish();
}

fn encode(c: &mut Criterion) {
    let mut group = c.benchmark_group("encode");
    for (k, g, m) in CASES {
        let scheme = BcgmScheme::new(SchemeParams::new(k, g, m).unwrap()).unwrap();
        let p = scheme.params;
        let messages: Vec<_> = (0..p.groups).map(|n| random_symbols(1, n as u64, 0, p.streams)).collect();
        group.bench_function(format!("{k}-{g}-{m}"), |b| b.iter(|| scheme.precoders.encode(black_box(&messages)).unwrap()));
    }
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("end_to_end");
    group.sample_size(20);
    group.bench_function("simulate 4-3-2", |b| b.iter(|| simulate_bcgm(4, 3, 2, RunConfig::noiseless(1)).unwrap()));
    group.bench_function("rate curve 4-3-2 x20", |b| {
        let setting = Setting::Bcgm { users: 4, group_size: 3, modes: 2 };
        b.iter(|| estimate_rate_curve(setting, &[40.0, 60.0], 20, 1).unwrap())
    });
    let job = build_job(4, 2, random_payloads(6, 64, 1)).unwrap();
    for modes in [1, 2] {
        group.bench_function(format!("mapreduce 4-2 M={modes}"), |b| {
            b.iter(|| run_job(&job, &ShuffleConfig { modes, seed: 1, snr_db: None }).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, construction, alignment_and_decoders, encode, end_to_end);
criterion_main!(benches);
