use criterion::{criterion_group, criterion_main, Criterion};
use hushrelay_core::format::example_network;
use hushrelay_core::{
    generate_ba, maxflow_augmenting, propagate_report, run, AesGcmCipher, BAConfig, NodeId, SimConfig,
};
use std::hint::black_box;

fn example(c: &mut Criterion) {
    let g = example_network().graph;
    let cfg = SimConfig::default();
    c.bench_function("route_example_15", |b| {
        b.iter(|| run(black_box(&g), NodeId(0), NodeId(4), 15, &cfg).unwrap())
    });
}

fn ba(c: &mut Criterion) {
    let g = generate_ba(&BAConfig {
        n: 50,
        m_attach: 2,
        cap_range: (20, 100),
        seed: 7,
    })
    .unwrap();
    let (s, r) = (NodeId(3), NodeId(41));
    let cfg = SimConfig::default();
    c.bench_function("route_ba50_feasible", |b| {
        b.iter(|| run(black_box(&g), s, r, 40, &cfg).unwrap())
    });
    c.bench_function("route_ba50_infeasible", |b| {
        b.iter(|| run(black_box(&g), s, r, 10_000, &cfg).unwrap())
    });
    c.bench_function("oracle_ba50", |b| b.iter(|| maxflow_augmenting(black_box(&g), s, r)));

    let out = run(&g, s, r, 40, &cfg).unwrap();
    c.bench_function("report_ba50_roundtrip", |b| {
        b.iter(|| {
            let rep = propagate_report(&AesGcmCipher, black_box(&out), 1).unwrap();
            rep.reconstruct(&AesGcmCipher).unwrap()
        })
    });
}

criterion_group!(benches, example, ba);
criterion_main!(benches);
