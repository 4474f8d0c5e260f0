use cconvex::critical::{find_delta_seeds, trace_delta, ContinuationConfig};
use cconvex::dual::dual_differential;
use cconvex::geometry::{adapted_frame_and_graph, shape_operator};
use cconvex::linalg::RVec;
use cconvex::pencil::Pencil;
use cconvex::Builtin;
use cconvex_bench::generic_point;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn pointwise(c: &mut Criterion) {
    for f in [
        Builtin::ellipsoid(&[1.0, 1.5]),
        Builtin::ellipsoid(&[1.0, 1.5, 0.8]),
    ] {
        let x = generic_point(&f);
        let label = f.label();
        c.bench_function(&format!("shape_operator {label}"), |b| {
            b.iter(|| shape_operator(black_box(&f), black_box(&x)).unwrap())
        });
        c.bench_function(&format!("dual_differential {label}"), |b| {
            b.iter(|| dual_differential(black_box(&f), black_box(&x)).unwrap())
        });
        let chart = adapted_frame_and_graph(&f, &x).unwrap();
        let q = RVec::from_element(
            chart.chart_dim(),
            0.3 * chart.radius / (chart.chart_dim() as f64).sqrt(),
        );
        c.bench_function(&format!("graph_chart_evaluate {label}"), |b| {
            b.iter(|| chart.evaluate(black_box(&q)).unwrap())
        });
    }
}

fn continuation(c: &mut Criterion) {
    let f = Builtin::ellipsoid(&[1.0, 1.5]);
    let p = Pencil::axis(2);
    let seed = find_delta_seeds(&f, &p, 16, 1).unwrap().remove(0);
    let cfg = ContinuationConfig::default();
    c.bench_function("trace_delta ellipsoid N=2", |b| {
        b.iter(|| trace_delta(&f, &p, black_box(&seed), &cfg).unwrap())
    });
}

criterion_group!(benches, pointwise, continuation);
criterion_main!(benches);
