use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use irgnm_core::benchmarks::{DenseRate, SmoothCoefficient};
use irgnm_core::gnstep::gn_solve;
use irgnm_core::irgnm::{run, RunConfig};
use irgnm_core::mesh::Mesh1D;
use irgnm_core::misfit::{check_assumption1, QuadraticMisfit};
use irgnm_core::par;
use irgnm_core::problem::{linearize_at, InverseProblem, StepQoi};
use irgnm_core::studies::rate_study;
use rand_distr::{Distribution, StandardNormal};

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn with_mode<T>(sequential: bool, f: impl FnOnce() -> T) -> T {
    if sequential {
        par::sequential(f)
    } else {
        f()
    }
}

fn assembly_and_estimators(c: &mut Criterion) {
    let inst = SmoothCoefficient::default().build().unwrap();
    let p = &inst.problem;
    let mut g = c.benchmark_group("fem");
    for cells in [256, 2048] {
        let mesh = p.discretize(Mesh1D::uniform(0.0, 1.0, cells).unwrap()).unwrap();
        let q = p.interpolate_control(&mesh, |x| 1.0 + x);
        let lin = Arc::new(linearize_at(p, &q, &mesh).unwrap());
        let state = gn_solve(p, lin.clone(), &mesh, 1e-3).unwrap();
        for (name, seq) in modes() {
            g.bench_with_input(BenchmarkId::new(format!("linearize/{name}"), cells), &cells, |b, _| {
                b.iter(|| with_mode(seq, || linearize_at(p, black_box(&q), &mesh).unwrap()))
            });
            g.bench_with_input(BenchmarkId::new(format!("eta1/{name}"), cells), &cells, |b, _| {
                b.iter(|| with_mode(seq, || p.estimate_step(black_box(&state), StepQoi::I1).unwrap()))
            });
        }
    }
    g.finish();
}

fn full_runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("runs");
    g.sample_size(10);
    let inst = SmoothCoefficient::default().build().unwrap();
    let p = &inst.problem;
    let mesh0 = p.discretize(inst.mesh0.clone()).unwrap();
    let q0 = vec![inst.q_start; mesh0.mesh.n_vertices()];
    let dense_cfg = RunConfig { c_tc: 0.0, ..Default::default() };
    let deltas = [1e-1, 1e-2, 1e-3, 1e-4];
    for (name, seq) in modes() {
        g.bench_function(format!("smooth/{name}"), |b| {
            b.iter(|| with_mode(seq, || run(p, &RunConfig::default(), mesh0.clone(), q0.clone()).unwrap()))
        });
        g.bench_function(format!("rate_study/{name}"), |b| {
            b.iter(|| with_mode(seq, || rate_study(&DenseRate::default(), &dense_cfg, &deltas).unwrap()))
        });
        g.bench_function(format!("assumption_check/{name}"), |b| {
            b.iter(|| {
                with_mode(seq, || {
                    check_assumption1(&QuadraticMisfit::euclidean(), |r| (0..8).map(|_| StandardNormal.sample(r)).collect(), 20_000, 3)
                        .unwrap()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, assembly_and_estimators, full_runs);
criterion_main!(benches);
