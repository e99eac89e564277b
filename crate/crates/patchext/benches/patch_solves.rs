use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use patchext::estimator::{manufactured_polynomial, projected_solution, reconstruct, EstimatorOptions, MeshProblem, ProblemData};
use patchext::extension::data::{random_h1_data, random_hdiv_data};
use patchext::extension::{global_min_h1, global_min_hdiv_direct};
use patchext::fixtures;
use patchext::mesh::kuhn_cube;
use patchext::topology::Marker;

fn problem(n: usize, degree: usize) -> MeshProblem {
    let mesh = kuhn_cube(n, |x, _| if x.z > 1.0 - 1e-12 { Marker::Neumann } else { Marker::Dirichlet });
    let data = ProblemData::manufactured(&manufactured_polynomial());
    MeshProblem { mesh, data, degree }
}

/// All vertex patches of a mesh, solved on the rayon pool or one after another.
fn reconstruction(c: &mut Criterion) {
    let mut group = c.benchmark_group("reconstruct");
    group.sample_size(10);
    for (n, degree) in [(2, 1), (2, 2)] {
        let problem = problem(n, degree);
        let u_h = projected_solution(&problem, &manufactured_polynomial(), degree).unwrap();
        for parallel in [true, false] {
            let label = if parallel { "parallel" } else { "sequential" };
            let opts = EstimatorOptions { parallel, ..Default::default() };
            group.bench_with_input(BenchmarkId::new(label, format!("n{n}_p{degree}")), &opts, |b, opts| {
                b.iter(|| reconstruct(black_box(&problem), black_box(&u_h), opts).unwrap())
            });
        }
    }
    group.finish();
}

/// Single-patch minimizers on the cube star.
fn single_patch(c: &mut Criterion) {
    let patch = fixtures::cube_star();
    let mut group = c.benchmark_group("single_patch");
    group.sample_size(10);
    for p in [2, 4] {
        let r = random_h1_data(&patch, p, 3);
        let d = random_hdiv_data(&patch, p, 3);
        group.bench_with_input(BenchmarkId::new("h1", p), &p, |b, &p| b.iter(|| global_min_h1(&patch, &r, p).unwrap()));
        group.bench_with_input(BenchmarkId::new("hdiv", p), &p, |b, &p| {
            b.iter(|| global_min_hdiv_direct(&patch, &d, p).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, reconstruction, single_patch);
criterion_main!(benches);
