use patchext::estimator::{
    error_bound, exact_error, projected_solution, reconstruct, vertex_contribution, EstimatorOptions, MeshProblem,
    Polynomial, ProblemData,
};
use patchext::fixtures;
use patchext::mesh::kuhn_cube;
use patchext::shelling::{verify_enumeration, PatchEnumeration};
use patchext::topology::Marker;
use proptest::prelude::*;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn every_order_of_a_four_cell_star_is_valid() {
    let patch = fixtures::random_star_spec(4, 0.2, 3).build();
    assert_eq!(patch.cell_count(), 4);
    let orders = permutations(4);
    assert_eq!(orders.len(), 24);
    for order in orders {
        let e = PatchEnumeration::from_order(&patch, order.clone());
        let (ok, v) = verify_enumeration(&patch, &e);
        assert!(ok, "{order:?}: {v:?}");
    }
}

#[test]
fn reconstruction_is_local() {
    let u = Polynomial::new(vec![(1.0, [2, 1, 0]), (-0.5, [0, 0, 3]), (0.3, [1, 1, 1])]);
    let mesh = kuhn_cube(2, |x, _| if x.y > 1.0 - 1e-12 { Marker::Neumann } else { Marker::Dirichlet });
    let problem = MeshProblem { mesh, data: ProblemData::manufactured(&u), degree: 1 };
    let u_h = projected_solution(&problem, &u, 1).unwrap();
    let mut moved = u_h.clone();
    let k = 17;
    moved.coeffs[k][0] += 0.25;
    let touched: Vec<usize> = problem.mesh.cells[k].to_vec();
    for a in problem.mesh.used_vertices() {
        let before = vertex_contribution(&problem, &u_h, a).unwrap();
        let after = vertex_contribution(&problem, &moved, a).unwrap();
        let diff = before
            .potential
            .iter()
            .zip(&after.potential)
            .chain(before.flux.iter().zip(&after.flux))
            .map(|(x, y)| (x - y).amax())
            .fold(0.0, f64::max);
        if touched.contains(&a) {
            assert!(diff > 1e-6, "vertex {a} ignores the change");
        } else {
            assert_eq!(diff, 0.0, "vertex {a} changed");
        }
    }
}

#[test]
fn pure_dirichlet_cube_is_reliable() {
    let u = Polynomial::new(vec![(1.0, [1, 1, 1]), (2.0, [3, 0, 0]), (-1.0, [0, 2, 0])]);
    let mesh = kuhn_cube(2, |_, _| Marker::Dirichlet);
    let problem = MeshProblem { mesh, data: ProblemData::manufactured(&u), degree: 2 };
    let u_h = projected_solution(&problem, &u, 2).unwrap();
    let rec = reconstruct(&problem, &u_h, &EstimatorOptions::default()).unwrap();
    assert!(rec.audit.max() < 1e-9, "{:?}", rec.audit);
    let bound = error_bound(&problem, &u_h, &rec);
    let err = exact_error(&problem, &u_h, &u).iter().map(|e| e * e).sum::<f64>().sqrt();
    assert!(err <= bound.eta + 1e-8);
    assert!(bound.eta / err < 3.0, "effectivity {}", bound.eta / err);
}

fn polynomial() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((-2.0f64..2.0, 0u32..3, 0u32..3, 0u32..3), 1..5)
        .prop_map(|t| Polynomial::new(t.into_iter().map(|(c, i, j, k)| (c, [i, j, k])).collect()))
        .prop_filter("needs a nonzero gradient", |p| p.degree() >= 1)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn estimate_bounds_the_error(u in polynomial(), degree in 1usize..3, neumann_face in 0usize..6) {
        // cube faces numbered 2 * axis + (0 at the origin side, 1 at the far side)
        let mesh = kuhn_cube(1, |x, n| {
            let axis = (0..3).find(|&k| n[k].abs() > 0.5).unwrap();
            let face = 2 * axis + usize::from(x[axis] > 0.5);
            if face == neumann_face { Marker::Neumann } else { Marker::Dirichlet }
        });
        let problem = MeshProblem { mesh, data: ProblemData::manufactured(&u), degree };
        let u_h = projected_solution(&problem, &u, degree).unwrap();
        let rec = reconstruct(&problem, &u_h, &EstimatorOptions::default()).unwrap();
        prop_assert!(rec.audit.max() < 1e-9, "{:?}", rec.audit);
        let bound = error_bound(&problem, &u_h, &rec);
        let err = exact_error(&problem, &u_h, &u).iter().map(|e| e * e).sum::<f64>().sqrt();
        prop_assert!(err <= bound.eta + 1e-8, "error {} eta {}", err, bound.eta);
    }
}
