use std::collections::HashMap;

use patchext::coloring::{three_color_refine, verify_coloring};
use patchext::extension::data::{h1_data_from_field, random_h1_data, random_hat_field, random_hdiv_data};
use patchext::extension::{
    global_min_h1, global_min_h1_broken, global_min_h1_seeded, global_min_hdiv, global_min_hdiv_direct,
    global_min_hdiv_seeded, infer_h1_mode, sweep_construct_h1, sweep_construct_hdiv,
};
use patchext::fixtures;
use patchext::mesh::{kuhn_cube, TetMesh};
use patchext::shelling::{enumerate_patch_with, verify_enumeration};
use patchext::topology::{build_patch, check_compatibility_h1, EdgeFan, Marker, PatchKind, PatchMesh};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fan orientation signs made independent of which neighbor is stored first.
fn canonical_iota(pm: &PatchMesh, fan: &EdgeFan) -> Vec<([usize; 3], f64)> {
    let mut v: Vec<([usize; 3], f64)> = fan
        .faces
        .iter()
        .zip(&fan.iota)
        .map(|(&f, &i)| {
            let (m, pl) = pm.faces.neighbor[f];
            let first = match pl {
                Some(pl) if pm.cells[pl] < pm.cells[m] => -1.0,
                _ => 1.0,
            };
            (pm.faces.faces[f], i * first)
        })
        .collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn classification_ignores_cell_order(seed in 0u64..10_000, shuffle in 0u64..1000) {
        let p = fixtures::random_star(seed);
        let mut cells = p.cells.clone();
        cells.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let q = build_patch(&cells, &p.vertices, p.center, &HashMap::new()).unwrap();
        let set = |pm: &PatchMesh| {
            let mut v: Vec<_> = pm.faces.faces.iter().copied().zip(pm.faces.class.iter().copied()).collect();
            v.sort_by(|a, b| a.0.cmp(&b.0));
            v
        };
        prop_assert_eq!(set(&p), set(&q));
        let fans = |pm: &PatchMesh| {
            let mut v: Vec<_> = pm.fans.iter().map(|f| (f.edge, canonical_iota(pm, f))).collect();
            v.sort_by(|a, b| a.0.cmp(&b.0));
            v
        };
        prop_assert_eq!(fans(&p), fans(&q));
    }

    #[test]
    fn solid_angles_close_up(seed in 0u64..10_000) {
        let p = fixtures::random_star(seed);
        prop_assert!((p.solid_angle - 4.0 * std::f64::consts::PI).abs() < 1e-10 * 4.0 * std::f64::consts::PI);
        let h = fixtures::random_half_star_spec(8, seed, |_| Marker::Dirichlet).build();
        prop_assert_eq!(h.kind, PatchKind::Boundary);
        prop_assert!(h.solid_angle > 0.0 && h.solid_angle < 4.0 * std::f64::consts::PI);
        // the flat rim makes the star a half ball
        prop_assert!((h.solid_angle - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn enumeration_from_any_anchor_verifies(seed in 0u64..10_000, anchor in 0usize..64) {
        let p = fixtures::random_star(seed);
        let anchor = anchor % p.cell_count();
        let (e, _) = enumerate_patch_with(&p, anchor, seed).unwrap();
        prop_assert_eq!(e.order[0], anchor);
        let (ok, v) = verify_enumeration(&p, &e);
        prop_assert!(ok, "{:?}", v);
    }

    #[test]
    fn three_coloring_partitions_the_patch(seed in 0u64..10_000) {
        let p = fixtures::random_star(seed);
        let r = three_color_refine(&p, 0).unwrap();
        let v = verify_coloring(&r, &p, 3);
        prop_assert!(v.is_empty(), "{:?}", v);
    }

    #[test]
    fn jumps_of_broken_fields_satisfy_the_edge_identity(seed in 0u64..10_000, p in 1usize..4) {
        let patch = fixtures::random_star(seed);
        let u = random_hat_field(&patch, p, seed);
        let mode = infer_h1_mode(&patch);
        let r = h1_data_from_field(&patch, &u, mode);
        let c = check_compatibility_h1(&patch, &r, mode).unwrap();
        prop_assert!(c.passed && c.edge_defect < 1e-12, "{:?}", c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn h1_energy_is_nested_and_unique(seed in 0u64..10_000, p in 1usize..4) {
        let patch = fixtures::random_star(seed);
        let r = random_h1_data(&patch, p, seed);
        let (e, _) = enumerate_patch_with(&patch, 0, seed).unwrap();
        let sweep = sweep_construct_h1(&patch, &e, &r, p).unwrap();
        let g = global_min_h1(&patch, &r, p).unwrap();
        let g1 = global_min_h1(&patch, &r, p + 1).unwrap();
        prop_assert!(g1.energy <= g.energy + 1e-10);
        prop_assert!(g.max_residual() <= 1e-9 && g1.max_residual() <= 1e-9);
        // a different admissible starting point reaches the same minimizer
        let seeded = global_min_h1_seeded(&patch, &r, p, &sweep.field).unwrap();
        prop_assert!(seeded.field.max_abs_diff(&g.field) < 1e-9);
        let broken = global_min_h1_broken(&patch, &r, p).unwrap();
        prop_assert!((broken.energy - g.energy).abs() < 1e-9);
    }

    #[test]
    fn hdiv_energy_is_nested_and_unique(seed in 0u64..10_000, p in 0usize..3) {
        let patch = fixtures::random_star(seed);
        let d = random_hdiv_data(&patch, p, seed);
        let (e, _) = enumerate_patch_with(&patch, 0, seed).unwrap();
        let sweep = sweep_construct_hdiv(&patch, &e, &d, p).unwrap();
        let g = global_min_hdiv(&patch, &d, p).unwrap();
        let direct = global_min_hdiv_direct(&patch, &d, p).unwrap();
        let g1 = global_min_hdiv_direct(&patch, &d, p + 1).unwrap();
        prop_assert!(g1.energy <= g.energy + 1e-10);
        prop_assert!((direct.energy - g.energy).abs() < 1e-9);
        let seeded = global_min_hdiv_seeded(&patch, &d, p, &sweep.field).unwrap();
        let diff = seeded.field.coeffs.iter().zip(&g.field.coeffs).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn h1_minimizer_is_invariant_under_scaling(seed in 0u64..10_000, s in 0.05f64..20.0) {
        let patch = fixtures::random_star(seed);
        let r = random_h1_data(&patch, 2, seed);
        let scaled: Vec<_> = patch.vertices.iter().map(|x| x * s).collect();
        let small = build_patch(&patch.cells, &scaled, patch.center, &HashMap::new()).unwrap();
        let a = global_min_h1(&patch, &r, 2).unwrap();
        let b = global_min_h1(&small, &r, 2).unwrap();
        // reference coefficients coincide; the gradient norm scales with sqrt(s)
        prop_assert!(a.field.max_abs_diff(&b.field) < 1e-8);
        prop_assert!((b.energy - a.energy * s.sqrt()).abs() < 1e-9 * a.energy.max(1.0) * s.sqrt().max(1.0));
    }

    #[test]
    fn perturbed_kuhn_meshes_round_trip(n in 1usize..4, seed in 0u64..1000, eps in 0.0f64..0.1) {
        let mesh = kuhn_cube(n, |x, _| if x.x < 1e-12 { Marker::Neumann } else { Marker::Dirichlet });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vertices = mesh.vertices.clone();
        for v in vertices.iter_mut() {
            for k in 0..3 {
                // keep boundary vertices on their faces
                if v[k] > 1e-12 && v[k] < 1.0 - 1e-12 {
                    v[k] += eps / n as f64 * rand::Rng::gen_range(&mut rng, -1.0..1.0);
                }
            }
        }
        let moved = TetMesh::new(vertices, mesh.cells.clone(), mesh.markers.clone()).unwrap();
        let text = moved.write();
        let back = TetMesh::parse(&text).unwrap();
        prop_assert_eq!(&back.vertices, &moved.vertices);
        prop_assert_eq!(&back.cells, &moved.cells);
        prop_assert_eq!(&back.markers, &moved.markers);
        prop_assert_eq!(back.write(), text);
    }
}
