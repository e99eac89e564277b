//! Patch-wise minimal extensions of jump and flux data.

pub mod data;
pub mod h1;
pub mod hdiv;
pub mod stability;

pub use h1::{
    broken_energy, global_min_h1, global_min_h1_broken, global_min_h1_seeded, h1_residuals, h1_tau_combinatorial,
    infer_h1_mode, lift_residual_h1, sweep_construct_h1, ConformingSolver, ConformingSpace, H1PatchOperator,
};
pub use hdiv::{
    global_min_hdiv, global_min_hdiv_direct, global_min_hdiv_seeded, hdiv_residuals, infer_hdiv_mode,
    sweep_construct_hdiv, vector_energy, HdivPatchOperator,
};
pub use stability::{stability_ratio, stability_sweep, ExtensionData, Setting, StabilityReport};

#[cfg(test)]
mod tests {
    use super::data::*;
    use super::*;
    use crate::fixtures;
    use crate::shelling::enumerate_patch;

    fn max_res(r: &[(String, f64)]) -> f64 {
        r.iter().map(|x| x.1).fold(0.0, f64::max)
    }

    #[test]
    fn h1_chain_on_cube_star() {
        let patch = fixtures::cube_star();
        let e = enumerate_patch(&patch).unwrap();
        for p in 1..=3 {
            let r = random_h1_data(&patch, p, 11 + p as u64);
            let sweep = sweep_construct_h1(&patch, &e, &r, p).unwrap();
            let glob = global_min_h1(&patch, &r, p).unwrap();
            let seeded = global_min_h1_seeded(&patch, &r, p, &sweep.field).unwrap();
            let proxy = global_min_h1(&patch, &r, p + 3).unwrap();
            assert!(max_res(&sweep.residuals) < 1e-9, "{:?}", sweep.residuals);
            assert!(max_res(&glob.residuals) < 1e-9, "{:?}", glob.residuals);
            assert!(proxy.energy <= glob.energy + 1e-9 && glob.energy <= sweep.energy + 1e-9);
            assert!((seeded.energy - glob.energy).abs() < 1e-9);
            assert!(seeded.field.max_abs_diff(&glob.field) < 1e-8);
        }
    }

    #[test]
    fn h1_shift_matches_broken_minimization() {
        let patch = fixtures::octahedron_star();
        for p in 1..=2 {
            let r = random_h1_data(&patch, p, 3);
            let a = global_min_h1(&patch, &r, p).unwrap();
            let b = global_min_h1_broken(&patch, &r, p).unwrap();
            assert!((a.energy - b.energy).abs() < 1e-9, "{} {}", a.energy, b.energy);
            assert!(a.field.max_abs_diff(&b.field) < 1e-7);
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let patch = fixtures::cube_star();
        let e = enumerate_patch(&patch).unwrap();
        let r = crate::fields::FaceData::zeros(2, patch.faces.len());
        assert_eq!(global_min_h1(&patch, &r, 2).unwrap().energy, 0.0);
        assert_eq!(sweep_construct_h1(&patch, &e, &r, 2).unwrap().energy, 0.0);
        let d = crate::fields::HdivData::zeros(2, patch.faces.len(), patch.cell_count());
        assert!(global_min_hdiv(&patch, &d, 2).unwrap().energy < 1e-14);
    }

    #[test]
    fn hdiv_chain_on_cube_star() {
        let patch = fixtures::cube_star();
        let e = enumerate_patch(&patch).unwrap();
        for p in 0..=2 {
            let d = random_hdiv_data(&patch, p, 5 + p as u64);
            let sweep = sweep_construct_hdiv(&patch, &e, &d, p).unwrap();
            let glob = global_min_hdiv(&patch, &d, p).unwrap();
            let direct = global_min_hdiv_direct(&patch, &d, p).unwrap();
            let proxy = global_min_hdiv_direct(&patch, &d, p + 3).unwrap();
            assert!(max_res(&sweep.residuals) < 1e-9, "{:?}", sweep.residuals);
            assert!(max_res(&glob.residuals) < 1e-9, "{:?}", glob.residuals);
            assert!(max_res(&direct.residuals) < 1e-9, "{:?}", direct.residuals);
            assert!((glob.energy - direct.energy).abs() < 1e-9 * direct.energy.max(1.0));
            assert!(proxy.energy <= glob.energy + 1e-9 && glob.energy <= sweep.energy + 1e-9);
        }
    }

    #[test]
    fn hdiv_sweep_reports_injected_defect() {
        let patch = fixtures::cube_star();
        let e = enumerate_patch(&patch).unwrap();
        let mut d = random_hdiv_data(&patch, 1, 9);
        let f = patch.faces.of_class(crate::topology::FaceClass::Interior)[0];
        let eps = 1e-3;
        // raise (r_F, 1) by eps
        d.faces.values[f][0] += eps / (2f64.sqrt() * patch.faces.area[f]);
        match sweep_construct_hdiv(&patch, &e, &d, 1) {
            Err(crate::Error::IncompatibleData { defect, .. }) => assert!((defect.abs() - eps).abs() < 1e-12),
            other => panic!("expected incompatibility, got {other:?}"),
        }
    }

    #[test]
    fn lifting_matches_hdiv_energy() {
        let patch = fixtures::cube_star();
        let d = random_hdiv_data(&patch, 1, 21);
        let lift = lift_residual_h1(&patch, &d, 7).unwrap();
        let hd = global_min_hdiv_direct(&patch, &d, 6).unwrap();
        let rel = (lift.energy - hd.energy).abs() / hd.energy;
        assert!(lift.energy <= hd.energy + 1e-9);
        assert!(rel < 2e-2, "lift {} hdiv {}", lift.energy, hd.energy);
    }

    #[test]
    fn boundary_patches_solve() {
        use crate::topology::Marker::*;
        for markers in [[Dirichlet; 4], [Neumann; 4], [Dirichlet, Neumann, Dirichlet, Neumann]] {
            let patch = fixtures::half_cube_spec(markers).build();
            let r = random_h1_data(&patch, 2, 1);
            let a = global_min_h1(&patch, &r, 2).unwrap();
            let b = global_min_h1_broken(&patch, &r, 2).unwrap();
            assert!((a.energy - b.energy).abs() < 1e-9);
            let d = random_hdiv_data(&patch, 1, 2);
            let h = global_min_hdiv(&patch, &d, 1).unwrap();
            assert!(max_res(&h.residuals) < 1e-9);
        }
    }

    #[test]
    fn smooth_families_are_admissible() {
        let patch = fixtures::cube_star();
        let r = smooth_h1_data(&patch, 2, 7);
        let c = crate::topology::check_compatibility_h1(&patch, &r, crate::topology::H1Mode::Interior).unwrap();
        assert!(c.passed, "{c:?}");
        let d = smooth_hdiv_data(&patch, 2, 7);
        let c = crate::topology::check_compatibility_hdiv(&patch, &d, crate::topology::HdivMode::Interior).unwrap();
        assert!(c.passed, "{c:?}");
    }
}
