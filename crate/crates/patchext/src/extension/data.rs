//! Admissible data families for patch extension problems.

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::element::{eval_scalar, project_on_cell, project_on_face, resized, scalar_trace, HdivCell};
use crate::fields::{BrokenScalarField, BrokenVectorField, ElementData, FaceData, HdivData};
use crate::spaces::dubiner::{dim_tet, dim_tri};
use crate::spaces::geometry::Point;
use crate::spaces::rtn::rtn_tables;
use crate::topology::{cell_mean_integral, face_integral, hdiv_data_faces, FaceClass, H1Mode, PatchMesh};

/// Jumps on interior faces and traces on Dirichlet faces (when `mode` has them).
pub fn h1_data_from_field(patch: &PatchMesh, u: &BrokenScalarField, mode: H1Mode) -> FaceData {
    let q = u.degree;
    let mut r = FaceData::zeros(q, patch.faces.len());
    for f in 0..patch.faces.len() {
        let (m, p) = patch.faces.neighbor[f];
        let (lm, lp) = patch.faces.local[f];
        r.values[f] = match patch.faces.class[f] {
            FaceClass::Interior => {
                scalar_trace(q, &u.coeffs[m], lm) - scalar_trace(q, &u.coeffs[p.unwrap()], lp.unwrap())
            }
            FaceClass::Dirichlet if mode == H1Mode::BoundaryDirichlet => scalar_trace(q, &u.coeffs[m], lm),
            _ => continue,
        };
    }
    r
}

/// Divergences and normal fluxes (summed over both sides on interior faces) of a broken field.
pub fn hdiv_data_from_field(patch: &PatchMesh, v: &BrokenVectorField) -> HdivData {
    let q = v.degree;
    let cells: Vec<HdivCell> = (0..patch.cell_count()).map(|k| HdivCell::new(&patch.geometry[k], q)).collect();
    let mut data = HdivData::zeros(q, patch.faces.len(), patch.cell_count());
    for (k, c) in cells.iter().enumerate() {
        data.cells.values[k] = c.divergence(&v.coeffs[k]);
    }
    for f in hdiv_data_faces(patch) {
        let (m, p) = patch.faces.neighbor[f];
        let (lm, lp) = patch.faces.local[f];
        let mut flux = cells[m].normal_trace(&v.coeffs[m], lm);
        if let Some(p) = p {
            flux += cells[p].normal_trace(&v.coeffs[p], lp.unwrap());
        }
        data.faces.values[f] = flux;
    }
    data
}

fn hat(patch: &PatchMesh, k: usize, x: &Point) -> f64 {
    let l = patch.local_vertex(k, patch.center).expect("cell contains the center");
    patch.geometry[k].barycentric(x)[l]
}

/// `u_K = psi_a g_K` with random modal `g_K` of degree `p - 1`; `psi_a` is the hat
/// function of the center, so `u` vanishes on the external faces.
pub fn random_hat_field(patch: &PatchMesh, p: usize, seed: u64) -> BrokenScalarField {
    assert!(p >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..patch.cell_count())
        .map(|k| {
            let g = DVector::from_fn(dim_tet(p - 1), |_, _| rng.gen_range(-1.0..1.0));
            let geom = &patch.geometry[k];
            project_on_cell(geom, p, |x| hat(patch, k, x) * eval_scalar(geom, p - 1, &g, x))
        })
        .collect();
    BrokenScalarField { degree: p, coeffs }
}

pub fn random_h1_data(patch: &PatchMesh, p: usize, seed: u64) -> FaceData {
    let mode = crate::extension::h1::infer_h1_mode(patch);
    h1_data_from_field(patch, &random_hat_field(patch, p, seed), mode)
}

/// Random broken RTN_p field with coefficients uniform in [-1, 1].
pub fn random_rtn_field(patch: &PatchMesh, p: usize, seed: u64) -> BrokenVectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rtn_tables(p).dim;
    let coeffs = (0..patch.cell_count()).map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))).collect();
    BrokenVectorField { degree: p, coeffs }
}

pub fn random_hdiv_data(patch: &PatchMesh, p: usize, seed: u64) -> HdivData {
    hdiv_data_from_field(patch, &random_rtn_field(patch, p, seed))
}

/// A smooth function `sum_m a_m sin(k_m . x + phi_m)` with seeded parameters.
#[derive(Debug, Clone)]
pub struct SmoothFunction {
    terms: Vec<(f64, Vector3<f64>, f64)>,
}

impl SmoothFunction {
    pub fn random(rng: &mut impl Rng) -> Self {
        let terms = (0..3)
            .map(|_| {
                let a = rng.gen_range(0.5..1.5);
                let k = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                (a, k, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        SmoothFunction { terms }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.terms.iter().map(|(a, k, phi)| a * (k.dot(x) + phi).sin()).sum()
    }
}

/// Fixed smooth H1 family: `u_K = psi_a Pi_{p-1} g_K` with smooth per-cell `g_K`; the
/// underlying functions depend only on the seed, so the family is comparable across p.
pub fn smooth_h1_data(patch: &PatchMesh, p: usize, seed: u64) -> FaceData {
    assert!(p >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let funcs: Vec<SmoothFunction> = (0..patch.cell_count()).map(|_| SmoothFunction::random(&mut rng)).collect();
    let coeffs = (0..patch.cell_count())
        .map(|k| {
            let geom = &patch.geometry[k];
            let g = project_on_cell(geom, p - 1, |x| funcs[k].eval(x));
            project_on_cell(geom, p, |x| hat(patch, k, x) * eval_scalar(geom, p - 1, &g, x))
        })
        .collect();
    let u = BrokenScalarField { degree: p, coeffs };
    h1_data_from_field(patch, &u, crate::extension::h1::infer_h1_mode(patch))
}

/// Fixed smooth H(div) family: degree-p projections of smooth cell and face functions,
/// balanced by a constant divergence shift when the patch has no Dirichlet faces.
pub fn smooth_hdiv_data(patch: &PatchMesh, p: usize, seed: u64) -> HdivData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cf: Vec<SmoothFunction> = (0..patch.cell_count()).map(|_| SmoothFunction::random(&mut rng)).collect();
    let ff: Vec<SmoothFunction> = (0..patch.faces.len()).map(|_| SmoothFunction::random(&mut rng)).collect();
    let mut cells = ElementData::zeros(p, patch.cell_count());
    for k in 0..patch.cell_count() {
        cells.values[k] = project_on_cell(&patch.geometry[k], p, |x| cf[k].eval(x));
    }
    let mut faces = FaceData::zeros(p, patch.faces.len());
    for f in hdiv_data_faces(patch) {
        let (m, lm) = (patch.faces.neighbor[f].0, patch.faces.local[f].0);
        faces.values[f] = project_on_face(&patch.geometry[m], lm, p, |x| ff[f].eval(x));
    }
    let mut data = HdivData { faces, cells };
    if !patch.has_class(FaceClass::Dirichlet) {
        balance_hdiv(patch, &mut data);
    }
    data
}

/// Shift all cell divergences by one constant so that the flux balance holds exactly.
pub fn balance_hdiv(patch: &PatchMesh, data: &mut HdivData) {
    let mut defect = 0.0;
    for (k, g) in patch.geometry.iter().enumerate() {
        defect += cell_mean_integral(g, data.cells.values[k].as_slice());
    }
    for f in hdiv_data_faces(patch) {
        defect -= face_integral(patch.faces.area[f], data.faces.values[f].as_slice());
    }
    // a constant c has leading modal coefficient c / sqrt(6)
    let c = -defect / patch.volume();
    for v in data.cells.values.iter_mut() {
        v[0] += c / 6f64.sqrt();
    }
}

/// Face data padded or truncated to degree q.
pub fn face_data_at(r: &FaceData, q: usize) -> FaceData {
    FaceData { degree: q, values: r.values.iter().map(|v| resized(v, dim_tri(q))).collect() }
}
