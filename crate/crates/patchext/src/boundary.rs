//! Boundary patches: flattening onto a plane, symmetrization into an interior patch,
//! transfer of extension data, and restriction of symmetrized minimizers.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::element::{eval_rtn, eval_scalar, project_on_cell, project_on_face, project_rtn_on_cell};
use crate::error::{Error, Result};
use crate::extension::{
    broken_energy, global_min_h1, global_min_hdiv_direct, h1_residuals, hdiv_residuals, infer_h1_mode,
    vector_energy, ExtensionData, Setting,
};
use crate::fields::{BrokenScalarField, BrokenVectorField, Diagnostics, FaceData, HdivData};
use crate::spaces::dubiner::dim_tri;
use crate::spaces::geometry::{AffineMap, Point};
use crate::topology::{
    build_patch, check_compatibility_h1, check_compatibility_hdiv, eval_face, face_integral, cell_mean_integral,
    hdiv_data_faces, shape_regularity, FaceClass, H1Mode, HdivMode, Marker, PatchKind, PatchMesh,
};

#[derive(Debug, Clone)]
pub struct FlattenedPatch {
    pub patch: PatchMesh,
    /// `T_K`, mapping each original cell onto its flattened image.
    pub maps: Vec<AffineMap>,
    pub plane_point: Point,
    /// Unit normal of the plane, pointing away from the patch.
    pub plane_normal: Vector3<f64>,
    pub identity: bool,
}

#[derive(Debug, Clone)]
pub struct SymmetrizedPatch {
    pub patch: PatchMesh,
    pub mirror: AffineMap,
    /// Cell of the flattened patch behind each cell, and whether it is the mirror image.
    pub origin: Vec<(usize, bool)>,
    /// Vertex id of the mirror image of each flattened-patch vertex.
    pub vertex_mirror: Vec<usize>,
    /// Number of cells of the flattened patch; mirrored copies follow in the same order.
    pub half: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySetting {
    H1Dirichlet,
    H1Neumann,
    HdivNeumann,
    HdivDirichlet,
    HdivMixed,
}

impl BoundarySetting {
    pub fn infer(patch: &PatchMesh, setting: Setting) -> Result<Self> {
        let d = patch.has_class(FaceClass::Dirichlet);
        let n = patch.has_class(FaceClass::Neumann);
        if patch.kind != PatchKind::Boundary {
            return Err(Error::UnsupportedConfiguration("not a boundary patch".into()));
        }
        match setting {
            Setting::H1 => match (d, n) {
                (true, false) => Ok(BoundarySetting::H1Dirichlet),
                (false, true) => Ok(BoundarySetting::H1Neumann),
                _ => Err(Error::UnsupportedConfiguration(
                    "H1 boundary patches need purely Dirichlet or purely Neumann faces".into(),
                )),
            },
            Setting::Hdiv => Ok(match (d, n) {
                (false, _) => BoundarySetting::HdivNeumann,
                (true, false) => BoundarySetting::HdivDirichlet,
                (true, true) => BoundarySetting::HdivMixed,
            }),
        }
    }
}

fn face_lookup(patch: &PatchMesh) -> HashMap<[usize; 3], usize> {
    patch.faces.faces.iter().enumerate().map(|(i, f)| (*f, i)).collect()
}

fn markers_of(patch: &PatchMesh) -> HashMap<[usize; 3], Marker> {
    let mut m = HashMap::new();
    for f in 0..patch.faces.len() {
        match patch.faces.class[f] {
            FaceClass::Dirichlet => {
                m.insert(patch.faces.faces[f], Marker::Dirichlet);
            }
            FaceClass::Neumann => {
                m.insert(patch.faces.faces[f], Marker::Neumann);
            }
            _ => {}
        }
    }
    m
}

fn signed_volume(p: [Point; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

/// Map the patch so that all Dirichlet and Neumann faces lie in one plane through the center.
pub fn flatten_patch(patch: &PatchMesh) -> Result<FlattenedPatch> {
    if patch.kind != PatchKind::Boundary {
        return Err(Error::UnsupportedConfiguration("flattening needs a boundary patch".into()));
    }
    let bfaces: Vec<usize> =
        (0..patch.faces.len()).filter(|&f| matches!(patch.faces.class[f], FaceClass::Dirichlet | FaceClass::Neumann)).collect();
    let a = patch.center_point();
    let mut normal = Vector3::zeros();
    for &f in &bfaces {
        normal += patch.faces.normal[f] * patch.faces.area[f];
    }
    if normal.norm() < 1e-12 * patch.diameter().powi(2) {
        return Err(Error::UnsupportedConfiguration("boundary faces have no dominant normal".into()));
    }
    let normal = normal.normalize();
    let tol = 1e-10 * patch.diameter();
    let mut on_plane = vec![false; patch.vertices.len()];
    on_plane[patch.center] = true;
    for &f in &bfaces {
        for &v in &patch.faces.faces[f] {
            on_plane[v] = true;
        }
    }
    let height = |x: &Point| (x - a).dot(&normal);
    let coplanar = (0..patch.vertices.len()).filter(|&v| on_plane[v]).all(|v| height(&patch.vertices[v]).abs() <= tol);
    let used = patch.used_vertices();
    let mut coords = patch.vertices.clone();
    let identity = coplanar;
    if !coplanar {
        if patch.cell_count() <= 2 {
            return Err(Error::UnsupportedConfiguration(
                "patch of at most two cells with non-coplanar boundary faces is not flattened".into(),
            ));
        }
        // every external face needs a vertex off the Dirichlet/Neumann boundary
        for f in patch.faces.of_class(FaceClass::External) {
            if patch.faces.faces[f].iter().all(|&v| on_plane[v]) {
                return Err(Error::UnsupportedConfiguration(format!(
                    "external face {f} has no vertex interior to the external boundary"
                )));
            }
        }
        for &v in &used {
            if on_plane[v] {
                coords[v] -= normal * height(&patch.vertices[v]);
            }
        }
        // harmonic extension of the displacement to the remaining vertices
        let free: Vec<usize> = used.iter().copied().filter(|&v| !on_plane[v]).collect();
        let index: HashMap<usize, usize> = free.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut lap = DMatrix::zeros(free.len(), free.len());
        let mut rhs = DMatrix::zeros(free.len(), 3);
        let mut edges = std::collections::BTreeSet::new();
        for c in &patch.cells {
            for i in 0..4 {
                for j in i + 1..4 {
                    edges.insert((c[i], c[j]));
                }
            }
        }
        for (u, w) in edges {
            for (x, y) in [(u, w), (w, u)] {
                if let Some(&i) = index.get(&x) {
                    lap[(i, i)] += 1.0;
                    match index.get(&y) {
                        Some(&j) => lap[(i, j)] -= 1.0,
                        None => {
                            let d = coords[y] - patch.vertices[y];
                            for k in 0..3 {
                                rhs[(i, k)] += d[k];
                            }
                        }
                    }
                }
            }
        }
        if !free.is_empty() {
            let disp = lap
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::UnsupportedConfiguration("disconnected patch graph".into()))?;
            for (i, &v) in free.iter().enumerate() {
                coords[v] += Vector3::new(disp[(i, 0)], disp[(i, 1)], disp[(i, 2)]);
            }
        }
    }
    // validation: orientation, volume floor, half-space
    for (k, c) in patch.cells.iter().enumerate() {
        let old = signed_volume(c.map(|v| patch.vertices[v]));
        let new = signed_volume(c.map(|v| coords[v]));
        let diam = patch.geometry[k].diameter();
        if new * old <= 0.0 {
            return Err(Error::UnsupportedConfiguration(format!("cell {k} is inverted by the flattening")));
        }
        if new.abs() < 1e-12 * diam.powi(3) {
            return Err(Error::FlatteningDegenerate(format!("cell {k}, volume {:e}", new.abs())));
        }
    }
    for &v in &used {
        if !on_plane[v] && height(&coords[v]) > -tol {
            return Err(Error::UnsupportedConfiguration(format!(
                "vertex {v} is not strictly on the patch side of the boundary plane"
            )));
        }
    }
    let flat = build_patch(&patch.cells, &coords, patch.center, &markers_of(patch))?;
    if flat.faces.faces != patch.faces.faces || flat.kind != PatchKind::Boundary {
        return Err(Error::UnsupportedConfiguration("flattening changed the patch topology".into()));
    }
    let maps = (0..patch.cell_count())
        .map(|k| flat.geometry[k].map.compose(&patch.geometry[k].map.inverted()))
        .collect();
    Ok(FlattenedPatch { patch: flat, maps, plane_point: a, plane_normal: normal, identity })
}

/// Mirror the flattened patch across its plane and join both halves into an interior patch.
pub fn symmetrize(flat: &FlattenedPatch) -> Result<SymmetrizedPatch> {
    let p = &flat.patch;
    let mirror = AffineMap::reflection(flat.plane_point, flat.plane_normal);
    let tol = 1e-9 * p.diameter();
    let mut coords = p.vertices.clone();
    let mut vertex_mirror: Vec<usize> = (0..p.vertices.len()).collect();
    for v in p.used_vertices() {
        let h = (p.vertices[v] - flat.plane_point).dot(&flat.plane_normal);
        if h.abs() > tol {
            vertex_mirror[v] = coords.len();
            coords.push(mirror.apply(&p.vertices[v]));
        }
    }
    let mut cells = p.cells.clone();
    cells.extend(p.cells.iter().map(|c| c.map(|v| vertex_mirror[v])));
    let patch = build_patch(&cells, &coords, p.center, &HashMap::new())?;
    if patch.kind != PatchKind::Interior {
        return Err(Error::UnsupportedConfiguration("symmetrized patch is not an interior patch".into()));
    }
    let half = p.cell_count();
    let origin = (0..2 * half).map(|k| (k % half, k >= half)).collect();
    Ok(SymmetrizedPatch { patch, mirror, origin, vertex_mirror, half })
}

/// Face-basis value of face `f` data at a physical point of the face.
fn eval_face_at(patch: &PatchMesh, f: usize, degree: usize, coeffs: &DVector<f64>, x: &Point) -> f64 {
    let [i, j, k] = patch.faces.faces[f];
    let (v0, v1, v2) = (patch.vertices[i], patch.vertices[j], patch.vertices[k]);
    let (e1, e2, d) = (v1 - v0, v2 - v0, x - v0);
    let g = nalgebra::Matrix2::new(e1.dot(&e1), e1.dot(&e2), e1.dot(&e2), e2.dot(&e2));
    let st = g.try_inverse().expect("non-degenerate face") * nalgebra::Vector2::new(e1.dot(&d), e2.dot(&d));
    eval_face(degree, coeffs.as_slice(), st[0], st[1])
}

/// Project a function on face `f` of `patch` into its face basis.
fn project_face(patch: &PatchMesh, f: usize, degree: usize, g: impl Fn(&Point) -> f64) -> DVector<f64> {
    let (m, lm) = (patch.faces.neighbor[f].0, patch.faces.local[f].0);
    project_on_face(&patch.geometry[m], lm, degree, g)
}

impl SymmetrizedPatch {
    fn faces_of_flat(&self, flat: &PatchMesh) -> (Vec<usize>, Vec<usize>) {
        let look = face_lookup(&self.patch);
        let same = flat.faces.faces.iter().map(|f| look[f]).collect();
        let mirrored = flat
            .faces
            .faces
            .iter()
            .map(|f| {
                let mut g = f.map(|v| self.vertex_mirror[v]);
                g.sort_unstable();
                look[&g]
            })
            .collect();
        (same, mirrored)
    }

    pub fn mirror_cell(&self, k: usize) -> usize {
        k + self.half
    }
}

/// Transfer data from the original patch to its flattened image (scalar traces are
/// unchanged; divergence and flux moments follow the Piola scaling).
pub fn flatten_data(original: &PatchMesh, flat: &FlattenedPatch, data: &ExtensionData) -> ExtensionData {
    match data {
        ExtensionData::H1(r) => ExtensionData::H1(r.clone()),
        ExtensionData::Hdiv(d) => {
            let mut out = d.clone();
            for k in 0..original.cell_count() {
                out.cells.values[k] *= original.geometry[k].abs_det / flat.patch.geometry[k].abs_det;
            }
            for f in 0..original.faces.len() {
                out.faces.values[f] *= original.faces.area[f] / flat.patch.faces.area[f];
            }
            ExtensionData::Hdiv(out)
        }
    }
}

/// Extension of flattened-patch data to the symmetrized patch.
pub fn extend_data(
    sym: &SymmetrizedPatch,
    flat: &FlattenedPatch,
    data: &ExtensionData,
    setting: BoundarySetting,
) -> Result<ExtensionData> {
    let fp = &flat.patch;
    let sp = &sym.patch;
    let (same, mirrored) = sym.faces_of_flat(fp);
    let s = &sym.mirror;
    let out = match (data, setting) {
        (ExtensionData::H1(r), BoundarySetting::H1Dirichlet | BoundarySetting::H1Neumann) => {
            let q = r.degree;
            let mut out = FaceData::zeros(q, sp.faces.len());
            for f in 0..fp.faces.len() {
                let c0 = fp.faces.neighbor[f].0;
                match fp.faces.class[f] {
                    FaceClass::Interior => {
                        let sign = sp.faces.jump_sign(same[f], c0) * fp.faces.jump_sign(f, c0);
                        out.values[same[f]] = &r.values[f] * sign;
                        if setting == BoundarySetting::H1Neumann {
                            let fm = mirrored[f];
                            let sign = sp.faces.jump_sign(fm, sym.mirror_cell(c0)) * fp.faces.jump_sign(f, c0);
                            out.values[fm] = project_face(sp, fm, q, |x| {
                                sign * eval_face_at(fp, f, q, &r.values[f], &s.apply(x))
                            });
                        }
                    }
                    FaceClass::Dirichlet if setting == BoundarySetting::H1Dirichlet => {
                        out.values[same[f]] = &r.values[f] * sp.faces.jump_sign(same[f], c0);
                    }
                    _ => {}
                }
            }
            let comp = check_compatibility_h1(sp, &out, H1Mode::Interior)?;
            if !comp.passed {
                return Err(Error::IncompatibleData {
                    reason: "extended jump data fail the edge conditions".into(),
                    defect: comp.edge_defect.max(comp.boundary_defect),
                });
            }
            ExtensionData::H1(out)
        }
        (ExtensionData::Hdiv(d), BoundarySetting::HdivNeumann | BoundarySetting::HdivDirichlet | BoundarySetting::HdivMixed) => {
            let q = d.degree();
            let mut out = HdivData::zeros(q, sp.faces.len(), sp.cell_count());
            for k in 0..fp.cell_count() {
                out.cells.values[k] = d.cells.values[k].clone();
            }
            for f in 0..fp.faces.len() {
                match fp.faces.class[f] {
                    FaceClass::Interior | FaceClass::External => out.faces.values[same[f]] = d.faces.values[f].clone(),
                    FaceClass::Neumann if setting != BoundarySetting::HdivDirichlet => {
                        out.faces.values[same[f]] = d.faces.values[f].clone()
                    }
                    _ => {}
                }
            }
            match setting {
                BoundarySetting::HdivDirichlet => {
                    for k in 0..fp.cell_count() {
                        let km = sym.mirror_cell(k);
                        let (src, dst) = (&fp.geometry[k], &sp.geometry[km]);
                        out.cells.values[km] =
                            project_on_cell(dst, q, |x| -eval_scalar(src, q, &d.cells.values[k], &s.apply(x)));
                    }
                    for f in 0..fp.faces.len() {
                        if matches!(fp.faces.class[f], FaceClass::Interior | FaceClass::External) {
                            let fm = mirrored[f];
                            out.faces.values[fm] = project_face(sp, fm, q, |x| {
                                -eval_face_at(fp, f, q, &d.faces.values[f], &s.apply(x))
                            });
                        }
                    }
                }
                BoundarySetting::HdivMixed => {
                    // one Dirichlet face balances the total flux
                    let designated = fp
                        .faces
                        .of_class(FaceClass::Dirichlet)
                        .into_iter()
                        .min_by_key(|&f| fp.faces.faces[f])
                        .expect("mixed setting has a Dirichlet face");
                    let mut defect = 0.0;
                    for (k, g) in sp.geometry.iter().enumerate() {
                        defect += cell_mean_integral(g, out.cells.values[k].as_slice());
                    }
                    for f in hdiv_data_faces(sp) {
                        defect -= face_integral(sp.faces.area[f], out.faces.values[f].as_slice());
                    }
                    let fd = same[designated];
                    out.faces.values[fd] = DVector::zeros(dim_tri(q));
                    out.faces.values[fd][0] = defect / (2f64.sqrt() * sp.faces.area[fd]);
                }
                _ => {}
            }
            let comp = check_compatibility_hdiv(sp, &out, HdivMode::Interior)?;
            if !comp.passed {
                return Err(Error::IncompatibleData { reason: "extended flux data are unbalanced".into(), defect: comp.defect });
            }
            ExtensionData::Hdiv(out)
        }
        _ => return Err(Error::UnsupportedConfiguration("data do not match the boundary setting".into())),
    };
    Ok(out)
}

/// Compatibility defect of extended data on the symmetrized patch.
pub fn extension_defect(sym: &SymmetrizedPatch, data: &ExtensionData) -> Result<f64> {
    Ok(match data {
        ExtensionData::H1(r) => {
            let c = check_compatibility_h1(&sym.patch, r, H1Mode::Interior)?;
            c.edge_defect.max(c.boundary_defect)
        }
        ExtensionData::Hdiv(d) => check_compatibility_hdiv(&sym.patch, d, HdivMode::Interior)?.defect.abs(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtensionField {
    H1(BrokenScalarField),
    Hdiv(BrokenVectorField),
}

impl ExtensionField {
    pub fn energy(&self, patch: &PatchMesh) -> f64 {
        match self {
            ExtensionField::H1(v) => broken_energy(patch, v),
            ExtensionField::Hdiv(v) => vector_energy(patch, v),
        }
    }

    pub fn residuals(&self, patch: &PatchMesh, data: &ExtensionData) -> Vec<(String, f64)> {
        match (self, data) {
            (ExtensionField::H1(v), ExtensionData::H1(r)) => h1_residuals(patch, v, r, infer_h1_mode(patch)),
            (ExtensionField::Hdiv(v), ExtensionData::Hdiv(d)) => hdiv_residuals(patch, v, d),
            _ => vec![("setting".into(), f64::INFINITY)],
        }
    }
}

/// Restrict a minimizer on the symmetrized patch to the flattened patch.
pub fn restrict_minimizer(
    sym: &SymmetrizedPatch,
    flat: &FlattenedPatch,
    field: &ExtensionField,
    setting: BoundarySetting,
) -> Result<ExtensionField> {
    let fp = &flat.patch;
    let sp = &sym.patch;
    let s = &sym.mirror;
    let n = fp.cell_count();
    Ok(match (field, setting) {
        (ExtensionField::H1(v), BoundarySetting::H1Neumann) => {
            ExtensionField::H1(BrokenScalarField { degree: v.degree, coeffs: v.coeffs[..n].to_vec() })
        }
        (ExtensionField::H1(v), BoundarySetting::H1Dirichlet) => {
            let q = v.degree;
            let coeffs = (0..n)
                .map(|k| {
                    let km = sym.mirror_cell(k);
                    let back = project_on_cell(&fp.geometry[k], q, |x| eval_scalar(&sp.geometry[km], q, &v.coeffs[km], &s.apply(x)));
                    &v.coeffs[k] - back
                })
                .collect();
            ExtensionField::H1(BrokenScalarField { degree: q, coeffs })
        }
        (ExtensionField::Hdiv(v), BoundarySetting::HdivDirichlet) => {
            ExtensionField::Hdiv(BrokenVectorField { degree: v.degree, coeffs: v.coeffs[..n].to_vec() })
        }
        (ExtensionField::Hdiv(v), BoundarySetting::HdivNeumann | BoundarySetting::HdivMixed) => {
            let q = v.degree;
            let r: Matrix3<f64> = s.linear;
            let coeffs = (0..n)
                .map(|k| {
                    let km = sym.mirror_cell(k);
                    let psi = project_rtn_on_cell(&fp.geometry[k], q, |x| {
                        -(r * eval_rtn(&sp.geometry[km], q, &v.coeffs[km], &s.apply(x)))
                    });
                    &v.coeffs[k] - psi
                })
                .collect();
            ExtensionField::Hdiv(BrokenVectorField { degree: q, coeffs })
        }
        _ => return Err(Error::UnsupportedConfiguration("field does not match the boundary setting".into())),
    })
}

/// Report of the flatten, symmetrize, extend, solve, restrict path.
#[derive(Debug, Clone)]
pub struct SymmetrizedPath {
    pub setting: BoundarySetting,
    pub flattened_identity: bool,
    /// Compatibility defect of the extended data on the symmetrized patch.
    pub extension_defect: f64,
    pub energy_symmetrized: f64,
    /// Energy of the restricted field on the flattened patch.
    pub energy_restricted: f64,
    /// Direct discrete minimum on the flattened patch.
    pub energy_flat_direct: f64,
    /// Residuals of the restricted field against the flattened data.
    pub residuals_flat: Vec<(String, f64)>,
    /// Residuals of the restricted field pulled back to the original patch.
    pub residuals_original: Vec<(String, f64)>,
    pub gamma_original: f64,
    pub gamma_flat: f64,
    pub restricted: ExtensionField,
}

type DirectSolve = (ExtensionField, f64, Vec<(String, f64)>, Diagnostics);

fn solve_direct(patch: &PatchMesh, data: &ExtensionData, p: usize) -> Result<DirectSolve> {
    match data {
        ExtensionData::H1(r) => {
            let m = global_min_h1(patch, r, p)?;
            Ok((ExtensionField::H1(m.field), m.energy, m.residuals, m.diagnostics))
        }
        ExtensionData::Hdiv(d) => {
            let m = global_min_hdiv_direct(patch, d, p)?;
            Ok((ExtensionField::Hdiv(m.field), m.energy, m.residuals, m.diagnostics))
        }
    }
}

pub fn symmetrized_path(patch: &PatchMesh, data: &ExtensionData, p: usize) -> Result<SymmetrizedPath> {
    let setting = BoundarySetting::infer(patch, data.setting())?;
    let flat = flatten_patch(patch)?;
    let fdata = flatten_data(patch, &flat, data);
    let sym = symmetrize(&flat)?;
    let ext = extend_data(&sym, &flat, &fdata, setting)?;
    let extension_defect = extension_defect(&sym, &ext)?;
    let (sol, energy_symmetrized, _, _) = solve_direct(&sym.patch, &ext, p)?;
    let restricted = restrict_minimizer(&sym, &flat, &sol, setting)?;
    let energy_restricted = restricted.energy(&flat.patch);
    let residuals_flat = restricted.residuals(&flat.patch, &fdata);
    // reference coefficients carry over unchanged to the original geometry
    let residuals_original = restricted.residuals(patch, data);
    let (_, energy_flat_direct, _, _) = solve_direct(&flat.patch, &fdata, p)?;
    Ok(SymmetrizedPath {
        setting,
        flattened_identity: flat.identity,
        extension_defect,
        energy_symmetrized,
        energy_restricted,
        energy_flat_direct,
        residuals_flat,
        residuals_original,
        gamma_original: shape_regularity(patch),
        gamma_flat: shape_regularity(&flat.patch),
        restricted,
    })
}

#[derive(Debug, Clone)]
pub struct BoundarySolution {
    pub field: ExtensionField,
    pub energy: f64,
    pub residuals: Vec<(String, f64)>,
    pub diagnostics: Diagnostics,
    pub cross_check: Option<SymmetrizedPath>,
}

/// Direct constrained solve on the boundary patch, optionally with the symmetrized path.
pub fn solve_boundary_patch(patch: &PatchMesh, data: &ExtensionData, p: usize, cross_check: bool) -> Result<BoundarySolution> {
    BoundarySetting::infer(patch, data.setting())?;
    let (field, energy, residuals, diagnostics) = solve_direct(patch, data, p)?;
    let cross_check = if cross_check { Some(symmetrized_path(patch, data, p)?) } else { None };
    Ok(BoundarySolution { field, energy, residuals, diagnostics, cross_check })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::data::{random_h1_data, random_hdiv_data};
    use crate::fixtures;
    use crate::topology::Marker::*;

    fn max_res(r: &[(String, f64)]) -> f64 {
        r.iter().map(|x| x.1).fold(0.0, f64::max)
    }

    #[test]
    fn half_cube_symmetrizes_to_a_full_star() {
        let patch = fixtures::half_cube_spec([Dirichlet; 4]).build();
        let flat = flatten_patch(&patch).unwrap();
        assert!(flat.identity);
        let sym = symmetrize(&flat).unwrap();
        assert_eq!(sym.patch.cell_count(), 2 * patch.cell_count());
        assert!((sym.patch.solid_angle - 4.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn all_settings_on_half_cube() {
        let cases: [([Marker; 4], Setting); 5] = [
            ([Dirichlet; 4], Setting::H1),
            ([Neumann; 4], Setting::H1),
            ([Neumann; 4], Setting::Hdiv),
            ([Dirichlet; 4], Setting::Hdiv),
            ([Dirichlet, Neumann, Neumann, Dirichlet], Setting::Hdiv),
        ];
        for (markers, setting) in cases {
            let patch = fixtures::half_cube_spec(markers).build();
            for p in [1, 2] {
                let data = match setting {
                    Setting::H1 => ExtensionData::H1(random_h1_data(&patch, p, 4)),
                    Setting::Hdiv => ExtensionData::Hdiv(random_hdiv_data(&patch, p, 4)),
                };
                let sol = solve_boundary_patch(&patch, &data, p, true).unwrap();
                let cc = sol.cross_check.unwrap();
                assert!(cc.extension_defect < 1e-10, "{:?} defect {}", cc.setting, cc.extension_defect);
                assert!(max_res(&cc.residuals_flat) < 1e-9, "{:?} {:?}", cc.setting, cc.residuals_flat);
                assert!(max_res(&cc.residuals_original) < 1e-9);
                assert!(cc.energy_restricted <= 2f64.sqrt() * cc.energy_symmetrized + 1e-9, "{:?}", cc.setting);
                assert!(sol.energy <= cc.energy_restricted + 1e-9);
            }
        }
    }

    #[test]
    fn tilted_boundary_is_flattened() {
        let mut spec = fixtures::random_half_star_spec(9, 3, |_| Dirichlet);
        for v in spec.coords.iter_mut().skip(1) {
            if v.z.abs() < 1e-12 {
                v.z += 0.08 * (3.0 * v.x).sin();
            }
        }
        let patch = spec.build();
        let flat = flatten_patch(&patch).unwrap();
        assert!(!flat.identity);
        let sym = symmetrize(&flat).unwrap();
        assert!((sym.patch.solid_angle - 4.0 * std::f64::consts::PI).abs() < 1e-9);
        assert!(shape_regularity(&flat.patch) <= 10.0 * shape_regularity(&patch));
        let data = ExtensionData::Hdiv(random_hdiv_data(&patch, 1, 2));
        let cc = symmetrized_path(&patch, &data, 1).unwrap();
        assert!(max_res(&cc.residuals_original) < 1e-9, "{:?}", cc.residuals_original);
    }

    #[test]
    fn mixed_h1_is_rejected() {
        let patch = fixtures::half_cube_spec([Dirichlet, Neumann, Neumann, Dirichlet]).build();
        assert!(matches!(BoundarySetting::infer(&patch, Setting::H1), Err(Error::UnsupportedConfiguration(_))));
    }
}
