//! Equilibrated-flux and potential reconstructions by vertex-patch solves, with the
//! guaranteed error bound and local efficiency ratios for the Poisson problem
//! `-lap u = f`, `u = u_D` on Dirichlet faces and `-grad u . n = u_N` on Neumann faces.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::element::{
    eval_rtn, eval_scalar, eval_scalar_gradient, project_on_cell, project_on_face, project_rtn_on_cell, scalar_trace,
    HdivCell,
};
use crate::error::{Error, Result};
use crate::extension::data::{h1_data_from_field, hdiv_data_from_field};
use crate::extension::{global_min_h1, global_min_hdiv_direct, infer_h1_mode, infer_hdiv_mode};
use crate::fields::{BrokenScalarField, BrokenVectorField, FaceData, HdivData};
use crate::mesh::{TetMesh, VertexPatch};
use crate::par;
use crate::spaces::geometry::{CellGeometry, Point};
use crate::spaces::quadrature::build_quadrature;
use crate::topology::{check_compatibility_hdiv, FaceClass, Marker};

/// Polynomial in three variables as a sum of monomials `c x^i y^j z^k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    pub terms: Vec<(f64, [u32; 3])>,
}

impl Polynomial {
    pub fn new(terms: Vec<(f64, [u32; 3])>) -> Self {
        Polynomial { terms }.simplified()
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![(c, [0, 0, 0])])
    }

    fn simplified(mut self) -> Self {
        self.terms.sort_by_key(|t| t.1);
        let mut out: Vec<(f64, [u32; 3])> = Vec::new();
        for (c, e) in self.terms {
            match out.last_mut() {
                Some(last) if last.1 == e => last.0 += c,
                _ => out.push((c, e)),
            }
        }
        out.retain(|t| t.0 != 0.0);
        Polynomial { terms: out }
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(_, e)| (e[0] + e[1] + e[2]) as usize).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.terms.iter().map(|(c, e)| c * x.x.powi(e[0] as i32) * x.y.powi(e[1] as i32) * x.z.powi(e[2] as i32)).sum()
    }

    pub fn derivative(&self, axis: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(_, e)| e[axis] > 0)
            .map(|&(c, mut e)| {
                let k = e[axis];
                e[axis] -= 1;
                (c * k as f64, e)
            })
            .collect();
        Polynomial::new(terms)
    }

    pub fn gradient(&self) -> [Polynomial; 3] {
        [self.derivative(0), self.derivative(1), self.derivative(2)]
    }

    pub fn laplacian(&self) -> Self {
        let mut terms = Vec::new();
        for a in 0..3 {
            terms.extend(self.derivative(a).derivative(a).terms);
        }
        Polynomial::new(terms)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Polynomial::new(self.terms.iter().map(|&(c, e)| (c * s, e)).collect())
    }
}

/// Data of the Poisson problem; the Neumann datum is `u_N = g . n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    pub f: Polynomial,
    pub u_d: Polynomial,
    pub g: [Polynomial; 3],
}

impl ProblemData {
    /// Data matching a known solution `u`.
    pub fn manufactured(u: &Polynomial) -> Self {
        let [a, b, c] = u.gradient();
        ProblemData { f: u.laplacian().scaled(-1.0), u_d: u.clone(), g: [a.scaled(-1.0), b.scaled(-1.0), c.scaled(-1.0)] }
    }

    pub fn u_n(&self, x: &Point, n: &Vector3<f64>) -> f64 {
        self.g[0].eval(x) * n.x + self.g[1].eval(x) * n.y + self.g[2].eval(x) * n.z
    }

    fn neumann_degree(&self) -> usize {
        self.g.iter().map(Polynomial::degree).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct MeshProblem {
    pub mesh: TetMesh,
    pub data: ProblemData,
    /// Degree `p'` of the discrete solutions.
    pub degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// Admissible hat-orthogonality defect, relative to the data scale.
    pub orthogonality_tol: f64,
    pub parallel: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { orthogonality_tol: 1e-10, parallel: true }
    }
}

/// Quadrature points and weights of a cell in physical coordinates.
pub fn cell_quadrature(geom: &CellGeometry, exactness: usize) -> Vec<(Point, f64)> {
    let rule = build_quadrature(3, exactness);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(x, w)| (geom.map.apply(&Vector3::new(x[0], x[1], x[2])), w * geom.abs_det))
        .collect()
}

/// Quadrature points and weights of mesh face `f` in physical coordinates.
pub fn face_quadrature(mesh: &TetMesh, f: usize, exactness: usize) -> Vec<(Point, f64)> {
    let rule = build_quadrature(2, exactness);
    let [a, b, c] = mesh.faces[f].map(|v| mesh.vertices[v]);
    let scale = 2.0 * mesh.face_area(f);
    rule.points.iter().zip(&rule.weights).map(|(x, w)| (a * (1.0 - x[0] - x[1]) + b * x[0] + c * x[1], w * scale)).collect()
}

fn hat_at(geom: &CellGeometry, local: usize, x: &Point) -> f64 {
    geom.barycentric(x)[local]
}

impl MeshProblem {
    pub fn has_dirichlet(&self) -> bool {
        self.mesh.markers.values().any(|m| *m == Marker::Dirichlet)
    }

    pub fn has_neumann(&self) -> bool {
        self.mesh.markers.values().any(|m| *m == Marker::Neumann)
    }

    /// Degree of the potential reconstruction: `p' + 1`, raised so that `psi_a u_D` is
    /// represented exactly.
    pub fn potential_degree(&self) -> usize {
        let d = if self.has_dirichlet() { self.data.u_d.degree() + 1 } else { 0 };
        (self.degree + 1).max(d)
    }

    /// Degree of the flux reconstruction: `p'`, raised so that `psi_a f` and `psi_a u_N`
    /// are represented exactly.
    pub fn flux_degree(&self) -> usize {
        let n = if self.has_neumann() { self.data.neumann_degree() + 1 } else { 0 };
        self.degree.max(self.data.f.degree() + 1).max(n)
    }

    fn quad_order(&self) -> usize {
        2 * self.potential_degree().max(self.flux_degree() + 1).max(self.data.u_d.degree()) + 2
    }

    /// Scale of the data used for relative tolerances.
    pub fn data_scale(&self, u_h: &BrokenScalarField) -> f64 {
        let grad: f64 = (0..self.mesh.cells.len()).map(|k| grad_norm2(&self.mesh.geometry[k], u_h, k, self.quad_order())).sum();
        let f: f64 = self
            .mesh
            .geometry
            .iter()
            .map(|g| cell_quadrature(g, self.quad_order()).iter().map(|(x, w)| w * self.data.f.eval(x).powi(2)).sum::<f64>())
            .sum();
        grad.sqrt() + f.sqrt() + 1.0
    }

    /// Vertices whose flux problem carries the hat-orthogonality condition (no Dirichlet face).
    pub fn needs_orthogonality(&self) -> Vec<bool> {
        let mut need = vec![true; self.mesh.vertices.len()];
        for (f, m) in &self.mesh.markers {
            if *m == Marker::Dirichlet {
                for &v in f {
                    need[v] = false;
                }
            }
        }
        need
    }
}

fn grad_norm2(geom: &CellGeometry, u: &BrokenScalarField, k: usize, order: usize) -> f64 {
    cell_quadrature(geom, order).iter().map(|(x, w)| w * eval_scalar_gradient(geom, u.degree, &u.coeffs[k], x).norm_squared()).sum()
}

/// `(grad_T u_h, grad psi_a) - (f, psi_a) + (u_N, psi_a)_{Gamma_N}` over the star of `a`.
pub fn check_hat_orthogonality(problem: &MeshProblem, u_h: &BrokenScalarField, a: usize) -> f64 {
    let mesh = &problem.mesh;
    let order = problem.quad_order();
    let mut defect = 0.0;
    for &k in &mesh.vertex_cells[a] {
        let geom = &mesh.geometry[k];
        let l = mesh.cells[k].iter().position(|&v| v == a).unwrap();
        let gpsi = geom.barycentric_gradient(l);
        for (x, w) in cell_quadrature(geom, order) {
            let gu = eval_scalar_gradient(geom, u_h.degree, &u_h.coeffs[k], &x);
            defect += w * (gu.dot(&gpsi) - problem.data.f.eval(&x) * hat_at(geom, l, &x));
        }
        for l2 in 0..4 {
            let f = mesh.cell_faces[k][l2];
            if mesh.marker(f) == Some(Marker::Neumann) && mesh.faces[f].contains(&a) {
                let n = geom.face_normals[l2];
                for (x, w) in face_quadrature(mesh, f, order) {
                    defect += w * problem.data.u_n(&x, &n) * hat_at(geom, l, &x);
                }
            }
        }
    }
    defect
}

/// Potential data of vertex `a`: `tau = psi_a u_h`, jumps `psi_a [u_h]` on interior faces,
/// `psi_a (u_h - u_D)` on Dirichlet faces; `psi_a u_D` is returned per Dirichlet face.
pub fn hat_weighted_data_potential(
    problem: &MeshProblem,
    vp: &VertexPatch,
    u_h: &BrokenScalarField,
    p: usize,
) -> (BrokenScalarField, FaceData, Vec<Option<DVector<f64>>>) {
    let patch = &vp.patch;
    let tau = weighted_scalar(vp, u_h, p);
    let mode = infer_h1_mode(patch);
    let mut r = h1_data_from_field(patch, &tau, mode);
    let mut u_d = vec![None; patch.faces.len()];
    for f in patch.faces.of_class(FaceClass::Dirichlet) {
        let (m, lm) = (patch.faces.neighbor[f].0, patch.faces.local[f].0);
        let geom = &patch.geometry[m];
        let l = patch.local_vertex(m, patch.center).unwrap();
        let g = project_on_face(geom, lm, p, |x| hat_at(geom, l, x) * problem.data.u_d.eval(x));
        r.values[f] -= &g;
        u_d[f] = Some(g);
    }
    (tau, r, u_d)
}

fn weighted_scalar(vp: &VertexPatch, u_h: &BrokenScalarField, p: usize) -> BrokenScalarField {
    let patch = &vp.patch;
    let coeffs = (0..patch.cell_count())
        .map(|k| {
            let geom = &patch.geometry[k];
            let l = patch.local_vertex(k, patch.center).unwrap();
            let c = &u_h.coeffs[vp.cells[k]];
            project_on_cell(geom, p, |x| hat_at(geom, l, x) * eval_scalar(geom, u_h.degree, c, x))
        })
        .collect();
    BrokenScalarField { degree: p, coeffs }
}

/// Flux data of vertex `a`: `tau = psi_a grad u_h`, `r_K = psi_a (f + lap u_h)`, jumps
/// `psi_a [grad u_h] . n` and `psi_a (grad u_h . n + u_N)` on Neumann faces.
pub fn hat_weighted_data_flux(
    problem: &MeshProblem,
    vp: &VertexPatch,
    u_h: &BrokenScalarField,
    q: usize,
) -> (BrokenVectorField, HdivData) {
    let patch = &vp.patch;
    let mut tau = BrokenVectorField::zeros(q, patch.cell_count());
    for k in 0..patch.cell_count() {
        let geom = &patch.geometry[k];
        let l = patch.local_vertex(k, patch.center).unwrap();
        let c = &u_h.coeffs[vp.cells[k]];
        tau.coeffs[k] =
            project_rtn_on_cell(geom, q, |x| eval_scalar_gradient(geom, u_h.degree, c, x) * hat_at(geom, l, x));
    }
    let mut data = hdiv_data_from_field(patch, &tau);
    for k in 0..patch.cell_count() {
        let geom = &patch.geometry[k];
        let l = patch.local_vertex(k, patch.center).unwrap();
        let gpsi = geom.barycentric_gradient(l);
        let c = &u_h.coeffs[vp.cells[k]];
        // div(psi grad u_h) = grad psi . grad u_h + psi lap u_h
        data.cells.values[k] += project_on_cell(geom, q, |x| {
            hat_at(geom, l, x) * problem.data.f.eval(x) - gpsi.dot(&eval_scalar_gradient(geom, u_h.degree, c, x))
        });
    }
    for f in patch.faces.of_class(FaceClass::Neumann) {
        let (m, lm) = (patch.faces.neighbor[f].0, patch.faces.local[f].0);
        let geom = &patch.geometry[m];
        let l = patch.local_vertex(m, patch.center).unwrap();
        let n = geom.face_normals[lm];
        data.faces.values[f] += project_on_face(geom, lm, q, |x| hat_at(geom, l, x) * problem.data.u_n(x, &n));
    }
    (tau, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Continuous potential of degree `potential_degree`.
    pub potential: BrokenScalarField,
    /// Equilibrated RTN flux of degree `flux_degree`.
    pub flux: BrokenVectorField,
    pub audit: ReconstructionAudit,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReconstructionAudit {
    /// Largest coefficient of `div sigma_h - f` per element.
    pub divergence: f64,
    /// Largest coefficient of the normal-flux jump across interior faces.
    pub normal_jump: f64,
    /// Largest coefficient of `sigma_h . n - u_N` on Neumann faces.
    pub neumann: f64,
    /// Largest coefficient of the trace jump of `s_h` across interior faces.
    pub potential_jump: f64,
    /// Largest coefficient of `s_h - u_D` on Dirichlet faces.
    pub dirichlet: f64,
    /// Largest constraint residual reported by the patch solves.
    pub patch_residual: f64,
}

impl ReconstructionAudit {
    pub fn max(&self) -> f64 {
        [self.divergence, self.normal_jump, self.neumann, self.potential_jump, self.dirichlet, self.patch_residual]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Contributions of one vertex patch.
#[derive(Debug, Clone)]
pub struct VertexContribution {
    pub vertex: usize,
    pub cells: Vec<usize>,
    pub potential: Vec<DVector<f64>>,
    pub flux: Vec<DVector<f64>>,
    pub residual: f64,
}

pub fn vertex_contribution(problem: &MeshProblem, u_h: &BrokenScalarField, a: usize) -> Result<VertexContribution> {
    let vp = problem.mesh.vertex_patch(a)?;
    let (ps, q) = (problem.potential_degree(), problem.flux_degree());
    let fail = |e: Error| Error::PatchSolveFailed { vertex: a, source: Box::new(e) };
    let (tau, r, _) = hat_weighted_data_potential(problem, &vp, u_h, ps);
    let v = global_min_h1(&vp.patch, &r, ps).map_err(fail)?;
    let potential: Vec<DVector<f64>> = tau.coeffs.iter().zip(&v.field.coeffs).map(|(t, v)| t - v).collect();
    let (tau, data) = hat_weighted_data_flux(problem, &vp, u_h, q);
    let w = global_min_hdiv_direct(&vp.patch, &data, q).map_err(fail)?;
    let flux: Vec<DVector<f64>> = w.field.coeffs.iter().zip(&tau.coeffs).map(|(w, t)| w - t).collect();
    Ok(VertexContribution { vertex: a, cells: vp.cells, potential, flux, residual: v.max_residual().max(w.max_residual()) })
}

/// Vertices whose hat orthogonality defect exceeds `tol` (relative to the data scale).
pub fn orthogonality_violations(problem: &MeshProblem, u_h: &BrokenScalarField, tol: f64) -> Vec<(usize, f64)> {
    let need = problem.needs_orthogonality();
    let scale = problem.data_scale(u_h);
    problem
        .mesh
        .used_vertices()
        .into_iter()
        .filter(|&a| need[a])
        .map(|a| (a, check_hat_orthogonality(problem, u_h, a)))
        .filter(|(_, d)| d.abs() > tol * scale)
        .collect()
}

pub fn reconstruct(problem: &MeshProblem, u_h: &BrokenScalarField, opts: &EstimatorOptions) -> Result<Reconstruction> {
    if u_h.degree > problem.degree || u_h.coeffs.len() != problem.mesh.cells.len() {
        return Err(Error::DegreeMismatch { expected: problem.degree, found: u_h.degree });
    }
    let bad = orthogonality_violations(problem, u_h, opts.orthogonality_tol);
    if !bad.is_empty() {
        return Err(Error::OrthogonalityViolated(bad.into_iter().map(|b| b.0).collect()));
    }
    let vertices = problem.mesh.used_vertices();
    let work = |i: usize| vertex_contribution(problem, u_h, vertices[i]);
    let parts: Vec<VertexContribution> = if opts.parallel {
        par::try_map_range(vertices.len(), work)?
    } else {
        par::map_range_seq(vertices.len(), work).into_iter().collect::<Result<_>>()?
    };
    let nc = problem.mesh.cells.len();
    let mut potential = BrokenScalarField::zeros(problem.potential_degree(), nc);
    let mut flux = BrokenVectorField::zeros(problem.flux_degree(), nc);
    let mut patch_residual: f64 = 0.0;
    // fixed vertex order keeps the sums bitwise reproducible
    for part in &parts {
        for (k, &g) in part.cells.iter().enumerate() {
            potential.coeffs[g] += &part.potential[k];
            flux.coeffs[g] += &part.flux[k];
        }
        patch_residual = patch_residual.max(part.residual);
    }
    let mut audit = audit_reconstruction(problem, &potential, &flux);
    audit.patch_residual = patch_residual;
    Ok(Reconstruction { potential, flux, audit })
}

pub fn audit_reconstruction(problem: &MeshProblem, s: &BrokenScalarField, sigma: &BrokenVectorField) -> ReconstructionAudit {
    let mesh = &problem.mesh;
    let q = sigma.degree;
    let cells: Vec<HdivCell> = mesh.geometry.iter().map(|g| HdivCell::new(g, q)).collect();
    let maxabs = |v: &DVector<f64>| v.amax();
    let mut a = ReconstructionAudit::default();
    for (k, c) in cells.iter().enumerate() {
        let f = project_on_cell(&mesh.geometry[k], q, |x| problem.data.f.eval(x));
        a.divergence = a.divergence.max(maxabs(&(c.divergence(&sigma.coeffs[k]) - f)));
    }
    for f in 0..mesh.faces.len() {
        let cs = &mesh.face_cells[f];
        let (k, l) = cs[0];
        if let Some(&(k2, l2)) = cs.get(1) {
            let jump = cells[k].normal_trace(&sigma.coeffs[k], l) + cells[k2].normal_trace(&sigma.coeffs[k2], l2);
            a.normal_jump = a.normal_jump.max(maxabs(&jump));
            let sj = scalar_trace(s.degree, &s.coeffs[k], l) - scalar_trace(s.degree, &s.coeffs[k2], l2);
            a.potential_jump = a.potential_jump.max(maxabs(&sj));
            continue;
        }
        let geom = &mesh.geometry[k];
        match mesh.marker(f) {
            Some(Marker::Neumann) => {
                let n = geom.face_normals[l];
                let g = project_on_face(geom, l, q, |x| problem.data.u_n(x, &n));
                a.neumann = a.neumann.max(maxabs(&(cells[k].normal_trace(&sigma.coeffs[k], l) - g)));
            }
            Some(Marker::Dirichlet) => {
                let g = project_on_face(geom, l, s.degree, |x| problem.data.u_d.eval(x));
                a.dirichlet = a.dirichlet.max(maxabs(&(scalar_trace(s.degree, &s.coeffs[k], l) - g)));
            }
            None => {}
        }
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBound {
    pub eta: f64,
    /// `eta_K^2 = flux_K^2 + potential_K^2`.
    pub eta_k: Vec<f64>,
    /// `|grad u_h + sigma_h|_K`.
    pub flux_k: Vec<f64>,
    /// `|grad (u_h - s_h)|_K`.
    pub potential_k: Vec<f64>,
    /// `h_F^{-1} |Pi_F^0 [u_h]|_F^2` on interior faces and `h_F^{-1} |Pi_F^0 (u_h - u_D)|_F^2`
    /// on Dirichlet faces (zero elsewhere).
    pub jump_terms: Vec<f64>,
    /// Bound on the error augmented by the face-mean jumps.
    pub eta_with_jumps: f64,
}

/// Face means of `[u_h]` on interior faces and of `u_h - u_D` on Dirichlet faces.
pub fn face_mean_jumps(problem: &MeshProblem, v: &BrokenScalarField, exact: Option<&Polynomial>) -> Vec<f64> {
    let mesh = &problem.mesh;
    let order = problem.quad_order();
    (0..mesh.faces.len())
        .map(|f| {
            let cs = &mesh.face_cells[f];
            let (k, _) = cs[0];
            let val = |k: usize, x: &Point| {
                let own = eval_scalar(&mesh.geometry[k], v.degree, &v.coeffs[k], x);
                exact.map_or(own, |u| u.eval(x) - own)
            };
            let integrand: Box<dyn Fn(&Point) -> f64> = match (cs.get(1), mesh.marker(f)) {
                (Some(&(k2, _)), _) => Box::new(move |x: &Point| val(k, x) - val(k2, x)),
                (None, Some(Marker::Dirichlet)) => {
                    Box::new(move |x: &Point| if exact.is_some() { val(k, x) } else { val(k, x) - problem.data.u_d.eval(x) })
                }
                _ => return 0.0,
            };
            let area = mesh.face_area(f);
            face_quadrature(mesh, f, order).iter().map(|(x, w)| w * integrand(x)).sum::<f64>() / area
        })
        .collect()
}

pub fn error_bound(problem: &MeshProblem, u_h: &BrokenScalarField, rec: &Reconstruction) -> ErrorBound {
    let mesh = &problem.mesh;
    let order = problem.quad_order();
    let per_cell: Vec<(f64, f64)> = par::map_range(mesh.cells.len(), |k| {
        let geom = &mesh.geometry[k];
        let (mut fl, mut po) = (0.0, 0.0);
        for (x, w) in cell_quadrature(geom, order) {
            let gu = eval_scalar_gradient(geom, u_h.degree, &u_h.coeffs[k], &x);
            let sig = eval_rtn(geom, rec.flux.degree, &rec.flux.coeffs[k], &x);
            let gs = eval_scalar_gradient(geom, rec.potential.degree, &rec.potential.coeffs[k], &x);
            fl += w * (gu + sig).norm_squared();
            po += w * (gu - gs).norm_squared();
        }
        (fl.sqrt(), po.sqrt())
    });
    let flux_k: Vec<f64> = per_cell.iter().map(|c| c.0).collect();
    let potential_k: Vec<f64> = per_cell.iter().map(|c| c.1).collect();
    let eta_k: Vec<f64> = per_cell.iter().map(|(a, b)| (a * a + b * b).sqrt()).collect();
    let eta = eta_k.iter().map(|e| e * e).sum::<f64>().sqrt();
    let means = face_mean_jumps(problem, u_h, None);
    let jump_terms: Vec<f64> =
        means.iter().enumerate().map(|(f, m)| m * m * mesh.face_area(f) / mesh.face_diameter(f)).collect();
    let eta_with_jumps = (eta * eta + jump_terms.iter().sum::<f64>()).sqrt();
    ErrorBound { eta, eta_k, flux_k, potential_k, jump_terms, eta_with_jumps }
}

/// `|grad_T (u - u_h)|_K` per element.
pub fn exact_error(problem: &MeshProblem, u_h: &BrokenScalarField, u: &Polynomial) -> Vec<f64> {
    let mesh = &problem.mesh;
    let grad = u.gradient();
    let order = 2 * u.degree().max(u_h.degree) + 2;
    par::map_range(mesh.cells.len(), |k| {
        let geom = &mesh.geometry[k];
        cell_quadrature(geom, order)
            .iter()
            .map(|(x, w)| {
                let gu = Vector3::new(grad[0].eval(x), grad[1].eval(x), grad[2].eval(x));
                w * (gu - eval_scalar_gradient(geom, u_h.degree, &u_h.coeffs[k], x)).norm_squared()
            })
            .sum::<f64>()
            .sqrt()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    pub error: f64,
    pub effectivity: f64,
    /// Error augmented by the face-mean jumps of `u - u_h`.
    pub error_with_jumps: f64,
    pub effectivity_with_jumps: f64,
    /// `flux_K / sum_{a in V_K} |grad_T (u - u_h)|_{omega_a}`; `None` when the error vanishes.
    pub flux_ratio: Vec<Option<f64>>,
    /// `potential_K` over the same patch errors augmented by the patch jump terms.
    pub potential_ratio: Vec<Option<f64>>,
    /// Largest difference between the face-mean jump terms of `u_h` and of `u - u_h`.
    pub jump_identity_defect: f64,
}

pub fn efficiency_report(problem: &MeshProblem, u_h: &BrokenScalarField, bound: &ErrorBound, u: &Polynomial) -> EfficiencyReport {
    let mesh = &problem.mesh;
    let err_k = exact_error(problem, u_h, u);
    let error = err_k.iter().map(|e| e * e).sum::<f64>().sqrt();
    let exact_means = face_mean_jumps(problem, u_h, Some(u));
    let exact_jumps: Vec<f64> =
        exact_means.iter().enumerate().map(|(f, m)| m * m * mesh.face_area(f) / mesh.face_diameter(f)).collect();
    let jump_identity_defect =
        exact_jumps.iter().zip(&bound.jump_terms).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let error_with_jumps = (error * error + exact_jumps.iter().sum::<f64>()).sqrt();
    let nv = mesh.vertices.len();
    let mut patch_err = vec![0.0; nv];
    let mut patch_jump = vec![0.0; nv];
    for (k, c) in mesh.cells.iter().enumerate() {
        for &v in c {
            patch_err[v] += err_k[k] * err_k[k];
        }
    }
    for (f, t) in exact_jumps.iter().enumerate() {
        for &v in &mesh.faces[f] {
            patch_jump[v] += t;
        }
    }
    let ratio = |num: f64, den: f64| if den > 1e-14 { Some(num / den) } else { None };
    let mut flux_ratio = Vec::with_capacity(mesh.cells.len());
    let mut potential_ratio = Vec::with_capacity(mesh.cells.len());
    for (k, c) in mesh.cells.iter().enumerate() {
        let e: f64 = c.iter().map(|&v| patch_err[v].sqrt()).sum();
        let ej: f64 = c.iter().map(|&v| patch_err[v].sqrt() + patch_jump[v].sqrt()).sum();
        flux_ratio.push(ratio(bound.flux_k[k], e));
        potential_ratio.push(ratio(bound.potential_k[k], ej));
    }
    EfficiencyReport {
        error,
        effectivity: if error > 0.0 { bound.eta / error } else { f64::NAN },
        error_with_jumps,
        effectivity_with_jumps: if error_with_jumps > 0.0 { bound.eta_with_jumps / error_with_jumps } else { f64::NAN },
        flux_ratio,
        potential_ratio,
        jump_identity_defect,
    }
}

/// Elementwise L2 projection of `u` onto `P_p`, corrected by a continuous piecewise affine
/// function so that hat orthogonality holds at every vertex without a Dirichlet face.
pub fn projected_solution(problem: &MeshProblem, u: &Polynomial, p: usize) -> Result<BrokenScalarField> {
    let mesh = &problem.mesh;
    let mut uh = BrokenScalarField {
        degree: p,
        coeffs: mesh.geometry.iter().map(|g| project_on_cell(g, p, |x| u.eval(x))).collect(),
    };
    let need = problem.needs_orthogonality();
    let free: Vec<usize> = mesh.used_vertices().into_iter().filter(|&v| need[v]).collect();
    if free.is_empty() {
        return Ok(uh);
    }
    let mut index = vec![usize::MAX; mesh.vertices.len()];
    for (i, &v) in free.iter().enumerate() {
        index[v] = i;
    }
    let n = free.len();
    let mut stiff = DMatrix::zeros(n, n);
    for (k, c) in mesh.cells.iter().enumerate() {
        let g = &mesh.geometry[k];
        for i in 0..4 {
            for j in 0..4 {
                let (a, b) = (index[c[i]], index[c[j]]);
                if a != usize::MAX && b != usize::MAX {
                    stiff[(a, b)] += g.barycentric_gradient(i).dot(&g.barycentric_gradient(j)) * g.volume();
                }
            }
        }
    }
    let rhs = DVector::from_iterator(n, free.iter().map(|&a| -check_hat_orthogonality(problem, &uh, a)));
    if !problem.has_dirichlet() {
        // constants are in the kernel; pin the first vertex
        stiff.row_mut(0).fill(0.0);
        stiff.column_mut(0).fill(0.0);
        stiff[(0, 0)] = 1.0;
    }
    let mut rhs = rhs;
    if !problem.has_dirichlet() {
        rhs[0] = 0.0;
    }
    let w = stiff
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("piecewise affine correction".into()))?
        .solve(&rhs);
    for (k, c) in mesh.cells.iter().enumerate() {
        let g = &mesh.geometry[k];
        let corr = project_on_cell(g, p, |x| {
            let b = g.barycentric(x);
            (0..4).filter(|&i| index[c[i]] != usize::MAX).map(|i| w[index[c[i]]] * b[i]).sum()
        });
        uh.coeffs[k] += corr;
    }
    Ok(uh)
}

/// Degree-4 polynomial used by the manufactured tests.
pub fn manufactured_polynomial() -> Polynomial {
    Polynomial::new(vec![
        (1.0, [1, 0, 0]),
        (-0.5, [0, 1, 1]),
        (0.8, [2, 1, 0]),
        (-0.6, [0, 0, 3]),
        (0.7, [1, 1, 2]),
        (-0.9, [4, 0, 0]),
        (0.5, [0, 2, 2]),
        (0.3, [2, 0, 1]),
    ])
}

/// Full estimator run on a manufactured problem.
#[derive(Debug, Clone)]
pub struct EstimateRun {
    pub bound: ErrorBound,
    pub efficiency: EfficiencyReport,
    pub audit: ReconstructionAudit,
}

pub fn estimate_manufactured(problem: &MeshProblem, u: &Polynomial, opts: &EstimatorOptions) -> Result<EstimateRun> {
    let uh = projected_solution(problem, u, problem.degree)?;
    let rec = reconstruct(problem, &uh, opts)?;
    let bound = error_bound(problem, &uh, &rec);
    let efficiency = efficiency_report(problem, &uh, &bound, u);
    Ok(EstimateRun { bound, efficiency, audit: rec.audit })
}

/// Flux-balance defect of the patch data of vertex `a` (zero under hat orthogonality).
pub fn flux_data_defect(problem: &MeshProblem, u_h: &BrokenScalarField, a: usize) -> Result<f64> {
    let vp = problem.mesh.vertex_patch(a)?;
    let (_, data) = hat_weighted_data_flux(problem, &vp, u_h, problem.flux_degree());
    Ok(check_compatibility_hdiv(&vp.patch, &data, infer_hdiv_mode(&vp.patch))?.defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::kuhn_cube;

    fn problem(n: usize, p: usize, u: &Polynomial, neumann_top: bool) -> MeshProblem {
        let mesh = kuhn_cube(n, |x, _| if neumann_top && x.z > 1.0 - 1e-12 { Marker::Neumann } else { Marker::Dirichlet });
        MeshProblem { mesh, data: ProblemData::manufactured(u), degree: p }
    }

    #[test]
    fn polynomial_calculus() {
        let u = Polynomial::new(vec![(2.0, [2, 1, 0]), (1.0, [0, 0, 3])]);
        assert_eq!(u.degree(), 3);
        assert_eq!(u.laplacian(), Polynomial::new(vec![(4.0, [0, 1, 0]), (6.0, [0, 0, 1])]));
        let x = Point::new(0.3, -0.2, 0.7);
        assert!((u.eval(&x) - (2.0 * 0.09 * -0.2 + 0.343)).abs() < 1e-15);
    }

    #[test]
    fn exact_discrete_solution_gives_zero_estimate() {
        let u = Polynomial::new(vec![(1.0, [2, 0, 0]), (-0.5, [0, 1, 1]), (0.25, [0, 0, 0])]);
        let pr = problem(1, 2, &u, true);
        let uh = projected_solution(&pr, &u, 2).unwrap();
        let rec = reconstruct(&pr, &uh, &EstimatorOptions::default()).unwrap();
        let b = error_bound(&pr, &uh, &rec);
        assert!(b.eta < 1e-8, "eta {}", b.eta);
        assert!(rec.audit.max() < 1e-9, "{:?}", rec.audit);
    }

    #[test]
    fn orthogonality_defect_matches_flux_balance() {
        let u = manufactured_polynomial();
        let pr = problem(2, 1, &u, true);
        let uh = BrokenScalarField {
            degree: 1,
            coeffs: pr.mesh.geometry.iter().map(|g| project_on_cell(g, 1, |x| u.eval(x))).collect(),
        };
        let need = pr.needs_orthogonality();
        for a in pr.mesh.used_vertices().into_iter().filter(|&a| need[a]) {
            let d = check_hat_orthogonality(&pr, &uh, a);
            let b = flux_data_defect(&pr, &uh, a).unwrap();
            // the flux balance carries the opposite sign
            assert!((d + b).abs() < 1e-12, "vertex {a}: {d} vs {b}");
        }
        assert!(matches!(reconstruct(&pr, &uh, &EstimatorOptions::default()), Err(Error::OrthogonalityViolated(_))));
    }

    #[test]
    fn reliable_and_equilibrated_on_coarse_mesh() {
        let u = manufactured_polynomial();
        for p in 1..=2 {
            let pr = problem(1, p, &u, true);
            let run = estimate_manufactured(&pr, &u, &EstimatorOptions::default()).unwrap();
            assert!(run.audit.max() < 1e-9, "{:?}", run.audit);
            assert!(run.efficiency.error <= run.bound.eta);
            assert!(run.efficiency.error_with_jumps <= run.bound.eta_with_jumps);
            assert!(run.efficiency.jump_identity_defect < 1e-12);
            let sum: f64 = run.bound.eta_k.iter().map(|e| e * e).sum();
            assert!((sum - run.bound.eta.powi(2)).abs() <= 1e-12 * sum);
        }
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let u = manufactured_polynomial();
        let pr = problem(1, 1, &u, false);
        let uh = projected_solution(&pr, &u, 1).unwrap();
        let a = reconstruct(&pr, &uh, &EstimatorOptions { parallel: true, ..Default::default() }).unwrap();
        let b = reconstruct(&pr, &uh, &EstimatorOptions { parallel: false, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }
}
