//! Single-tetrahedron constrained minimizers and the per-cell kernels shared by patch solvers.
//!
//! H1: minimize `|grad z|_K` over `P_q(K)` with prescribed traces on some faces.
//! H(div): minimize `|xi|_K` over `RTN_q(K)` with prescribed divergence and normal traces.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::fields::{tri_degree_of, Diagnostics, MinimizationResult};
use crate::linalg::PivotedCholesky;
use crate::spaces::dubiner::{dim_tet, dim_tri, tet_basis};
use crate::spaces::geometry::{piola_push, CellGeometry, Point};
use crate::spaces::hierarchical::{h1_tables, H1Tables};
use crate::spaces::rtn::{rtn_tables, RtnTables};
use crate::spaces::tables::scalar_tables;

/// Zero-pad or truncate a coefficient vector.
pub fn resized(v: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    let m = n.min(v.len());
    out.rows_mut(0, m).copy_from(&v.rows(0, m));
    out
}

/// `|grad v|_K^2` for modal coefficients of degree q.
pub fn scalar_energy2(geom: &CellGeometry, q: usize, c: &DVector<f64>) -> f64 {
    if q == 0 {
        return 0.0;
    }
    let st = scalar_tables(q);
    let d: Vec<DVector<f64>> = (0..3).map(|a| &st.deriv[a] * c).collect();
    let h = &geom.grad_metric;
    let mut e = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            e += h[(a, b)] * d[a].dot(&d[b]);
        }
    }
    geom.abs_det * e
}

/// `(grad u, grad v)_K` for modal coefficients of degree q.
pub fn scalar_energy_inner(geom: &CellGeometry, q: usize, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    if q == 0 {
        return 0.0;
    }
    let st = scalar_tables(q);
    let du: Vec<DVector<f64>> = (0..3).map(|a| &st.deriv[a] * u).collect();
    let dv: Vec<DVector<f64>> = (0..3).map(|a| &st.deriv[a] * v).collect();
    let h = &geom.grad_metric;
    let mut e = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            e += h[(a, b)] * du[a].dot(&dv[b]);
        }
    }
    geom.abs_det * e
}

/// Face coefficients (degree q) of the trace on local face k.
pub fn scalar_trace(q: usize, c: &DVector<f64>, k: usize) -> DVector<f64> {
    &scalar_tables(q).trace[k] * c
}

/// Value of a modal scalar at a physical point.
pub fn eval_scalar(geom: &CellGeometry, q: usize, c: &DVector<f64>, x: &Point) -> f64 {
    let r = geom.map.apply_inverse(x);
    tet_basis(q, [r[0], r[1], r[2]]).iter().zip(c.iter()).map(|(b, c)| b.v * c).sum()
}

/// Physical gradient of a modal scalar at a physical point.
pub fn eval_scalar_gradient(geom: &CellGeometry, q: usize, c: &DVector<f64>, x: &Point) -> Vector3<f64> {
    let r = geom.map.apply_inverse(x);
    let mut g = Vector3::zeros();
    for (b, c) in tet_basis(q, [r[0], r[1], r[2]]).iter().zip(c.iter()) {
        g += Vector3::new(b.g[0], b.g[1], b.g[2]) * *c;
    }
    geom.map.inverse.transpose() * g
}

/// Value of an RTN_q field (reference coefficients) at a physical point.
pub fn eval_rtn(geom: &CellGeometry, q: usize, s: &DVector<f64>, x: &Point) -> Vector3<f64> {
    let t = rtn_tables(q);
    let comps = t.components(s.as_slice());
    let r = geom.map.apply_inverse(x);
    let basis = tet_basis(q + 1, [r[0], r[1], r[2]]);
    let mut v = Vector3::zeros();
    for a in 0..3 {
        v[a] = basis.iter().zip(comps[a].iter()).map(|(b, c)| b.v * c).sum();
    }
    piola_push(&geom.map, &v)
}

/// RTN_q coefficients of the physical gradient of a degree-`qs` scalar, `q + 1 >= qs`.
pub fn gradient_to_rtn(geom: &CellGeometry, qs: usize, c: &DVector<f64>, q: usize) -> DVector<f64> {
    assert!(q + 1 >= qs);
    let t = rtn_tables(q);
    let mut out = DVector::zeros(t.dim);
    if qs == 0 {
        return out;
    }
    let st = scalar_tables(qs);
    let d: Vec<DVector<f64>> = (0..3).map(|a| &st.deriv[a] * c).collect();
    let h = geom.grad_metric * geom.map.det;
    let n = t.np.min(st.dim);
    for a in 0..3 {
        for b in 0..3 {
            for i in 0..n {
                out[a * t.np + i] += h[(a, b)] * d[b][i];
            }
        }
    }
    out
}

/// Per-cell H1 kernel at degree q in the hierarchical basis.
pub struct H1Cell {
    pub q: usize,
    pub tables: Arc<H1Tables>,
    pub stiffness: DMatrix<f64>,
}

impl H1Cell {
    pub fn new(geom: &CellGeometry, q: usize) -> Self {
        let tables = h1_tables(q);
        let stiffness = tables.stiffness(&geom.grad_metric, geom.abs_det);
        H1Cell { q, tables, stiffness }
    }

    pub fn dim(&self) -> usize {
        self.tables.layout.dim()
    }

    /// Hierarchical values fixed by face traces given in the face basis (degree <= q).
    pub fn fix_from_faces(&self, faces: &[(usize, DVector<f64>)]) -> Result<Vec<Option<f64>>> {
        let mut fixed: Vec<Option<f64>> = vec![None; self.dim()];
        let nf = dim_tri(self.q);
        let scale = faces.iter().map(|(_, v)| v.amax()).fold(1.0, f64::max);
        for (k, data) in faces {
            let vals = &self.tables.face_map_inv * resized(data, nf);
            for (c, idx) in self.tables.layout.face_closure(*k).into_iter().enumerate() {
                match fixed[idx] {
                    Some(old) => {
                        let diff: f64 = (old - vals[c]).abs();
                        if diff > 1e-9 * scale {
                            return Err(Error::DiscontinuousData(diff));
                        }
                    }
                    None => fixed[idx] = Some(vals[c]),
                }
            }
        }
        Ok(fixed)
    }

    /// Minimize the energy over the free values. Unfixed constants are set to zero.
    pub fn minimize(&self, fixed: &[Option<f64>]) -> (DVector<f64>, f64) {
        let n = self.dim();
        let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
        let mut x = DVector::from_iterator(n, fixed.iter().map(|v| v.unwrap_or(0.0)));
        if free.is_empty() {
            return (x, 0.0);
        }
        let kff = DMatrix::from_fn(free.len(), free.len(), |i, j| self.stiffness[(free[i], free[j])]);
        let kx = &self.stiffness * &x;
        let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| -kx[i]));
        let sol = match kff.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => PivotedCholesky::new(&kff, 1e-13).solve(&rhs),
        };
        for (i, &fi) in free.iter().enumerate() {
            x[fi] = sol[i];
        }
        let kx = &self.stiffness * &x;
        let galerkin = free.iter().map(|&i| kx[i].abs()).fold(0.0, f64::max);
        (x, galerkin)
    }

    pub fn to_modal(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.tables.to_modal * x
    }

    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.stiffness * x)).max(0.0).sqrt()
    }
}

/// Per-cell H(div) kernel at degree q in the Piola-mapped RTN basis.
pub struct HdivCell {
    pub q: usize,
    pub eps: f64,
    pub abs_det: f64,
    pub face_areas: [f64; 4],
    pub tables: Arc<RtnTables>,
    metric: Matrix3<f64>,
    metric_inv: Matrix3<f64>,
    rho_mass: DMatrix<f64>,
    rho_inv: DMatrix<f64>,
}

impl HdivCell {
    pub fn new(geom: &CellGeometry, q: usize) -> Self {
        let tables = rtn_tables(q);
        let metric = geom.piola_metric;
        let metric_inv = metric.try_inverse().expect("non-degenerate cell");
        let rho_mass = tables.rho_mass(&metric);
        let rho_inv = rho_mass.clone().cholesky().expect("positive definite").inverse();
        HdivCell {
            q,
            eps: geom.eps(),
            abs_det: geom.abs_det,
            face_areas: geom.face_areas,
            tables,
            metric,
            metric_inv,
            rho_mass,
            rho_inv,
        }
    }

    pub fn dim(&self) -> usize {
        self.tables.dim
    }

    fn apply_block(&self, m: &Matrix3<f64>, rho: &DMatrix<f64>, factor: f64, v: &DMatrix<f64>) -> DMatrix<f64> {
        let np = self.tables.np;
        let nr = self.tables.nrho;
        let mut out = DMatrix::zeros(v.nrows(), v.ncols());
        for a in 0..3 {
            for b in 0..3 {
                let c = m[(a, b)] * factor;
                if c != 0.0 {
                    let src = v.rows(b * np, np) * c;
                    let mut dst = out.rows_mut(a * np, np);
                    dst += src;
                }
            }
        }
        let r = rho * v.rows(3 * np, nr) * factor;
        out.rows_mut(3 * np, nr).copy_from(&r);
        out
    }

    /// Physical mass matrix applied to coefficient columns.
    pub fn apply_mass(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_block(&self.metric, &self.rho_mass, 1.0 / self.abs_det, v)
    }

    /// Inverse mass matrix applied to coefficient columns.
    pub fn apply_inv_mass(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_block(&self.metric_inv, &self.rho_inv, self.abs_det, v)
    }

    pub fn mass_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_mass(&DMatrix::from_column_slice(v.len(), 1, v.as_slice())).column(0).into_owned()
    }

    pub fn norm2(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.mass_vec(v))
    }

    /// Rows mapping coefficients to the modal coefficients of the physical divergence.
    pub fn div_rows(&self) -> DMatrix<f64> {
        &self.tables.div * (self.eps / self.abs_det)
    }

    /// Rows mapping coefficients to the face coefficients of `sigma . n_K` on local face k.
    pub fn face_rows(&self, k: usize) -> DMatrix<f64> {
        &self.tables.normal[k] * (self.eps / (2.0 * self.face_areas[k]))
    }

    pub fn divergence(&self, v: &DVector<f64>) -> DVector<f64> {
        self.div_rows() * v
    }

    pub fn normal_trace(&self, v: &DVector<f64>, k: usize) -> DVector<f64> {
        self.face_rows(k) * v
    }

    /// `min 1/2 |s|^2 + g.s` subject to `rows s = rhs`.
    pub fn local_min(
        &self,
        rows: &DMatrix<f64>,
        rhs: &DVector<f64>,
        g: Option<&DVector<f64>>,
    ) -> Result<(DVector<f64>, Diagnostics)> {
        let n = self.dim();
        let wct = self.apply_inv_mass(&rows.transpose());
        let s = rows * &wct;
        let mut r = rhs.clone();
        let wg = g.map(|g| self.apply_inv_mass(&DMatrix::from_column_slice(n, 1, g.as_slice())).column(0).into_owned());
        if let Some(wg) = &wg {
            r += rows * wg;
        }
        let fac = PivotedCholesky::new(&s, 1e-12);
        let mu = fac.solve(&r);
        let mut sigma = &wct * mu;
        if let Some(wg) = &wg {
            sigma -= wg;
        }
        let defect = (rows * &sigma - rhs).amax();
        let scale = rhs.amax().max(1.0);
        if defect > 1e-9 * scale {
            return Err(Error::IncompatibleData { reason: "local constraints are inconsistent".into(), defect });
        }
        let diag = Diagnostics {
            unknowns: n,
            constraints: rows.nrows(),
            rank_deficiency: fac.n - fac.rank,
            pivot_ratio: fac.pivot_ratio,
        };
        Ok((sigma, diag))
    }
}

/// Trace data on some faces of one tetrahedron.
#[derive(Debug, Clone)]
pub struct ElementH1Problem {
    pub geometry: CellGeometry,
    /// (local face, face-basis coefficients)
    pub dirichlet: Vec<(usize, DVector<f64>)>,
}

/// Divergence and normal-trace data on one tetrahedron.
#[derive(Debug, Clone)]
pub struct ElementHdivProblem {
    pub geometry: CellGeometry,
    pub neumann: Vec<(usize, DVector<f64>)>,
    pub volume: DVector<f64>,
}

fn check_faces(faces: &[(usize, DVector<f64>)], p: usize) -> Result<()> {
    let mut seen = [false; 4];
    for (k, v) in faces {
        if *k > 3 || seen[*k] {
            return Err(Error::FaceNotInCell);
        }
        seen[*k] = true;
        let d = tri_degree_of(v.len()).ok_or(Error::DegreeMismatch { expected: p, found: v.len() })?;
        if d > p {
            return Err(Error::DegreeMismatch { expected: p, found: d });
        }
    }
    Ok(())
}

/// Minimal-energy `P_p(K)` function with the prescribed traces.
pub fn h1_extend_element(problem: &ElementH1Problem, p: usize) -> Result<MinimizationResult<DVector<f64>>> {
    if p == 0 {
        return Err(Error::DegreeMismatch { expected: 1, found: 0 });
    }
    check_faces(&problem.dirichlet, p)?;
    if problem.dirichlet.is_empty() {
        return Ok(MinimizationResult {
            field: DVector::zeros(dim_tet(p)),
            energy: 0.0,
            residuals: vec![],
            diagnostics: Diagnostics::default(),
        });
    }
    let cell = H1Cell::new(&problem.geometry, p);
    let fixed = cell.fix_from_faces(&problem.dirichlet)?;
    let (x, galerkin) = cell.minimize(&fixed);
    let modal = cell.to_modal(&x);
    let mut trace_res: f64 = 0.0;
    for (k, data) in &problem.dirichlet {
        let tr = scalar_trace(p, &modal, *k);
        trace_res = trace_res.max((tr - resized(data, dim_tri(p))).amax());
    }
    let energy = cell.energy(&x);
    let nfree = fixed.iter().filter(|v| v.is_none()).count();
    Ok(MinimizationResult {
        field: modal,
        energy,
        residuals: vec![("trace".into(), trace_res), ("galerkin".into(), galerkin)],
        diagnostics: Diagnostics { unknowns: nfree, constraints: cell.dim() - nfree, ..Default::default() },
    })
}

/// `(r_K, 1)_K - sum_F (r_F, 1)_F` for a single cell.
pub fn element_flux_defect(geom: &CellGeometry, faces: &[(usize, DVector<f64>)], volume: &DVector<f64>) -> f64 {
    let mut d = geom.abs_det * volume[0] / 6f64.sqrt();
    for (k, v) in faces {
        d -= 2f64.sqrt() * geom.face_areas[*k] * v[0];
    }
    d
}

/// Minimal-norm `RTN_p(K)` field with the prescribed divergence and normal traces.
pub fn hdiv_extend_element(problem: &ElementHdivProblem, p: usize) -> Result<MinimizationResult<DVector<f64>>> {
    check_faces(&problem.neumann, p)?;
    let vd = crate::fields::tet_degree_of(problem.volume.len())
        .ok_or(Error::DegreeMismatch { expected: p, found: problem.volume.len() })?;
    if vd > p {
        return Err(Error::DegreeMismatch { expected: p, found: vd });
    }
    let g = &problem.geometry;
    if problem.neumann.len() == 4 {
        let defect = element_flux_defect(g, &problem.neumann, &problem.volume);
        let scale = g.volume() * problem.volume.amax()
            + problem.neumann.iter().map(|(k, v)| g.face_areas[*k] * v.amax()).sum::<f64>();
        if defect.abs() > 1e-10 * scale.max(g.volume()) {
            return Err(Error::IncompatibleData { reason: "full Neumann element data".into(), defect });
        }
    }
    let cell = HdivCell::new(g, p);
    let np = dim_tet(p);
    let nf = dim_tri(p);
    let m = np + nf * problem.neumann.len();
    let mut rows = DMatrix::zeros(m, cell.dim());
    let mut rhs = DVector::zeros(m);
    rows.rows_mut(0, np).copy_from(&cell.div_rows());
    rhs.rows_mut(0, np).copy_from(&resized(&problem.volume, np));
    for (i, (k, v)) in problem.neumann.iter().enumerate() {
        rows.rows_mut(np + i * nf, nf).copy_from(&cell.face_rows(*k));
        rhs.rows_mut(np + i * nf, nf).copy_from(&resized(v, nf));
    }
    let (sigma, diagnostics) = cell.local_min(&rows, &rhs, None)?;
    let div_res = (cell.divergence(&sigma) - resized(&problem.volume, np)).amax();
    let mut face_res: f64 = 0.0;
    for (k, v) in &problem.neumann {
        face_res = face_res.max((cell.normal_trace(&sigma, *k) - resized(v, nf)).amax());
    }
    let energy = cell.norm2(&sigma).max(0.0).sqrt();
    Ok(MinimizationResult {
        field: sigma,
        energy,
        residuals: vec![("divergence".into(), div_res), ("normal_trace".into(), face_res)],
        diagnostics,
    })
}

#[derive(Debug, Clone)]
pub enum ElementProblem {
    H1(ElementH1Problem),
    Hdiv(ElementHdivProblem),
}

/// Energy at degree p over energy at degree `p + delta`; 1 when both vanish.
pub fn element_stability_ratio(problem: &ElementProblem, p: usize, delta: usize) -> Result<f64> {
    let (lo, hi) = match problem {
        ElementProblem::H1(pr) => (h1_extend_element(pr, p)?.energy, h1_extend_element(pr, p + delta)?.energy),
        ElementProblem::Hdiv(pr) => (hdiv_extend_element(pr, p)?.energy, hdiv_extend_element(pr, p + delta)?.energy),
    };
    if hi <= 1e-300 {
        return Ok(if lo <= 1e-14 { 1.0 } else { f64::INFINITY });
    }
    Ok(lo / hi)
}

/// Face-basis coefficients (degree q) of a function given at physical points of face k.
pub fn project_on_face(geom: &CellGeometry, k: usize, q: usize, f: impl Fn(&Point) -> f64) -> DVector<f64> {
    use crate::spaces::dubiner::tri_basis;
    use crate::spaces::geometry::FACE_VERTICES;
    use crate::spaces::quadrature::build_quadrature;
    let rule = build_quadrature(2, 2 * q + 8);
    let [a, b, c] = FACE_VERTICES[k];
    let (va, vb, vc) = (geom.vertices[a], geom.vertices[b], geom.vertices[c]);
    let mut out = DVector::zeros(dim_tri(q));
    for (x, w) in rule.points.iter().zip(&rule.weights) {
        let p = va * (1.0 - x[0] - x[1]) + vb * x[0] + vc * x[1];
        let fv = f(&p) * w;
        for (i, bf) in tri_basis(q, [x[0], x[1]]).iter().enumerate() {
            out[i] += fv * bf.v;
        }
    }
    out
}

/// Modal coefficients (degree q) of the L2 projection of `f` on the cell.
pub fn project_on_cell(geom: &CellGeometry, q: usize, f: impl Fn(&Point) -> f64) -> DVector<f64> {
    use crate::spaces::quadrature::build_quadrature;
    let rule = build_quadrature(3, 2 * q + 8);
    let mut out = DVector::zeros(dim_tet(q));
    for (x, w) in rule.points.iter().zip(&rule.weights) {
        let p = geom.map.apply(&Vector3::new(x[0], x[1], x[2]));
        let fv = f(&p) * w;
        for (i, b) in tet_basis(q, *x).iter().enumerate() {
            out[i] += fv * b.v;
        }
    }
    out
}

/// RTN_q coefficients of the L2 projection of a physical vector field on the cell.
pub fn project_rtn_on_cell(geom: &CellGeometry, q: usize, f: impl Fn(&Point) -> Vector3<f64>) -> DVector<f64> {
    use crate::spaces::quadrature::build_quadrature;
    let t = rtn_tables(q);
    let rule = build_quadrature(3, 2 * q + 6);
    let sign = geom.map.det.signum();
    let mut b = DVector::zeros(t.dim);
    for (x, w) in rule.points.iter().zip(&rule.weights) {
        let p = geom.map.apply(&Vector3::new(x[0], x[1], x[2]));
        // J^T f, so that f . (J phi) = (J^T f) . phi
        let g = geom.map.linear.transpose() * f(&p) * (sign * w);
        let basis = tet_basis(q + 1, *x);
        for a in 0..3 {
            for i in 0..t.np {
                b[a * t.np + i] += g[a] * basis[i].v;
            }
            for j in 0..t.nrho {
                let mut v = 0.0;
                for s in 0..t.ntop {
                    v += t.rho[a][(s, j)] * basis[t.np + s].v;
                }
                b[3 * t.np + j] += g[a] * v;
            }
        }
    }
    let cell = HdivCell::new(geom, q);
    cell.apply_inv_mass(&DMatrix::from_column_slice(t.dim, 1, b.as_slice())).column(0).into_owned()
}

/// Primal solve of `-lap z = r_K`, `-grad z . n = r_F` on the given faces, `z = 0` on
/// `zero_faces`. With no zero faces the result is determined up to a constant.
pub fn primal_element_solve(
    geom: &CellGeometry,
    q: usize,
    zero_faces: &[usize],
    volume: &DVector<f64>,
    neumann: &[(usize, DVector<f64>)],
) -> Result<DVector<f64>> {
    let cell = H1Cell::new(geom, q);
    let n = cell.dim();
    let to_modal = &cell.tables.to_modal;
    let mut b = (to_modal.transpose() * resized(volume, dim_tet(q))) * geom.abs_det;
    for (k, r) in neumann {
        let tr = &scalar_tables(q).trace[*k] * to_modal;
        b -= tr.transpose() * resized(r, dim_tri(q)) * (2.0 * geom.face_areas[*k]);
    }
    let mut fixed = vec![false; n];
    for &k in zero_faces {
        for i in cell.tables.layout.face_closure(k) {
            fixed[i] = true;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    let kff = DMatrix::from_fn(free.len(), free.len(), |i, j| cell.stiffness[(free[i], free[j])]);
    let bf = DVector::from_iterator(free.len(), free.iter().map(|&i| b[i]));
    let (xf, res) = crate::linalg::solve_psd(&kff, &bf);
    if res > 1e-8 {
        return Err(Error::IncompatibleData { reason: "primal Neumann data".into(), defect: res });
    }
    let mut x = DVector::zeros(n);
    for (i, &fi) in free.iter().enumerate() {
        x[fi] = xf[i];
    }
    Ok(cell.to_modal(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    fn reference() -> CellGeometry {
        CellGeometry::new([
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ])
        .unwrap()
    }

    fn skewed() -> CellGeometry {
        CellGeometry::new([
            Point::new(0.1, -0.2, 0.0),
            Point::new(1.3, 0.1, 0.2),
            Point::new(0.2, 0.9, -0.1),
            Point::new(-0.1, 0.3, 1.1),
        ])
        .unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = skewed();
        let pr = ElementH1Problem { geometry: g.clone(), dirichlet: vec![(0, DVector::zeros(dim_tri(3)))] };
        let r = h1_extend_element(&pr, 3).unwrap();
        assert!(r.field.amax() < 1e-14);
        let pr = ElementHdivProblem {
            geometry: g,
            neumann: (0..4).map(|k| (k, DVector::zeros(dim_tri(2)))).collect(),
            volume: DVector::zeros(dim_tet(2)),
        };
        assert!(hdiv_extend_element(&pr, 2).unwrap().field.amax() < 1e-14);
    }

    #[test]
    fn affine_traces_reproduce_affine_function() {
        let g = skewed();
        let ell = |x: &Point| 0.3 + x[0] - 2.0 * x[1] + 0.5 * x[2];
        for p in 1..=4 {
            let dirichlet = (0..4).map(|k| (k, project_on_face(&g, k, 1, ell))).collect();
            let r = h1_extend_element(&ElementH1Problem { geometry: g.clone(), dirichlet }, p).unwrap();
            let exact = project_on_cell(&g, p, ell);
            assert!((&r.field - exact).amax() < 1e-11, "p={p}");
            assert!(r.max_residual() < 1e-10);
        }
    }

    #[test]
    fn position_vector_is_the_minimal_field() {
        let g = skewed();
        let neumann: Vec<_> = (0..4)
            .map(|k| {
                let n = g.face_normals[k];
                (k, project_on_face(&g, k, 0, |x| x.dot(&n)))
            })
            .collect();
        let volume = project_on_cell(&g, 0, |_| 3.0);
        let r = hdiv_extend_element(&ElementHdivProblem { geometry: g.clone(), neumann, volume }, 0).unwrap();
        let x = Point::new(0.3, 0.3, 0.3);
        assert!((eval_rtn(&g, 0, &r.field, &x) - x).norm() < 1e-12);
        // same at higher degree
        let neumann: Vec<_> = (0..4)
            .map(|k| {
                let n = g.face_normals[k];
                (k, project_on_face(&g, k, 3, |x| x.dot(&n)))
            })
            .collect();
        let volume = project_on_cell(&g, 3, |_| 3.0);
        let r = hdiv_extend_element(&ElementHdivProblem { geometry: g.clone(), neumann, volume }, 3).unwrap();
        assert!((eval_rtn(&g, 3, &r.field, &x) - x).norm() < 1e-11);
    }

    #[test]
    fn incompatible_full_neumann_is_rejected() {
        let g = reference();
        let mut neumann: Vec<_> = (0..4).map(|k| (k, DVector::zeros(1))).collect();
        neumann[0].1[0] = 1.0;
        let pr = ElementHdivProblem { geometry: g.clone(), neumann, volume: DVector::zeros(1) };
        match hdiv_extend_element(&pr, 0) {
            Err(Error::IncompatibleData { defect, .. }) => {
                // constant 1 in the orthonormal face basis is 1/sqrt(2 |F|)... defect = -(r_F,1)
                let expected = -2f64.sqrt() * g.face_areas[0];
                assert!((defect - expected).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quadratic_bubble_trace_ratio_against_overkill() {
        let g = reference();
        // r = lambda_1 lambda_2 on face 3 (z = 0), i.e. x y
        let data = project_on_face(&g, 3, 2, |x| x[0] * x[1]);
        let pr = ElementProblem::H1(ElementH1Problem { geometry: g, dirichlet: vec![(3, data)] });
        let ratio = element_stability_ratio(&pr, 2, 8).unwrap();
        assert!((1.0..=2.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn hdiv_one_face_ratio_against_overkill() {
        let g = reference();
        for p in 0..=3 {
            let pr = ElementProblem::Hdiv(ElementHdivProblem {
                geometry: g.clone(),
                neumann: vec![(0, DVector::zeros(dim_tri(p)))],
                volume: project_on_cell(&g, p, |_| 1.0),
            });
            let ratio = element_stability_ratio(&pr, p, 6).unwrap();
            assert!((1.0..=2.0).contains(&ratio), "p={p} ratio {ratio}");
        }
    }

    #[test]
    fn energies_decrease_with_degree() {
        let g = skewed();
        let data = project_on_face(&g, 1, 3, |x| (x[0] * 3.0).sin() + x[2] * x[1]);
        let data2 = project_on_face(&g, 2, 3, |x| (x[0] * 3.0).sin() + x[2] * x[1]);
        let _ = data2;
        let pr = ElementH1Problem { geometry: g.clone(), dirichlet: vec![(1, data)] };
        let mut last = f64::INFINITY;
        for p in 3..=8 {
            let e = h1_extend_element(&pr, p).unwrap().energy;
            assert!(e <= last + 1e-10);
            last = e;
        }
        let pr = ElementHdivProblem {
            geometry: g.clone(),
            neumann: vec![(2, project_on_face(&g, 2, 2, |x| x[0] * x[1]))],
            volume: project_on_cell(&g, 2, |x| x[2] - 0.3),
        };
        let mut last = f64::INFINITY;
        for p in 2..=7 {
            let e = hdiv_extend_element(&pr, p).unwrap().energy;
            assert!(e <= last + 1e-10);
            last = e;
        }
    }

    #[test]
    fn mixed_minimizer_is_minus_gradient_of_primal_solution() {
        // zeta vanishes on faces 2 and 3; faces 0 and 1 carry its Neumann data
        let g = skewed();
        let zeta = |x: &Point| {
            let l = g.barycentric(x);
            l[2] * l[3] * (1.0 + l[0])
        };
        let q = 6;
        let zc = project_on_cell(&g, 3, zeta);
        let flux = -gradient_to_rtn(&g, 3, &zc, q);
        let cell = HdivCell::new(&g, q);
        let neumann: Vec<_> = [0, 1].iter().map(|&k| (k, cell.normal_trace(&flux, k))).collect();
        let volume = cell.divergence(&flux);
        let mixed =
            hdiv_extend_element(&ElementHdivProblem { geometry: g.clone(), neumann: neumann.clone(), volume: volume.clone() }, q)
                .unwrap();
        let primal = primal_element_solve(&g, q + 1, &[2, 3], &volume, &neumann).unwrap();
        let grad = -gradient_to_rtn(&g, q + 1, &primal, q);
        let diff = &mixed.field - &grad;
        assert!(cell.norm2(&diff).sqrt() < 1e-6 * cell.norm2(&flux).sqrt());
        assert!(cell.norm2(&(&mixed.field - &flux)).sqrt() < 1e-10);
    }

    #[test]
    fn rtn_projection_reproduces_rtn_fields() {
        let mut g = skewed();
        // also a negatively oriented map
        let v = g.vertices;
        let flipped = CellGeometry::new([v[1], v[0], v[2], v[3]]).unwrap();
        for geom in [&mut g, &mut flipped.clone()] {
            for q in 0..=3 {
                let n = rtn_tables(q).dim;
                let c = DVector::from_fn(n, |i, _| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.5);
                let back = project_rtn_on_cell(geom, q, |x| eval_rtn(geom, q, &c, x));
                assert!((back - &c).amax() < 1e-10, "q={q}");
            }
        }
    }
}
