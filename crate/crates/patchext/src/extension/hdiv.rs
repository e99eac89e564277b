//! Broken H(div) polynomial extensions on a vertex patch.
//!
//! The minimizer of `|v|` over `{v in RTN_p(T_a): div v = r_K, [v.n]_F = r_F, v.n = r_F on
//! external and Neumann faces}` is computed by hybridization: interior-face normal
//! continuity is relaxed with face multipliers, each cell keeps its own divergence and
//! boundary-flux rows, and the cell problems are eliminated in favour of a face system.

use nalgebra::{DMatrix, DVector};

use crate::element::{element_flux_defect, resized, HdivCell};
use crate::error::{Error, Result};
use crate::fields::{BrokenVectorField, Diagnostics, HdivData, MinimizationResult};
use crate::linalg::PivotedCholesky;
use crate::par::try_map_range;
use crate::shelling::PatchEnumeration;
use crate::spaces::dubiner::{dim_tet, dim_tri};
use crate::spaces::rtn::rtn_tables;
use crate::topology::{check_compatibility_hdiv, FaceClass, HdivMode, PatchKind, PatchMesh};

pub fn infer_hdiv_mode(patch: &PatchMesh) -> HdivMode {
    match patch.kind {
        PatchKind::Interior => HdivMode::Interior,
        PatchKind::Boundary => HdivMode::Boundary,
    }
}

fn check_data(patch: &PatchMesh, data: &HdivData, p: usize) -> Result<()> {
    let d = data.degree();
    if d > p || data.cells.degree != d {
        return Err(Error::DegreeMismatch { expected: p, found: d.max(data.cells.degree) });
    }
    if data.faces.values.len() != patch.faces.len()
        || data.cells.values.len() != patch.cell_count()
        || data.faces.values.iter().any(|v| v.len() != dim_tri(d))
        || data.cells.values.iter().any(|v| v.len() != dim_tet(d))
    {
        return Err(Error::DegreeMismatch { expected: d, found: data.cells.values.first().map_or(0, |v| v.len()) });
    }
    Ok(())
}

/// Local faces of `cell` whose flux is prescribed by the cell alone (external and Neumann).
fn own_faces(patch: &PatchMesh, cell: usize) -> Vec<(usize, usize)> {
    (0..4)
        .map(|k| (k, patch.cell_faces[cell][k]))
        .filter(|(_, f)| matches!(patch.faces.class[*f], FaceClass::External | FaceClass::Neumann))
        .collect()
}

/// Local faces of `cell` that are interior faces of the patch.
fn shared_faces(patch: &PatchMesh, cell: usize) -> Vec<(usize, usize)> {
    (0..4)
        .map(|k| (k, patch.cell_faces[cell][k]))
        .filter(|(_, f)| patch.faces.class[*f] == FaceClass::Interior)
        .collect()
}

/// Divergence, interior-flux and boundary-flux residuals of a broken field.
pub fn hdiv_residuals(patch: &PatchMesh, v: &BrokenVectorField, data: &HdivData) -> Vec<(String, f64)> {
    let q = v.degree.max(data.degree());
    let v = v.with_degree(q);
    let cells: Vec<HdivCell> = (0..patch.cell_count()).map(|k| HdivCell::new(&patch.geometry[k], q)).collect();
    let (np, nf) = (dim_tet(q), dim_tri(q));
    let mut div: f64 = 0.0;
    for (k, c) in cells.iter().enumerate() {
        div = div.max((c.divergence(&v.coeffs[k]) - resized(&data.cells.values[k], np)).amax());
    }
    let (mut jump, mut bnd): (f64, f64) = (0.0, 0.0);
    for f in 0..patch.faces.len() {
        let (m, p) = patch.faces.neighbor[f];
        let (lm, lp) = patch.faces.local[f];
        let r = resized(&data.faces.values[f], nf);
        let mut flux = cells[m].normal_trace(&v.coeffs[m], lm);
        match patch.faces.class[f] {
            FaceClass::Interior => {
                let p = p.unwrap();
                flux += cells[p].normal_trace(&v.coeffs[p], lp.unwrap());
                jump = jump.max((flux - r).amax());
            }
            FaceClass::External | FaceClass::Neumann => bnd = bnd.max((flux - r).amax()),
            FaceClass::Dirichlet => {}
        }
    }
    vec![("divergence".into(), div), ("interior_flux".into(), jump), ("boundary_flux".into(), bnd)]
}

pub fn vector_energy(patch: &PatchMesh, v: &BrokenVectorField) -> f64 {
    (0..patch.cell_count())
        .map(|k| HdivCell::new(&patch.geometry[k], v.degree).norm2(&v.coeffs[k]))
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

struct LocalBlock {
    cell: HdivCell,
    /// Own constraint rows (divergence, external/Neumann fluxes).
    c: DMatrix<f64>,
    /// `W C^T`
    wct: DMatrix<f64>,
    s: PivotedCholesky,
    /// Interior faces of the cell: (local face, global face, multiplier offset).
    shared: Vec<(usize, usize, usize)>,
    /// Multiplier rows `B`.
    b: DMatrix<f64>,
    own: Vec<(usize, usize)>,
}

impl LocalBlock {
    /// `sigma = W h + W C^T S^{-1} (c - C W h)` with `h = B^T lambda - g`.
    fn solve(&self, h: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
        let n = h.len();
        let wh = self.cell.apply_inv_mass(&DMatrix::from_column_slice(n, 1, h.as_slice())).column(0).into_owned();
        let mu = self.s.solve(&(c - &self.c * &wh));
        wh + &self.wct * mu
    }
}

/// Hybridized patch operator at degree q; reusable across data sets.
pub struct HdivPatchOperator {
    pub q: usize,
    blocks: Vec<LocalBlock>,
    nlambda: usize,
    /// Multiplier offset of each interior face.
    offsets: Vec<Option<usize>>,
    factor: PivotedCholesky,
    matrix: DMatrix<f64>,
}

impl HdivPatchOperator {
    pub fn new(patch: &PatchMesh, q: usize) -> Result<Self> {
        let nf = dim_tri(q);
        let np = dim_tet(q);
        let mut offsets = vec![None; patch.faces.len()];
        let mut nlambda = 0;
        for f in patch.faces.of_class(FaceClass::Interior) {
            offsets[f] = Some(nlambda);
            nlambda += nf;
        }
        let blocks: Vec<LocalBlock> = try_map_range(patch.cell_count(), |k| {
            let cell = HdivCell::new(&patch.geometry[k], q);
            let own = own_faces(patch, k);
            let mut c = DMatrix::zeros(np + nf * own.len(), cell.dim());
            c.rows_mut(0, np).copy_from(&cell.div_rows());
            for (i, (lk, _)) in own.iter().enumerate() {
                c.rows_mut(np + i * nf, nf).copy_from(&cell.face_rows(*lk));
            }
            let wct = cell.apply_inv_mass(&c.transpose());
            let s = PivotedCholesky::new(&(&c * &wct), 1e-12);
            let shared: Vec<(usize, usize, usize)> =
                shared_faces(patch, k).into_iter().map(|(lk, f)| (lk, f, offsets[f].unwrap())).collect();
            let mut b = DMatrix::zeros(nf * shared.len(), cell.dim());
            for (i, (lk, _, _)) in shared.iter().enumerate() {
                b.rows_mut(i * nf, nf).copy_from(&cell.face_rows(*lk));
            }
            Ok::<_, Error>(LocalBlock { cell, c, wct, s, shared, b, own })
        })?;
        let parts: Vec<DMatrix<f64>> = crate::par::map_range(blocks.len(), |k| {
            let bl = &blocks[k];
            // B P B^T = B W B^T - (B W C^T) S^{-1} (C W B^T)
            let wbt = bl.cell.apply_inv_mass(&bl.b.transpose());
            let bwct = &bl.b * &bl.wct;
            &bl.b * &wbt - &bwct * bl.s.solve_matrix(&bwct.transpose())
        });
        let mut matrix = DMatrix::zeros(nlambda, nlambda);
        for (bl, part) in blocks.iter().zip(&parts) {
            for (i, (_, _, oi)) in bl.shared.iter().enumerate() {
                for (j, (_, _, oj)) in bl.shared.iter().enumerate() {
                    let mut dst = matrix.view_mut((*oi, *oj), (nf, nf));
                    dst += part.view((i * nf, j * nf), (nf, nf));
                }
            }
        }
        let factor = PivotedCholesky::new(&matrix, 1e-12);
        Ok(HdivPatchOperator { q, blocks, nlambda, offsets, factor, matrix })
    }

    pub fn unknowns(&self) -> usize {
        self.nlambda
    }

    /// Minimize `1/2 |sigma|^2 + (g, sigma)` under the data constraints; `g` per cell in the
    /// coefficient dual (already multiplied by the mass matrix).
    pub fn solve(&self, patch: &PatchMesh, data: &HdivData, g: Option<&[DVector<f64>]>) -> Result<(BrokenVectorField, Diagnostics)> {
        let q = self.q;
        let (np, nf) = (dim_tet(q), dim_tri(q));
        let local_rhs: Vec<DVector<f64>> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, bl)| {
                let mut c = DVector::zeros(np + nf * bl.own.len());
                c.rows_mut(0, np).copy_from(&resized(&data.cells.values[k], np));
                for (i, (_, f)) in bl.own.iter().enumerate() {
                    c.rows_mut(np + i * nf, nf).copy_from(&resized(&data.faces.values[*f], nf));
                }
                c
            })
            .collect();
        let minus_g = |k: usize| -> DVector<f64> {
            match g {
                Some(g) => -&g[k],
                None => DVector::zeros(self.blocks[k].cell.dim()),
            }
        };
        // face system right-hand side: r - sum B sigma(lambda = 0)
        let mut rhs = DVector::zeros(self.nlambda);
        for f in patch.faces.of_class(FaceClass::Interior) {
            let o = self.offsets[f].unwrap();
            rhs.rows_mut(o, nf).copy_from(&resized(&data.faces.values[f], nf));
        }
        let sigma0: Vec<DVector<f64>> = crate::par::map_range(self.blocks.len(), |k| {
            self.blocks[k].solve(&minus_g(k), &local_rhs[k])
        });
        for (bl, s0) in self.blocks.iter().zip(&sigma0) {
            let bs = &bl.b * s0;
            for (i, (_, _, o)) in bl.shared.iter().enumerate() {
                let mut dst = rhs.rows_mut(*o, nf);
                dst -= bs.rows(i * nf, nf);
            }
        }
        let lambda = if self.nlambda > 0 { self.factor.solve(&rhs) } else { DVector::zeros(0) };
        if self.nlambda > 0 {
            let res = (&self.matrix * &lambda - &rhs).amax();
            let scale = rhs.amax().max(1.0) * self.matrix.amax().max(1.0);
            if res > 1e-8 * scale {
                return Err(Error::IncompatibleData { reason: "face flux system is inconsistent".into(), defect: res });
            }
        }
        let coeffs: Vec<DVector<f64>> = crate::par::map_range(self.blocks.len(), |k| {
            let bl = &self.blocks[k];
            let mut lam = DVector::zeros(nf * bl.shared.len());
            for (i, (_, _, o)) in bl.shared.iter().enumerate() {
                lam.rows_mut(i * nf, nf).copy_from(&lambda.rows(*o, nf));
            }
            let h = bl.b.transpose() * lam + minus_g(k);
            bl.solve(&h, &local_rhs[k])
        });
        let own_defect = self
            .blocks
            .iter()
            .zip(&coeffs)
            .zip(&local_rhs)
            .map(|((bl, s), c)| (&bl.c * s - c).amax())
            .fold(0.0, f64::max);
        let scale = data.cells.max_abs().max(data.faces.max_abs()).max(1.0);
        if own_defect > 1e-8 * scale {
            return Err(Error::IncompatibleData { reason: "cell constraints are inconsistent".into(), defect: own_defect });
        }
        let diagnostics = Diagnostics {
            unknowns: self.nlambda,
            constraints: local_rhs.iter().map(|c| c.len()).sum(),
            rank_deficiency: self.factor.n - self.factor.rank,
            pivot_ratio: self.factor.pivot_ratio,
        };
        Ok((BrokenVectorField { degree: q, coeffs }, diagnostics))
    }

    /// Direct minimization at degree q.
    pub fn minimize(&self, patch: &PatchMesh, data: &HdivData) -> Result<MinimizationResult<BrokenVectorField>> {
        let (v, diagnostics) = self.solve(patch, data, None)?;
        Ok(MinimizationResult {
            energy: vector_energy(patch, &v),
            residuals: hdiv_residuals(patch, &v, data),
            field: v,
            diagnostics,
        })
    }

    /// `tau + sigma` with `sigma` the minimal correction satisfying the homogeneous
    /// flux constraints and `div sigma = r_K - div tau`.
    pub fn minimize_from(
        &self,
        patch: &PatchMesh,
        data: &HdivData,
        tau: &BrokenVectorField,
    ) -> Result<MinimizationResult<BrokenVectorField>> {
        let q = self.q;
        let tau = tau.with_degree(q);
        let np = dim_tet(q);
        let mut shifted = HdivData::zeros(q, patch.faces.len(), patch.cell_count());
        for (k, bl) in self.blocks.iter().enumerate() {
            shifted.cells.values[k] = resized(&data.cells.values[k], np) - bl.cell.divergence(&tau.coeffs[k]);
        }
        let g: Vec<DVector<f64>> = self.blocks.iter().zip(&tau.coeffs).map(|(bl, t)| bl.cell.mass_vec(t)).collect();
        let (s, diagnostics) = self.solve(patch, &shifted, Some(&g))?;
        let coeffs = tau.coeffs.iter().zip(&s.coeffs).map(|(t, s)| t + s).collect();
        let v = BrokenVectorField { degree: q, coeffs };
        Ok(MinimizationResult {
            energy: vector_energy(patch, &v),
            residuals: hdiv_residuals(patch, &v, data),
            field: v,
            diagnostics,
        })
    }
}

/// Sequential construction over a shelling: each cell takes the minimal-norm field with
/// its divergence, its external flux and the flux left over by earlier neighbors.
pub fn sweep_construct_hdiv(
    patch: &PatchMesh,
    enumeration: &PatchEnumeration,
    data: &HdivData,
    p: usize,
) -> Result<MinimizationResult<BrokenVectorField>> {
    if patch.kind != PatchKind::Interior {
        return Err(Error::UnsupportedConfiguration("the sweep runs on interior patches".into()));
    }
    check_data(patch, data, p)?;
    let (np, nf) = (dim_tet(p), dim_tri(p));
    let mut v = BrokenVectorField::zeros(p, patch.cell_count());
    let mut diag = Diagnostics::default();
    let nlast = enumeration.order.len();
    for (i, &k) in enumeration.order.iter().enumerate() {
        let geom = &patch.geometry[k];
        let cell = HdivCell::new(geom, p);
        let mut faces: Vec<(usize, DVector<f64>)> = Vec::new();
        if let Some(f) = patch.external_face(k) {
            faces.push((patch.faces.local[f].0, resized(&data.faces.values[f], nf)));
        }
        for &f in &enumeration.sharp[i] {
            let (m, pl) = patch.faces.neighbor[f];
            let (lm, lp) = patch.faces.local[f];
            let (j, lj, lk) = if m == k { (pl.unwrap(), lp.unwrap(), lm) } else { (m, lm, lp.unwrap()) };
            let cj = HdivCell::new(&patch.geometry[j], p);
            let left = resized(&data.faces.values[f], nf) - cj.normal_trace(&v.coeffs[j], lj);
            faces.push((lk, left));
        }
        let volume = resized(&data.cells.values[k], np);
        if faces.len() == 4 {
            let defect = element_flux_defect(geom, &faces, &volume);
            let scale = geom.volume() * volume.amax()
                + faces.iter().map(|(l, d)| geom.face_areas[*l] * d.amax()).sum::<f64>();
            if defect.abs() > 1e-10 * scale.max(geom.volume()) {
                let reason = if i + 1 == nlast {
                    "last cell of the sweep fails the Neumann compatibility condition".to_string()
                } else {
                    format!("cell {k} of the sweep has all faces prescribed and fails compatibility")
                };
                return Err(Error::IncompatibleData { reason, defect });
            }
        }
        let mut rows = DMatrix::zeros(np + nf * faces.len(), cell.dim());
        let mut rhs = DVector::zeros(rows.nrows());
        rows.rows_mut(0, np).copy_from(&cell.div_rows());
        rhs.rows_mut(0, np).copy_from(&volume);
        for (t, (l, d)) in faces.iter().enumerate() {
            rows.rows_mut(np + t * nf, nf).copy_from(&cell.face_rows(*l));
            rhs.rows_mut(np + t * nf, nf).copy_from(d);
        }
        let (s, d) = cell.local_min(&rows, &rhs, None)?;
        diag.unknowns += d.unknowns;
        diag.constraints += d.constraints;
        diag.rank_deficiency += d.rank_deficiency;
        v.coeffs[k] = s;
    }
    Ok(MinimizationResult {
        energy: vector_energy(patch, &v),
        residuals: hdiv_residuals(patch, &v, data),
        field: v,
        diagnostics: diag,
    })
}

fn check_compat(patch: &PatchMesh, data: &HdivData) -> Result<()> {
    let c = check_compatibility_hdiv(patch, data, infer_hdiv_mode(patch))?;
    if !c.passed {
        return Err(Error::IncompatibleData { reason: "flux balance of the data fails".into(), defect: c.defect });
    }
    Ok(())
}

/// Discrete minimizer of `|v|` over the broken H(div) constraint set at degree p. On interior
/// patches the minimizer is obtained by shifting the sweep field; on boundary patches the
/// hybridized system is solved directly.
pub fn global_min_hdiv(patch: &PatchMesh, data: &HdivData, p: usize) -> Result<MinimizationResult<BrokenVectorField>> {
    check_data(patch, data, p)?;
    check_compat(patch, data)?;
    let op = HdivPatchOperator::new(patch, p)?;
    if patch.kind == PatchKind::Interior {
        let e = crate::shelling::enumerate_patch(patch)?;
        let tau = sweep_construct_hdiv(patch, &e, data, p)?;
        op.minimize_from(patch, data, &tau.field)
    } else {
        op.minimize(patch, data)
    }
}

/// Direct hybridized minimization without a shift.
pub fn global_min_hdiv_direct(patch: &PatchMesh, data: &HdivData, p: usize) -> Result<MinimizationResult<BrokenVectorField>> {
    check_data(patch, data, p)?;
    check_compat(patch, data)?;
    HdivPatchOperator::new(patch, p)?.minimize(patch, data)
}

/// Minimizer obtained by shifting a caller-supplied admissible field.
pub fn global_min_hdiv_seeded(
    patch: &PatchMesh,
    data: &HdivData,
    p: usize,
    tau: &BrokenVectorField,
) -> Result<MinimizationResult<BrokenVectorField>> {
    check_data(patch, data, p)?;
    if tau.degree > p {
        return Err(Error::DegreeMismatch { expected: p, found: tau.degree });
    }
    HdivPatchOperator::new(patch, p)?.minimize_from(patch, data, tau)
}

/// RTN coefficients of dimension for degree p.
pub fn rtn_dim(p: usize) -> usize {
    rtn_tables(p).dim
}
