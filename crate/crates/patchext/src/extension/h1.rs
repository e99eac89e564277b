//! Broken H1 polynomial extensions on a vertex patch.
//!
//! The discrete minimizer over `{v in P_p(T_a): [v]_F = r_F, v|_ext = 0, v|_D = r_F}` is
//! computed by shifting an admissible `tau` with a conforming correction `s` that vanishes
//! on the external (and Dirichlet) faces: `v = tau - s`, `(grad s, grad w) = (grad_T tau, grad w)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::element::{resized, scalar_energy2, scalar_trace, H1Cell};
use crate::error::{Error, Result};
use crate::fields::{BrokenScalarField, Diagnostics, FaceData, HdivData, MinimizationResult};
use crate::linalg::equality_qp;
use crate::par::map_range;
use crate::shelling::PatchEnumeration;
use crate::spaces::dubiner::{dim_tet, dim_tri};
use crate::spaces::geometry::FACE_VERTICES;
use crate::spaces::hierarchical::{DofLayout, EDGES};
use crate::spaces::tables::scalar_tables;
use crate::topology::{hdiv_data_faces, FaceClass, H1Mode, PatchKind, PatchMesh};

pub fn infer_h1_mode(patch: &PatchMesh) -> H1Mode {
    match patch.kind {
        PatchKind::Interior => H1Mode::Interior,
        PatchKind::Boundary if patch.has_class(FaceClass::Dirichlet) => H1Mode::BoundaryDirichlet,
        PatchKind::Boundary => H1Mode::BoundaryNeumann,
    }
}

/// Faces on which traces are prescribed (zero on external faces, data on Dirichlet faces).
fn trace_faces(patch: &PatchMesh) -> Vec<usize> {
    (0..patch.faces.len())
        .filter(|&f| matches!(patch.faces.class[f], FaceClass::External | FaceClass::Dirichlet))
        .collect()
}

fn check_degree(r: &FaceData, p: usize, faces: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::DegreeMismatch { expected: 1, found: 0 });
    }
    if r.degree > p {
        return Err(Error::DegreeMismatch { expected: p, found: r.degree });
    }
    if r.values.len() != faces || r.values.iter().any(|v| v.len() != dim_tri(r.degree)) {
        return Err(Error::DegreeMismatch { expected: r.degree, found: r.values.first().map_or(0, |v| v.len()) });
    }
    Ok(())
}

/// Conforming hierarchical space on the patch with global entity numbering.
#[derive(Debug, Clone)]
pub struct ConformingSpace {
    pub q: usize,
    pub layout: DofLayout,
    /// Local-to-global DOF map per cell.
    pub l2g: Vec<Vec<usize>>,
    pub ndof: usize,
    pub fixed: Vec<bool>,
}

impl ConformingSpace {
    pub fn new(patch: &PatchMesh, q: usize, fixed_faces: &[usize], pin_center: bool) -> Self {
        let layout = DofLayout::new(q);
        let mut ids: HashMap<(u8, [usize; 3]), usize> = HashMap::new();
        let mut ndof = 0;
        let mut take = |key: (u8, [usize; 3]), n: usize, ndof: &mut usize| -> usize {
            *ids.entry(key).or_insert_with(|| {
                let s = *ndof;
                *ndof += n;
                s
            })
        };
        let mut l2g = Vec::with_capacity(patch.cell_count());
        for (k, c) in patch.cells.iter().enumerate() {
            let mut map = vec![0; layout.dim()];
            for i in 0..4 {
                map[layout.vertex(i)] = take((0, [c[i], 0, 0]), 1, &mut ndof);
            }
            for (e, [i, j]) in EDGES.iter().enumerate() {
                let s = take((1, [c[*i], c[*j], 0]), layout.ne, &mut ndof);
                for (t, l) in layout.edge(e).enumerate() {
                    map[l] = s + t;
                }
            }
            for (f, fv) in FACE_VERTICES.iter().enumerate() {
                let s = take((2, [c[fv[0]], c[fv[1]], c[fv[2]]]), layout.nf, &mut ndof);
                for (t, l) in layout.face(f).enumerate() {
                    map[l] = s + t;
                }
            }
            let s = take((3, [k, 0, 0]), layout.nb, &mut ndof);
            for (t, l) in layout.bubbles().enumerate() {
                map[l] = s + t;
            }
            l2g.push(map);
        }
        let mut fixed = vec![false; ndof];
        for &f in fixed_faces {
            let (cell, k) = (patch.faces.neighbor[f].0, patch.faces.local[f].0);
            for l in layout.face_closure(k) {
                fixed[l2g[cell][l]] = true;
            }
        }
        if pin_center {
            let (cell, _) = patch.faces.neighbor[0];
            let lv = patch.local_vertex(cell, patch.center).expect("every cell contains the center");
            fixed[l2g[cell][layout.vertex(lv)]] = true;
        }
        ConformingSpace { q, layout, l2g, ndof, fixed }
    }
}

struct Condensed {
    /// `K_BB^{-1} K_BI`
    kbb_inv_kbi: DMatrix<f64>,
    kbb: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

/// Factored conforming stiffness on the free DOFs, bubbles condensed per cell.
pub struct ConformingSolver {
    pub space: ConformingSpace,
    pub cells: Vec<H1Cell>,
    condensed: Vec<Condensed>,
    reduced: Vec<Option<usize>>,
    nred: usize,
    factor: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl ConformingSolver {
    pub fn new(patch: &PatchMesh, space: ConformingSpace) -> Result<Self> {
        let q = space.q;
        let cells: Vec<H1Cell> = map_range(patch.cell_count(), |k| H1Cell::new(&patch.geometry[k], q));
        let lay = space.layout;
        let ni = lay.dim() - lay.nb;
        let nb = lay.nb;
        let parts: Vec<(Condensed, DMatrix<f64>)> = map_range(cells.len(), |k| {
            let kk = &cells[k].stiffness;
            if nb == 0 {
                return (Condensed { kbb_inv_kbi: DMatrix::zeros(0, ni), kbb: None }, kk.clone());
            }
            let kbb = kk.view((ni, ni), (nb, nb)).into_owned();
            let kbi = kk.view((ni, 0), (nb, ni)).into_owned();
            let ch = kbb.cholesky().expect("bubble stiffness is positive definite");
            let kbb_inv_kbi = ch.solve(&kbi);
            let kc = kk.view((0, 0), (ni, ni)) - kbi.transpose() * &kbb_inv_kbi;
            (Condensed { kbb_inv_kbi, kbb: Some(ch) }, kc)
        });
        let mut reduced = vec![None; space.ndof];
        let mut nred = 0;
        for k in 0..cells.len() {
            for l in 0..ni {
                let g = space.l2g[k][l];
                if !space.fixed[g] && reduced[g].is_none() {
                    reduced[g] = Some(nred);
                    nred += 1;
                }
            }
        }
        let mut a = DMatrix::zeros(nred, nred);
        for (k, (_, kc)) in parts.iter().enumerate() {
            let idx: Vec<Option<usize>> = (0..ni).map(|l| reduced[space.l2g[k][l]]).collect();
            for (j, gj) in idx.iter().enumerate() {
                let Some(gj) = gj else { continue };
                for (i, gi) in idx.iter().enumerate() {
                    if let Some(gi) = gi {
                        a[(*gi, *gj)] += kc[(i, j)];
                    }
                }
            }
        }
        let factor = if nred == 0 {
            None
        } else {
            Some(a.cholesky().ok_or_else(|| Error::SingularSystem("conforming patch stiffness".into()))?)
        };
        let condensed = parts.into_iter().map(|p| p.0).collect();
        Ok(ConformingSolver { space, cells, condensed, reduced, nred, factor })
    }

    pub fn unknowns(&self) -> usize {
        self.nred
    }

    /// Solve with per-cell load vectors in the hierarchical basis; fixed DOFs are zero.
    /// Returns per-cell hierarchical coefficients and the relative Galerkin residual.
    pub fn solve(&self, loads: &[DVector<f64>]) -> (Vec<DVector<f64>>, f64) {
        let lay = self.space.layout;
        let ni = lay.dim() - lay.nb;
        let nb = lay.nb;
        let mut rhs = DVector::zeros(self.nred);
        for (k, b) in loads.iter().enumerate() {
            let mut bc = b.rows(0, ni).into_owned();
            if nb > 0 {
                bc -= self.condensed[k].kbb_inv_kbi.transpose() * b.rows(ni, nb);
            }
            for l in 0..ni {
                if let Some(g) = self.reduced[self.space.l2g[k][l]] {
                    rhs[g] += bc[l];
                }
            }
        }
        let x = match &self.factor {
            Some(f) => f.solve(&rhs),
            None => DVector::zeros(0),
        };
        let mut out = Vec::with_capacity(loads.len());
        for (k, b) in loads.iter().enumerate() {
            let mut xl = DVector::zeros(lay.dim());
            for l in 0..ni {
                if let Some(g) = self.reduced[self.space.l2g[k][l]] {
                    xl[l] = x[g];
                }
            }
            if nb > 0 {
                let c = &self.condensed[k];
                let xb = c.kbb.as_ref().unwrap().solve(&b.rows(ni, nb).into_owned())
                    - &c.kbb_inv_kbi * xl.rows(0, ni);
                xl.rows_mut(ni, nb).copy_from(&xb);
            }
            out.push(xl);
        }
        // Galerkin residual over free global DOFs
        let mut res = vec![0.0; self.space.ndof];
        let mut scale: f64 = 0.0;
        for (k, b) in loads.iter().enumerate() {
            let r = &self.cells[k].stiffness * &out[k] - b;
            for l in 0..lay.dim() {
                res[self.space.l2g[k][l]] += r[l];
            }
            scale = scale.max(b.amax());
        }
        let galerkin = (0..self.space.ndof)
            .filter(|&g| !self.space.fixed[g])
            .map(|g| res[g].abs())
            .fold(0.0, f64::max)
            / scale.max(1e-300);
        (out, if scale == 0.0 { 0.0 } else { galerkin })
    }
}

/// Hierarchical load `(grad phi_j, grad tau)_K` of a modal field of degree <= q.
fn gradient_load(cell: &H1Cell, geom: &crate::spaces::geometry::CellGeometry, tau: &DVector<f64>) -> DVector<f64> {
    let q = cell.q;
    let st = scalar_tables(q);
    let t = resized(tau, dim_tet(q));
    let d: Vec<DVector<f64>> = (0..3).map(|b| &st.deriv[b] * &t).collect();
    let h = &geom.grad_metric;
    let mut out = DVector::zeros(cell.dim());
    for a in 0..3 {
        let mut w = DVector::zeros(dim_tet(q));
        for b in 0..3 {
            w += &d[b] * h[(a, b)];
        }
        out += cell.tables.grad_modal[a].transpose() * w;
    }
    out * geom.abs_det
}

/// Jump, external-trace and Dirichlet-trace residuals of a broken field.
pub fn h1_residuals(patch: &PatchMesh, v: &BrokenScalarField, r: &FaceData, mode: H1Mode) -> Vec<(String, f64)> {
    let q = v.degree.max(r.degree);
    let v = v.with_degree(q);
    let nf = dim_tri(q);
    let trace = |cell: usize, k: usize| scalar_trace(q, &v.coeffs[cell], k);
    let (mut jump, mut ext, mut dir): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for f in 0..patch.faces.len() {
        let (m, p) = patch.faces.neighbor[f];
        let (lm, lp) = patch.faces.local[f];
        let data = resized(&r.values[f], nf);
        match patch.faces.class[f] {
            FaceClass::Interior => {
                let j = trace(m, lm) - trace(p.unwrap(), lp.unwrap());
                jump = jump.max((j - data).amax());
            }
            FaceClass::External => ext = ext.max(trace(m, lm).amax()),
            FaceClass::Dirichlet if mode == H1Mode::BoundaryDirichlet => {
                dir = dir.max((trace(m, lm) - data).amax())
            }
            _ => {}
        }
    }
    vec![("jump".into(), jump), ("external_trace".into(), ext), ("dirichlet_trace".into(), dir)]
}

fn energy_of(patch: &PatchMesh, v: &BrokenScalarField) -> f64 {
    v.coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| scalar_energy2(&patch.geometry[k], v.degree, c))
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

pub fn broken_energy(patch: &PatchMesh, v: &BrokenScalarField) -> f64 {
    energy_of(patch, v)
}

/// An admissible broken field built entity by entity: on every vertex, edge and face of
/// the patch the hierarchical values of the cells sharing it are propagated across the
/// faces through that entity so that all jump and trace constraints hold.
pub fn h1_tau_combinatorial(patch: &PatchMesh, r: &FaceData, q: usize) -> Result<BrokenScalarField> {
    check_degree(r, q, patch.faces.len())?;
    let mode = infer_h1_mode(patch);
    let space = ConformingSpace::new(patch, q, &[], false);
    let lay = space.layout;
    let tables = crate::spaces::hierarchical::h1_tables(q);
    let nf = dim_tri(q);
    // per global DOF: constraints (cell, local idx) with coefficient and value
    #[derive(Clone)]
    enum Con {
        Jump { minus: (usize, usize), plus: (usize, usize), value: f64 },
        Fix { at: (usize, usize), value: f64 },
    }
    let mut cons: Vec<Vec<Con>> = vec![Vec::new(); space.ndof];
    let scale = r.max_abs().max(1.0);
    for f in 0..patch.faces.len() {
        let class = patch.faces.class[f];
        let data = match class {
            FaceClass::Interior => &tables.face_map_inv * resized(&r.values[f], nf),
            FaceClass::External => DVector::zeros(nf),
            FaceClass::Dirichlet if mode == H1Mode::BoundaryDirichlet => &tables.face_map_inv * resized(&r.values[f], nf),
            _ => continue,
        };
        let (m, p) = patch.faces.neighbor[f];
        let (lm, lp) = patch.faces.local[f];
        let cm = lay.face_closure(lm);
        match p {
            Some(p) => {
                let cp = lay.face_closure(lp.unwrap());
                for c in 0..cm.len() {
                    let g = space.l2g[m][cm[c]];
                    cons[g].push(Con::Jump { minus: (m, cm[c]), plus: (p, cp[c]), value: data[c] });
                }
            }
            None => {
                for c in 0..cm.len() {
                    let g = space.l2g[m][cm[c]];
                    cons[g].push(Con::Fix { at: (m, cm[c]), value: data[c] });
                }
            }
        }
    }
    let mut x: Vec<DVector<f64>> = vec![DVector::zeros(lay.dim()); patch.cell_count()];
    let mut defect: f64 = 0.0;
    for list in cons.iter().filter(|l| !l.is_empty()) {
        let mut known: HashMap<(usize, usize), f64> = HashMap::new();
        for c in list {
            if let Con::Fix { at, value } = c {
                if let Some(old) = known.insert(*at, *value) {
                    defect = defect.max((old - value).abs());
                }
            }
        }
        loop {
            let mut changed = false;
            for c in list {
                if let Con::Jump { minus, plus, value } = c {
                    match (known.get(minus).copied(), known.get(plus).copied()) {
                        (Some(a), None) => {
                            known.insert(*plus, a - value);
                            changed = true;
                        }
                        (None, Some(b)) => {
                            known.insert(*minus, b + value);
                            changed = true;
                        }
                        _ => {}
                    }
                }
            }
            if changed {
                continue;
            }
            // seed an untouched component with zero
            let seed = list.iter().find_map(|c| match c {
                Con::Jump { minus, plus, .. } if !known.contains_key(minus) && !known.contains_key(plus) => Some(*minus),
                _ => None,
            });
            match seed {
                Some(s) => {
                    known.insert(s, 0.0);
                }
                None => break,
            }
        }
        for c in list {
            let d = match c {
                Con::Jump { minus, plus, value } => known[minus] - known[plus] - value,
                Con::Fix { at, value } => known[at] - value,
            };
            defect = defect.max(d.abs());
        }
        for ((cell, l), v) in known {
            x[cell][l] = v;
        }
    }
    if defect > 1e-9 * scale {
        return Err(Error::IncompatibleData { reason: "jump data are not compatible around an edge".into(), defect });
    }
    let coeffs = x.iter().map(|xi| &tables.to_modal * xi).collect();
    Ok(BrokenScalarField { degree: q, coeffs })
}

/// Sequential construction over a shelling: each cell takes the minimal-energy extension
/// of the traces prescribed by earlier neighbors and its external face.
pub fn sweep_construct_h1(
    patch: &PatchMesh,
    enumeration: &PatchEnumeration,
    r: &FaceData,
    p: usize,
) -> Result<MinimizationResult<BrokenScalarField>> {
    if patch.kind != PatchKind::Interior {
        return Err(Error::UnsupportedConfiguration("the sweep runs on interior patches".into()));
    }
    check_degree(r, p, patch.faces.len())?;
    let nf = dim_tri(p);
    let mut v = BrokenScalarField::zeros(p, patch.cell_count());
    let mut done = vec![false; patch.cell_count()];
    let mut worst_galerkin: f64 = 0.0;
    for (i, &k) in enumeration.order.iter().enumerate() {
        let cell = H1Cell::new(&patch.geometry[k], p);
        let mut faces: Vec<(usize, DVector<f64>)> = Vec::new();
        if let Some(f) = patch.external_face(k) {
            let lk = patch.faces.local[f].0;
            faces.push((lk, DVector::zeros(nf)));
        }
        for &f in &enumeration.sharp[i] {
            let (m, pl) = patch.faces.neighbor[f];
            let (lm, lp) = patch.faces.local[f];
            let pl = pl.unwrap();
            let (j, lj, lk) = if m == k { (pl, lp.unwrap(), lm) } else { (m, lm, lp.unwrap()) };
            debug_assert!(done[j]);
            let tr = scalar_trace(p, &v.coeffs[j], lj);
            let data = resized(&r.values[f], nf);
            // sign_k v_k + sign_j v_j = r_F
            let sk = patch.faces.jump_sign(f, k);
            let sj = patch.faces.jump_sign(f, j);
            faces.push((lk, (data - tr * sj) / sk));
        }
        let fixed = cell.fix_from_faces(&faces).map_err(|e| match e {
            Error::DiscontinuousData(d) => {
                Error::IncompatibleData { reason: format!("sweep traces disagree on an edge of cell {k}"), defect: d }
            }
            other => other,
        })?;
        let (x, g) = cell.minimize(&fixed);
        worst_galerkin = worst_galerkin.max(g);
        v.coeffs[k] = cell.to_modal(&x);
        done[k] = true;
    }
    let mut residuals = h1_residuals(patch, &v, r, H1Mode::Interior);
    residuals.push(("galerkin".into(), worst_galerkin));
    Ok(MinimizationResult {
        energy: energy_of(patch, &v),
        field: v,
        residuals,
        diagnostics: Diagnostics { unknowns: patch.cell_count() * dim_tet(p), ..Default::default() },
    })
}

/// Reusable factored operator for the shifted H1 problem at degree q.
pub struct H1PatchOperator {
    pub mode: H1Mode,
    pub solver: ConformingSolver,
}

impl H1PatchOperator {
    pub fn new(patch: &PatchMesh, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::DegreeMismatch { expected: 1, found: 0 });
        }
        let mode = infer_h1_mode(patch);
        let space = ConformingSpace::new(patch, q, &trace_faces(patch), false);
        Ok(H1PatchOperator { mode, solver: ConformingSolver::new(patch, space)? })
    }

    /// `tau - s` where `s` is the conforming Galerkin correction of `tau`.
    pub fn minimize_from(
        &self,
        patch: &PatchMesh,
        r: &FaceData,
        tau: &BrokenScalarField,
    ) -> Result<MinimizationResult<BrokenScalarField>> {
        let q = self.solver.space.q;
        let tau = tau.with_degree(q);
        let loads: Vec<DVector<f64>> = (0..patch.cell_count())
            .map(|k| gradient_load(&self.solver.cells[k], &patch.geometry[k], &tau.coeffs[k]))
            .collect();
        let (s, galerkin) = self.solver.solve(&loads);
        let coeffs = (0..patch.cell_count()).map(|k| &tau.coeffs[k] - self.solver.cells[k].to_modal(&s[k])).collect();
        let v = BrokenScalarField { degree: q, coeffs };
        let mut residuals = h1_residuals(patch, &v, r, self.mode);
        residuals.push(("galerkin".into(), galerkin));
        Ok(MinimizationResult {
            energy: energy_of(patch, &v),
            field: v,
            residuals,
            diagnostics: Diagnostics {
                unknowns: self.solver.unknowns(),
                constraints: self.solver.space.fixed.iter().filter(|x| **x).count(),
                ..Default::default()
            },
        })
    }

    pub fn minimize(&self, patch: &PatchMesh, r: &FaceData) -> Result<MinimizationResult<BrokenScalarField>> {
        let tau = h1_tau_combinatorial(patch, r, self.solver.space.q)?;
        self.minimize_from(patch, r, &tau)
    }
}

/// Discrete minimizer of `|grad_T v|` over the broken H1 constraint set at degree p.
pub fn global_min_h1(patch: &PatchMesh, r: &FaceData, p: usize) -> Result<MinimizationResult<BrokenScalarField>> {
    check_degree(r, p, patch.faces.len())?;
    H1PatchOperator::new(patch, p)?.minimize(patch, r)
}

/// Same minimizer seeded by a caller-supplied admissible field.
pub fn global_min_h1_seeded(
    patch: &PatchMesh,
    r: &FaceData,
    p: usize,
    tau: &BrokenScalarField,
) -> Result<MinimizationResult<BrokenScalarField>> {
    check_degree(r, p, patch.faces.len())?;
    if tau.degree > p {
        return Err(Error::DegreeMismatch { expected: p, found: tau.degree });
    }
    H1PatchOperator::new(patch, p)?.minimize_from(patch, r, tau)
}

/// Direct minimization over the broken space with the jump and trace constraints as
/// explicit equality constraints. Dense, intended as a cross-check at low degree.
pub fn global_min_h1_broken(patch: &PatchMesh, r: &FaceData, p: usize) -> Result<MinimizationResult<BrokenScalarField>> {
    check_degree(r, p, patch.faces.len())?;
    let mode = infer_h1_mode(patch);
    let n = dim_tet(p);
    let nf = dim_tri(p);
    let nc = patch.cell_count();
    let st = scalar_tables(p);
    let mut h = DMatrix::zeros(nc * n, nc * n);
    for (k, g) in patch.geometry.iter().enumerate() {
        let mut b = DMatrix::zeros(n, n);
        for a in 0..3 {
            for c in 0..3 {
                b += st.deriv[a].transpose() * &st.deriv[c] * g.grad_metric[(a, c)];
            }
        }
        h.view_mut((k * n, k * n), (n, n)).copy_from(&(b * g.abs_det));
    }
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    let mut rhs: Vec<DVector<f64>> = Vec::new();
    for f in 0..patch.faces.len() {
        let (m, pl) = patch.faces.neighbor[f];
        let (lm, lp) = patch.faces.local[f];
        let data = resized(&r.values[f], nf);
        let mut c = DMatrix::zeros(nf, nc * n);
        let value = match patch.faces.class[f] {
            FaceClass::Interior => {
                c.view_mut((0, m * n), (nf, n)).copy_from(&st.trace[lm]);
                c.view_mut((0, pl.unwrap() * n), (nf, n)).copy_from(&(-&st.trace[lp.unwrap()]));
                data
            }
            FaceClass::External => {
                c.view_mut((0, m * n), (nf, n)).copy_from(&st.trace[lm]);
                DVector::zeros(nf)
            }
            FaceClass::Dirichlet if mode == H1Mode::BoundaryDirichlet => {
                c.view_mut((0, m * n), (nf, n)).copy_from(&st.trace[lm]);
                data
            }
            _ => continue,
        };
        rows.push(c);
        rhs.push(value);
    }
    let m: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut cm = DMatrix::zeros(m, nc * n);
    let mut d = DVector::zeros(m);
    let mut o = 0;
    for (c, v) in rows.iter().zip(&rhs) {
        cm.view_mut((o, 0), (c.nrows(), nc * n)).copy_from(c);
        d.rows_mut(o, c.nrows()).copy_from(v);
        o += c.nrows();
    }
    let sol = equality_qp(&h, &DVector::zeros(nc * n), &cm, &d)?;
    let coeffs = (0..nc).map(|k| sol.x.rows(k * n, n).into_owned()).collect();
    let v = BrokenScalarField { degree: p, coeffs };
    Ok(MinimizationResult {
        energy: energy_of(patch, &v),
        residuals: h1_residuals(patch, &v, r, mode),
        field: v,
        diagnostics: Diagnostics {
            unknowns: nc * n,
            constraints: m,
            rank_deficiency: m - sol.constraint_rank,
            pivot_ratio: 0.0,
        },
    })
}

/// H1 lifting of the H(div) residual functional `v -> sum_F (r_F, v)_F - sum_K (r_K, v)_K`
/// in the conforming space of degree q, with `v = 0` on Dirichlet faces (or the value at
/// the center pinned when there are none). Its energy equals the minimal H(div) norm.
pub fn lift_residual_h1(patch: &PatchMesh, data: &HdivData, q: usize) -> Result<MinimizationResult<BrokenScalarField>> {
    if q == 0 {
        return Err(Error::DegreeMismatch { expected: 1, found: 0 });
    }
    let dirichlet = patch.faces.of_class(FaceClass::Dirichlet);
    let pure_neumann = dirichlet.is_empty();
    if pure_neumann {
        let comp = crate::topology::check_compatibility_hdiv(patch, data, crate::topology::HdivMode::Interior)?;
        if !comp.passed {
            return Err(Error::IncompatibleData { reason: "residual functional does not vanish on constants".into(), defect: comp.defect });
        }
    }
    let space = ConformingSpace::new(patch, q, &dirichlet, pure_neumann);
    let solver = ConformingSolver::new(patch, space)?;
    let st = scalar_tables(q);
    let np = dim_tet(q);
    let nf = dim_tri(q);
    let mut loads: Vec<DVector<f64>> = (0..patch.cell_count())
        .map(|k| {
            let t = &solver.cells[k].tables.to_modal;
            -(t.transpose() * resized(&data.cells.values[k], np)) * patch.geometry[k].abs_det
        })
        .collect();
    for f in hdiv_data_faces(patch) {
        let (m, lm) = (patch.faces.neighbor[f].0, patch.faces.local[f].0);
        let t = &solver.cells[m].tables.to_modal;
        let tr = &st.trace[lm] * t;
        loads[m] += tr.transpose() * resized(&data.faces.values[f], nf) * (2.0 * patch.faces.area[f]);
    }
    let (x, galerkin) = solver.solve(&loads);
    let energy2: f64 = (0..patch.cell_count()).map(|k| solver.cells[k].energy(&x[k]).powi(2)).sum();
    let coeffs = (0..patch.cell_count()).map(|k| solver.cells[k].to_modal(&x[k])).collect();
    Ok(MinimizationResult {
        field: BrokenScalarField { degree: q, coeffs },
        energy: energy2.sqrt(),
        residuals: vec![("galerkin".into(), galerkin)],
        diagnostics: Diagnostics { unknowns: solver.unknowns(), ..Default::default() },
    })
}
