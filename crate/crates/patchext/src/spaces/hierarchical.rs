//! Conforming hierarchical shape functions of degree q on the tetrahedron.
//!
//! Every function attached to a subentity depends only on the barycentric coordinates of
//! that subentity's vertices, and local vertex order follows global vertex ids, so traces
//! on shared entities agree without orientation fixes.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::dubiner::{dim_tet, dim_tri, scaled_jacobi, tet_norm2, tet_raw, tri_indices, Dual};
use super::geometry::FACE_VERTICES;
use super::tables::{scalar_tables, tet_tabulation, tri_tabulation, Cache};

pub const EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
/// Edges of a triangle in face-local numbering.
pub const TRI_EDGES: [[usize; 2]; 3] = [[0, 1], [0, 2], [1, 2]];

pub fn edge_dofs(q: usize) -> usize {
    q.saturating_sub(1)
}

pub fn face_dofs(q: usize) -> usize {
    if q < 3 {
        0
    } else {
        (q - 1) * (q - 2) / 2
    }
}

pub fn bubble_dofs(q: usize) -> usize {
    if q < 4 {
        0
    } else {
        dim_tet(q - 4)
    }
}

fn edge_functions(q: usize, la: Dual, lb: Dual, out: &mut Vec<Dual>) {
    if q < 2 {
        return;
    }
    let p = scaled_jacobi(q - 2, 0.0, lb - la, la + lb);
    let base = la * lb;
    for pk in p {
        out.push(base * pk);
    }
}

fn face_functions(q: usize, la: Dual, lb: Dual, lc: Dual, out: &mut Vec<Dual>) {
    if q < 3 {
        return;
    }
    let r = q - 3;
    let s1 = la + lb;
    let pi = scaled_jacobi(r, 0.0, lb - la, s1);
    let base = la * lb * lc;
    let pj: Vec<Vec<Dual>> = (0..=r).map(|i| scaled_jacobi(r - i, 2.0 * i as f64 + 1.0, lc - s1, s1 + lc)).collect();
    for (i, j) in tri_indices(r) {
        out.push(base * pi[i] * pj[i][j]);
    }
}

/// All hierarchical functions on a tetrahedron in DOF order:
/// vertices, edges (`EDGES` order), faces (face f opposite vertex f), bubbles.
pub fn tet_functions(q: usize, l: [Dual; 4]) -> Vec<Dual> {
    let mut out = Vec::with_capacity(dim_tet(q));
    out.extend_from_slice(&l);
    for [a, b] in EDGES {
        edge_functions(q, l[a], l[b], &mut out);
    }
    for fv in FACE_VERTICES {
        face_functions(q, l[fv[0]], l[fv[1]], l[fv[2]], &mut out);
    }
    if q >= 4 {
        let bubble = l[0] * l[1] * l[2] * l[3];
        let raw = tet_raw(q - 4, l);
        for (f, (i, j, k)) in raw.into_iter().zip(super::dubiner::tet_indices(q - 4)) {
            out.push(bubble * f.scale(1.0 / tet_norm2(i, j, k).sqrt()));
        }
    }
    out
}

/// Hierarchical functions of a triangle closure: vertices, edges (`TRI_EDGES`), interior.
pub fn tri_functions(q: usize, l: [Dual; 3]) -> Vec<Dual> {
    let mut out = Vec::with_capacity(dim_tri(q));
    out.extend_from_slice(&l);
    for [a, b] in TRI_EDGES {
        edge_functions(q, l[a], l[b], &mut out);
    }
    face_functions(q, l[0], l[1], l[2], &mut out);
    out
}

/// Offsets of entity blocks in the cell DOF vector.
#[derive(Debug, Clone, Copy)]
pub struct DofLayout {
    pub degree: usize,
    pub ne: usize,
    pub nf: usize,
    pub nb: usize,
}

impl DofLayout {
    pub fn new(q: usize) -> Self {
        DofLayout { degree: q, ne: edge_dofs(q), nf: face_dofs(q), nb: bubble_dofs(q) }
    }

    pub fn dim(&self) -> usize {
        4 + 6 * self.ne + 4 * self.nf + self.nb
    }

    pub fn vertex(&self, v: usize) -> usize {
        v
    }

    pub fn edge(&self, e: usize) -> std::ops::Range<usize> {
        let s = 4 + e * self.ne;
        s..s + self.ne
    }

    pub fn face(&self, f: usize) -> std::ops::Range<usize> {
        let s = 4 + 6 * self.ne + f * self.nf;
        s..s + self.nf
    }

    pub fn bubbles(&self) -> std::ops::Range<usize> {
        let s = 4 + 6 * self.ne + 4 * self.nf;
        s..s + self.nb
    }

    /// Cell DOF indices of the closure of local face f, in triangle-closure order.
    pub fn face_closure(&self, f: usize) -> Vec<usize> {
        let fv = FACE_VERTICES[f];
        let mut idx: Vec<usize> = fv.to_vec();
        for [a, b] in TRI_EDGES {
            let (ca, cb) = (fv[a], fv[b]);
            let e = EDGES.iter().position(|&[x, y]| x == ca && y == cb).unwrap();
            idx.extend(self.edge(e));
        }
        idx.extend(self.face(f));
        idx
    }

    /// Cell DOF indices of the closure of local edge e.
    pub fn edge_closure(&self, e: usize) -> Vec<usize> {
        let [a, b] = EDGES[e];
        let mut idx = vec![a, b];
        idx.extend(self.edge(e));
        idx
    }
}

pub struct H1Tables {
    pub degree: usize,
    pub layout: DofLayout,
    /// Modal coefficients of each hierarchical function (columns).
    pub to_modal: DMatrix<f64>,
    /// Modal coefficients of reference derivatives of each hierarchical function.
    pub grad_modal: [DMatrix<f64>; 3],
    /// `stiff[a][b] = grad_modal[a]^T grad_modal[b]`.
    pub stiff: [[DMatrix<f64>; 3]; 3],
    /// Face-basis coefficients of the triangle-closure functions (columns).
    pub face_map: DMatrix<f64>,
    pub face_map_inv: DMatrix<f64>,
}

impl H1Tables {
    /// Hierarchical stiffness for a cell with gradient metric `h` and `|det J|`.
    pub fn stiffness(&self, h: &nalgebra::Matrix3<f64>, abs_det: f64) -> DMatrix<f64> {
        let n = self.layout.dim();
        let mut k = DMatrix::zeros(n, n);
        for a in 0..3 {
            for b in 0..3 {
                let c = h[(a, b)] * abs_det;
                if c != 0.0 {
                    k += c * &self.stiff[a][b];
                }
            }
        }
        k
    }
}

pub fn h1_tables(q: usize) -> Arc<H1Tables> {
    static CACHE: Cache<usize, H1Tables> = Cache::new();
    CACHE.get_or_build(q, || {
        assert!(q >= 1);
        let layout = DofLayout::new(q);
        let n = dim_tet(q);
        let tab = tet_tabulation(q, 2 * q);
        let mut weighted_hier = DMatrix::zeros(tab.rule.len(), n);
        for (ip, x) in tab.rule.points.iter().enumerate() {
            let l = [
                Dual::constant(1.0 - x[0] - x[1] - x[2]),
                Dual::constant(x[0]),
                Dual::constant(x[1]),
                Dual::constant(x[2]),
            ];
            for (j, f) in tet_functions(q, l).iter().enumerate() {
                weighted_hier[(ip, j)] = f.v * tab.rule.weights[ip];
            }
        }
        let to_modal = tab.values.transpose() * weighted_hier;
        let st = scalar_tables(q);
        let grad_modal = [&st.deriv[0] * &to_modal, &st.deriv[1] * &to_modal, &st.deriv[2] * &to_modal];
        let stiff = std::array::from_fn(|a| std::array::from_fn(|b| grad_modal[a].transpose() * &grad_modal[b]));

        let nf = dim_tri(q);
        let ttab = tri_tabulation(q, 2 * q);
        let mut wf = DMatrix::zeros(ttab.rule.len(), nf);
        for (ip, x) in ttab.rule.points.iter().enumerate() {
            let l = [Dual::constant(1.0 - x[0] - x[1]), Dual::constant(x[0]), Dual::constant(x[1])];
            for (j, f) in tri_functions(q, l).iter().enumerate() {
                wf[(ip, j)] = f.v * ttab.rule.weights[ip];
            }
        }
        let face_map = ttab.values.transpose() * wf;
        let face_map_inv = face_map.clone().try_inverse().expect("face closure functions are a basis");
        H1Tables { degree: q, layout, to_modal, grad_modal, stiff, face_map, face_map_inv }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_dimension() {
        for q in 1..10 {
            assert_eq!(DofLayout::new(q).dim(), dim_tet(q));
            assert_eq!(3 + 3 * edge_dofs(q) + face_dofs(q), dim_tri(q));
        }
    }

    #[test]
    fn cell_traces_match_face_closure_functions() {
        let q = 6;
        let h = h1_tables(q);
        let st = scalar_tables(q);
        for f in 0..4 {
            let closure = h.layout.face_closure(f);
            let tr = &st.trace[f] * &h.to_modal;
            for (c, &j) in closure.iter().enumerate() {
                let diff = tr.column(j) - h.face_map.column(c);
                assert!(diff.norm() < 1e-12, "face {f} dof {j}");
            }
            // functions not in the closure vanish on the face
            for j in 0..h.layout.dim() {
                if !closure.contains(&j) {
                    assert!(tr.column(j).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn modal_change_of_basis_is_invertible() {
        let h = h1_tables(5);
        assert!(h.to_modal.clone().try_inverse().is_some());
    }
}
