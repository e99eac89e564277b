//! Broken fields and prescribed data stored as per-cell or per-face coefficient vectors.
//!
//! Scalar cell polynomials use the orthonormal modal basis of the reference tetrahedron,
//! face polynomials the orthonormal basis of the reference triangle in the face's sorted
//! vertex parametrization, and vector fields the reference RTN basis (Piola-mapped).
//! All bases are nested by degree, so raising the degree pads with zeros.

use nalgebra::DVector;

use crate::spaces::dubiner::{dim_tet, dim_tri};
use crate::spaces::rtn::rtn_tables;

fn resize(v: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    let m = n.min(v.len());
    out.rows_mut(0, m).copy_from(&v.rows(0, m));
    out
}

/// Per-cell coefficients in `P_p(K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenScalarField {
    pub degree: usize,
    pub coeffs: Vec<DVector<f64>>,
}

impl BrokenScalarField {
    pub fn zeros(degree: usize, cells: usize) -> Self {
        BrokenScalarField { degree, coeffs: vec![DVector::zeros(dim_tet(degree)); cells] }
    }

    /// Same field expressed in a higher (or lower, truncating) degree basis.
    pub fn with_degree(&self, degree: usize) -> Self {
        BrokenScalarField { degree, coeffs: self.coeffs.iter().map(|c| resize(c, dim_tet(degree))).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = self.degree.max(other.degree);
        let (a, b) = (self.with_degree(d), other.with_degree(d));
        a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
    }
}

/// Per-cell coefficients in `RTN_p(K)` (reference coefficients of the Piola pullback).
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenVectorField {
    pub degree: usize,
    pub coeffs: Vec<DVector<f64>>,
}

impl BrokenVectorField {
    pub fn zeros(degree: usize, cells: usize) -> Self {
        BrokenVectorField { degree, coeffs: vec![DVector::zeros(rtn_tables(degree).dim); cells] }
    }

    /// Embed into `RTN_{degree}` for `degree >= self.degree`.
    pub fn with_degree(&self, degree: usize) -> Self {
        assert!(degree >= self.degree);
        if degree == self.degree {
            return self.clone();
        }
        let lo = rtn_tables(self.degree);
        let hi = rtn_tables(degree);
        let coeffs = self.coeffs.iter().map(|c| raise_rtn(&lo, &hi, c)).collect();
        BrokenVectorField { degree, coeffs }
    }
}

/// Embed an `RTN_p` coefficient vector into `RTN_q`, `q > p`.
pub fn raise_rtn(
    lo: &crate::spaces::rtn::RtnTables,
    hi: &crate::spaces::rtn::RtnTables,
    c: &DVector<f64>,
) -> DVector<f64> {
    // components of the low field in P_{p+1}, which is contained in P_q
    let comps = lo.components(c.as_slice());
    let mut out = DVector::zeros(hi.dim);
    for a in 0..3 {
        for i in 0..comps[a].len() {
            out[a * hi.np + i] = comps[a][i];
        }
    }
    out
}

/// Per-face coefficients in `P_p(F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceData {
    pub degree: usize,
    pub values: Vec<DVector<f64>>,
}

impl FaceData {
    pub fn zeros(degree: usize, faces: usize) -> Self {
        FaceData { degree, values: vec![DVector::zeros(dim_tri(degree)); faces] }
    }

    pub fn with_degree(&self, degree: usize) -> Self {
        FaceData { degree, values: self.values.iter().map(|c| resize(c, dim_tri(degree))).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        FaceData { degree: self.degree, values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }
}

/// Per-cell coefficients in `P_p(K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementData {
    pub degree: usize,
    pub values: Vec<DVector<f64>>,
}

impl ElementData {
    pub fn zeros(degree: usize, cells: usize) -> Self {
        ElementData { degree, values: vec![DVector::zeros(dim_tet(degree)); cells] }
    }

    pub fn with_degree(&self, degree: usize) -> Self {
        ElementData { degree, values: self.values.iter().map(|c| resize(c, dim_tet(degree))).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }
}

/// H(div) patch data: normal-trace/jump data on faces and divergence data in cells.
#[derive(Debug, Clone, PartialEq)]
pub struct HdivData {
    pub faces: FaceData,
    pub cells: ElementData,
}

impl HdivData {
    pub fn zeros(degree: usize, faces: usize, cells: usize) -> Self {
        HdivData { faces: FaceData::zeros(degree, faces), cells: ElementData::zeros(degree, cells) }
    }

    pub fn with_degree(&self, degree: usize) -> Self {
        HdivData { faces: self.faces.with_degree(degree), cells: self.cells.with_degree(degree) }
    }

    pub fn degree(&self) -> usize {
        self.faces.degree
    }
}

/// Solver bookkeeping attached to every minimization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub unknowns: usize,
    pub constraints: usize,
    /// Dropped pivots in semidefinite factorizations.
    pub rank_deficiency: usize,
    /// Smallest over largest accepted pivot, a rough conditioning indicator.
    pub pivot_ratio: f64,
}

/// Minimizer, its energy (`|grad_T v|` or `|v|` on the patch) and constraint residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizationResult<F> {
    pub field: F,
    pub energy: f64,
    pub residuals: Vec<(String, f64)>,
    pub diagnostics: Diagnostics,
}

impl<F> MinimizationResult<F> {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

/// Degree `q` with `dim_tri(q) == n`.
pub fn tri_degree_of(n: usize) -> Option<usize> {
    (0..64).find(|&q| dim_tri(q) == n)
}

/// Degree `q` with `dim_tet(q) == n`.
pub fn tet_degree_of(n: usize) -> Option<usize> {
    (0..64).find(|&q| dim_tet(q) == n)
}
