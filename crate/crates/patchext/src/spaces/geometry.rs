//! Affine maps of the reference tetrahedron, scalar pullback and contravariant Piola maps.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// `x = offset + linear * xhat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub linear: Matrix3<f64>,
    pub offset: Vector3<f64>,
    pub det: f64,
    pub inverse: Matrix3<f64>,
}

impl AffineMap {
    pub fn new(linear: Matrix3<f64>, offset: Vector3<f64>) -> Result<Self> {
        let det = linear.determinant();
        let scale = linear.norm().powi(3).max(f64::MIN_POSITIVE);
        if !det.is_finite() || det.abs() <= 1e-300 || det.abs() < 1e-15 * scale {
            return Err(Error::SingularMap);
        }
        let inverse = linear.try_inverse().ok_or(Error::SingularMap)?;
        Ok(AffineMap { linear, offset, det, inverse })
    }

    pub fn identity() -> Self {
        AffineMap::new(Matrix3::identity(), Vector3::zeros()).unwrap()
    }

    /// Map sending the reference vertices (0,e1,e2,e3) to `v[0..4]`.
    pub fn from_vertices(v: &[Point; 4]) -> Result<Self> {
        let j = Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]]);
        AffineMap::new(j, v[0])
    }

    /// Orthogonal reflection through the plane `{x : n.(x - p) = 0}`.
    pub fn reflection(point: Point, normal: Vector3<f64>) -> Self {
        let n = normal.normalize();
        let r = Matrix3::identity() - 2.0 * n * n.transpose();
        let offset = 2.0 * n * n.dot(&point);
        AffineMap::new(r, offset).unwrap()
    }

    pub fn apply(&self, x: &Point) -> Point {
        self.offset + self.linear * x
    }

    pub fn apply_inverse(&self, y: &Point) -> Point {
        self.inverse * (y - self.offset)
    }

    pub fn sign(&self) -> f64 {
        self.det.signum()
    }

    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap::new(self.linear * inner.linear, self.apply(&inner.offset)).unwrap()
    }

    pub fn inverted(&self) -> AffineMap {
        AffineMap::new(self.inverse, -(self.inverse * self.offset)).unwrap()
    }
}

/// Scalar pullback `v o T`.
pub fn pullback_scalar<'a>(map: &'a AffineMap, v: impl Fn(&Point) -> f64 + 'a) -> impl Fn(&Point) -> f64 + 'a {
    move |x| v(&map.apply(x))
}

/// Gradient of a pullback: `grad(v o T)(x) = J^T (grad v)(T x)`.
pub fn pullback_gradient(map: &AffineMap, grad_v_at_tx: &Vector3<f64>) -> Vector3<f64> {
    map.linear.transpose() * grad_v_at_tx
}

/// Contravariant Piola pullback `psi(w) = det(J) J^{-1} (w o T)`.
pub fn piola_contravariant<'a>(
    map: &'a AffineMap,
    w: impl Fn(&Point) -> Vector3<f64> + 'a,
) -> impl Fn(&Point) -> Vector3<f64> + 'a {
    move |x| map.det * (map.inverse * w(&map.apply(x)))
}

/// Push a reference field forward: `sigma(T xhat) = J sigmahat(xhat) / det J`.
pub fn piola_push(map: &AffineMap, sigma_hat: &Vector3<f64>) -> Vector3<f64> {
    map.linear * sigma_hat / map.det
}

/// Geometric data of one tetrahedron whose vertices are given in canonical order.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub vertices: [Point; 4],
    pub map: AffineMap,
    pub abs_det: f64,
    /// `J^{-1} J^{-T}`, the metric of reference gradients.
    pub grad_metric: Matrix3<f64>,
    /// `J^T J`, the metric of reference Piola fields.
    pub piola_metric: Matrix3<f64>,
    pub face_areas: [f64; 4],
    /// Outward unit normal of the face opposite local vertex k.
    pub face_normals: [Vector3<f64>; 4],
}

/// Local face k is opposite local vertex k; its vertices are the others in increasing order.
pub const FACE_VERTICES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

impl CellGeometry {
    pub fn new(vertices: [Point; 4]) -> Result<Self> {
        let map = AffineMap::from_vertices(&vertices)?;
        let abs_det = map.det.abs();
        let grad_metric = map.inverse * map.inverse.transpose();
        let piola_metric = map.linear.transpose() * map.linear;
        let mut face_areas = [0.0; 4];
        let mut face_normals = [Vector3::zeros(); 4];
        for k in 0..4 {
            let [a, b, c] = FACE_VERTICES[k];
            let cr = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
            let area = 0.5 * cr.norm();
            let mut n = cr / cr.norm();
            if n.dot(&(vertices[k] - vertices[a])) > 0.0 {
                n = -n;
            }
            face_areas[k] = area;
            face_normals[k] = n;
        }
        Ok(CellGeometry { vertices, map, abs_det, grad_metric, piola_metric, face_areas, face_normals })
    }

    pub fn volume(&self) -> f64 {
        self.abs_det / 6.0
    }

    pub fn eps(&self) -> f64 {
        self.map.sign()
    }

    /// Barycentric coordinates of `x`.
    pub fn barycentric(&self, x: &Point) -> [f64; 4] {
        let r = self.map.apply_inverse(x);
        [1.0 - r[0] - r[1] - r[2], r[0], r[1], r[2]]
    }

    /// Gradient of the barycentric coordinate of local vertex k.
    pub fn barycentric_gradient(&self, k: usize) -> Vector3<f64> {
        let ref_grad = match k {
            0 => Vector3::new(-1.0, -1.0, -1.0),
            1 => Vector3::new(1.0, 0.0, 0.0),
            2 => Vector3::new(0.0, 1.0, 0.0),
            _ => Vector3::new(0.0, 0.0, 1.0),
        };
        self.map.inverse.transpose() * ref_grad
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                d = d.max((self.vertices[i] - self.vertices[j]).norm());
            }
        }
        d
    }

    /// Radius of the inscribed ball, `3 |K| / |dK|`.
    pub fn inradius(&self) -> f64 {
        3.0 * self.volume() / self.face_areas.iter().sum::<f64>()
    }
}

/// Reference coordinates on face k of the reference tetrahedron for face parameters (s, t).
pub fn face_point(k: usize, s: f64, t: f64) -> [f64; 3] {
    const V: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let [a, b, c] = FACE_VERTICES[k];
    let mut x = [0.0; 3];
    for d in 0..3 {
        x[d] = (1.0 - s - t) * V[a][d] + s * V[b][d] + t * V[c][d];
    }
    x
}

/// Outward normal of reference face k scaled by twice the face area.
pub fn reference_scaled_normal(k: usize) -> Vector3<f64> {
    match k {
        0 => Vector3::new(1.0, 1.0, 1.0),
        1 => Vector3::new(-1.0, 0.0, 0.0),
        2 => Vector3::new(0.0, -1.0, 0.0),
        _ => Vector3::new(0.0, 0.0, -1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map() -> AffineMap {
        AffineMap::new(
            Matrix3::new(1.2, 0.3, -0.1, 0.2, 0.9, 0.4, -0.3, 0.1, 1.5),
            Vector3::new(0.5, -1.0, 2.0),
        )
        .unwrap()
    }

    #[test]
    fn map_and_inverse_compose_to_identity() {
        let m = sample_map();
        let x = Vector3::new(0.3, -0.7, 1.1);
        assert!((m.apply_inverse(&m.apply(&x)) - x).norm() < 1e-13);
        let c = m.compose(&m.inverted());
        assert!((c.linear - Matrix3::identity()).norm() < 1e-13);
    }

    #[test]
    fn piola_of_identity_and_scaling() {
        let w = |x: &Point| Vector3::new(x[1], 2.0, -x[0]);
        let id = AffineMap::identity();
        let p = piola_contravariant(&id, w);
        let x = Vector3::new(0.1, 0.2, 0.3);
        assert_eq!(p(&x), w(&x));
        let s = 3.0;
        let scale = AffineMap::new(Matrix3::identity() * s, Vector3::zeros()).unwrap();
        let c = Vector3::new(1.0, -2.0, 0.5);
        let pc = piola_contravariant(&scale, move |_| c);
        assert!((pc(&x) - s * s * c).norm() < 1e-13);
    }

    #[test]
    fn reflection_is_involution() {
        let r = AffineMap::reflection(Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.2, 0.1, 1.0));
        let x = Vector3::new(0.4, 0.5, -2.0);
        assert!((r.apply(&r.apply(&x)) - x).norm() < 1e-13);
        assert!((r.det + 1.0).abs() < 1e-13);
    }

    #[test]
    fn regular_tetrahedron_shape_ratio() {
        let s = 1.0 / 2f64.sqrt();
        let v = [
            Vector3::new(1.0, 0.0, -s),
            Vector3::new(-1.0, 0.0, -s),
            Vector3::new(0.0, 1.0, s),
            Vector3::new(0.0, -1.0, s),
        ];
        let g = CellGeometry::new(v).unwrap();
        let ratio = g.diameter() / (2.0 * g.inradius());
        assert!((ratio - 6f64.sqrt()).abs() < 1e-12);
    }
}
