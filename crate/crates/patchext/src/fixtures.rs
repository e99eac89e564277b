//! Reference patches used by tests, benches and the command line tool.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spaces::geometry::Point;
use crate::topology::{build_patch, Marker, PatchMesh};

/// Raw patch description before validation.
#[derive(Debug, Clone)]
pub struct PatchSpec {
    pub coords: Vec<Point>,
    pub cells: Vec<[usize; 4]>,
    pub center: usize,
    pub markers: HashMap<[usize; 3], Marker>,
}

impl PatchSpec {
    pub fn build(&self) -> PatchMesh {
        build_patch(&self.cells, &self.coords, self.center, &self.markers).expect("fixture patch is valid")
    }

    /// Cone a closed or open surface triangulation to the center vertex 0.
    fn cone(coords: Vec<Point>, tris: &[[usize; 3]]) -> Self {
        let cells = tris.iter().map(|t| [0, t[0], t[1], t[2]]).collect();
        PatchSpec { coords, cells, center: 0, markers: HashMap::new() }
    }
}

/// Center of a cube with each square face split along one diagonal (12 cells).
pub fn cube_star_spec() -> PatchSpec {
    let mut coords = vec![Point::zeros()];
    for i in 0..8 {
        let s = |b: usize| if i & b != 0 { 1.0 } else { -1.0 };
        coords.push(Point::new(s(1), s(2), s(4)));
    }
    // corner id = 1 + bits(x,y,z)
    let quads = [
        [0, 2, 6, 4], // x = -1
        [1, 3, 7, 5], // x = +1
        [0, 1, 5, 4], // y = -1
        [2, 3, 7, 6], // y = +1
        [0, 1, 3, 2], // z = -1
        [4, 5, 7, 6], // z = +1
    ];
    let mut tris = Vec::new();
    for q in quads {
        let q = q.map(|v| v + 1);
        tris.push([q[0], q[1], q[2]]);
        tris.push([q[0], q[2], q[3]]);
    }
    PatchSpec::cone(coords, &tris)
}

pub fn cube_star() -> PatchMesh {
    cube_star_spec().build()
}

/// Regular octahedron star (8 cells) with the axes scaled by `scale`.
pub fn octahedron_spec(scale: [f64; 3]) -> PatchSpec {
    let mut coords = vec![Point::zeros()];
    for a in 0..3 {
        for s in [1.0, -1.0] {
            let mut p = Point::zeros();
            p[a] = s * scale[a];
            coords.push(p);
        }
    }
    // +x=1 -x=2 +y=3 -y=4 +z=5 -z=6
    let mut tris = Vec::new();
    for x in [1, 2] {
        for y in [3, 4] {
            for z in [5, 6] {
                tris.push([x, y, z]);
            }
        }
    }
    PatchSpec::cone(coords, &tris)
}

pub fn octahedron_star() -> PatchMesh {
    octahedron_spec([1.0, 1.0, 1.0]).build()
}

/// Interior star with strongly anisotropic cells, regularity close to 10.
pub fn distorted_star() -> PatchMesh {
    octahedron_spec([1.0, 1.0, DISTORTION]).build()
}

/// Axis stretch of the distorted star.
pub const DISTORTION: f64 = 0.16698;

/// Upper half of the octahedron star; the four faces in the plane z = 0 are boundary faces.
pub fn half_octahedron_spec(markers: [Marker; 4]) -> PatchSpec {
    let coords = vec![
        Point::zeros(),
        Point::new(1.0, 0.0, 0.0),
        Point::new(-1.0, 0.0, 0.0),
        Point::new(0.0, 1.0, 0.0),
        Point::new(0.0, -1.0, 0.0),
        Point::new(0.0, 0.0, 1.0),
    ];
    let tris = [[1, 3, 5], [1, 4, 5], [2, 3, 5], [2, 4, 5]];
    let mut spec = PatchSpec::cone(coords, &tris);
    for (f, m) in [[0, 1, 3], [0, 1, 4], [0, 2, 3], [0, 2, 4]].into_iter().zip(markers) {
        spec.markers.insert(f, m);
    }
    spec
}

/// Upper half of the cube star: boundary patch with 4 coplanar boundary faces.
pub fn half_cube_spec(markers: [Marker; 4]) -> PatchSpec {
    // vertex 0 at the center of the bottom face of [-1,1]^2 x [0,1]
    let mut coords = vec![Point::zeros()];
    for (x, y) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        coords.push(Point::new(x, y, 0.0));
    }
    for (x, y) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        coords.push(Point::new(x, y, 1.0));
    }
    let mut tris = vec![[5, 6, 7], [5, 7, 8]];
    for i in 0..4 {
        let (b0, b1) = (1 + i, 1 + (i + 1) % 4);
        let (t0, t1) = (b0 + 4, b1 + 4);
        tris.push([b0, b1, t1]);
        tris.push([b0, t1, t0]);
    }
    let mut spec = PatchSpec::cone(coords, &tris);
    // boundary faces: the cone over the base square edges (0, b0, b1)
    for (i, m) in markers.into_iter().enumerate() {
        let (b0, b1) = (1 + i, 1 + (i + 1) % 4);
        spec.markers.insert(crate::topology::sorted3([0, b0, b1]), m);
    }
    spec
}

/// Boundary patch with a single cell.
pub fn single_cell_spec(markers: [Marker; 3]) -> PatchSpec {
    let coords = vec![
        Point::zeros(),
        Point::new(1.0, 0.0, 0.0),
        Point::new(0.0, 1.0, 0.0),
        Point::new(0.0, 0.0, 1.0),
    ];
    let mut spec = PatchSpec::cone(coords, &[[1, 2, 3]]);
    for (f, m) in [[0, 1, 2], [0, 1, 3], [0, 2, 3]].into_iter().zip(markers) {
        spec.markers.insert(f, m);
    }
    spec
}

/// Boundary patch with two cells sharing one interior face.
pub fn two_cell_spec(markers: [Marker; 4]) -> PatchSpec {
    let coords = vec![
        Point::zeros(),
        Point::new(1.0, 0.0, 0.0),
        Point::new(0.0, 1.0, 0.0),
        Point::new(0.0, 0.0, 1.0),
        Point::new(-1.0, 0.2, 0.1),
    ];
    let mut spec = PatchSpec::cone(coords, &[[1, 2, 3], [2, 3, 4]]);
    for (f, m) in [[0, 1, 2], [0, 1, 3], [0, 2, 4], [0, 3, 4]].into_iter().zip(markers) {
        spec.markers.insert(f, m);
    }
    spec
}

/// Faces of the convex hull of points in general position, oriented outward.
pub fn convex_hull(points: &[Point]) -> Vec<[usize; 3]> {
    let n = points.len();
    let centroid = points.iter().sum::<Point>() / n as f64;
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let nrm = (points[j] - points[i]).cross(&(points[k] - points[i]));
                let mut pos = false;
                let mut neg = false;
                for (l, p) in points.iter().enumerate() {
                    if l == i || l == j || l == k {
                        continue;
                    }
                    let s = nrm.dot(&(p - points[i]));
                    if s > 1e-12 {
                        pos = true;
                    } else if s < -1e-12 {
                        neg = true;
                    }
                }
                if pos ^ neg {
                    if nrm.dot(&(centroid - points[i])) > 0.0 {
                        out.push([i, k, j]);
                    } else {
                        out.push([i, j, k]);
                    }
                }
            }
        }
    }
    out
}

/// Random interior star: `n` directions on the sphere, hull coned to the origin, radii
/// perturbed by up to `radial` relative amount. Retries until all cells are well shaped.
pub fn random_star_spec(n: usize, radial: f64, seed: u64) -> PatchSpec {
    assert!(n >= 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let dirs: Vec<Point> = (0..n)
            .map(|_| loop {
                let p = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let r = p.norm();
                if r > 0.1 && r <= 1.0 {
                    break p / r;
                }
            })
            .collect();
        let hull = convex_hull(&dirs);
        if hull.len() != 2 * n - 4 {
            continue;
        }
        // the origin must lie well inside the hull
        let c = dirs.iter().sum::<Point>() / n as f64;
        let inside = hull.iter().all(|t| {
            let nrm = (dirs[t[1]] - dirs[t[0]]).cross(&(dirs[t[2]] - dirs[t[0]])).normalize();
            let (o, m) = (nrm.dot(&(-dirs[t[0]])), nrm.dot(&(c - dirs[t[0]])));
            o.abs() > 0.15 && o * m > 0.0
        });
        if !inside {
            continue;
        }
        let mut coords = vec![Point::zeros()];
        for d in &dirs {
            coords.push(d * (1.0 + radial * rng.gen_range(-1.0..1.0)));
        }
        let tris: Vec<[usize; 3]> = hull.iter().map(|t| t.map(|v| v + 1)).collect();
        let spec = PatchSpec::cone(coords, &tris);
        let ok = spec.cells.iter().all(|c| {
            let p: Vec<Point> = c.iter().map(|&v| spec.coords[v]).collect();
            let vol = (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])).abs() / 6.0;
            let mut diam: f64 = 0.0;
            for a in 0..4 {
                for b in a + 1..4 {
                    diam = diam.max((p[a] - p[b]).norm());
                }
            }
            vol > 2e-3 * diam.powi(3)
        });
        if ok {
            return spec;
        }
    }
}

/// Random star with between 6 and 30 cells.
pub fn random_star(seed: u64) -> PatchMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = rng.gen_range(5..=17);
    random_star_spec(n, 0.2, seed).build()
}

/// Random boundary star: points on the upper half-sphere coned to the origin; the
/// faces in the plane z = 0 are boundary faces marked by `marker(i)` (sorted order).
pub fn random_half_star_spec(n: usize, seed: u64, marker: impl Fn(usize) -> Marker) -> PatchSpec {
    assert!(n >= 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let rim = 3 + rng.gen_range(0..=(n - 4).min(3));
        let mut pts = Vec::new();
        let offset = rng.gen_range(0.0..1.0);
        for i in 0..rim {
            let th = 2.0 * std::f64::consts::PI * (i as f64 + offset + 0.3 * rng.gen_range(-1.0..1.0)) / rim as f64;
            pts.push(Point::new(th.cos(), th.sin(), 0.0));
        }
        while pts.len() < n {
            let p = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.15..1.0));
            let r = p.norm();
            if r <= 1.0 && r > 0.2 {
                pts.push(p / r);
            }
        }
        // a point far below makes the rim a set of hull edges; its faces are discarded
        let mut all = pts.clone();
        all.push(Point::new(0.0, 0.0, -10.0));
        let below = pts.len();
        let hull = convex_hull(&all);
        let tris: Vec<[usize; 3]> =
            hull.iter().filter(|t| !t.contains(&below)).map(|t| t.map(|v| v + 1)).collect();
        let mut coords = vec![Point::zeros()];
        coords.extend(pts.iter().copied());
        let mut spec = PatchSpec::cone(coords, &tris);
        let ok = spec.cells.iter().all(|c| {
            let p: Vec<Point> = c.iter().map(|&v| spec.coords[v]).collect();
            let vol = (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])).abs() / 6.0;
            vol > 2e-3
        });
        let rim_closed = (0..rim).all(|i| {
            let (x, y) = (1 + i, 1 + (i + 1) % rim);
            tris.iter().any(|t| t.contains(&x) && t.contains(&y))
        });
        if !ok || !rim_closed {
            continue;
        }
        let mut bfaces: Vec<[usize; 3]> = (0..rim)
            .map(|i| crate::topology::sorted3([0, 1 + i, 1 + (i + 1) % rim]))
            .collect();
        bfaces.sort_unstable();
        for (i, f) in bfaces.into_iter().enumerate() {
            spec.markers.insert(f, marker(i));
        }
        return spec;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{shape_regularity, FaceClass, PatchKind};

    #[test]
    fn fixtures_build() {
        assert_eq!(cube_star().cell_count(), 12);
        assert_eq!(octahedron_star().cell_count(), 8);
        let d = distorted_star();
        let g = shape_regularity(&d);
        assert!((g - 10.0).abs() < 0.5, "regularity {g}");
        let h = half_octahedron_spec([Marker::Dirichlet; 4]).build();
        assert_eq!(h.kind, PatchKind::Boundary);
        assert_eq!(h.faces_of(FaceClass::Dirichlet).len(), 4);
        let c = half_cube_spec([Marker::Neumann; 4]).build();
        assert_eq!(c.kind, PatchKind::Boundary);
        assert_eq!(c.cell_count(), 10);
        two_cell_spec([Marker::Dirichlet; 4]).build();
        single_cell_spec([Marker::Neumann; 3]).build();
    }

    #[test]
    fn random_stars_are_valid() {
        for seed in 0..20 {
            let p = random_star(seed);
            assert_eq!(p.kind, PatchKind::Interior);
            assert!((6..=30).contains(&p.cell_count()));
        }
        for seed in 0..10 {
            let p = random_half_star_spec(6, seed, |_| Marker::Dirichlet).build();
            assert_eq!(p.kind, PatchKind::Boundary);
        }
    }
}
