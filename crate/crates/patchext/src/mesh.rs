//! Global tetrahedral meshes: validation, the `tetmesh v1` text format, the Kuhn
//! subdivision of the unit cube, and extraction of vertex patches.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spaces::geometry::{CellGeometry, Point, FACE_VERTICES};
use crate::topology::{build_patch, Marker, PatchMesh};

pub const HEADER: &str = "tetmesh v1";

#[derive(Debug, Clone)]
pub struct TetMesh {
    pub vertices: Vec<Point>,
    /// Cells with sorted vertex ids.
    pub cells: Vec<[usize; 4]>,
    pub markers: BTreeMap<[usize; 3], Marker>,
    pub geometry: Vec<CellGeometry>,
    /// Faces with sorted vertex ids, in lexicographic order.
    pub faces: Vec<[usize; 3]>,
    /// `(cell, local face)` of the one or two cells sharing each face.
    pub face_cells: Vec<Vec<(usize, usize)>>,
    pub cell_faces: Vec<[usize; 4]>,
    pub vertex_cells: Vec<Vec<usize>>,
}

impl PartialEq for TetMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.cells == other.cells && self.markers == other.markers
    }
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

impl TetMesh {
    pub fn new(vertices: Vec<Point>, cells: Vec<[usize; 4]>, markers: BTreeMap<[usize; 3], Marker>) -> Result<Self> {
        let nv = vertices.len();
        let mut sorted = Vec::with_capacity(cells.len());
        let mut geometry = Vec::with_capacity(cells.len());
        for (k, c) in cells.iter().enumerate() {
            if c.iter().any(|&v| v >= nv) {
                return Err(Error::NonManifold(format!("cell {k} references a missing vertex")));
            }
            let mut s = *c;
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::NonManifold(format!("cell {k} repeats a vertex")));
            }
            let g = CellGeometry::new(s.map(|v| vertices[v])).map_err(|_| Error::DegenerateCell {
                cell: k,
                volume: 0.0,
                floor: 0.0,
            })?;
            let floor = 1e-14 * g.diameter().powi(3);
            if g.volume() <= floor {
                return Err(Error::DegenerateCell { cell: k, volume: g.volume(), floor });
            }
            sorted.push(s);
            geometry.push(g);
        }
        let mut map: BTreeMap<[usize; 3], Vec<(usize, usize)>> = BTreeMap::new();
        for (k, c) in sorted.iter().enumerate() {
            for (l, fv) in FACE_VERTICES.iter().enumerate() {
                map.entry(fv.map(|i| c[i])).or_default().push((k, l));
            }
        }
        let mut faces = Vec::with_capacity(map.len());
        let mut face_cells = Vec::with_capacity(map.len());
        let mut cell_faces = vec![[0; 4]; sorted.len()];
        for (i, (f, cs)) in map.into_iter().enumerate() {
            if cs.len() > 2 {
                return Err(Error::NonManifold(format!("face {f:?} is shared by {} cells", cs.len())));
            }
            for &(k, l) in &cs {
                cell_faces[k][l] = i;
            }
            let boundary = cs.len() == 1;
            if boundary && !markers.contains_key(&f) {
                return Err(Error::UnmarkedBoundaryFace(f));
            }
            faces.push(f);
            face_cells.push(cs);
        }
        for f in markers.keys() {
            match faces.binary_search(f) {
                Ok(i) if face_cells[i].len() == 1 => {}
                _ => return Err(Error::InvalidMarker(*f)),
            }
        }
        let mut vertex_cells = vec![Vec::new(); nv];
        for (k, c) in sorted.iter().enumerate() {
            for &v in c {
                vertex_cells[v].push(k);
            }
        }
        Ok(TetMesh { vertices, cells: sorted, markers, geometry, faces, face_cells, cell_faces, vertex_cells })
    }

    pub fn face_index(&self, f: &[usize; 3]) -> Option<usize> {
        self.faces.binary_search(&sorted3(*f)).ok()
    }

    pub fn is_boundary_face(&self, f: usize) -> bool {
        self.face_cells[f].len() == 1
    }

    pub fn marker(&self, f: usize) -> Option<Marker> {
        self.markers.get(&self.faces[f]).copied()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let (k, l) = self.face_cells[f][0];
        self.geometry[k].face_areas[l]
    }

    pub fn face_diameter(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f].map(|v| self.vertices[v]);
        (b - a).norm().max((c - a).norm()).max((c - b).norm())
    }

    /// Vertices lying on a boundary face.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut on = vec![false; self.vertices.len()];
        for f in self.markers.keys() {
            for &v in f {
                on[v] = true;
            }
        }
        on
    }

    /// Vertices used by at least one cell.
    pub fn used_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| !self.vertex_cells[v].is_empty()).collect()
    }

    pub fn volume(&self) -> f64 {
        self.geometry.iter().map(|g| g.volume()).sum()
    }

    /// Star of vertex `a` as a patch. Vertex ids are renumbered monotonically, so the
    /// sorted cell and face orderings, and with them all local parametrizations, agree
    /// with the global mesh.
    pub fn vertex_patch(&self, a: usize) -> Result<VertexPatch> {
        let cells = self.vertex_cells[a].clone();
        if cells.is_empty() {
            return Err(Error::NonConformingPatch(format!("vertex {a} belongs to no cell")));
        }
        let mut global: Vec<usize> = cells.iter().flat_map(|&k| self.cells[k]).collect();
        global.sort_unstable();
        global.dedup();
        let local: HashMap<usize, usize> = global.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let coords: Vec<Point> = global.iter().map(|&v| self.vertices[v]).collect();
        let lcells: Vec<[usize; 4]> = cells.iter().map(|&k| self.cells[k].map(|v| local[&v])).collect();
        let mut markers = HashMap::new();
        for &k in &cells {
            for l in 0..4 {
                let f = self.cell_faces[k][l];
                if let Some(m) = self.marker(f) {
                    if self.faces[f].contains(&a) {
                        markers.insert(self.faces[f].map(|v| local[&v]), m);
                    }
                }
            }
        }
        let patch = build_patch(&lcells, &coords, local[&a], &markers)?;
        Ok(VertexPatch { vertex: a, patch, cells, global })
    }

    pub fn write(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{HEADER}").unwrap();
        writeln!(s, "{}", self.vertices.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{} {} {}", v.x, v.y, v.z).unwrap();
        }
        writeln!(s, "{}", self.cells.len()).unwrap();
        for c in &self.cells {
            writeln!(s, "{} {} {} {}", c[0], c[1], c[2], c[3]).unwrap();
        }
        for (f, m) in &self.markers {
            let tag = match m {
                Marker::Dirichlet => 'D',
                Marker::Neumann => 'N',
            };
            writeln!(s, "{tag} {} {} {}", f[0], f[1], f[2]).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let err = |line: usize, message: String| Error::ParseError { line, message };
        let mut next = |what: &str| lines.next().ok_or_else(|| err(text.lines().count() + 1, format!("missing {what}")));
        let (ln, header) = next("header")?;
        if header != HEADER {
            return Err(err(ln, format!("expected `{HEADER}`")));
        }
        let (ln, l) = next("vertex count")?;
        let nv: usize = l.parse().map_err(|_| err(ln, format!("bad vertex count `{l}`")))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = next("vertex")?;
            let x = parse_fields::<f64>(l, 3).map_err(|m| err(ln, m))?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(err(ln, "non-finite coordinate".into()));
            }
            vertices.push(Point::new(x[0], x[1], x[2]));
        }
        let (ln, l) = next("cell count")?;
        let nc: usize = l.parse().map_err(|_| err(ln, format!("bad cell count `{l}`")))?;
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (ln, l) = next("cell")?;
            let c = parse_fields::<usize>(l, 4).map_err(|m| err(ln, m))?;
            if let Some(v) = c.iter().find(|&&v| v >= nv) {
                return Err(err(ln, format!("vertex index {v} out of range")));
            }
            cells.push([c[0], c[1], c[2], c[3]]);
        }
        let mut markers = BTreeMap::new();
        for (ln, l) in lines {
            let (tag, rest) = l.split_at(1);
            let m = match tag {
                "D" => Marker::Dirichlet,
                "N" => Marker::Neumann,
                _ => return Err(err(ln, format!("expected a `D` or `N` marker line, found `{l}`"))),
            };
            let f = parse_fields::<usize>(rest, 3).map_err(|m| err(ln, m))?;
            let key = sorted3([f[0], f[1], f[2]]);
            if markers.insert(key, m).is_some() {
                return Err(err(ln, format!("face {key:?} marked twice")));
            }
        }
        TetMesh::new(vertices, cells, markers)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.write())?)
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str, n: usize) -> std::result::Result<Vec<T>, String> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != n {
        return Err(format!("expected {n} fields, found {}", parts.len()));
    }
    parts.iter().map(|p| p.parse::<T>().map_err(|_| format!("cannot parse `{p}`"))).collect()
}

/// Star of one mesh vertex.
#[derive(Debug, Clone)]
pub struct VertexPatch {
    pub vertex: usize,
    pub patch: PatchMesh,
    /// Global cell behind each patch cell.
    pub cells: Vec<usize>,
    /// Global vertex id of each local vertex.
    pub global: Vec<usize>,
}

/// Kuhn subdivision of the unit cube into `6 n^3` tetrahedra; boundary faces are marked
/// by `marker(centroid, outward normal)`.
pub fn kuhn_cube(n: usize, marker: impl Fn(&Point, &Point) -> Marker) -> TetMesh {
    assert!(n >= 1);
    let m = n + 1;
    let id = |i: usize, j: usize, k: usize| i + m * (j + m * k);
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity(m * m * m);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                vertices.push(Point::new(i as f64 * h, j as f64 * h, k as f64 * h));
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut cells = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut tet = [id(c[0], c[1], c[2]); 4];
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[s + 1] = id(c[0], c[1], c[2]);
                    }
                    tet.sort_unstable();
                    cells.push(tet);
                }
            }
        }
    }
    let mut count: HashMap<[usize; 3], usize> = HashMap::new();
    for c in &cells {
        for fv in FACE_VERTICES {
            *count.entry(fv.map(|i| c[i])).or_default() += 1;
        }
    }
    let mut markers = BTreeMap::new();
    for (f, c) in count {
        if c == 1 {
            let x = f.iter().map(|&v| vertices[v]).sum::<Point>() / 3.0;
            let normal = outward_cube_normal(&x);
            markers.insert(f, marker(&x, &normal));
        }
    }
    TetMesh::new(vertices, cells, markers).expect("Kuhn mesh is valid")
}

/// Outward unit normal of the unit cube at a boundary point.
pub fn outward_cube_normal(x: &Point) -> Point {
    let tol = 1e-12;
    for a in 0..3 {
        if x[a].abs() < tol {
            return -Point::ith(a, 1.0);
        }
        if (x[a] - 1.0).abs() < tol {
            return Point::ith(a, 1.0);
        }
    }
    panic!("point {x:?} is not on the unit cube boundary")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::PatchKind;

    fn all_dirichlet(_: &Point, _: &Point) -> Marker {
        Marker::Dirichlet
    }

    #[test]
    fn kuhn_mesh_counts_and_volume() {
        for n in 1..=3 {
            let m = kuhn_cube(n, all_dirichlet);
            assert_eq!(m.cells.len(), 6 * n * n * n);
            assert_eq!(m.markers.len(), 12 * n * n);
            assert!((m.volume() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = kuhn_cube(1, |x, _| if x.z < 1e-12 { Marker::Neumann } else { Marker::Dirichlet });
        let text = m.write();
        let back = TetMesh::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.write(), text);
    }

    #[test]
    fn single_tet_file() {
        let text = "tetmesh v1\n4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1\n0 1 2 3\nD 1 2 3\nD 0 2 3\nD 0 1 3\nD 0 1 2\n";
        let m = TetMesh::parse(text).unwrap();
        assert_eq!(m.cells.len(), 1);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "tetmesh v1\n4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1\n0 1 2 3 4\n";
        assert!(matches!(TetMesh::parse(text), Err(Error::ParseError { line: 8, .. })));
        assert!(matches!(TetMesh::parse("tetmesh v2\n"), Err(Error::ParseError { line: 1, .. })));
        let unmarked = "tetmesh v1\n4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1\n0 1 2 3\nD 1 2 3\n";
        assert!(matches!(TetMesh::parse(unmarked), Err(Error::UnmarkedBoundaryFace(_))));
    }

    #[test]
    fn three_cells_on_a_face_are_rejected() {
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
            Point::new(0.0, 0.0, -1.0),
            Point::new(1.0, 1.0, 1.0),
        ];
        let cells = vec![[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]];
        assert!(matches!(TetMesh::new(v, cells, BTreeMap::new()), Err(Error::NonManifold(_))));
    }

    #[test]
    fn vertex_patches_of_kuhn_mesh() {
        let m = kuhn_cube(2, all_dirichlet);
        let center = 1 + 3 * (1 + 3);
        let vp = m.vertex_patch(center).unwrap();
        assert_eq!(vp.patch.kind, PatchKind::Interior);
        assert_eq!(vp.patch.cell_count(), 24);
        let corner = m.vertex_patch(0).unwrap();
        assert_eq!(corner.patch.kind, PatchKind::Boundary);
        for v in m.used_vertices() {
            let vp = m.vertex_patch(v).unwrap();
            for (k, &g) in vp.cells.iter().enumerate() {
                assert_eq!(vp.patch.cells[k].map(|l| vp.global[l]), m.cells[g]);
            }
        }
    }
}
