//! Vertex patches: validation, face classification, edge fans and compatibility checks.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fields::{FaceData, HdivData};
use crate::spaces::dubiner::{dim_tet, dim_tri, tri_basis};
use crate::spaces::geometry::{CellGeometry, Point, FACE_VERTICES};
use crate::spaces::quadrature::build_quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatchKind {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaceClass {
    Interior,
    External,
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marker {
    Dirichlet,
    Neumann,
}

/// Faces of the patch with their tags, orientation and neighbors.
///
/// For an interior face, `neighbor.0` is the cell `n_F` points out of, so the jump is
/// `[v]_F = v|_{neighbor.0} - v|_{neighbor.1}`. Boundary faces have `n_F` outward.
#[derive(Debug, Clone)]
pub struct FaceClassification {
    pub faces: Vec<[usize; 3]>,
    pub class: Vec<FaceClass>,
    pub normal: Vec<Vector3<f64>>,
    pub neighbor: Vec<(usize, Option<usize>)>,
    /// Local face index of the face inside each neighbor.
    pub local: Vec<(usize, Option<usize>)>,
    pub area: Vec<f64>,
}

impl FaceClassification {
    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Contribution sign of `cell` to the jump across face `f`.
    pub fn jump_sign(&self, f: usize, cell: usize) -> f64 {
        let (m, p) = self.neighbor[f];
        if m == cell {
            1.0
        } else if p == Some(cell) {
            -1.0
        } else {
            0.0
        }
    }

    pub fn of_class(&self, c: FaceClass) -> Vec<usize> {
        (0..self.len()).filter(|&f| self.class[f] == c).collect()
    }

    /// Reverse the orientation of interior face `f`.
    pub fn flip(&mut self, f: usize) {
        let (m, p) = self.neighbor[f];
        let (lm, lp) = self.local[f];
        let p = p.expect("only interior faces can be flipped");
        self.neighbor[f] = (p, Some(m));
        self.local[f] = (lp.unwrap(), Some(lm));
        self.normal[f] = -self.normal[f];
    }
}

/// Faces and cells around an edge `(a, v)` in a fixed rotation direction.
#[derive(Debug, Clone)]
pub struct EdgeFan {
    pub edge: [usize; 2],
    /// Closed fans: cell k lies between faces k and k+1 (cyclically).
    /// Open fans: one more face than cells, starting and ending on the boundary.
    pub faces: Vec<usize>,
    pub cells: Vec<usize>,
    pub iota: Vec<f64>,
    pub closed: bool,
}

#[derive(Debug, Clone)]
pub struct PatchMesh {
    pub center: usize,
    pub vertices: Vec<Point>,
    /// Cells with vertex ids sorted increasingly (canonical reference map).
    pub cells: Vec<[usize; 4]>,
    pub kind: PatchKind,
    pub geometry: Vec<CellGeometry>,
    pub faces: FaceClassification,
    pub fans: Vec<EdgeFan>,
    /// Face index of local face k of each cell.
    pub cell_faces: Vec<[usize; 4]>,
    pub solid_angle: f64,
}

/// Build options; defaults follow the documented tolerances.
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub volume_floor: f64,
    pub solid_angle_tol: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { volume_floor: 1e-14, solid_angle_tol: 1e-10 }
    }
}

/// Solid angle subtended at `a` by the triangle `(p, q, r)`.
pub fn solid_angle(a: &Point, p: &Point, q: &Point, r: &Point) -> f64 {
    let (x, y, z) = (p - a, q - a, r - a);
    let (lx, ly, lz) = (x.norm(), y.norm(), z.norm());
    let num = x.dot(&y.cross(&z)).abs();
    let den = lx * ly * lz + x.dot(&y) * lz + x.dot(&z) * ly + y.dot(&z) * lx;
    2.0 * num.atan2(den)
}

pub fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

pub fn build_patch(
    cells: &[[usize; 4]],
    coords: &[Point],
    center: usize,
    markers: &HashMap<[usize; 3], Marker>,
) -> Result<PatchMesh> {
    build_patch_with(cells, coords, center, markers, BuildOptions::default())
}

pub fn build_patch_with(
    cells: &[[usize; 4]],
    coords: &[Point],
    center: usize,
    markers: &HashMap<[usize; 3], Marker>,
    opts: BuildOptions,
) -> Result<PatchMesh> {
    if cells.is_empty() {
        return Err(Error::NonConformingPatch("empty patch".into()));
    }
    let mut sorted_cells = Vec::with_capacity(cells.len());
    let mut geometry = Vec::with_capacity(cells.len());
    for (i, c) in cells.iter().enumerate() {
        if !c.contains(&center) {
            return Err(Error::NonConformingPatch(format!("cell {i} does not contain the center")));
        }
        let mut s = *c;
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::NonConformingPatch(format!("cell {i} repeats a vertex")));
        }
        for &v in &s {
            let x = coords.get(v).ok_or_else(|| Error::NonConformingPatch(format!("vertex {v} out of range")))?;
            if !x.iter().all(|c| c.is_finite()) {
                return Err(Error::NonConformingPatch(format!("vertex {v} has non-finite coordinates")));
            }
        }
        let pts = [coords[s[0]], coords[s[1]], coords[s[2]], coords[s[3]]];
        let mut diam: f64 = 0.0;
        for a in 0..4 {
            for b in a + 1..4 {
                diam = diam.max((pts[a] - pts[b]).norm());
            }
        }
        let vol = ((pts[1] - pts[0]).cross(&(pts[2] - pts[0]))).dot(&(pts[3] - pts[0])).abs() / 6.0;
        let floor = opts.volume_floor * diam.powi(3);
        // also rejects NaN coordinates
        if !(vol > floor) {
            return Err(Error::DegenerateCell { cell: i, volume: vol, floor });
        }
        geometry.push(CellGeometry::new(pts).map_err(|_| Error::DegenerateCell { cell: i, volume: vol, floor })?);
        sorted_cells.push(s);
    }
    {
        let mut seen = std::collections::HashSet::new();
        for c in &sorted_cells {
            if !seen.insert(*c) {
                return Err(Error::NonConformingPatch("duplicate cell".into()));
            }
        }
    }

    // collect faces
    let mut face_map: BTreeMap<[usize; 3], Vec<(usize, usize)>> = BTreeMap::new();
    for (ci, c) in sorted_cells.iter().enumerate() {
        for (k, fv) in FACE_VERTICES.iter().enumerate() {
            face_map.entry([c[fv[0]], c[fv[1]], c[fv[2]]]).or_default().push((ci, k));
        }
    }
    for (f, m) in markers {
        let s = sorted3(*f);
        if !s.contains(&center) {
            return Err(Error::DanglingBoundaryMarker(s));
        }
        match face_map.get(&s) {
            Some(v) if v.len() == 1 => {}
            Some(_) => {
                return Err(Error::NonConformingPatch(format!("marker {m:?} on interior face {s:?}")));
            }
            None => return Err(Error::DanglingBoundaryMarker(s)),
        }
    }
    let mut faces = Vec::new();
    let mut class = Vec::new();
    let mut normal = Vec::new();
    let mut neighbor = Vec::new();
    let mut local = Vec::new();
    let mut area = Vec::new();
    let mut cell_faces = vec![[usize::MAX; 4]; sorted_cells.len()];
    for (fv, owners) in &face_map {
        let fi = faces.len();
        if owners.len() > 2 {
            return Err(Error::NonConformingPatch(format!("face {fv:?} shared by {} cells", owners.len())));
        }
        let contains_a = fv.contains(&center);
        let (c0, k0) = owners[0];
        let tag = if owners.len() == 2 {
            if !contains_a {
                return Err(Error::NonConformingPatch(format!("shared face {fv:?} misses the center")));
            }
            FaceClass::Interior
        } else if !contains_a {
            FaceClass::External
        } else {
            match markers.get(fv) {
                Some(Marker::Dirichlet) => FaceClass::Dirichlet,
                _ => FaceClass::Neumann,
            }
        };
        faces.push(*fv);
        class.push(tag);
        normal.push(geometry[c0].face_normals[k0]);
        area.push(geometry[c0].face_areas[k0]);
        cell_faces[c0][k0] = fi;
        if owners.len() == 2 {
            let (c1, k1) = owners[1];
            cell_faces[c1][k1] = fi;
            neighbor.push((c0, Some(c1)));
            local.push((k0, Some(k1)));
        } else {
            neighbor.push((c0, None));
            local.push((k0, None));
        }
    }
    let classification = FaceClassification { faces, class, normal, neighbor, local, area };

    // dual graph connectivity through interior faces
    {
        let n = sorted_cells.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let nx = p[y];
                p[y] = r;
                y = nx;
            }
            r
        }
        for f in 0..classification.len() {
            if let (a, Some(b)) = classification.neighbor[f] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
        let r0 = find(&mut parent, 0);
        if (0..n).any(|i| find(&mut parent, i) != r0) {
            return Err(Error::NonConformingPatch("cells are not connected through faces".into()));
        }
    }

    let mut others: Vec<usize> = sorted_cells.iter().flatten().copied().filter(|&v| v != center).collect();
    others.sort_unstable();
    others.dedup();
    let mut fans = Vec::with_capacity(others.len());
    for &v in &others {
        fans.push(build_fan(center, v, &sorted_cells, &classification, coords)?);
    }

    let a = coords[center];
    let mut omega = 0.0;
    for c in &sorted_cells {
        let o: Vec<usize> = c.iter().copied().filter(|&v| v != center).collect();
        omega += solid_angle(&a, &coords[o[0]], &coords[o[1]], &coords[o[2]]);
    }
    let all_closed = fans.iter().all(|f| f.closed);
    let full = (omega - 4.0 * PI).abs() <= opts.solid_angle_tol * 4.0 * PI;
    let kind = match (all_closed, full) {
        (true, true) => PatchKind::Interior,
        (false, false) => PatchKind::Boundary,
        (true, false) => {
            return Err(Error::NonConformingPatch(format!(
                "closed patch with solid angle {omega} != 4 pi (overlapping cells)"
            )))
        }
        (false, true) => {
            return Err(Error::NonConformingPatch("open patch covering a full solid angle".into()));
        }
    };
    if kind == PatchKind::Boundary && !(omega > 0.0 && omega < 4.0 * PI) {
        return Err(Error::NonConformingPatch(format!("boundary solid angle {omega} out of range")));
    }
    Ok(PatchMesh {
        center,
        vertices: coords.to_vec(),
        cells: sorted_cells,
        kind,
        geometry,
        faces: classification,
        fans,
        cell_faces,
        solid_angle: omega,
    })
}

fn build_fan(
    a: usize,
    v: usize,
    cells: &[[usize; 4]],
    fc: &FaceClassification,
    coords: &[Point],
) -> Result<EdgeFan> {
    let fan_faces: Vec<usize> = (0..fc.len()).filter(|&f| fc.faces[f].contains(&a) && fc.faces[f].contains(&v)).collect();
    let fan_cells: Vec<usize> = (0..cells.len()).filter(|&c| cells[c].contains(&a) && cells[c].contains(&v)).collect();
    let t = coords[v] - coords[a];
    let third = |f: usize| -> Vector3<f64> {
        let w = fc.faces[f].iter().copied().find(|&x| x != a && x != v).unwrap();
        coords[w] - coords[a]
    };
    let faces_of_cell = |c: usize| -> Vec<usize> {
        fan_faces.iter().copied().filter(|&f| fc.neighbor[f].0 == c || fc.neighbor[f].1 == Some(c)).collect()
    };
    for &c in &fan_cells {
        if faces_of_cell(c).len() != 2 {
            return Err(Error::NonConformingPatch(format!("cell {c} has an inconsistent fan around ({a},{v})")));
        }
    }
    let boundary: Vec<usize> = fan_faces.iter().copied().filter(|&f| fc.neighbor[f].1.is_none()).collect();
    let closed = boundary.is_empty();
    if !closed && boundary.len() != 2 {
        return Err(Error::NonConformingPatch(format!("fan around ({a},{v}) is not a single sheet")));
    }
    let other_cell = |f: usize, c: usize| -> Option<usize> {
        let (m, p) = fc.neighbor[f];
        if m == c {
            p
        } else {
            Some(m)
        }
    };
    let walk = |start_face: usize, start_cell: usize| -> (Vec<usize>, Vec<usize>) {
        let mut fs = vec![start_face];
        let mut cs = Vec::new();
        let mut cell = Some(start_cell);
        let mut face = start_face;
        while let Some(c) = cell {
            if cs.contains(&c) {
                break;
            }
            cs.push(c);
            let next = faces_of_cell(c).into_iter().find(|&f| f != face).unwrap();
            if closed && next == start_face {
                break;
            }
            fs.push(next);
            face = next;
            cell = other_cell(next, c);
        }
        (fs, cs)
    };
    let orient_ok = |fs: &[usize]| -> bool {
        let d0 = third(fs[0]);
        let d1 = third(fs[1]);
        t.dot(&d0.cross(&d1)) > 0.0
    };
    let (faces, cells_order) = if closed {
        let f0 = fan_faces[0];
        let c0 = fc.neighbor[f0].0;
        let (mut fs, mut cs) = walk(f0, c0);
        if fs.len() < 2 || !orient_ok(&fs) {
            let c1 = fc.neighbor[f0].1.unwrap();
            let r = walk(f0, c1);
            fs = r.0;
            cs = r.1;
        }
        (fs, cs)
    } else {
        let mut best = None;
        for &b in &boundary {
            let (fs, cs) = walk(b, fc.neighbor[b].0);
            if orient_ok(&fs) {
                best = Some((fs, cs));
                break;
            }
        }
        best.ok_or_else(|| Error::NonConformingPatch(format!("cannot orient fan around ({a},{v})")))?
    };
    if cells_order.len() != fan_cells.len() || (closed && faces.len() != fan_faces.len()) {
        return Err(Error::NonConformingPatch(format!("fan around edge ({a},{v}) is disconnected")));
    }
    if closed && !orient_ok(&faces) {
        return Err(Error::NonConformingPatch(format!("fan around ({a},{v}) folds over")));
    }
    let iota = faces
        .iter()
        .map(|&f| {
            let s = fc.normal[f].dot(&t.cross(&third(f)));
            if s >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok(EdgeFan { edge: [a, v], faces, cells: cells_order, iota, closed })
}

impl PatchMesh {
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn center_point(&self) -> Point {
        self.vertices[self.center]
    }

    pub fn faces_of(&self, c: FaceClass) -> Vec<usize> {
        self.faces.of_class(c)
    }

    pub fn has_class(&self, c: FaceClass) -> bool {
        self.faces.class.contains(&c)
    }

    /// Local index of the cell vertex `v`.
    pub fn local_vertex(&self, cell: usize, v: usize) -> Option<usize> {
        self.cells[cell].iter().position(|&x| x == v)
    }

    /// External face of a cell (the face opposite the center), if the cell has one.
    pub fn external_face(&self, cell: usize) -> Option<usize> {
        let k = self.local_vertex(cell, self.center)?;
        let f = self.cell_faces[cell][k];
        (self.faces.class[f] == FaceClass::External).then_some(f)
    }

    pub fn interior_faces_of_cell(&self, cell: usize) -> Vec<usize> {
        self.cell_faces[cell].iter().copied().filter(|&f| self.faces.class[f] == FaceClass::Interior).collect()
    }

    /// Total volume of the patch.
    pub fn volume(&self) -> f64 {
        self.geometry.iter().map(|g| g.volume()).sum()
    }

    pub fn diameter(&self) -> f64 {
        let vs: Vec<usize> = {
            let mut v: Vec<usize> = self.cells.iter().flatten().copied().collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let mut d: f64 = 0.0;
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                d = d.max((self.vertices[vs[i]] - self.vertices[vs[j]]).norm());
            }
        }
        d
    }

    /// Vertices of the patch in increasing id order.
    pub fn used_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Regularity threshold above which a patch is flagged as degenerate.
pub const REGULARITY_WARNING: f64 = 1e3;

/// `max_K diam(K) / diam(B_K)` with `B_K` the largest inscribed ball.
pub fn shape_regularity(patch: &PatchMesh) -> f64 {
    patch.geometry.iter().map(|g| g.diameter() / (2.0 * g.inradius())).fold(0.0, f64::max)
}

/// Evaluate a face polynomial at face parameters (s, t).
pub fn eval_face(degree: usize, coeffs: &[f64], s: f64, t: f64) -> f64 {
    tri_basis(degree, [s, t]).iter().zip(coeffs).map(|(b, c)| b.v * c).sum()
}

/// Face parameters of the point `(1-x) * lo + x * hi` on the edge `(lo, hi)` of `face`.
pub fn edge_point_params(face: &[usize; 3], lo: usize, hi: usize, x: f64) -> (f64, f64) {
    let mut mu = [0.0; 3];
    for (i, &v) in face.iter().enumerate() {
        if v == lo {
            mu[i] += 1.0 - x;
        }
        if v == hi {
            mu[i] += x;
        }
    }
    (mu[1], mu[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H1Mode {
    Interior,
    BoundaryDirichlet,
    BoundaryNeumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdivMode {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    /// Largest |r_F| on the parts of faces touching the external boundary.
    pub boundary_defect: f64,
    pub worst_face: Option<usize>,
    /// Largest oriented edge sum.
    pub edge_defect: f64,
    pub worst_edge: Option<[usize; 2]>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Faces that carry H1 data in the given mode.
pub fn h1_data_faces(patch: &PatchMesh, mode: H1Mode) -> Vec<usize> {
    (0..patch.faces.len())
        .filter(|&f| match patch.faces.class[f] {
            FaceClass::Interior => true,
            FaceClass::Dirichlet => mode == H1Mode::BoundaryDirichlet,
            _ => false,
        })
        .collect()
}

pub fn check_compatibility_h1(patch: &PatchMesh, r: &FaceData, mode: H1Mode) -> Result<CompatibilityReport> {
    if r.degree < 1 {
        return Err(Error::DegreeMismatch { expected: 1, found: r.degree });
    }
    if r.values.len() != patch.faces.len() || r.values.iter().any(|v| v.len() != dim_tri(r.degree)) {
        return Err(Error::DegreeMismatch { expected: r.degree, found: r.values.first().map_or(0, |v| v.len()) });
    }
    let q = r.degree;
    let rule = build_quadrature(1, 2 * q + 2);
    let data_faces = h1_data_faces(patch, mode);
    let scale = r.max_abs().max(1.0);
    let mut boundary_defect: f64 = 0.0;
    let mut worst_face = None;
    let a = patch.center;
    for &f in &data_faces {
        let fv = patch.faces.faces[f];
        let others: Vec<usize> = fv.iter().copied().filter(|&x| x != a).collect();
        let (lo, hi) = (others[0], others[1]);
        let mut pts: Vec<f64> = rule.points.iter().map(|p| p[0]).collect();
        pts.push(0.0);
        pts.push(1.0);
        for x in pts {
            let (s, t) = edge_point_params(&fv, lo, hi, x);
            let val = eval_face(q, r.values[f].as_slice(), s, t).abs();
            if val > boundary_defect {
                boundary_defect = val;
                worst_face = Some(f);
            }
        }
    }
    let mut edge_defect: f64 = 0.0;
    let mut worst_edge = None;
    for fan in &patch.fans {
        let relevant = match mode {
            H1Mode::Interior | H1Mode::BoundaryNeumann => fan.closed,
            H1Mode::BoundaryDirichlet => {
                fan.closed || fan.faces.iter().all(|&f| patch.faces.class[f] != FaceClass::Neumann)
            }
        };
        if !relevant {
            continue;
        }
        let (lo, hi) = (fan.edge[0].min(fan.edge[1]), fan.edge[0].max(fan.edge[1]));
        let mut pts: Vec<f64> = rule.points.iter().map(|p| p[0]).collect();
        pts.push(0.0);
        pts.push(1.0);
        for x in pts {
            let mut sum = 0.0;
            for (k, &f) in fan.faces.iter().enumerate() {
                if !data_faces.contains(&f) {
                    continue;
                }
                let fv = patch.faces.faces[f];
                let (s, t) = edge_point_params(&fv, lo, hi, x);
                sum += fan.iota[k] * eval_face(q, r.values[f].as_slice(), s, t);
            }
            if sum.abs() > edge_defect {
                edge_defect = sum.abs();
                worst_edge = Some(fan.edge);
            }
        }
    }
    let tolerance = 1e-10 * scale;
    Ok(CompatibilityReport {
        boundary_defect,
        worst_face,
        edge_defect,
        worst_edge,
        tolerance,
        passed: boundary_defect <= tolerance && edge_defect <= tolerance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdivCompatibility {
    /// `sum_K (r_K,1)_K - sum_F (r_F,1)_F`
    pub defect: f64,
    pub tolerance: f64,
    pub waived: bool,
    pub passed: bool,
}

/// Integral of a cell polynomial given by modal coefficients.
pub fn cell_mean_integral(g: &CellGeometry, coeffs: &[f64]) -> f64 {
    g.abs_det * coeffs[0] / 6f64.sqrt()
}

/// Integral of a face polynomial given by face-basis coefficients.
pub fn face_integral(area: f64, coeffs: &[f64]) -> f64 {
    2f64.sqrt() * area * coeffs[0]
}

/// Faces that carry H(div) data: interior, external and Neumann faces.
pub fn hdiv_data_faces(patch: &PatchMesh) -> Vec<usize> {
    (0..patch.faces.len()).filter(|&f| patch.faces.class[f] != FaceClass::Dirichlet).collect()
}

pub fn check_compatibility_hdiv(patch: &PatchMesh, data: &HdivData, mode: HdivMode) -> Result<HdivCompatibility> {
    let q = data.degree();
    if data.cells.degree != q {
        return Err(Error::DegreeMismatch { expected: q, found: data.cells.degree });
    }
    if data.faces.values.len() != patch.faces.len()
        || data.cells.values.len() != patch.cell_count()
        || data.cells.values.iter().any(|v| v.len() != dim_tet(q))
    {
        return Err(Error::DegreeMismatch { expected: q, found: data.cells.values.first().map_or(0, |v| v.len()) });
    }
    let mut defect = 0.0;
    let mut scale: f64 = 0.0;
    for (c, g) in patch.geometry.iter().enumerate() {
        let v = cell_mean_integral(g, data.cells.values[c].as_slice());
        scale = scale.max(g.volume() * data.cells.values[c].amax());
        defect += v;
    }
    for f in hdiv_data_faces(patch) {
        let v = face_integral(patch.faces.area[f], data.faces.values[f].as_slice());
        scale = scale.max(patch.faces.area[f] * data.faces.values[f].amax());
        defect -= v;
    }
    let waived = mode == HdivMode::Boundary && patch.has_class(FaceClass::Dirichlet);
    let tolerance = 1e-10 * scale.max(1e-300).max(patch.volume());
    Ok(HdivCompatibility { defect, tolerance, waived, passed: waived || defect.abs() <= tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn cube_star_counts() {
        let p = fixtures::cube_star();
        assert_eq!(p.kind, PatchKind::Interior);
        assert_eq!(p.faces_of(FaceClass::Interior).len(), 18);
        assert_eq!(p.faces_of(FaceClass::External).len(), 12);
        assert!((p.solid_angle - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn single_cell_boundary_patch() {
        let coords = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        let mut markers = HashMap::new();
        markers.insert([0, 1, 2], Marker::Dirichlet);
        let p = build_patch(&[[0, 1, 2, 3]], &coords, 0, &markers).unwrap();
        assert_eq!(p.kind, PatchKind::Boundary);
        assert!(p.faces_of(FaceClass::Interior).is_empty());
        assert_eq!(p.faces_of(FaceClass::External).len(), 1);
        assert_eq!(p.faces_of(FaceClass::Dirichlet).len() + p.faces_of(FaceClass::Neumann).len(), 3);
    }

    #[test]
    fn cells_sharing_only_an_edge_are_rejected() {
        let coords = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
            Point::new(0.0, -1.0, 0.0),
            Point::new(0.0, 0.0, -1.0),
        ];
        let r = build_patch(&[[0, 1, 2, 3], [0, 1, 4, 5]], &coords, 0, &HashMap::new());
        assert!(matches!(r, Err(Error::NonConformingPatch(_))));
    }

    #[test]
    fn dangling_marker_is_rejected() {
        let coords = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        let mut markers = HashMap::new();
        markers.insert([1, 2, 3], Marker::Dirichlet);
        let r = build_patch(&[[0, 1, 2, 3]], &coords, 0, &markers);
        assert!(matches!(r, Err(Error::DanglingBoundaryMarker(_))));
    }

    #[test]
    fn degenerate_cell_is_rejected() {
        let coords = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(1.0, 1.0, 1e-16),
        ];
        let r = build_patch(&[[0, 1, 2, 3]], &coords, 0, &HashMap::new());
        assert!(matches!(r, Err(Error::DegenerateCell { .. })));
    }

    #[test]
    fn regular_tetrahedra_regularity() {
        let s = 1.0 / 2f64.sqrt();
        let coords = vec![
            Point::new(1.0, 0.0, -s),
            Point::new(-1.0, 0.0, -s),
            Point::new(0.0, 1.0, s),
            Point::new(0.0, -1.0, s),
        ];
        let p = build_patch(&[[0, 1, 2, 3]], &coords, 0, &HashMap::new()).unwrap();
        assert!((shape_regularity(&p) - 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sliver_is_flagged() {
        let coords = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.3, 0.3, 1e-8),
        ];
        let p = build_patch(&[[0, 1, 2, 3]], &coords, 0, &HashMap::new()).unwrap();
        assert!(shape_regularity(&p) > REGULARITY_WARNING);
    }

    #[test]
    fn fan_orientation_products_are_invariant_under_cell_permutation() {
        let p = fixtures::cube_star();
        let mut cells = p.cells.clone();
        cells.reverse();
        cells.swap(0, 5);
        let q = build_patch(&cells, &p.vertices, p.center, &HashMap::new()).unwrap();
        assert_eq!(p.faces.faces, q.faces.faces);
        assert_eq!(p.faces.class, q.faces.class);
        for (fp, fq) in p.fans.iter().zip(&q.fans) {
            assert_eq!(fp.edge, fq.edge);
            // iota times the orientation of n_F against the sorted-first cell is canonical
            let canon = |pm: &PatchMesh, fan: &EdgeFan| -> Vec<(usize, f64)> {
                let mut v: Vec<(usize, f64)> = fan
                    .faces
                    .iter()
                    .zip(&fan.iota)
                    .map(|(&f, &i)| {
                        let (m, pl) = pm.faces.neighbor[f];
                        let first = match pl {
                            Some(pl) if pm.cells[pl] < pm.cells[m] => -1.0,
                            _ => 1.0,
                        };
                        (f, i * first)
                    })
                    .collect();
                v.sort_by(|a, b| a.0.cmp(&b.0));
                v
            };
            assert_eq!(canon(&p, fp), canon(&q, fq));
        }
    }
}
