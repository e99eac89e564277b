//! Colored refinements of a patch around an edge fan (two colors) or around the
//! center vertex (three colors). Refined cells keep the center (or the edge) and
//! have their remaining vertices on the patch boundary; every refined cell sees
//! each color exactly once, so neighboring cells carry opposite orientation signs.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use nalgebra::{DMatrix, Matrix3, Vector2};

use crate::error::{Error, Result};
use crate::spaces::geometry::Point;
use crate::topology::{PatchKind, PatchMesh};

#[derive(Debug, Clone)]
pub struct ColoredRefinement {
    /// Original patch vertices followed by inserted boundary points.
    pub vertices: Vec<Point>,
    pub center: usize,
    /// The refined edge for a two-color refinement.
    pub edge: Option<[usize; 2]>,
    pub cells: Vec<[usize; 4]>,
    /// Original cell containing each refined cell.
    pub parent: Vec<usize>,
    /// Colors 1..=k of refined boundary vertices.
    pub colors: HashMap<usize, u8>,
    /// Index of the preserved anchor cell among `cells`.
    pub anchor: usize,
    /// Orientation sign of each refined cell with respect to its colored vertices.
    pub eps: Vec<f64>,
}

fn det3(a: Point, b: Point, c: Point) -> f64 {
    Matrix3::from_columns(&[a, b, c]).determinant()
}

impl ColoredRefinement {
    pub fn volume(&self, cell: usize) -> f64 {
        let c = self.cells[cell];
        let p = |i: usize| self.vertices[c[i]];
        det3(p(1) - p(0), p(2) - p(0), p(3) - p(0)).abs() / 6.0
    }

    /// Colored vertices of a cell ordered by color.
    pub fn colored_vertices(&self, cell: usize) -> Vec<usize> {
        let mut v: Vec<(u8, usize)> =
            self.cells[cell].iter().filter_map(|x| self.colors.get(x).map(|c| (*c, *x))).collect();
        v.sort_unstable();
        v.into_iter().map(|x| x.1).collect()
    }

    /// Pairs of refined cells sharing a triangle, with the shared triangle.
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize, [usize; 3])> {
        let mut by_face: BTreeMap<[usize; 3], Vec<usize>> = BTreeMap::new();
        for (k, c) in self.cells.iter().enumerate() {
            for skip in 0..4 {
                let mut f: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| c[i]).collect();
                f.sort_unstable();
                by_face.entry([f[0], f[1], f[2]]).or_default().push(k);
            }
        }
        by_face
            .into_iter()
            .filter(|(_, v)| v.len() == 2)
            .map(|(f, v)| (v[0], v[1], f))
            .collect()
    }
}

/// Violations of the coloring invariants of a refinement with `k` colors: the cells
/// partition their parents, each cell carries colors `1..=k` once, neighbors across a
/// shared colored face have opposite orientation signs, the anchor cell is preserved,
/// and every vertex of the colored surface (k = 3) or the closed fan (k = 2) has even degree.
pub fn verify_coloring(r: &ColoredRefinement, patch: &PatchMesh, k: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut parents: Vec<usize> = r.parent.clone();
    parents.sort_unstable();
    parents.dedup();
    let expected: f64 = parents.iter().map(|&c| patch.geometry[c].volume()).sum();
    let total: f64 = (0..r.cells.len()).map(|c| r.volume(c)).sum();
    if (total - expected).abs() > 1e-12 * expected.max(1.0) {
        out.push(format!("refined volume {total} differs from parent volume {expected}"));
    }
    let want: Vec<u8> = (1..=k as u8).collect();
    for c in 0..r.cells.len() {
        let mut cs: Vec<u8> = r.cells[c].iter().filter_map(|x| r.colors.get(x).copied()).collect();
        cs.sort_unstable();
        if cs != want {
            out.push(format!("cell {c} carries colors {cs:?}"));
        }
        if r.eps[c].abs() != 1.0 {
            out.push(format!("cell {c} has orientation sign {}", r.eps[c]));
        }
    }
    let shared = |f: &[usize; 3]| match r.edge {
        Some(e) => f.contains(&e[0]) && f.contains(&e[1]),
        None => f.contains(&r.center),
    };
    for (x, y, f) in r.adjacent_pairs() {
        if shared(&f) && r.eps[x] + r.eps[y] != 0.0 {
            out.push(format!("cells {x} and {y} share {f:?} with equal signs"));
        }
    }
    if r.cells[r.anchor] != patch.cells[r.parent[r.anchor]] {
        out.push("anchor cell not preserved".into());
    }
    match r.edge {
        None => {
            let mut degree: HashMap<usize, usize> = HashMap::new();
            for c in &r.cells {
                for &v in c.iter().filter(|&&v| v != r.center) {
                    *degree.entry(v).or_default() += 1;
                }
            }
            let mut odd: Vec<usize> = degree.into_iter().filter(|(_, d)| d % 2 == 1).map(|(v, _)| v).collect();
            odd.sort_unstable();
            if !odd.is_empty() {
                out.push(format!("odd surface degree at {odd:?}"));
            }
        }
        Some(e) => {
            let mut count: BTreeMap<[usize; 3], usize> = BTreeMap::new();
            for c in &r.cells {
                for skip in 0..4 {
                    let mut f: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| c[i]).collect();
                    f.sort_unstable();
                    let f = [f[0], f[1], f[2]];
                    if f.contains(&e[0]) && f.contains(&e[1]) {
                        *count.entry(f).or_default() += 1;
                    }
                }
            }
            let closed = count.values().all(|&n| n == 2);
            if closed && r.cells.len() % 2 == 1 {
                out.push(format!("closed fan of odd length {}", r.cells.len()));
            }
        }
    }
    out
}

/// Two-color refinement of the fan around `edge`, preserving `anchor` (an original cell).
pub fn two_color_refine(patch: &PatchMesh, edge: [usize; 2], anchor: usize) -> Result<ColoredRefinement> {
    let key = if edge[0] == patch.center { edge } else { [edge[1], edge[0]] };
    let fan = patch
        .fans
        .iter()
        .find(|f| f.edge == key)
        .ok_or_else(|| Error::ColoringFailed(format!("no fan around edge {edge:?}")))?;
    if !fan.cells.contains(&anchor) {
        return Err(Error::ColoringFailed(format!("anchor {anchor} is not in the fan")));
    }
    let (a, v) = (key[0], key[1]);
    let third = |f: usize| -> usize {
        patch.faces.faces[f].iter().copied().find(|&x| x != a && x != v).unwrap()
    };
    let mut ws: Vec<usize> = fan.faces.iter().map(|&f| third(f)).collect();
    let mut cell_parent: Vec<usize> = fan.cells.clone();
    let mut vertices = patch.vertices.clone();
    if fan.closed && fan.cells.len() % 2 == 1 {
        // split the lexicographically smallest non-anchor cell through the edge
        let k = (0..fan.cells.len())
            .filter(|&k| fan.cells[k] != anchor)
            .min_by_key(|&k| patch.cells[fan.cells[k]])
            .unwrap();
        let n = ws.len();
        let m = (vertices[ws[k]] + vertices[ws[(k + 1) % n]]) / 2.0;
        vertices.push(m);
        ws.insert(k + 1, vertices.len() - 1);
        cell_parent.insert(k + 1, fan.cells[k]);
    }
    let ncell = cell_parent.len();
    let mut colors = HashMap::new();
    for (i, &w) in ws.iter().enumerate() {
        colors.insert(w, if i % 2 == 0 { 1u8 } else { 2u8 });
    }
    let mut cells = Vec::with_capacity(ncell);
    let mut eps = Vec::with_capacity(ncell);
    let mut anchor_idx = None;
    for k in 0..ncell {
        let (w0, w1) = (ws[k], ws[(k + 1) % ws.len()]);
        let (c1, c2) = if colors[&w0] == 1 { (w0, w1) } else { (w1, w0) };
        let mut c = [a, v, w0, w1];
        c.sort_unstable();
        if cell_parent[k] == anchor && patch.cells[anchor] == c {
            anchor_idx = Some(k);
        }
        cells.push(c);
        let o = vertices[a];
        eps.push(det3(vertices[v] - o, vertices[c1] - o, vertices[c2] - o).signum());
    }
    Ok(ColoredRefinement {
        vertices,
        center: a,
        edge: Some([a, v]),
        cells,
        parent: cell_parent,
        colors,
        anchor: anchor_idx.ok_or_else(|| Error::ColoringFailed("anchor was split".into()))?,
        eps,
    })
}

/// Triangulated boundary sphere with per-triangle parent cells.
struct SurfaceMesh {
    points: Vec<Point>,
    tris: Vec<[usize; 3]>,
    parent: Vec<usize>,
}

impl SurfaceMesh {
    fn edge_map(&self) -> HashMap<[usize; 2], Vec<usize>> {
        let mut m: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
        for (t, tri) in self.tris.iter().enumerate() {
            for i in 0..3 {
                let (x, y) = (tri[i], tri[(i + 1) % 3]);
                m.entry([x.min(y), x.max(y)]).or_default().push(t);
            }
        }
        m
    }

    fn neighbors(&self) -> HashMap<usize, HashSet<usize>> {
        let mut n: HashMap<usize, HashSet<usize>> = HashMap::new();
        for tri in &self.tris {
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        n.entry(tri[i]).or_default().insert(tri[j]);
                    }
                }
            }
        }
        n
    }

    fn odd_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> =
            self.neighbors().into_iter().filter(|(_, s)| s.len() % 2 == 1).map(|(k, _)| k).collect();
        v.sort_unstable();
        v
    }

    fn opposite(&self, t: usize, e: [usize; 2]) -> usize {
        self.tris[t].iter().copied().find(|x| !e.contains(x)).unwrap()
    }

    fn bisect(&mut self, e: [usize; 2]) {
        let m = self.points.len();
        self.points.push((self.points[e[0]] + self.points[e[1]]) / 2.0);
        let em = self.edge_map();
        for &t in &em[&e] {
            let tri = self.tris[t];
            let i = (0..3).find(|&i| {
                let (x, y) = (tri[i], tri[(i + 1) % 3]);
                [x.min(y), x.max(y)] == e
            });
            let i = i.unwrap();
            let (x, y, z) = (tri[i], tri[(i + 1) % 3], tri[(i + 2) % 3]);
            self.tris[t] = [x, m, z];
            self.tris.push([m, y, z]);
            self.parent.push(self.parent[t]);
        }
    }
}

/// Three-color refinement of an interior patch, preserving the cell `anchor`.
pub fn three_color_refine(patch: &PatchMesh, anchor: usize) -> Result<ColoredRefinement> {
    if patch.kind != PatchKind::Interior {
        return Err(Error::ColoringFailed("three-color refinement needs an interior patch".into()));
    }
    if anchor >= patch.cell_count() {
        return Err(Error::ColoringFailed(format!("anchor {anchor} out of range")));
    }
    let a = patch.center;
    let o = patch.vertices[a];
    // outward oriented surface triangles
    let tris: Vec<[usize; 3]> = patch
        .cells
        .iter()
        .map(|c| {
            let v: Vec<usize> = c.iter().copied().filter(|&x| x != a).collect();
            let p = |i: usize| patch.vertices[v[i]] - o;
            if det3(p(0), p(1), p(2)) > 0.0 {
                [v[0], v[1], v[2]]
            } else {
                [v[0], v[2], v[1]]
            }
        })
        .collect();
    let star = tris[anchor];
    let side = |x: usize, y: usize| star.contains(&x) && star.contains(&y);

    // barycentric subdivision away from the anchor triangle
    let mut s = SurfaceMesh { points: patch.vertices.clone(), tris: Vec::new(), parent: Vec::new() };
    let mut mid: HashMap<[usize; 2], usize> = HashMap::new();
    for (c, tri) in tris.iter().enumerate() {
        if c == anchor {
            s.tris.push(*tri);
            s.parent.push(c);
            continue;
        }
        let g = s.points.len();
        s.points.push((s.points[tri[0]] + s.points[tri[1]] + s.points[tri[2]]) / 3.0);
        for i in 0..3 {
            let (x, y) = (tri[i], tri[(i + 1) % 3]);
            if side(x, y) {
                s.tris.push([x, y, g]);
                s.parent.push(c);
            } else {
                let key = [x.min(y), x.max(y)];
                let m = *mid.entry(key).or_insert_with(|| {
                    s.points.push((s.points[x] + s.points[y]) / 2.0);
                    s.points.len() - 1
                });
                s.tris.push([x, m, g]);
                s.tris.push([m, y, g]);
                s.parent.push(c);
                s.parent.push(c);
            }
        }
    }

    // even out vertex degrees by bisecting edges between odd vertices
    let mut guard = 0;
    loop {
        let odd = s.odd_vertices();
        if odd.is_empty() {
            break;
        }
        guard += 1;
        if guard > 10_000 || odd.len() % 2 == 1 {
            return Err(Error::ColoringFailed(format!("{} odd vertices remain", odd.len())));
        }
        let path = opposite_path(&s, odd[0], &odd[1..], &side)
            .ok_or_else(|| Error::ColoringFailed("odd vertices cannot be paired".into()))?;
        s.bisect(path);
    }

    tutte_audit(&s, star)?;

    let colors = dsatur(&s).ok_or_else(|| Error::ColoringFailed("no proper 3-coloring".into()))?;

    let mut cells = Vec::with_capacity(s.tris.len());
    let mut eps = Vec::with_capacity(s.tris.len());
    let mut anchor_idx = 0;
    for (t, tri) in s.tris.iter().enumerate() {
        let mut c = [a, tri[0], tri[1], tri[2]];
        c.sort_unstable();
        let mut byc = [0usize; 3];
        for &x in tri {
            byc[(colors[&x] - 1) as usize] = x;
        }
        eps.push(det3(s.points[byc[0]] - o, s.points[byc[1]] - o, s.points[byc[2]] - o).signum());
        if sorted(*tri) == sorted(star) {
            anchor_idx = t;
        }
        cells.push(c);
    }
    Ok(ColoredRefinement {
        vertices: s.points,
        center: a,
        edge: None,
        cells,
        parent: s.parent,
        colors,
        anchor: anchor_idx,
        eps,
    })
}

fn sorted(mut t: [usize; 3]) -> [usize; 3] {
    t.sort_unstable();
    t
}

/// First edge on a shortest path from `from` to any of `targets` in the graph linking
/// the two vertices opposite each bisectable edge.
fn opposite_path(
    s: &SurfaceMesh,
    from: usize,
    targets: &[usize],
    side: &dyn Fn(usize, usize) -> bool,
) -> Option<[usize; 2]> {
    let em = s.edge_map();
    let mut graph: HashMap<usize, Vec<(usize, [usize; 2])>> = HashMap::new();
    let mut keys: Vec<&[usize; 2]> = em.keys().collect();
    keys.sort_unstable();
    for e in keys {
        let ts = &em[e];
        if side(e[0], e[1]) || ts.len() != 2 {
            continue;
        }
        let (p, q) = (s.opposite(ts[0], *e), s.opposite(ts[1], *e));
        graph.entry(p).or_default().push((q, *e));
        graph.entry(q).or_default().push((p, *e));
    }
    let target: HashSet<usize> = targets.iter().copied().collect();
    let mut prev: HashMap<usize, (usize, [usize; 2])> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = HashSet::from([from]);
    while let Some(x) = queue.pop_front() {
        if target.contains(&x) {
            let mut cur = x;
            loop {
                let (p, e) = prev[&cur];
                if p == from {
                    return Some(e);
                }
                cur = p;
            }
        }
        for &(y, e) in graph.get(&x).map(|v| v.as_slice()).unwrap_or(&[]) {
            if seen.insert(y) {
                prev.insert(y, (x, e));
                queue.push_back(y);
            }
        }
    }
    None
}

/// Embed the surface minus the anchor triangle in the plane with the anchor corners
/// pinned, and check every triangle keeps one orientation.
fn tutte_audit(s: &SurfaceMesh, star: [usize; 3]) -> Result<()> {
    let nb = s.neighbors();
    let mut verts: Vec<usize> = nb.keys().copied().collect();
    verts.sort_unstable();
    let free: Vec<usize> = verts.iter().copied().filter(|v| !star.contains(v)).collect();
    let idx: HashMap<usize, usize> = free.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let corners = [Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)];
    let n = free.len();
    let mut l = DMatrix::zeros(n, n);
    let mut rhs = DMatrix::zeros(n, 2);
    for (i, &v) in free.iter().enumerate() {
        l[(i, i)] = nb[&v].len() as f64;
        for &w in &nb[&v] {
            if let Some(&j) = idx.get(&w) {
                l[(i, j)] -= 1.0;
            } else {
                let k = star.iter().position(|&x| x == w).unwrap();
                rhs[(i, 0)] += corners[k].x;
                rhs[(i, 1)] += corners[k].y;
            }
        }
    }
    let pos = l.lu().solve(&rhs).ok_or_else(|| Error::ColoringFailed("singular embedding system".into()))?;
    let at = |v: usize| -> Vector2<f64> {
        match idx.get(&v) {
            Some(&i) => Vector2::new(pos[(i, 0)], pos[(i, 1)]),
            None => corners[star.iter().position(|&x| x == v).unwrap()],
        }
    };
    let mut sign = 0.0;
    for tri in &s.tris {
        if sorted(*tri) == sorted(star) {
            continue;
        }
        let (p, q, r) = (at(tri[0]), at(tri[1]), at(tri[2]));
        let area = (q - p).perp(&(r - p));
        if area.abs() < 1e-14 {
            return Err(Error::ColoringFailed("degenerate triangle in the planar embedding".into()));
        }
        if sign == 0.0 {
            sign = area.signum();
        } else if area.signum() != sign {
            return Err(Error::ColoringFailed("folded planar embedding".into()));
        }
    }
    Ok(())
}

/// DSATUR coloring with backtracking on the surface vertex graph.
fn dsatur(s: &SurfaceMesh) -> Option<HashMap<usize, u8>> {
    let nb = s.neighbors();
    let mut verts: Vec<usize> = nb.keys().copied().collect();
    verts.sort_unstable();
    let mut colors: HashMap<usize, u8> = HashMap::new();
    let mut budget = 1_000_000usize;
    if dsatur_step(&nb, &verts, &mut colors, &mut budget) {
        Some(colors)
    } else {
        None
    }
}

fn dsatur_step(
    nb: &HashMap<usize, HashSet<usize>>,
    verts: &[usize],
    colors: &mut HashMap<usize, u8>,
    budget: &mut usize,
) -> bool {
    if colors.len() == verts.len() {
        return true;
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let sat = |v: usize, colors: &HashMap<usize, u8>| -> (usize, usize) {
        let used: HashSet<u8> = nb[&v].iter().filter_map(|w| colors.get(w).copied()).collect();
        (used.len(), nb[&v].len())
    };
    let v = verts
        .iter()
        .copied()
        .filter(|v| !colors.contains_key(v))
        .max_by(|&x, &y| sat(x, colors).cmp(&sat(y, colors)).then(y.cmp(&x)))
        .unwrap();
    for c in 1..=3u8 {
        if nb[&v].iter().any(|w| colors.get(w) == Some(&c)) {
            continue;
        }
        colors.insert(v, c);
        if dsatur_step(nb, verts, colors, budget) {
            return true;
        }
        colors.remove(&v);
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn check(r: &ColoredRefinement, k: usize, patch: &PatchMesh) {
        let v = verify_coloring(r, patch, k);
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn three_coloring_of_fixed_and_random_stars() {
        let mut patches = vec![fixtures::cube_star(), fixtures::octahedron_star()];
        patches.extend((0..6).map(fixtures::random_star));
        for p in &patches {
            for anchor in [0, p.cell_count() - 1] {
                let r = three_color_refine(p, anchor).unwrap();
                assert_eq!(r.parent[r.anchor], anchor);
                check(&r, 3, p);
            }
        }
    }

    #[test]
    fn two_coloring_splits_odd_fans_once() {
        for seed in 0..6 {
            let p = fixtures::random_star(seed);
            for fan in &p.fans {
                let r = two_color_refine(&p, fan.edge, fan.cells[0]).unwrap();
                let extra = if fan.closed && fan.cells.len() % 2 == 1 { 1 } else { 0 };
                assert_eq!(r.cells.len(), fan.cells.len() + extra);
                let fan_volume: f64 = fan.cells.iter().map(|&c| p.geometry[c].volume()).sum();
                let vol: f64 = (0..r.cells.len()).map(|c| r.volume(c)).sum();
                assert!((vol - fan_volume).abs() < 1e-12);
                for c in 0..r.cells.len() {
                    assert!(r.cells[c].contains(&fan.edge[0]) && r.cells[c].contains(&fan.edge[1]));
                    assert_eq!(r.colored_vertices(c).len(), 2);
                }
                for (_, _, f) in r.adjacent_pairs() {
                    assert!(f.contains(&fan.edge[0]) && f.contains(&fan.edge[1]));
                }
                check(&r, 2, &p);
            }
        }
    }

    #[test]
    fn anchor_outside_fan_is_rejected() {
        let p = fixtures::octahedron_star();
        let fan = &p.fans[0];
        let other = (0..p.cell_count()).find(|c| !fan.cells.contains(c)).unwrap();
        assert!(two_color_refine(&p, fan.edge, other).is_err());
    }
}
