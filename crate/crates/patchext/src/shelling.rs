//! Shelling enumeration of interior vertex patches.
//!
//! The boundary of an interior patch is a triangulated sphere: cell `(a,x,y,z)` is the
//! surface triangle `(x,y,z)` and interior face `(a,x,y)` the surface edge `(x,y)`.
//! A valid enumeration grows a disk of surface triangles one triangle at a time.

use std::collections::{BTreeSet, HashSet};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::topology::{FaceClass, FaceClassification, PatchKind, PatchMesh};

/// Cell order with, for every position, the interior faces shared with earlier
/// (`sharp`) and later (`flat`) cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchEnumeration {
    pub order: Vec<usize>,
    pub sharp: Vec<Vec<usize>>,
    pub flat: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub position: usize,
    pub edge: Option<[usize; 2]>,
    pub message: String,
}

/// How the enumeration was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShellingMethod {
    Line { attempts: usize },
    Backtracking,
}

impl PatchEnumeration {
    /// Build the face splits for a given cell order.
    pub fn from_order(patch: &PatchMesh, order: Vec<usize>) -> Self {
        let n = patch.cell_count();
        let mut pos = vec![usize::MAX; n];
        for (i, &c) in order.iter().enumerate() {
            if c < n {
                pos[c] = i;
            }
        }
        let mut sharp = Vec::with_capacity(order.len());
        let mut flat = Vec::with_capacity(order.len());
        for (i, &c) in order.iter().enumerate() {
            let mut s = Vec::new();
            let mut f = Vec::new();
            for face in patch.interior_faces_of_cell(c) {
                let (m, p) = patch.faces.neighbor[face];
                let other = if m == c { p.unwrap() } else { m };
                if pos[other] < i {
                    s.push(face);
                } else {
                    f.push(face);
                }
            }
            s.sort_unstable();
            f.sort_unstable();
            sharp.push(s);
            flat.push(f);
        }
        PatchEnumeration { order, sharp, flat }
    }

    pub fn position_of(&self, cell: usize) -> Option<usize> {
        self.order.iter().position(|&c| c == cell)
    }

    /// Face classification with interior normals pointing from earlier to later cells,
    /// so that the earlier cell is the minus side of every interior face.
    pub fn oriented_faces(&self, patch: &PatchMesh) -> FaceClassification {
        let mut fc = patch.faces.clone();
        let mut pos = vec![0; patch.cell_count()];
        for (i, &c) in self.order.iter().enumerate() {
            pos[c] = i;
        }
        for f in 0..fc.len() {
            if let (m, Some(p)) = fc.neighbor[f] {
                if pos[m] > pos[p] {
                    fc.flip(f);
                }
            }
        }
        fc
    }
}

/// Edge `(a, v)` shared by two faces through the center.
fn shared_edge(patch: &PatchMesh, f: usize, g: usize) -> Option<[usize; 2]> {
    let a = patch.center;
    let fv = patch.faces.faces[f];
    let gv = patch.faces.faces[g];
    let common: Vec<usize> = fv.iter().copied().filter(|x| *x != a && gv.contains(x)).collect();
    (common.len() == 1).then(|| [a, common[0]])
}

/// Check partition and the two enumeration properties; returns every violation found.
pub fn verify_enumeration(patch: &PatchMesh, e: &PatchEnumeration) -> (bool, Vec<Violation>) {
    let n = patch.cell_count();
    let mut out = Vec::new();
    let mut seen = vec![false; n];
    let mut perm_ok = e.order.len() == n;
    for &c in &e.order {
        if c >= n || seen[c] {
            perm_ok = false;
        } else {
            seen[c] = true;
        }
    }
    if !perm_ok || e.sharp.len() != n || e.flat.len() != n {
        out.push(Violation { position: 0, edge: None, message: "order is not a permutation of the cells".into() });
        return (false, out);
    }
    let expected = PatchEnumeration::from_order(patch, e.order.clone());
    let mut pos = vec![0; n];
    for (i, &c) in e.order.iter().enumerate() {
        pos[c] = i;
    }
    for i in 0..n {
        let mut s = e.sharp[i].clone();
        let mut f = e.flat[i].clone();
        s.sort_unstable();
        f.sort_unstable();
        if s != expected.sharp[i] || f != expected.flat[i] {
            out.push(Violation { position: i, edge: None, message: "face split does not match the order".into() });
        }
        if s.len() + f.len() != 3 {
            out.push(Violation { position: i, edge: None, message: format!("{} interior faces", s.len() + f.len()) });
        }
    }
    if !expected.sharp[0].is_empty() {
        out.push(Violation { position: 0, edge: None, message: "first cell has earlier neighbors".into() });
    }
    if expected.sharp[n - 1].len() != patch.interior_faces_of_cell(e.order[n - 1]).len() {
        out.push(Violation { position: n - 1, edge: None, message: "last cell has later neighbors".into() });
    }
    for i in 1..n.saturating_sub(1) {
        let k = expected.sharp[i].len();
        if !(1..=2).contains(&k) {
            out.push(Violation { position: i, edge: None, message: format!("{k} faces shared with earlier cells") });
        }
    }
    for i in 0..n {
        let s = &expected.sharp[i];
        for x in 0..s.len() {
            for y in x + 1..s.len() {
                if let Some(edge) = shared_edge(patch, s[x], s[y]) {
                    let fan = patch.fans.iter().find(|f| f.edge == edge).expect("fan exists");
                    if fan.cells.iter().any(|&c| pos[c] > i) {
                        out.push(Violation {
                            position: i,
                            edge: Some(edge),
                            message: "a cell around the shared edge comes later".into(),
                        });
                    }
                }
            }
        }
    }
    (out.is_empty(), out)
}

/// Surface view of an interior patch.
struct Surface {
    tris: Vec<[usize; 3]>,
    /// neighbor cells across each interior face of a cell, with the face
    adj: Vec<Vec<(usize, usize)>>,
    /// cells around each surface vertex
    star: std::collections::HashMap<usize, Vec<usize>>,
}

impl Surface {
    fn new(patch: &PatchMesh) -> Self {
        let a = patch.center;
        let tris: Vec<[usize; 3]> = patch
            .cells
            .iter()
            .map(|c| {
                let v: Vec<usize> = c.iter().copied().filter(|&x| x != a).collect();
                [v[0], v[1], v[2]]
            })
            .collect();
        let mut adj = vec![Vec::new(); tris.len()];
        for f in 0..patch.faces.len() {
            if let (m, Some(p)) = patch.faces.neighbor[f] {
                adj[m].push((p, f));
                adj[p].push((m, f));
            }
        }
        let mut star: std::collections::HashMap<usize, Vec<usize>> = Default::default();
        for (c, t) in tris.iter().enumerate() {
            for &v in t {
                star.entry(v).or_default().push(c);
            }
        }
        Surface { tris, adj, star }
    }
}

pub fn enumerate_patch(patch: &PatchMesh) -> Result<PatchEnumeration> {
    enumerate_patch_with(patch, 0, 0).map(|r| r.0)
}

/// Enumerate starting from `anchor` using line shelling with `seed`, falling back to
/// a backtracking search.
pub fn enumerate_patch_with(
    patch: &PatchMesh,
    anchor: usize,
    seed: u64,
) -> Result<(PatchEnumeration, ShellingMethod)> {
    if patch.kind != PatchKind::Interior {
        return Err(Error::EnumerationFailed("enumeration needs an interior patch".into()));
    }
    if anchor >= patch.cell_count() {
        return Err(Error::EnumerationFailed(format!("anchor {anchor} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..32 {
        if let Some(order) = line_shelling(patch, anchor, &mut rng) {
            let e = PatchEnumeration::from_order(patch, order);
            if verify_enumeration(patch, &e).0 {
                return Ok((e, ShellingMethod::Line { attempts: attempt + 1 }));
            }
        }
    }
    let order = backtracking_shelling(patch, anchor)
        .ok_or_else(|| Error::EnumerationFailed("no shelling order found".into()))?;
    let e = PatchEnumeration::from_order(patch, order);
    let (ok, v) = verify_enumeration(patch, &e);
    if !ok {
        return Err(Error::EnumerationFailed(format!("internal check failed: {:?}", v[0])));
    }
    Ok((e, ShellingMethod::Backtracking))
}

/// Bruggesser-Mani line shelling of the radially projected surface. Returns `None` on
/// ties (non-generic direction or coplanar facets).
fn line_shelling(patch: &PatchMesh, anchor: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let s = Surface::new(patch);
    let a = patch.center_point();
    let proj = |v: usize| -> Vector3<f64> {
        let d = patch.vertices[v] - a;
        d / d.norm()
    };
    let planes: Vec<(Vector3<f64>, f64)> = s
        .tris
        .iter()
        .map(|t| {
            let (p0, p1, p2) = (proj(t[0]), proj(t[1]), proj(t[2]));
            let mut n = (p1 - p0).cross(&(p2 - p0)).normalize();
            if n.dot(&p0) < 0.0 {
                n = -n;
            }
            (n, n.dot(&p0))
        })
        .collect();
    let t0 = s.tris[anchor];
    let x0 = (proj(t0[0]) + proj(t0[1]) + proj(t0[2])) / 3.0;
    let mut d = loop {
        let v: Vector3<f64> = Vector3::new(rng.gen_range(-1.0_f64..1.0), rng.gen_range(-1.0_f64..1.0), rng.gen_range(-1.0_f64..1.0));
        let nv = v.norm();
        if nv > 0.1 && nv <= 1.0 {
            break v / nv;
        }
    };
    if d.dot(&planes[anchor].0) < 0.0 {
        d = -d;
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (c, (n, h)) in planes.iter().enumerate() {
        if c == anchor {
            continue;
        }
        let den = n.dot(&d);
        if den.abs() < 1e-12 {
            return None;
        }
        let t = (h - n.dot(&x0)) / den;
        if t > 0.0 {
            pos.push((t, c));
        } else {
            neg.push((t, c));
        }
    }
    pos.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    neg.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let all: Vec<(f64, usize)> = pos.iter().chain(neg.iter()).copied().collect();
    for w in all.windows(2) {
        if (w[0].0 - w[1].0).abs() <= 1e-9 * (1.0 + w[0].0.abs()) {
            return None;
        }
    }
    let mut order = vec![anchor];
    order.extend(all.iter().map(|x| x.1));
    Some(order)
}

/// Depth-first search growing a disk, pruned by the enumeration properties.
pub fn backtracking_shelling(patch: &PatchMesh, anchor: usize) -> Option<Vec<usize>> {
    let s = Surface::new(patch);
    let n = s.tris.len();
    let mut placed = vec![false; n];
    let mut order = vec![anchor];
    placed[anchor] = true;
    let mut budget = 2_000_000usize;
    if dfs(&s, &mut placed, &mut order, &mut budget) {
        Some(order)
    } else {
        None
    }
}

fn union_vertices(s: &Surface, placed: &[bool]) -> HashSet<usize> {
    let mut v = HashSet::new();
    for (c, t) in s.tris.iter().enumerate() {
        if placed[c] {
            v.extend(t.iter().copied());
        }
    }
    v
}

fn dfs(s: &Surface, placed: &mut [bool], order: &mut Vec<usize>, budget: &mut usize) -> bool {
    let n = s.tris.len();
    if order.len() == n {
        return true;
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let uv = union_vertices(s, placed);
    let mut candidates: BTreeSet<usize> = BTreeSet::new();
    for &c in order.iter() {
        for &(nb, _) in &s.adj[c] {
            if !placed[nb] {
                candidates.insert(nb);
            }
        }
    }
    let last = order.len() + 1 == n;
    for c in candidates {
        let shared: Vec<usize> = s.adj[c].iter().filter(|(nb, _)| placed[*nb]).map(|x| x.0).collect();
        let k = shared.len();
        if !last && !(1..=2).contains(&k) {
            continue;
        }
        let t = s.tris[c];
        if k == 1 {
            let nb = shared[0];
            let third = t.iter().copied().find(|v| !s.tris[nb].contains(v)).unwrap();
            if uv.contains(&third) {
                continue;
            }
        }
        if k == 2 {
            let (t1, t2) = (s.tris[shared[0]], s.tris[shared[1]]);
            let v = t.iter().copied().find(|v| t1.contains(v) && t2.contains(v));
            match v {
                Some(v) => {
                    if s.star[&v].iter().any(|&x| x != c && !placed[x]) {
                        continue;
                    }
                }
                None => continue,
            }
        }
        placed[c] = true;
        order.push(c);
        if dfs(s, placed, order, budget) {
            return true;
        }
        order.pop();
        placed[c] = false;
    }
    false
}

/// Faces of the patch that are interior, as a quick helper for callers.
pub fn interior_face_count(patch: &PatchMesh) -> usize {
    patch.faces.class.iter().filter(|&&c| c == FaceClass::Interior).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn cube_star_is_enumerated() {
        let p = fixtures::cube_star();
        let e = enumerate_patch(&p).unwrap();
        assert!(verify_enumeration(&p, &e).0);
        assert!(e.sharp[0].is_empty());
        assert_eq!(e.sharp[11].len(), 3);
    }

    #[test]
    fn reversed_order_fails_on_first_cell() {
        let p = fixtures::cube_star();
        let e = enumerate_patch(&p).unwrap();
        let mut rev = e.order.clone();
        rev.reverse();
        // keep the original splits so the reversal is detected as inconsistent
        let bad = PatchEnumeration { order: rev.clone(), sharp: e.sharp.clone(), flat: e.flat.clone() };
        assert!(!verify_enumeration(&p, &bad).0);
        // the reverse of a sphere shelling is again a shelling
        let rebuilt = PatchEnumeration::from_order(&p, rev);
        assert!(verify_enumeration(&p, &rebuilt).0);
    }

    #[test]
    fn scrambled_order_is_rejected() {
        let p = fixtures::cube_star();
        // two far apart cells first: the second shares no face with the first
        let e = enumerate_patch(&p).unwrap();
        let first = e.order[0];
        let far = (0..12).find(|&c| c != first && !p.interior_faces_of_cell(first).iter().any(|&f| {
            let (m, q) = p.faces.neighbor[f];
            m == c || q == Some(c)
        })).unwrap();
        let mut order = vec![first, far];
        order.extend((0..12).filter(|&c| c != first && c != far));
        let bad = PatchEnumeration::from_order(&p, order);
        let (ok, v) = verify_enumeration(&p, &bad);
        assert!(!ok);
        assert!(v.iter().any(|x| x.position == 1));
    }

    #[test]
    fn random_stars_are_enumerated_from_every_anchor() {
        for seed in 0..10 {
            let p = fixtures::random_star(seed);
            for anchor in 0..p.cell_count() {
                let (e, _) = enumerate_patch_with(&p, anchor, seed).unwrap();
                assert_eq!(e.order[0], anchor);
                let (ok, v) = verify_enumeration(&p, &e);
                assert!(ok, "{v:?}");
            }
        }
    }

    #[test]
    fn oriented_faces_point_from_earlier_cells() {
        let p = fixtures::octahedron_star();
        let e = enumerate_patch(&p).unwrap();
        let fc = e.oriented_faces(&p);
        for f in 0..fc.len() {
            if let (m, Some(q)) = fc.neighbor[f] {
                assert!(e.position_of(m) < e.position_of(q));
                // normal points out of the minus cell
                let g = &p.geometry[m];
                let k = fc.local.clone()[f].0;
                assert!((g.face_normals[k] - fc.normal[f]).norm() < 1e-12);
            }
        }
    }
}
