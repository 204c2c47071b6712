//! Triangle meshes: procedural shapes, surface sampling and a pairwise
//! intersection check.

use crate::error::{DmeshError, Result};
use crate::geometry::{add, cross, norm, scale, sub, Aabb, Point};
use crate::losses::{face_area, face_normal};
use crate::predicates::orient;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};

/// Similarity map `x ↦ (x − centre)·scale + target`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub centre: Point,
    pub scale: f64,
    pub target: Point,
}

impl Frame {
    pub const IDENTITY: Frame = Frame { centre: [0.0; 3], scale: 1.0, target: [0.0; 3] };

    /// Maps `b` uniformly into the cube [lo, hi]³, centred.
    pub fn fit(b: &Aabb, lo: f64, hi: f64) -> Self {
        let ext = (0..3).map(|k| b.max[k] - b.min[k]).fold(0.0, f64::max);
        let s = if ext > 0.0 { (hi - lo) / ext } else { 1.0 };
        Self { centre: scale(add(b.min, b.max), 0.5), scale: s, target: [0.5 * (lo + hi); 3] }
    }

    pub fn forward(&self, x: Point) -> Point {
        add(scale(sub(x, self.centre), self.scale), self.target)
    }

    pub fn inverse(&self, x: Point) -> Point {
        add(scale(sub(x, self.target), 1.0 / self.scale), self.centre)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn face_points(&self, f: usize) -> [Point; 3] {
        self.faces[f].map(|i| self.vertices[i as usize])
    }

    /// Faces as sorted vertex triples.
    pub fn face_set(&self) -> HashSet<[u32; 3]> {
        self.faces
            .iter()
            .map(|f| {
                let mut s = *f;
                s.sort_unstable();
                s
            })
            .collect()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::of_points(&self.vertices)
    }

    /// Uniform scale and shift so the bounding box fits centred in [lo, hi]³.
    pub fn normalized(&self, lo: f64, hi: f64) -> Self {
        let f = Frame::fit(&self.bbox(), lo, hi);
        Self { vertices: self.vertices.iter().map(|&v| f.forward(v)).collect(), faces: self.faces.clone() }
    }

    /// Every vertex moved by up to `amount` per axis, seeded. Breaks the
    /// exact cocircularities of parametric grids.
    pub fn jittered(&self, amount: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vertices = self.vertices.iter().map(|v| v.map(|x| x + amount * (2.0 * rng.random::<f64>() - 1.0))).collect();
        Self { vertices, faces: self.faces.clone() }
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| face_area(&self.face_points(f))).sum()
    }
}

/// Unit icosphere centred at the origin; 20·4^s faces.
pub fn icosphere(subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let unit = |p: Point| scale(p, 1.0 / norm(p));
    let mut vertices: Vec<Point> = raw.iter().map(|&p| unit(p)).collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut get = |a: u32, b: u32, vs: &mut Vec<Point>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                vs.push(unit(scale(add(vs[a as usize], vs[b as usize]), 0.5)));
                (vs.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = get(a, b, &mut vertices);
            let bc = get(b, c, &mut vertices);
            let ca = get(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriMesh { vertices, faces }
}

/// Torus around the z axis with a `nu` × `nv` quad grid split into
/// 2·nu·nv triangles.
pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
            let r = major + minor * v.cos();
            vertices.push([r * u.cos(), r * u.sin(), minor * v.sin()]);
        }
    }
    let id = |i: usize, j: usize| ((i % nu) * nv + j % nv) as u32;
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriMesh { vertices, faces }
}

/// Torus whose odd rings are rotated by half a step, so every quad strip
/// becomes a band of near-isosceles triangles; `nv` must be even.
pub fn staggered_torus(major: f64, minor: f64, nu: usize, nv: usize) -> TriMesh {
    assert!(nv % 2 == 0, "staggered torus needs an even ring count");
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let u = 2.0 * std::f64::consts::PI * (i as f64 + 0.5 * (j % 2) as f64) / nu as f64;
            let v = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
            let r = major + minor * v.cos();
            vertices.push([r * u.cos(), r * u.sin(), minor * v.sin()]);
        }
    }
    let id = |i: usize, j: usize| ((i % nu) * nv + j % nv) as u32;
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            if j % 2 == 0 {
                faces.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                faces.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            } else {
                faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            }
        }
    }
    TriMesh { vertices, faces }
}

/// Area-uniform surface samples with face normals.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<(Vec<Point>, Vec<Point>)> {
    let areas: Vec<f64> = (0..mesh.faces.len()).map(|f| face_area(&mesh.face_points(f))).collect();
    if mesh.faces.is_empty() || areas.iter().sum::<f64>() <= 0.0 {
        return Err(DmeshError::EmptyMesh);
    }
    let dist = WeightedIndex::new(&areas).map_err(|e| DmeshError::Numerical(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n);
    let mut nrm = Vec::with_capacity(n);
    for _ in 0..n {
        let f = dist.sample(&mut rng);
        let [a, b, c] = mesh.face_points(f);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        pts.push(add(add(scale(a, 1.0 - s), scale(b, s * (1.0 - r2))), scale(c, s * r2)));
        nrm.push(face_normal(&[a, b, c]));
    }
    Ok((pts, nrm))
}

/// Uniform samples on a sphere.
pub fn sphere_samples(n: usize, center: Point, radius: f64, seed: u64) -> (Vec<Point>, Vec<Point>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let mut pts = Vec::with_capacity(n);
    let mut nrm = Vec::with_capacity(n);
    while pts.len() < n {
        let v: Point = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
        let l = norm(v);
        if l < 1e-12 {
            continue;
        }
        let u = scale(v, 1.0 / l);
        pts.push(add(center, scale(u, radius)));
        nrm.push(u);
    }
    (pts, nrm)
}

fn seg_hits_tri(p: Point, q: Point, t: &[Point; 3]) -> bool {
    let sp = orient(3, &[t[0], t[1], t[2], p]);
    let sq = orient(3, &[t[0], t[1], t[2], q]);
    if sp == 0 && sq == 0 {
        return coplanar_seg_tri(p, q, t);
    }
    if sp == sq {
        return false;
    }
    let s0 = orient(3, &[p, q, t[0], t[1]]);
    let s1 = orient(3, &[p, q, t[1], t[2]]);
    let s2 = orient(3, &[p, q, t[2], t[0]]);
    let nz: Vec<i8> = [s0, s1, s2].into_iter().filter(|&s| s != 0).collect();
    nz.windows(2).all(|w| w[0] == w[1])
}

fn coplanar_seg_tri(p: Point, q: Point, t: &[Point; 3]) -> bool {
    let n = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    let ax = (0..3).max_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs())).unwrap_or(2);
    let proj = |x: Point| -> Point {
        let (i, j) = match ax {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        [x[i], x[j], 0.0]
    };
    let (p2, q2) = (proj(p), proj(q));
    let t2 = t.map(proj);
    let inside = |x: Point| {
        let s = [orient(2, &[t2[0], t2[1], x]), orient(2, &[t2[1], t2[2], x]), orient(2, &[t2[2], t2[0], x])];
        !(s.contains(&1) && s.contains(&-1))
    };
    if inside(p2) || inside(q2) {
        return true;
    }
    (0..3).any(|k| {
        let (a, b) = (t2[k], t2[(k + 1) % 3]);
        let d1 = orient(2, &[p2, q2, a]);
        let d2 = orient(2, &[p2, q2, b]);
        let d3 = orient(2, &[a, b, p2]);
        let d4 = orient(2, &[a, b, q2]);
        d1 * d2 <= 0 && d3 * d4 <= 0 && !(d1 == 0 && d2 == 0)
    })
}

fn shrink(t: [Point; 3], f: f64) -> [Point; 3] {
    let c = scale(add(add(t[0], t[1]), t[2]), 1.0 / 3.0);
    t.map(|v| add(c, scale(sub(v, c), f)))
}

/// Whether two triangles meet anywhere other than along the simplices they
/// share. Both are shrunk towards their centroids by a relative `1e-7`
/// before an exact segment-triangle test, so contact at shared vertices or
/// edges does not count.
pub fn triangles_intersect(a: [Point; 3], b: [Point; 3]) -> bool {
    let a = shrink(a, 1.0 - 1e-7);
    let b = shrink(b, 1.0 - 1e-7);
    (0..3).any(|k| seg_hits_tri(a[k], a[(k + 1) % 3], &b)) || (0..3).any(|k| seg_hits_tri(b[k], b[(k + 1) % 3], &a))
}

/// Index pairs of faces that intersect beyond shared simplices.
pub fn self_intersections(mesh: &TriMesh) -> Vec<(usize, usize)> {
    let boxes: Vec<Aabb> = (0..mesh.faces.len()).map(|f| Aabb::of_points(&mesh.face_points(f))).collect();
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[a].min[0].total_cmp(&boxes[b].min[0]));
    let mut out = Vec::new();
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            if boxes[j].min[0] > boxes[i].max[0] {
                break;
            }
            let overlap = (1..3).all(|k| boxes[j].min[k] <= boxes[i].max[k] && boxes[i].min[k] <= boxes[j].max[k]);
            if overlap && triangles_intersect(mesh.face_points(i), mesh.face_points(j)) {
                out.push((i.min(j), i.max(j)));
            }
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedural_face_counts() {
        assert_eq!(icosphere(0).faces.len(), 20);
        let s = icosphere(2);
        assert_eq!(s.faces.len(), 320);
        assert_eq!(s.vertices.len(), 162);
        let t = torus(0.3, 0.15, 24, 12);
        assert_eq!(t.faces.len(), 576);
        assert!(self_intersections(&s).is_empty());
        assert!(self_intersections(&t).is_empty());
    }

    #[test]
    fn crossing_triangles() {
        let a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let b = [[0.2, 0.2, -1.0], [0.2, 0.2, 1.0], [0.8, 0.8, 0.0]];
        assert!(triangles_intersect(a, b));
        let shared = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, -1.0, 0.5]];
        assert!(!triangles_intersect(a, shared));
    }

    #[test]
    fn normalization_fits_box() {
        let m = icosphere(1).normalized(0.1, 0.9);
        let b = m.bbox();
        for k in 0..3 {
            assert!(b.min[k] >= 0.1 - 1e-12 && b.max[k] <= 0.9 + 1e-12);
        }
    }
}
