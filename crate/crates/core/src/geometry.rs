//! Power distance, bisector half planes, dual forms and convex cells.
//!
//! Positions are stored as `[f64; 3]` in both dimensions; in 2D the third
//! coordinate is always zero.

use crate::autodiff::vec::{self, V3};
use crate::autodiff::Real;
use crate::error::{DmeshError, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub type Point = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub position: Point,
    pub weight: f64,
    pub real_value: f64,
}

impl WeightedPoint {
    pub fn new(position: Point, weight: f64, real_value: f64) -> Self {
        Self { position, weight, real_value }
    }

    pub fn planar(x: f64, y: f64, weight: f64) -> Self {
        Self::new([x, y, 0.0], weight, 1.0)
    }
}

pub fn sub(a: Point, b: Point) -> Point {
    vec::sub(a, b)
}
pub fn add(a: Point, b: Point) -> Point {
    vec::add(a, b)
}
pub fn scale(a: Point, s: f64) -> Point {
    vec::scale(a, s)
}
pub fn dot(a: Point, b: Point) -> f64 {
    vec::dot(a, b)
}
pub fn cross(a: Point, b: Point) -> Point {
    vec::cross(a, b)
}
pub fn norm(a: Point) -> f64 {
    vec::norm(a)
}
pub fn dist2(a: Point, b: Point) -> f64 {
    vec::norm2(sub(a, b))
}

/// π(p, q) = |p - q|² - w_p - w_q.
pub fn power_distance(p: &WeightedPoint, q: &WeightedPoint) -> f64 {
    dist2(p.position, q.position) - p.weight - q.weight
}

/// Power of an unweighted location with respect to a weighted point.
pub fn power_at(x: Point, p: &WeightedPoint) -> f64 {
    dist2(x, p.position) - p.weight
}

/// {x : normal·x <= offset}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    pub normal: Point,
    pub offset: f64,
}

impl HalfPlane {
    /// normal·x - offset; non-positive inside.
    pub fn eval(&self, x: Point) -> f64 {
        dot(self.normal, x) - self.offset
    }

    /// Euclidean distance to the plane, positive on the inner side.
    pub fn signed_distance(&self, x: Point) -> f64 {
        -self.eval(x) / norm(self.normal)
    }
}

/// Bisector coefficients (normal, offset) in any scalar type.
pub fn bisector_coeffs<T: Real>(p: V3<T>, wp: T, q: V3<T>, wq: T) -> (V3<T>, T) {
    let n = vec::scale(vec::sub(q, p), p[0].lift(2.0));
    let c = vec::norm2(q) - vec::norm2(p) - wq + wp;
    (n, c)
}

pub fn bisector(p: &WeightedPoint, q: &WeightedPoint) -> Result<HalfPlane> {
    if p.position == q.position {
        return Err(DmeshError::Contract("bisector of coincident positions".into()));
    }
    let (normal, offset) = bisector_coeffs(p.position, p.weight, q.position, q.weight);
    Ok(HalfPlane { normal, offset })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualKind {
    Point,
    Line,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualForm {
    pub kind: DualKind,
    pub anchor: Point,
    /// Unit direction; zero for the point case.
    pub direction: Point,
}

impl DualForm {
    pub fn at(&self, t: f64) -> Point {
        add(self.anchor, scale(self.direction, t))
    }
}

/// Anchor and (unnormalized) direction of the dual form of `pts`, where
/// each entry is (position, weight). The anchor lies in the affine hull of
/// the simplex. Returns `None` when the simplex is affinely dependent.
pub fn dual_coeffs<T: Real>(dim: usize, pts: &[(V3<T>, T)]) -> Option<(V3<T>, V3<T>)> {
    let k = pts.len() - 1;
    let (p0, w0) = pts[0];
    let zero = w0.lift(0.0);
    let e: Vec<V3<T>> = pts[1..].iter().map(|(p, _)| vec::sub(*p, p0)).collect();
    let b: Vec<T> = pts[1..]
        .iter()
        .zip(&e)
        .map(|((_, w), ei)| (vec::norm2(*ei) - *w + w0) * 0.5)
        .collect();
    let scale2: f64 = e.iter().map(|v| vec::norm2(vec::value(*v))).fold(0.0, f64::max);
    if scale2 == 0.0 {
        return None;
    }
    match (dim, k) {
        (2, 1) => {
            let l2 = vec::norm2(e[0]);
            let y = vec::scale(e[0], b[0] / l2);
            Some((vec::add(p0, y), [-e[0][1], e[0][0], zero]))
        }
        (2, 2) => {
            let det = e[0][0] * e[1][1] - e[0][1] * e[1][0];
            if det.value().abs() <= 1e-14 * scale2 {
                return None;
            }
            let x = (b[0] * e[1][1] - b[1] * e[0][1]) / det;
            let y = (e[0][0] * b[1] - e[1][0] * b[0]) / det;
            Some((vec::add(p0, [x, y, zero]), [zero; 3]))
        }
        (3, 2) => {
            let g00 = vec::norm2(e[0]);
            let g01 = vec::dot(e[0], e[1]);
            let g11 = vec::norm2(e[1]);
            let det = g00 * g11 - g01 * g01;
            if det.value().abs() <= 1e-14 * scale2 * scale2 {
                return None;
            }
            let a = (b[0] * g11 - b[1] * g01) / det;
            let c = (g00 * b[1] - g01 * b[0]) / det;
            let y = vec::add(vec::scale(e[0], a), vec::scale(e[1], c));
            Some((vec::add(p0, y), vec::cross(e[0], e[1])))
        }
        (3, 3) => {
            let c12 = vec::cross(e[1], e[2]);
            let det = vec::dot(e[0], c12);
            if det.value().abs() <= 1e-14 * scale2 * scale2.sqrt() {
                return None;
            }
            let c20 = vec::cross(e[2], e[0]);
            let c01 = vec::cross(e[0], e[1]);
            let y = vec::scale(
                vec::add(vec::add(vec::scale(c12, b[0]), vec::scale(c20, b[1])), vec::scale(c01, b[2])),
                det.lift(1.0) / det,
            );
            Some((vec::add(p0, y), [zero; 3]))
        }
        _ => None,
    }
}

pub fn dual_form(dim: usize, simplex: &[WeightedPoint]) -> Result<DualForm> {
    let k = simplex.len().wrapping_sub(1);
    if !(dim == 2 || dim == 3) || !(k == dim || k + 1 == dim) {
        return Err(DmeshError::Contract(format!("dual form of {}-simplex in {dim}D", k)));
    }
    let pts: Vec<(Point, f64)> = simplex.iter().map(|p| (p.position, p.weight)).collect();
    let (anchor, dir) =
        dual_coeffs(dim, &pts).ok_or_else(|| DmeshError::DegenerateSimplex((0..=k).collect()))?;
    if k == dim {
        return Ok(DualForm { kind: DualKind::Point, anchor, direction: [0.0; 3] });
    }
    let l = norm(dir);
    if l == 0.0 {
        return Err(DmeshError::DegenerateSimplex((0..=k).collect()));
    }
    Ok(DualForm { kind: DualKind::Line, anchor, direction: scale(dir, 1.0 / l) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn unit(dim: usize) -> Self {
        let mut max = [1.0; 3];
        if dim == 2 {
            max[2] = 0.0;
        }
        Self { min: [0.0; 3], max }
    }

    pub fn expanded(&self, dim: usize, margin: f64) -> Self {
        let mut b = *self;
        for k in 0..dim {
            b.min[k] -= margin;
            b.max[k] += margin;
        }
        b
    }

    pub fn diagonal(&self) -> f64 {
        norm(sub(self.max, self.min))
    }

    pub fn of_points<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Self { min: [f64::INFINITY; 3], max: [f64::NEG_INFINITY; 3] };
        for p in pts {
            for k in 0..3 {
                b.min[k] = b.min[k].min(p[k]);
                b.max[k] = b.max[k].max(p[k]);
            }
        }
        b
    }

    /// Box planes in the order +x, -x, +y, -y(, +z, -z).
    pub fn planes(&self, dim: usize) -> Vec<HalfPlane> {
        let mut out = Vec::with_capacity(2 * dim);
        for k in 0..dim {
            let mut n = [0.0; 3];
            n[k] = 1.0;
            out.push(HalfPlane { normal: n, offset: self.max[k] });
            n[k] = -1.0;
            out.push(HalfPlane { normal: n, offset: -self.min[k] });
        }
        out
    }
}

/// Origin of a cell plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PlaneLabel {
    /// Box side `2·axis + (0 for max, 1 for min)`.
    Box(u8),
    /// Bisector against this point index.
    Point(u32),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellVertex {
    pub pos: Point,
    /// Indices into the cell's plane list; 2D uses the first two.
    pub planes: [u32; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub plane: u32,
    /// Vertex cycle (two entries in 2D).
    pub verts: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellEdge {
    pub verts: [u32; 2],
    /// The two planes meeting at the edge (both equal the facet plane in 2D).
    pub planes: [u32; 2],
}

/// Where the distance from a line to a cell is attained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LineWitness {
    Vertex(u32),
    EdgeInterior(u32, u32),
    Touching,
}

/// Bounded convex cell: intersection of half planes, with vertices and
/// facets maintained incrementally by clipping.
#[derive(Clone, Debug)]
pub struct ConvexCell {
    pub dim: usize,
    pub generator: Option<usize>,
    pub planes: Vec<HalfPlane>,
    pub labels: Vec<PlaneLabel>,
    pub vertices: Vec<CellVertex>,
    /// Active facets. In 2D they are stored in boundary order and
    /// `vertices` is the matching counter-clockwise ring.
    pub facets: Vec<Facet>,
    scale: f64,
}

impl ConvexCell {
    pub fn from_box(dim: usize, b: &Aabb, generator: Option<usize>) -> Self {
        let planes = b.planes(dim);
        let labels = (0..2 * dim as u8).map(PlaneLabel::Box).collect();
        let (lo, hi) = (b.min, b.max);
        let scale = lo.iter().chain(hi.iter()).fold(1e-300f64, |m, v| m.max(v.abs()));
        let (vertices, facets) = if dim == 2 {
            let v = |x: f64, y: f64, a: u32, c: u32| CellVertex { pos: [x, y, 0.0], planes: [a, c, 0] };
            // planes: 0 +x, 1 -x, 2 +y, 3 -y; ring edges bottom, right, top, left
            let verts = vec![
                v(lo[0], lo[1], 1, 3),
                v(hi[0], lo[1], 3, 0),
                v(hi[0], hi[1], 0, 2),
                v(lo[0], hi[1], 2, 1),
            ];
            let facets = [3u32, 0, 2, 1]
                .iter()
                .enumerate()
                .map(|(i, &p)| Facet { plane: p, verts: vec![i as u32, ((i + 1) % 4) as u32] })
                .collect();
            (verts, facets)
        } else {
            let mut verts = Vec::new();
            for i in 0..8u32 {
                let bx = i & 1;
                let by = (i >> 1) & 1;
                let bz = (i >> 2) & 1;
                let pos = [
                    if bx == 1 { hi[0] } else { lo[0] },
                    if by == 1 { hi[1] } else { lo[1] },
                    if bz == 1 { hi[2] } else { lo[2] },
                ];
                // plane index: 2·axis + (bit==1 ? 0 : 1)
                let planes = [1 - bx, 2 + 1 - by, 4 + 1 - bz];
                verts.push(CellVertex { pos, planes });
            }
            let mut facets = Vec::new();
            for axis in 0..3u32 {
                for side in 0..2u32 {
                    let bit = 1 - side;
                    let mut vs: Vec<u32> = (0..8u32).filter(|i| (i >> axis) & 1 == bit).collect();
                    // order the 4 vertices cyclically: swap the last two
                    vs.swap(2, 3);
                    facets.push(Facet { plane: 2 * axis + side, verts: vs });
                }
            }
            (verts, facets)
        };
        Self { dim, generator, planes, labels, vertices, facets, scale }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn tol(&self, h: &HalfPlane) -> f64 {
        1e-12 * (norm(h.normal) * self.scale + h.offset.abs()) + 1e-300
    }

    /// Clips by `h`; returns whether the plane became active.
    pub fn clip(&mut self, h: HalfPlane, label: PlaneLabel) -> bool {
        if self.is_empty() {
            return false;
        }
        let tol = self.tol(&h);
        let s: Vec<f64> = self.vertices.iter().map(|v| h.eval(v.pos)).collect();
        if s.iter().all(|&x| x <= tol) {
            return false;
        }
        if s.iter().all(|&x| x >= -tol) {
            self.vertices.clear();
            self.facets.clear();
            self.planes.push(h);
            self.labels.push(label);
            return true;
        }
        let pi = self.planes.len() as u32;
        self.planes.push(h);
        self.labels.push(label);
        if self.dim == 2 {
            self.clip2(&s, tol, pi);
        } else {
            self.clip3(&s, tol, pi);
        }
        true
    }

    fn cut_point(&self, a: u32, b: u32, sa: f64, sb: f64) -> Point {
        let pa = self.vertices[a as usize].pos;
        let pb = self.vertices[b as usize].pos;
        let t = sa / (sa - sb);
        add(pa, scale(sub(pb, pa), t))
    }

    fn clip2(&mut self, s: &[f64], tol: f64, pi: u32) {
        let n = self.vertices.len();
        // ring of (position, plane of edge to next)
        let mut ring: Vec<(Point, u32)> = Vec::with_capacity(n + 2);
        for i in 0..n {
            let j = (i + 1) % n;
            let e = self.facets[i].plane;
            let (si, sj) = (s[i], s[j]);
            let pos_i = self.vertices[i].pos;
            if si <= tol {
                if sj > tol {
                    if si < -tol {
                        ring.push((pos_i, e));
                        ring.push((self.cut_point(i as u32, j as u32, si, sj), pi));
                    } else {
                        ring.push((pos_i, pi));
                    }
                } else {
                    ring.push((pos_i, e));
                }
            } else if sj < -tol {
                ring.push((self.cut_point(i as u32, j as u32, si, sj), e));
            }
        }
        if ring.len() < 3 {
            self.vertices.clear();
            self.facets.clear();
            return;
        }
        let m = ring.len();
        self.vertices = (0..m)
            .map(|i| CellVertex { pos: ring[i].0, planes: [ring[(i + m - 1) % m].1, ring[i].1, 0] })
            .collect();
        self.facets = (0..m)
            .map(|i| Facet { plane: ring[i].1, verts: vec![i as u32, ((i + 1) % m) as u32] })
            .collect();
    }

    fn clip3(&mut self, s: &[f64], tol: f64, pi: u32) {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut verts: Vec<CellVertex> = Vec::new();
        let mut on_plane: Vec<u32> = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if s[i] <= tol {
                remap[i] = verts.len() as u32;
                if s[i] >= -tol {
                    on_plane.push(remap[i]);
                }
                verts.push(*v);
            }
        }
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut facets = Vec::with_capacity(self.facets.len() + 1);
        for f in &self.facets {
            let mut cyc = Vec::with_capacity(f.verts.len() + 1);
            let m = f.verts.len();
            for k in 0..m {
                let a = f.verts[k];
                let b = f.verts[(k + 1) % m];
                let (sa, sb) = (s[a as usize], s[b as usize]);
                if sa <= tol {
                    cyc.push(remap[a as usize]);
                }
                if (sa < -tol && sb > tol) || (sa > tol && sb < -tol) {
                    let key = (a.min(b), a.max(b));
                    let id = match cache.get(&key) {
                        Some(&id) => id,
                        None => {
                            let pos = self.cut_point(a, b, sa, sb);
                            let pa = self.vertices[a as usize].planes;
                            let pb = self.vertices[b as usize].planes;
                            let common: Vec<u32> = pa.iter().copied().filter(|x| pb.contains(x)).collect();
                            let planes = if common.len() >= 2 {
                                [common[0], common[1], pi]
                            } else {
                                [f.plane, pa[0], pi]
                            };
                            let id = verts.len() as u32;
                            verts.push(CellVertex { pos, planes });
                            on_plane.push(id);
                            cache.insert(key, id);
                            id
                        }
                    };
                    cyc.push(id);
                }
            }
            cyc.dedup();
            if cyc.len() > 1 && cyc[0] == *cyc.last().unwrap() {
                cyc.pop();
            }
            if cyc.len() >= 3 {
                facets.push(Facet { plane: f.plane, verts: cyc });
            }
        }
        if on_plane.len() >= 3 {
            let h = self.planes[pi as usize];
            let c = on_plane.iter().fold([0.0; 3], |acc, &i| add(acc, verts[i as usize].pos));
            let c = scale(c, 1.0 / on_plane.len() as f64);
            let nrm = h.normal;
            let u = {
                let t = if nrm[0].abs() < 0.9 * norm(nrm) { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                let u = cross(nrm, t);
                scale(u, 1.0 / norm(u))
            };
            let w = cross(nrm, u);
            let mut ang: Vec<(f64, u32)> = on_plane
                .iter()
                .map(|&i| {
                    let d = sub(verts[i as usize].pos, c);
                    (dot(d, w).atan2(dot(d, u)), i)
                })
                .collect();
            ang.sort_by(|a, b| a.0.total_cmp(&b.0));
            facets.push(Facet { plane: pi, verts: ang.into_iter().map(|x| x.1).collect() });
        }
        if facets.len() < 4 {
            self.vertices.clear();
            self.facets.clear();
            return;
        }
        self.vertices = verts;
        self.facets = facets;
    }

    /// Boundary edges of the cell. In 2D these are the facets.
    pub fn edges(&self) -> Vec<CellEdge> {
        if self.dim == 2 {
            return self
                .facets
                .iter()
                .map(|f| CellEdge { verts: [f.verts[0], f.verts[1]], planes: [f.plane, f.plane] })
                .collect();
        }
        let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
        let mut out: Vec<CellEdge> = Vec::new();
        for f in &self.facets {
            let m = f.verts.len();
            for k in 0..m {
                let a = f.verts[k];
                let b = f.verts[(k + 1) % m];
                let key = (a.min(b), a.max(b));
                match seen.get(&key) {
                    Some(&i) => out[i].planes[1] = f.plane,
                    None => {
                        seen.insert(key, out.len());
                        out.push(CellEdge { verts: [key.0, key.1], planes: [f.plane, u32::MAX] });
                    }
                }
            }
        }
        for e in &mut out {
            if e.planes[1] == u32::MAX {
                e.planes[1] = e.planes[0];
            }
        }
        out
    }

    /// Largest constraint violation (≤ 0 inside) and the plane attaining it.
    pub fn max_violation(&self, x: Point) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, h) in self.planes.iter().enumerate() {
            let v = h.eval(x) / norm(h.normal);
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }

    /// Positive distance to the boundary inside (with the nearest plane),
    /// negative exact distance outside.
    pub fn signed_distance(&self, x: Point) -> Result<(f64, Option<usize>)> {
        if self.is_empty() {
            return Err(DmeshError::EmptyCell);
        }
        let (viol, plane) = self.max_violation(x);
        if viol <= 0.0 {
            return Ok((-viol, Some(plane)));
        }
        Ok((-self.outside_distance(x), None))
    }

    fn outside_distance(&self, x: Point) -> f64 {
        let mut best = f64::INFINITY;
        if self.dim == 2 {
            for f in &self.facets {
                let a = self.vertices[f.verts[0] as usize].pos;
                let b = self.vertices[f.verts[1] as usize].pos;
                best = best.min(point_segment_distance(x, a, b));
            }
            return best;
        }
        for f in &self.facets {
            let h = self.planes[f.plane as usize];
            let nn = norm(h.normal);
            let n = scale(h.normal, 1.0 / nn);
            let d = h.eval(x) / nn;
            let proj = sub(x, scale(n, d));
            let m = f.verts.len();
            let pts: Vec<Point> = f.verts.iter().map(|&i| self.vertices[i as usize].pos).collect();
            let mut inside = true;
            let mut sgn = 0.0;
            for k in 0..m {
                let e = sub(pts[(k + 1) % m], pts[k]);
                let c = dot(cross(e, sub(proj, pts[k])), n);
                if sgn == 0.0 && c.abs() > 0.0 {
                    sgn = c.signum();
                } else if c * sgn < 0.0 {
                    inside = false;
                    break;
                }
            }
            if inside {
                best = best.min(d.abs());
            } else {
                for k in 0..m {
                    best = best.min(point_segment_distance(x, pts[k], pts[(k + 1) % m]));
                }
            }
        }
        best
    }

    /// Parameter interval of `anchor + t·dir` inside the cell, with the
    /// planes bounding it from below and above.
    pub fn clip_line(&self, anchor: Point, dir: Point) -> Option<(f64, f64, usize, usize)> {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut ilo, mut ihi) = (usize::MAX, usize::MAX);
        for (i, h) in self.planes.iter().enumerate() {
            let nu = dot(h.normal, dir);
            let r = h.offset - dot(h.normal, anchor);
            if nu > 0.0 {
                let t = r / nu;
                if t < hi {
                    hi = t;
                    ihi = i;
                }
            } else if nu < 0.0 {
                let t = r / nu;
                if t > lo {
                    lo = t;
                    ilo = i;
                }
            } else if r < 0.0 {
                return None;
            }
        }
        if lo <= hi && ilo != usize::MAX && ihi != usize::MAX {
            Some((lo, hi, ilo, ihi))
        } else {
            None
        }
    }

    /// Distance between a line and the cell, for lines that miss it.
    pub fn line_distance(&self, anchor: Point, dir: Point) -> Result<(f64, LineWitness)> {
        if self.is_empty() {
            return Err(DmeshError::EmptyCell);
        }
        if let Some((lo, hi, _, _)) = self.clip_line(anchor, dir) {
            if hi - lo >= 0.0 {
                return Ok((0.0, LineWitness::Touching));
            }
        }
        let mut best = (f64::INFINITY, LineWitness::Touching);
        if self.dim == 2 {
            for (i, v) in self.vertices.iter().enumerate() {
                let d = point_line_distance(v.pos, anchor, dir);
                if d < best.0 {
                    best = (d, LineWitness::Vertex(i as u32));
                }
            }
            return Ok(best);
        }
        for e in self.edges() {
            let a = self.vertices[e.verts[0] as usize].pos;
            let b = self.vertices[e.verts[1] as usize].pos;
            let (d, w) = line_segment_distance(anchor, dir, a, b);
            if d < best.0 {
                best = (
                    d,
                    match w {
                        SegmentWitness::Start => LineWitness::Vertex(e.verts[0]),
                        SegmentWitness::End => LineWitness::Vertex(e.verts[1]),
                        SegmentWitness::Interior => LineWitness::EdgeInterior(e.verts[0], e.verts[1]),
                    },
                );
            }
        }
        Ok(best)
    }
}

pub fn point_segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let l2 = dot(ab, ab);
    let t = if l2 > 0.0 { (dot(sub(x, a), ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    norm(sub(x, add(a, scale(ab, t))))
}

/// |(x - a) × u| / |u|.
pub fn point_line_distance<T: Real>(x: V3<T>, a: V3<T>, u: V3<T>) -> T {
    let c = vec::cross(vec::sub(x, a), u);
    (vec::norm2(c) / vec::norm2(u)).sqrt()
}

/// |(p - a)·(u × e)| / |u × e| for non-parallel lines.
pub fn line_line_distance<T: Real>(a: V3<T>, u: V3<T>, p: V3<T>, e: V3<T>) -> T {
    let n = vec::cross(u, e);
    (vec::dot(vec::sub(p, a), n) / vec::norm(n)).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentWitness {
    Start,
    End,
    Interior,
}

/// Distance between the line `a + t·u` and segment `[p, q]`.
pub fn line_segment_distance(a: Point, u: Point, p: Point, q: Point) -> (f64, SegmentWitness) {
    let e = sub(q, p);
    let w0 = sub(p, a);
    let aa = dot(u, u);
    let bb = dot(u, e);
    let cc = dot(e, e);
    let dd = dot(u, w0);
    let ee = dot(e, w0);
    let denom = bb * bb - aa * cc;
    if denom.abs() > 1e-12 * aa * cc {
        let s = (aa * ee - bb * dd) / denom;
        if s > 0.0 && s < 1.0 {
            return (line_line_distance(a, u, p, e), SegmentWitness::Interior);
        }
    }
    let d0 = point_line_distance(p, a, u);
    let d1 = point_line_distance(q, a, u);
    if d0 <= d1 {
        (d0, SegmentWitness::Start)
    } else {
        (d1, SegmentWitness::End)
    }
}

/// Signed distance to a cell: positive inside, negative outside.
pub fn signed_distance_to_cell(x: Point, cell: &ConvexCell) -> Result<f64> {
    cell.signed_distance(x).map(|r| r.0)
}

/// d(D, C) for a line that misses the cell.
pub fn line_to_cell_distance(line: &DualForm, cell: &ConvexCell) -> Result<f64> {
    if line.kind != DualKind::Line {
        return Err(DmeshError::Contract("line distance needs a line dual form".into()));
    }
    if cell.clip_line(line.anchor, line.direction).is_some() {
        return Err(DmeshError::Contract("line intersects the cell".into()));
    }
    cell.line_distance(line.anchor, line.direction).map(|r| r.0)
}

pub fn clip_line_by_cell(line: &DualForm, cell: &ConvexCell) -> Option<(f64, f64)> {
    if cell.is_empty() {
        return None;
    }
    cell.clip_line(line.anchor, line.direction).map(|(a, b, _, _)| (a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(x: f64, y: f64, w: f64) -> WeightedPoint {
        WeightedPoint::planar(x, y, w)
    }

    #[test]
    fn power_distance_examples() {
        assert_eq!(power_distance(&wp(0.0, 0.0, 0.0), &wp(3.0, 4.0, 0.0)), 25.0);
        assert_eq!(power_distance(&wp(1.0, 1.0, 1.0), &wp(1.0, 1.0, 1.0)), -2.0);
        assert_eq!(power_distance(&wp(0.0, 0.0, 2.0), &wp(1.0, 0.0, 3.0)), -4.0);
    }

    #[test]
    fn bisector_examples() {
        let h = bisector(&wp(0.0, 0.0, 0.0), &wp(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(h.offset / h.normal[0], 1.0);
        let h = bisector(&wp(0.0, 0.0, 1.0), &wp(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(h.offset / h.normal[0], 1.25);
        assert!(bisector(&wp(0.5, 0.5, 0.0), &wp(0.5, 0.5, 1.0)).is_err());
    }

    #[test]
    fn dual_form_examples() {
        let s = 3f64.sqrt();
        let tri = [wp(0.0, 0.0, 0.0), wp(1.0, 0.0, 0.0), wp(0.5, s / 2.0, 0.0)];
        let d = dual_form(2, &tri).unwrap();
        assert_eq!(d.kind, DualKind::Point);
        assert!((d.anchor[0] - 0.5).abs() < 1e-12 && (d.anchor[1] - s / 6.0).abs() < 1e-12);
        let d = dual_form(2, &[wp(0.0, 0.0, 0.0), wp(2.0, 0.0, 0.0)]).unwrap();
        assert_eq!(d.kind, DualKind::Line);
        assert_eq!(d.anchor, [1.0, 0.0, 0.0]);
        assert_eq!(d.direction, [0.0, 1.0, 0.0]);
        assert!(dual_form(2, &[wp(0.0, 0.0, 0.0), wp(1.0, 1.0, 0.0), wp(2.0, 2.0, 0.0)]).is_err());
    }

    #[test]
    fn unit_square_cell() {
        let c = ConvexCell::from_box(2, &Aabb::unit(2), None);
        assert_eq!(signed_distance_to_cell([0.5, 0.5, 0.0], &c).unwrap(), 0.5);
        assert_eq!(signed_distance_to_cell([2.0, 0.5, 0.0], &c).unwrap(), -1.0);
        let vert = DualForm { kind: DualKind::Line, anchor: [2.0, 0.0, 0.0], direction: [0.0, 1.0, 0.0] };
        assert_eq!(line_to_cell_distance(&vert, &c).unwrap(), 1.0);
        let through = DualForm { kind: DualKind::Line, anchor: [0.5, 0.5, 0.0], direction: [1.0, 0.0, 0.0] };
        let (a, b) = clip_line_by_cell(&through, &c).unwrap();
        assert!((b - a - 1.0).abs() < 1e-15 && (a + b).abs() < 1e-15);
        let diag = DualForm {
            kind: DualKind::Line,
            anchor: [2.0, 0.0, 0.0],
            direction: [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2, 0.0],
        };
        assert!(clip_line_by_cell(&diag, &c).is_some());
    }

    #[test]
    fn clipping_2d_and_3d() {
        let mut c = ConvexCell::from_box(2, &Aabb::unit(2), Some(0));
        c.clip(HalfPlane { normal: [1.0, 1.0, 0.0], offset: 1.0 }, PlaneLabel::Point(1));
        assert_eq!(c.vertices.len(), 3);
        for v in &c.vertices {
            for h in &c.planes {
                assert!(h.eval(v.pos) <= 1e-9);
            }
        }
        let mut c = ConvexCell::from_box(3, &Aabb::unit(3), Some(0));
        c.clip(HalfPlane { normal: [1.0, 1.0, 1.0], offset: 1.0 }, PlaneLabel::Point(1));
        assert_eq!(c.vertices.len(), 4);
        assert_eq!(c.facets.len(), 4);
        assert_eq!(c.edges().len(), 6);
        c.clip(HalfPlane { normal: [-1.0, 0.0, 0.0], offset: -2.0 }, PlaneLabel::Point(2));
        assert!(c.is_empty());
    }
}
