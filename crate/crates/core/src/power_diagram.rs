//! Power diagram built from a regular triangulation by clipping a box with
//! the bisectors of each point's triangulation neighbours.

use crate::autodiff::vec::{self, V3};
use crate::autodiff::Real;
use crate::error::Result;
use crate::geometry::{bisector, bisector_coeffs, Aabb, ConvexCell, PlaneLabel, Point, WeightedPoint};
use crate::triangulation::WdtComplex;
use rayon::prelude::*;

/// One end of a diagram edge: the extra plane that cuts the edge line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeEnd {
    pub pos: Point,
    pub plane: PlaneLabel,
}

/// Segment shared by the cells of `generators` (two in 2D, three in 3D;
/// the first is the cell it was read from).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdEdge {
    pub generators: [u32; 3],
    pub ends: [EdgeEnd; 2],
}

#[derive(Clone, Debug)]
pub struct PowerDiagram {
    pub dim: usize,
    pub bbox: Aabb,
    /// Per point; empty for submerged points.
    pub cells: Vec<ConvexCell>,
    /// Inter-cell edges (box-boundary segments excluded).
    pub edges: Vec<PdEdge>,
}

/// Cell of point `p` clipped by bisectors against `others`.
pub fn clip_cell(
    dim: usize,
    points: &[WeightedPoint],
    p: usize,
    others: impl IntoIterator<Item = usize>,
    bbox: &Aabb,
) -> ConvexCell {
    let mut cell = ConvexCell::from_box(dim, bbox, Some(p));
    for q in others {
        if q == p {
            continue;
        }
        match bisector(&points[p], &points[q]) {
            Ok(h) => {
                cell.clip(h, PlaneLabel::Point(q as u32));
            }
            Err(_) => {
                // same position: the lighter point owns nothing
                if points[q].weight > points[p].weight || (points[q].weight == points[p].weight && q > p) {
                    cell.vertices.clear();
                    cell.facets.clear();
                }
            }
        }
        if cell.is_empty() {
            break;
        }
    }
    cell
}

pub fn build_power_diagram(wdt: &WdtComplex, points: &[WeightedPoint], bbox: &Aabb) -> Result<PowerDiagram> {
    let dim = wdt.dim;
    let cells: Vec<ConvexCell> = (0..points.len())
        .into_par_iter()
        .map(|p| {
            if wdt.hidden[p] {
                let mut c = ConvexCell::from_box(dim, bbox, Some(p));
                c.vertices.clear();
                c.facets.clear();
                c
            } else {
                clip_cell(dim, points, p, wdt.point_neighbors(p).iter().map(|&q| q as usize), bbox)
            }
        })
        .collect();
    let edges = collect_edges(dim, &cells);
    Ok(PowerDiagram { dim, bbox: *bbox, cells, edges })
}

fn collect_edges(dim: usize, cells: &[ConvexCell]) -> Vec<PdEdge> {
    let mut out = Vec::new();
    for (p, cell) in cells.iter().enumerate() {
        if cell.is_empty() {
            continue;
        }
        if dim == 2 {
            let m = cell.facets.len();
            for i in 0..m {
                let f = &cell.facets[i];
                let PlaneLabel::Point(q) = cell.labels[f.plane as usize] else { continue };
                if (q as usize) < p {
                    continue;
                }
                let prev = cell.facets[(i + m - 1) % m].plane;
                let next = cell.facets[(i + 1) % m].plane;
                let a = cell.vertices[f.verts[0] as usize].pos;
                let b = cell.vertices[f.verts[1] as usize].pos;
                out.push(PdEdge {
                    generators: [p as u32, q, u32::MAX],
                    ends: [
                        EdgeEnd { pos: a, plane: cell.labels[prev as usize] },
                        EdgeEnd { pos: b, plane: cell.labels[next as usize] },
                    ],
                });
            }
        } else {
            for e in cell.edges() {
                let (PlaneLabel::Point(q), PlaneLabel::Point(r)) =
                    (cell.labels[e.planes[0] as usize], cell.labels[e.planes[1] as usize])
                else {
                    continue;
                };
                if (q as usize) < p || (r as usize) < p || q == r {
                    continue;
                }
                let end = |v: u32| {
                    let cv = cell.vertices[v as usize];
                    let extra = cv.planes.iter().copied().find(|x| !e.planes.contains(x)).unwrap_or(cv.planes[0]);
                    EdgeEnd { pos: cv.pos, plane: cell.labels[extra as usize] }
                };
                out.push(PdEdge { generators: [p as u32, q, r], ends: [end(e.verts[0]), end(e.verts[1])] });
            }
        }
    }
    out
}

/// Solves n_i·x = c_i for `dim` planes by Cramer's rule.
pub fn solve_planes<T: Real>(dim: usize, planes: &[(V3<T>, T)]) -> V3<T> {
    let zero = planes[0].1.lift(0.0);
    if dim == 2 {
        let (n1, c1) = planes[0];
        let (n2, c2) = planes[1];
        let det = n1[0] * n2[1] - n1[1] * n2[0];
        return [(c1 * n2[1] - c2 * n1[1]) / det, (n1[0] * c2 - n2[0] * c1) / det, zero];
    }
    let (n1, c1) = planes[0];
    let (n2, c2) = planes[1];
    let (n3, c3) = planes[2];
    let x23 = vec::cross(n2, n3);
    let det = vec::dot(n1, x23);
    let s = vec::add(
        vec::add(vec::scale(x23, c1), vec::scale(vec::cross(n3, n1), c2)),
        vec::scale(vec::cross(n1, n2), c3),
    );
    vec::scale(s, det.lift(1.0) / det)
}

/// Coefficients of a labelled plane of the cell of `p`, with point
/// attributes supplied by `attr(i) -> (position, weight)`.
pub fn plane_coeffs<T: Real>(
    label: PlaneLabel,
    p: usize,
    bbox: &Aabb,
    dim: usize,
    attr: &impl Fn(usize) -> (V3<T>, T),
) -> (V3<T>, T) {
    match label {
        PlaneLabel::Point(q) => {
            let (pp, wp) = attr(p);
            let (qq, wq) = attr(q as usize);
            bisector_coeffs(pp, wp, qq, wq)
        }
        PlaneLabel::Box(b) => {
            let h = bbox.planes(dim)[b as usize];
            let (pp, _) = attr(p);
            (vec::lift(pp[0], h.normal), pp[0].lift(h.offset))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triangulation::build_wdt;

    #[test]
    fn two_points_split_by_bisector() {
        let pts = vec![
            WeightedPoint::planar(0.25, 0.5, 0.0),
            WeightedPoint::planar(0.75, 0.5, 0.0),
            WeightedPoint::planar(0.5, 3.0, -100.0),
        ];
        // third point is far and negligible; it only makes the input non-degenerate
        let wdt = build_wdt(&pts, 2).unwrap();
        let pd = build_power_diagram(&wdt, &pts, &Aabb::unit(2)).unwrap();
        assert!(pd.cells[2].is_empty());
        for v in &pd.cells[0].vertices {
            assert!(v.pos[0] <= 0.5 + 1e-12);
        }
        let len: f64 = pd.edges.iter().map(|e| crate::geometry::norm(crate::geometry::sub(e.ends[1].pos, e.ends[0].pos))).sum();
        assert!((len - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cramer_matches() {
        let planes = [([1.0, 0.0, 0.0], 0.3), ([0.0, 2.0, 0.0], 0.4), ([0.0, 0.0, -1.0], 0.1)];
        assert_eq!(solve_planes(3, &planes), [0.3, 0.2, -0.1]);
    }
}
