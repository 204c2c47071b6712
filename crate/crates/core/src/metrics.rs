//! Mesh quality and reconstruction metrics.

use crate::error::{DmeshError, Result};
use crate::geometry::{dist2, dot, Aabb, Point};
use crate::losses::aspect_ratio;
use crate::mesh::{sample_surface, TriMesh};
use crate::spatial::PointIndex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Symmetric Chamfer distance: mean squared nearest distance, summed
    /// over both directions.
    pub cd: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Absolute F1 distance threshold.
    pub f1_threshold: f64,
    pub nc: f64,
    pub n_verts: usize,
    pub n_faces: usize,
    pub mean_aspect_ratio: f64,
    pub nonmanifold_edge_pct: f64,
    pub nonmanifold_vertex_pct: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "cd,f1,precision,recall,f1_threshold,nc,n_verts,n_faces,mean_aspect_ratio,nonmanifold_edge_pct,nonmanifold_vertex_pct";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{},{},{},{:e},{},{},{},{},{},{}",
            self.cd,
            self.f1,
            self.precision,
            self.recall,
            self.f1_threshold,
            self.nc,
            self.n_verts,
            self.n_faces,
            self.mean_aspect_ratio,
            self.nonmanifold_edge_pct,
            self.nonmanifold_vertex_pct
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub n_samples: usize,
    /// F1 threshold as a fraction of the reference bounding-box diagonal.
    pub f1_threshold: f64,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { n_samples: 100_000, f1_threshold: 0.01, seed: 0 }
    }
}

/// Nearest squared distance and the matched index, for every query.
fn nearest_all(from: &[Point], to: &[Point]) -> Vec<(f64, usize)> {
    let index = PointIndex::new(to);
    from.par_iter().map(|&p| index.nearest(p).map(|(i, d)| (d, i)).expect("non-empty target")).collect()
}

/// Compares `mesh` against the reference `gt` on area-uniform samples.
pub fn evaluate(mesh: &TriMesh, gt: &TriMesh, opt: &EvalOptions) -> Result<EvalReport> {
    if mesh.faces.is_empty() || gt.faces.is_empty() {
        return Err(DmeshError::EmptyMesh);
    }
    let (pa, na) = sample_surface(mesh, opt.n_samples, opt.seed)?;
    let (pb, nb) = sample_surface(gt, opt.n_samples, opt.seed)?;
    let ab = nearest_all(&pa, &pb);
    let ba = nearest_all(&pb, &pa);
    let mean = |v: &[(f64, usize)]| v.iter().map(|x| x.0).sum::<f64>() / v.len() as f64;
    let cd = mean(&ab) + mean(&ba);
    let thr = opt.f1_threshold * gt.bbox().diagonal();
    let within = |v: &[(f64, usize)]| v.iter().filter(|x| x.0 <= thr * thr).count() as f64 / v.len() as f64;
    let precision = within(&ab);
    let recall = within(&ba);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    let cos = |from: &[Point], to: &[Point], m: &[(f64, usize)]| {
        from.iter().zip(m).map(|(n, (_, j))| dot(*n, to[*j]).abs()).sum::<f64>() / m.len() as f64
    };
    let nc = 0.5 * (cos(&na, &nb, &ab) + cos(&nb, &na, &ba));
    let stats = mesh_stats(mesh);
    Ok(EvalReport {
        cd,
        f1,
        precision,
        recall,
        f1_threshold: thr,
        nc,
        n_verts: stats.n_verts,
        n_faces: mesh.faces.len(),
        mean_aspect_ratio: stats.mean_aspect_ratio,
        nonmanifold_edge_pct: stats.nonmanifold_edge_pct,
        nonmanifold_vertex_pct: stats.nonmanifold_vertex_pct,
    })
}

/// Like [`evaluate`] with a point cloud as the reference; NC is 0 when
/// the cloud has no normals.
pub fn evaluate_points(mesh: &TriMesh, points: &[Point], normals: Option<&[Point]>, opt: &EvalOptions) -> Result<EvalReport> {
    if mesh.faces.is_empty() || points.is_empty() {
        return Err(DmeshError::EmptyMesh);
    }
    let (pa, na) = sample_surface(mesh, opt.n_samples, opt.seed)?;
    let ab = nearest_all(&pa, points);
    let ba = nearest_all(points, &pa);
    let mean = |v: &[(f64, usize)]| v.iter().map(|x| x.0).sum::<f64>() / v.len() as f64;
    let thr = opt.f1_threshold * Aabb::of_points(points).diagonal();
    let within = |v: &[(f64, usize)]| v.iter().filter(|x| x.0 <= thr * thr).count() as f64 / v.len() as f64;
    let (precision, recall) = (within(&ab), within(&ba));
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    let nc = normals.map_or(0.0, |nb| {
        let a: f64 = na.iter().zip(&ab).map(|(n, (_, j))| dot(*n, nb[*j]).abs()).sum::<f64>() / ab.len() as f64;
        let b: f64 = nb.iter().zip(&ba).map(|(n, (_, j))| dot(*n, na[*j]).abs()).sum::<f64>() / ba.len() as f64;
        0.5 * (a + b)
    });
    let stats = mesh_stats(mesh);
    Ok(EvalReport {
        cd: mean(&ab) + mean(&ba),
        f1,
        precision,
        recall,
        f1_threshold: thr,
        nc,
        n_verts: stats.n_verts,
        n_faces: mesh.faces.len(),
        mean_aspect_ratio: stats.mean_aspect_ratio,
        nonmanifold_edge_pct: stats.nonmanifold_edge_pct,
        nonmanifold_vertex_pct: stats.nonmanifold_vertex_pct,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshStats {
    /// Vertices referenced by at least one face.
    pub n_verts: usize,
    pub mean_aspect_ratio: f64,
    pub nonmanifold_edge_pct: f64,
    pub nonmanifold_vertex_pct: f64,
}

/// Counts, mean aspect ratio and non-manifoldness. An edge is
/// non-manifold with more than two incident faces; a vertex is when its
/// incident faces form more than one edge-connected fan.
pub fn mesh_stats(mesh: &TriMesh) -> MeshStats {
    let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
    let mut around: HashMap<u32, Vec<usize>> = HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            around.entry(f[k]).or_default().push(fi);
        }
    }
    let bad_edges = edges.values().filter(|&&c| c > 2).count();
    let mut bad_verts = 0;
    for (&v, fs) in &around {
        // union faces that share an edge through v
        let mut parent: Vec<usize> = (0..fs.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        let mut by_other: HashMap<u32, usize> = HashMap::new();
        for (li, &fi) in fs.iter().enumerate() {
            for &o in mesh.faces[fi].iter().filter(|&&o| o != v) {
                if let Some(&lj) = by_other.get(&o) {
                    let (a, b) = (find(&mut parent, li), find(&mut parent, lj));
                    parent[a] = b;
                } else {
                    by_other.insert(o, li);
                }
            }
        }
        let roots: HashSet<usize> = (0..fs.len()).map(|i| find(&mut parent, i)).collect();
        if roots.len() > 1 {
            bad_verts += 1;
        }
    }
    let ar: f64 =
        (0..mesh.faces.len()).map(|f| aspect_ratio(&mesh.face_points(f))).sum::<f64>() / mesh.faces.len().max(1) as f64;
    MeshStats {
        n_verts: around.len(),
        mean_aspect_ratio: ar,
        nonmanifold_edge_pct: 100.0 * bad_edges as f64 / edges.len().max(1) as f64,
        nonmanifold_vertex_pct: 100.0 * bad_verts as f64 / around.len().max(1) as f64,
    }
}

/// Recovery and false-positive ratios of a face set against ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// |extracted ∩ gt| / |gt|
    pub re: f64,
    /// |extracted \ gt| / |extracted|
    pub fp: f64,
    pub n_gt: usize,
    pub n_extracted: usize,
}

pub fn recovery(extracted: &HashSet<[u32; 3]>, gt: &HashSet<[u32; 3]>) -> RecoveryReport {
    let hit = extracted.intersection(gt).count();
    RecoveryReport {
        re: if gt.is_empty() { 1.0 } else { hit as f64 / gt.len() as f64 },
        fp: if extracted.is_empty() { 0.0 } else { (extracted.len() - hit) as f64 / extracted.len() as f64 },
        n_gt: gt.len(),
        n_extracted: extracted.len(),
    }
}

/// Symmetric mean-squared Chamfer distance between two point sets.
pub fn chamfer_points(a: &[Point], b: &[Point]) -> f64 {
    let ab: f64 = nearest_all(a, b).iter().map(|x| x.0).sum::<f64>() / a.len() as f64;
    let ba: f64 = nearest_all(b, a).iter().map(|x| x.0).sum::<f64>() / b.len() as f64;
    ab + ba
}

/// Brute-force nearest squared distance, for cross-checking.
pub fn nearest_brute(p: Point, pts: &[Point]) -> f64 {
    pts.iter().map(|&q| dist2(p, q)).fold(f64::INFINITY, f64::min)
}
