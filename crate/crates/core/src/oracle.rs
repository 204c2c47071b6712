//! Exhaustive reference computations: exact reduced cells and τ, the prior
//! single-sample projection method, and the speed/accuracy benchmark.

use crate::error::{DmeshError, Result};
use crate::geometry::{bisector, dual_coeffs, Aabb, ConvexCell, HalfPlane, PlaneLabel, Point, WeightedPoint};
use crate::power_diagram::build_power_diagram;
use crate::probability::{Evaluator, ProbConfig};
use crate::triangulation::{build_wdt, knn_candidate_faces_of, Simplex, WdtComplex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashSet;
use std::time::Instant;

fn opponent_planes(points: &[WeightedPoint], face: &Simplex, p: u32) -> Vec<HalfPlane> {
    let pp = &points[p as usize];
    (0..points.len() as u32)
        .filter(|r| !face.contains(*r))
        .filter_map(|r| bisector(pp, &points[r as usize]).ok())
        .collect()
}

/// R_{p|Δ}: bisectors of p against every point outside Δ, inside `bbox`.
pub fn exact_reduced_cell(points: &[WeightedPoint], dim: usize, face: &Simplex, p: u32, bbox: &Aabb) -> ConvexCell {
    let mut cell = ConvexCell::from_box(dim, bbox, Some(p as usize));
    let pp = &points[p as usize];
    let mut order: Vec<u32> = (0..points.len() as u32).filter(|r| !face.contains(*r)).collect();
    // nearest first keeps later clips cheap
    order.sort_by(|&a, &b| {
        crate::geometry::power_at(pp.position, &points[a as usize])
            .total_cmp(&crate::geometry::power_at(pp.position, &points[b as usize]))
    });
    for r in order {
        if let Ok(h) = bisector(pp, &points[r as usize]) {
            cell.clip(h, PlaneLabel::Point(r));
        }
        if cell.is_empty() {
            break;
        }
    }
    cell
}

/// max over t of min_j of the affine functions alpha_j - beta_j t,
/// restricted to [lo, hi].
fn max_min_affine(lines: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let f = |t: f64| lines.iter().map(|(a, b)| a - b * t).fold(f64::INFINITY, f64::min);
    let (mut l, mut h) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (l + h);
        if m <= l || m >= h {
            break;
        }
        // slope of the active piece at m
        let mut best = (f64::INFINITY, 0.0);
        for &(a, b) in lines {
            let v = a - b * m;
            if v < best.0 || (v == best.0 && b > best.1) {
                best = (v, b);
            }
        }
        if best.1 > 0.0 {
            h = m;
        } else {
            l = m;
        }
    }
    f(l).max(f(h))
}

/// Exact τ(D, R_{p|Δ}) = max over the dual form of the signed distance to
/// the reduced cell.
pub fn exact_tau(points: &[WeightedPoint], dim: usize, face: &Simplex, p: u32, bbox: &Aabb) -> Result<f64> {
    let pts: Vec<(Point, f64)> =
        face.indices().iter().map(|&i| (points[i as usize].position, points[i as usize].weight)).collect();
    let (a, u) = dual_coeffs(dim, &pts)
        .ok_or_else(|| DmeshError::DegenerateSimplex(face.indices().iter().map(|&i| i as usize).collect()))?;
    let mut planes = bbox.planes(dim);
    planes.extend(opponent_planes(points, face, p));
    let is_line = face.k() + 1 == dim;
    if !is_line {
        let inside = planes.iter().map(|h| h.signed_distance(a)).fold(f64::INFINITY, f64::min);
        if inside >= 0.0 {
            return Ok(inside);
        }
        let cell = exact_reduced_cell(points, dim, face, p, bbox);
        return if cell.is_empty() { Ok(-bbox.diagonal()) } else { Ok(cell.signed_distance(a)?.0) };
    }
    let ul = crate::geometry::norm(u);
    let u = crate::geometry::scale(u, 1.0 / ul);
    let lines: Vec<(f64, f64)> = planes
        .iter()
        .map(|h| {
            let n = crate::geometry::norm(h.normal);
            (-h.eval(a) / n, crate::geometry::dot(h.normal, u) / n)
        })
        .collect();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut empty = false;
    for &(al, be) in &lines {
        if be > 0.0 {
            hi = hi.min(al / be);
        } else if be < 0.0 {
            lo = lo.max(al / be);
        } else if al < 0.0 {
            empty = true;
        }
    }
    if !empty && lo <= hi {
        return Ok(max_min_affine(&lines, lo, hi));
    }
    let cell = exact_reduced_cell(points, dim, face, p, bbox);
    if cell.is_empty() {
        return Ok(-bbox.diagonal());
    }
    Ok(-cell.line_distance(a, u)?.0)
}

/// Existence verdicts and τ of the prior method: one sample on the dual
/// form (its intersection with the simplex's affine hull) tested against
/// all bisectors.
pub fn prior_method_tau(points: &[WeightedPoint], dim: usize, face: &Simplex) -> Option<Vec<f64>> {
    let pts: Vec<(Point, f64)> =
        face.indices().iter().map(|&i| (points[i as usize].position, points[i as usize].weight)).collect();
    let (s, _) = dual_coeffs(dim, &pts)?;
    Some(
        face.indices()
            .iter()
            .map(|&p| {
                let pp = &points[p as usize];
                let mut best = f64::INFINITY;
                for (r, q) in points.iter().enumerate() {
                    if face.contains(r as u32) || q.position == pp.position {
                        continue;
                    }
                    let n = crate::geometry::scale(crate::geometry::sub(q.position, pp.position), 2.0);
                    let c = crate::geometry::dot(q.position, q.position) - crate::geometry::dot(pp.position, pp.position)
                        - q.weight
                        + pp.weight;
                    let d = (c - crate::geometry::dot(n, s)) / crate::geometry::norm(n);
                    best = best.min(d);
                }
                best
            })
            .collect(),
    )
}

fn verdict(taus: &[f64], alpha: f64) -> bool {
    let l: f64 = taus.iter().map(|&t| crate::autodiff::sigmoid(alpha * t)).sum::<f64>() / taus.len() as f64;
    l > 0.5
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleFace {
    pub face: Vec<u32>,
    pub exists: bool,
    pub exact_tau: Vec<f64>,
    pub fast_tau: Vec<f64>,
    pub verdict: bool,
    pub sign_agree: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub faces: Vec<OracleFace>,
    pub build_ms: f64,
    pub eval_ms: f64,
}

/// Compares fast τ with exact τ for every query face.
pub fn compare_fast_exact(
    points: &[WeightedPoint],
    dim: usize,
    faces: &[Simplex],
    config: &ProbConfig,
) -> Result<OracleReport> {
    let t0 = Instant::now();
    let bbox = config.clip_box(dim);
    let wdt = build_wdt(points, dim)?;
    let pd = build_power_diagram(&wdt, points, &bbox)?;
    let build_ms = t0.elapsed().as_secs_f64() * 1e3;
    let ev = Evaluator::new(points, &wdt, &pd, *config);
    let t1 = Instant::now();
    let out: Vec<OracleFace> = faces
        .par_iter()
        .map(|f| {
            let fast: Vec<f64> = f.indices().iter().map(|&p| ev.tau(f, p).unwrap_or(f64::NAN)).collect();
            let exact: Vec<f64> =
                f.indices().iter().map(|&p| exact_tau(points, dim, f, p, &bbox).unwrap_or(f64::NAN)).collect();
            let sign_agree = fast
                .iter()
                .zip(&exact)
                .all(|(a, b)| b.abs() <= 1e-9 || (a.is_finite() && (*a > 0.0) == (*b > 0.0)));
            OracleFace {
                face: f.indices().to_vec(),
                exists: wdt.contains_simplex(f),
                verdict: exact.iter().all(|&t| t > 0.0),
                exact_tau: exact,
                fast_tau: fast,
                sign_agree,
            }
        })
        .collect();
    Ok(OracleReport { faces: out, build_ms, eval_ms: t1.elapsed().as_secs_f64() * 1e3 })
}

/// Uniform points in the unit box with weights drawn from 𝒩(0, variance).
pub fn random_weighted_points(n: usize, dim: usize, variance: f64, seed: u64) -> Vec<WeightedPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite variance");
    (0..n)
        .map(|_| {
            let mut p = [0.0; 3];
            for x in p.iter_mut().take(dim) {
                *x = rng.random::<f64>();
            }
            WeightedPoint::new(p, normal.sample(&mut rng), 1.0)
        })
        .collect()
}

/// Query set: up to `per_side` existing k-simplices plus non-existing ones
/// drawn from k-nearest-neighbour combinations. Balanced sets hold equal
/// counts; otherwise non-existing queries fill up to `2 * per_side`.
pub fn query_simplices(
    points: &[WeightedPoint],
    wdt: &WdtComplex,
    k: usize,
    per_side: usize,
    balanced: bool,
    seed: u64,
) -> Vec<Simplex> {
    let dim = wdt.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut existing: Vec<Simplex> = if k == dim {
        wdt.cells.iter().map(|c| Simplex::new(&c[..dim + 1])).collect()
    } else {
        wdt.enumerate_faces()
    };
    existing.sort_unstable();
    existing.shuffle(&mut rng);
    existing.truncate(per_side);
    let pos: Vec<Point> = points.iter().map(|p| p.position).collect();
    let mut pool: Vec<Simplex> = if k + 1 == dim {
        knn_candidate_faces_of(&pos, dim, 8)
    } else {
        // k = d: extend candidate faces by one more neighbour
        let index = crate::spatial::PointIndex::new(&pos);
        let mut set = HashSet::new();
        for (i, &p) in pos.iter().enumerate() {
            let nn: Vec<u32> = index.knn(p, 7).into_iter().map(|x| x.0 as u32).filter(|&j| j != i as u32).collect();
            for a in 0..nn.len() {
                for b in a + 1..nn.len() {
                    if dim == 2 {
                        set.insert(Simplex::new(&[i as u32, nn[a], nn[b]]));
                    } else {
                        for c in b + 1..nn.len() {
                            set.insert(Simplex::new(&[i as u32, nn[a], nn[b], nn[c]]));
                        }
                    }
                }
            }
        }
        let mut v: Vec<Simplex> = set.into_iter().collect();
        v.sort_unstable();
        v
    };
    pool.retain(|s| !wdt.contains_simplex(s));
    pool.shuffle(&mut rng);
    if balanced {
        pool.truncate(existing.len());
        existing.truncate(pool.len());
    } else {
        pool.truncate((2 * per_side).saturating_sub(existing.len()));
    }
    existing.extend(pool);
    existing
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub queries: usize,
    pub build_ms: f64,
    pub eval_ms: f64,
    pub fp_pct: f64,
    pub fn_pct: f64,
}

impl BenchRow {
    pub const HEADER: &'static str = "method,d,k,n,queries,build_ms,eval_ms,fp_pct,fn_pct";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3},{:.3},{:.4},{:.4}",
            self.method, self.d, self.k, self.n, self.queries, self.build_ms, self.eval_ms, self.fp_pct, self.fn_pct
        )
    }

    pub fn total_ms(&self) -> f64 {
        self.build_ms + self.eval_ms
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BenchOptions {
    pub weight_variance: f64,
    /// Existing (and non-existing) queries per point.
    pub queries_per_point: f64,
    /// Equal existing and non-existing counts.
    pub balanced: bool,
    pub run_prior: bool,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { weight_variance: 1e-3, queries_per_point: 1.0, balanced: true, run_prior: true, seed: 0 }
    }
}

/// Speed and accuracy of our kernel and the prior method for one setting.
/// Ground truth is membership in the exact triangulation.
pub fn bench(dim: usize, k: usize, n: usize, config: &ProbConfig, opt: &BenchOptions) -> Result<Vec<BenchRow>> {
    let points = random_weighted_points(n, dim, opt.weight_variance, opt.seed);
    let t0 = Instant::now();
    let wdt = build_wdt(&points, dim)?;
    let pd = build_power_diagram(&wdt, &points, &config.clip_box(dim))?;
    let build_ms = t0.elapsed().as_secs_f64() * 1e3;
    let per_side = ((n as f64 * opt.queries_per_point).ceil() as usize).max(1);
    let queries = query_simplices(&points, &wdt, k, per_side, opt.balanced, opt.seed);
    let truth: Vec<bool> = queries.iter().map(|q| wdt.contains_simplex(q)).collect();
    let score = |pred: &[bool]| {
        let q = pred.len().max(1) as f64;
        let fp = pred.iter().zip(&truth).filter(|(p, t)| **p && !**t).count() as f64;
        let fnn = pred.iter().zip(&truth).filter(|(p, t)| !**p && **t).count() as f64;
        (100.0 * fp / q, 100.0 * fnn / q)
    };
    let mut rows = Vec::new();
    let ev = Evaluator::new(&points, &wdt, &pd, *config);
    let t1 = Instant::now();
    let pred: Vec<bool> = queries
        .par_iter()
        .map(|f| {
            let taus: Vec<f64> = f.indices().iter().map(|&p| ev.tau(f, p).unwrap_or(f64::NEG_INFINITY)).collect();
            verdict(&taus, config.alpha_wdt)
        })
        .collect();
    let eval_ms = t1.elapsed().as_secs_f64() * 1e3;
    let (fp, fnn) = score(&pred);
    rows.push(BenchRow {
        method: "ours".into(),
        d: dim,
        k,
        n,
        queries: queries.len(),
        build_ms,
        eval_ms,
        fp_pct: fp,
        fn_pct: fnn,
    });
    if opt.run_prior {
        let t2 = Instant::now();
        let pred: Vec<bool> = queries
            .par_iter()
            .map(|f| prior_method_tau(&points, dim, f).map(|t| verdict(&t, config.alpha_wdt)).unwrap_or(false))
            .collect();
        let eval_ms = t2.elapsed().as_secs_f64() * 1e3;
        let (fp, fnn) = score(&pred);
        rows.push(BenchRow {
            method: "prior".into(),
            d: dim,
            k,
            n,
            queries: queries.len(),
            build_ms: 0.0,
            eval_ms,
            fp_pct: fp,
            fn_pct: fnn,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_reduced_cell_is_box() {
        let pts = vec![WeightedPoint::planar(0.3, 0.5, 0.0), WeightedPoint::planar(0.7, 0.5, 0.0)];
        let face = Simplex::new(&[0, 1]);
        let c = exact_reduced_cell(&pts, 2, &face, 0, &Aabb::unit(2));
        assert_eq!(c.vertices.len(), 4);
        let t = exact_tau(&pts, 2, &face, 0, &Aabb::unit(2)).unwrap();
        // dual line x = 0.5 clipped to the box: midpoint (0.5, 0.5)
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn max_min_affine_tent() {
        let v = max_min_affine(&[(1.0, 1.0), (1.0, -1.0)], -5.0, 5.0);
        assert!((v - 1.0).abs() < 1e-12);
    }
}
