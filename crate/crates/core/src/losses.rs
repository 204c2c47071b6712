//! Objectives: mesh reconstruction, expected Chamfer distance over
//! probabilistic face samples, and the weight/real/quality regularizers.
//!
//! Each loss reports its value, a partial per evaluated face (∂L/∂Λ) and
//! direct partials per point; [`Grads::absorb`] chains the former through
//! the face evaluations.

use crate::autodiff::vec::{self, V3};
use crate::autodiff::{Real, Tape, Var};
use crate::error::{DmeshError, Result};
use crate::geometry::{cross, dot, norm, scale, sub, Point, WeightedPoint};
use crate::power_diagram::{plane_coeffs, solve_planes, PowerDiagram};
use crate::probability::{FaceEval, Grad5};
use crate::spatial::PointIndex;
use crate::triangulation::Simplex;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_weight: f64,
    pub lambda_real: f64,
    pub lambda_qual: f64,
    pub lambda_normal: f64,
    /// Faces whose sampling score falls below this are never sampled.
    pub eps_eta: f64,
    pub delta_high: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_weight: 1e-8, lambda_real: 1e-3, lambda_qual: 1e-3, lambda_normal: 0.0, eps_eta: 1e-2, delta_high: 0.8 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_weight, self.lambda_real, self.lambda_qual, self.lambda_normal, self.delta_high];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(0.0..1.0).contains(&self.eps_eta) {
            return Err(DmeshError::Config(format!("invalid loss weights {self:?}")));
        }
        Ok(())
    }
}

/// Gradient accumulator over all point attributes (x, y, z, w, ψ).
#[derive(Clone, Debug, PartialEq)]
pub struct Grads(pub Vec<Grad5>);

impl Grads {
    pub fn zeros(n: usize) -> Self {
        Self(vec![[0.0; 5]; n])
    }

    pub fn add_point(&mut self, i: usize, g: Grad5, s: f64) {
        for k in 0..5 {
            self.0[i][k] += s * g[k];
        }
    }

    /// Adds Σ_f d_lambda[f] · ∂Λ_f.
    pub fn absorb(&mut self, evals: &[FaceEval], d_lambda: &[f64]) {
        for (e, &d) in evals.iter().zip(d_lambda) {
            if d == 0.0 {
                continue;
            }
            for (i, g) in e.grads() {
                self.add_point(i as usize, g, d);
            }
        }
    }

    pub fn axpy(&mut self, s: f64, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for k in 0..5 {
                a[k] += s * b[k];
            }
        }
    }
}

/// A loss value with its partials.
#[derive(Clone, Debug)]
pub struct LossTerm {
    pub value: f64,
    /// ∂L/∂Λ per face evaluation.
    pub d_lambda: Vec<f64>,
    /// Direct partials per point.
    pub direct: Grads,
}

impl LossTerm {
    /// Total gradient per point.
    pub fn point_grads(&self, evals: &[FaceEval]) -> Grads {
        let mut g = self.direct.clone();
        g.absorb(evals, &self.d_lambda);
        g
    }
}

/// −Σ_{gt} Λ + Σ_{excluded} Λ.
pub fn mesh_recon_loss(gt_faces: &[Simplex], excluded_faces: &[Simplex], evals: &[FaceEval]) -> Result<(f64, Vec<f64>)> {
    let gt: HashSet<&Simplex> = gt_faces.iter().collect();
    if let Some(f) = excluded_faces.iter().find(|f| gt.contains(f)) {
        return Err(DmeshError::Contract(format!("face {:?} is both wanted and excluded", f.indices())));
    }
    let ex: HashSet<&Simplex> = excluded_faces.iter().collect();
    let mut seen = 0usize;
    let mut loss = 0.0;
    let d: Vec<f64> = evals
        .iter()
        .map(|e| {
            if gt.contains(&e.face) {
                seen += 1;
                loss -= e.lambda;
                -1.0
            } else if ex.contains(&e.face) {
                seen += 1;
                loss += e.lambda;
                1.0
            } else {
                0.0
            }
        })
        .collect();
    if seen < gt.len() + ex.len() {
        return Err(DmeshError::Contract("evaluations do not cover every wanted and excluded face".into()));
    }
    Ok((loss, d))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledPoint {
    pub position: Point,
    pub source_face: Simplex,
    /// Index of the source face in the evaluation list.
    pub face_index: usize,
    pub face_prob: f64,
    pub face_normal: Point,
    /// Barycentric coordinates over the source face's vertices.
    pub bary: [f64; 3],
}

/// Unit normal of a triangle, or of a segment in the plane.
pub fn face_normal(v: &[Point]) -> Point {
    let n = if v.len() == 3 {
        cross(sub(v[1], v[0]), sub(v[2], v[0]))
    } else {
        let e = sub(v[1], v[0]);
        [-e[1], e[0], 0.0]
    };
    let l = norm(n);
    if l > 0.0 {
        scale(n, 1.0 / l)
    } else {
        [0.0; 3]
    }
}

/// Area of a triangle, or length of a segment.
pub fn face_area(v: &[Point]) -> f64 {
    if v.len() == 3 {
        0.5 * norm(cross(sub(v[1], v[0]), sub(v[2], v[0])))
    } else {
        norm(sub(v[1], v[0]))
    }
}

/// Stratified face sampling: half the points by area·Λ_wdt·min ψ, half by
/// area·Λ_wdt·max ψ, after culling scores below `eps_eta`.
pub fn sample_mesh_points(
    evals: &[FaceEval],
    points: &[WeightedPoint],
    n: usize,
    weights: &LossWeights,
    seed: u64,
) -> Result<Vec<SampledPoint>> {
    let verts = |e: &FaceEval| -> Vec<Point> { e.face.indices().iter().map(|&i| points[i as usize].position).collect() };
    let areas: Vec<f64> = evals.iter().map(|e| face_area(&verts(e))).collect();
    let stratum = |pick: fn(f64, f64) -> f64| -> Vec<f64> {
        evals
            .iter()
            .zip(&areas)
            .map(|(e, &a)| {
                let psi = e.face.indices().iter().map(|&i| points[i as usize].real_value).fold(f64::NAN, pick);
                let bar = e.lambda_wdt * psi;
                if bar < weights.eps_eta || e.error.is_some() {
                    0.0
                } else {
                    a * bar
                }
            })
            .collect()
    };
    let strata = [stratum(f64::min), stratum(f64::max)];
    let live: Vec<bool> = strata.iter().map(|s| s.iter().sum::<f64>() > 0.0).collect();
    let counts = match (live[0], live[1]) {
        (true, true) => [n / 2, n - n / 2],
        (true, false) => [n, 0],
        (false, true) => [0, n],
        (false, false) => return Err(DmeshError::EmptySurface),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for (s, &c) in strata.iter().zip(&counts) {
        if c == 0 {
            continue;
        }
        let dist = WeightedIndex::new(s).map_err(|e| DmeshError::Numerical(e.to_string()))?;
        for _ in 0..c {
            let fi = dist.sample(&mut rng);
            let e = &evals[fi];
            let v = verts(e);
            let bary = if v.len() == 3 {
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let s1 = r1.sqrt();
                [1.0 - s1, s1 * (1.0 - r2), s1 * r2]
            } else {
                let t: f64 = rng.random();
                [1.0 - t, t, 0.0]
            };
            let mut pos = [0.0; 3];
            for (k, vk) in v.iter().enumerate() {
                pos = crate::geometry::add(pos, scale(*vk, bary[k]));
            }
            out.push(SampledPoint {
                position: pos,
                source_face: e.face,
                face_index: fi,
                face_prob: e.lambda,
                face_normal: face_normal(&v),
                bary,
            });
        }
    }
    Ok(out)
}

/// Partials of a Chamfer term with respect to its sample inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ChamferGrad {
    pub d_position: Vec<Point>,
    pub d_prob: Vec<f64>,
}

impl ChamferGrad {
    fn zeros(n: usize) -> Self {
        Self { d_position: vec![[0.0; 3]; n], d_prob: vec![0.0; n] }
    }

    /// Chains sample partials to face Λ partials and vertex positions.
    /// Face normals are treated as constants.
    pub fn chain(&self, samples: &[SampledPoint], n_faces: usize, n_points: usize) -> LossTerm {
        let mut d_lambda = vec![0.0; n_faces];
        let mut direct = Grads::zeros(n_points);
        for (s, (dp, dl)) in samples.iter().zip(self.d_position.iter().zip(&self.d_prob)) {
            d_lambda[s.face_index] += dl;
            for (k, &v) in s.source_face.indices().iter().enumerate() {
                let g = [dp[0], dp[1], dp[2], 0.0, 0.0];
                direct.add_point(v as usize, g, s.bary[k]);
            }
        }
        LossTerm { value: 0.0, d_lambda, direct }
    }
}

fn dbar(p: Point, pn: Option<Point>, q: Point, qn: Point, lambda_normal: f64) -> (f64, Point) {
    let diff = sub(q, p);
    let l = norm(diff);
    let g = if l > 0.0 { scale(diff, 1.0 / l) } else { [0.0; 3] };
    let nt = match pn {
        Some(n) if lambda_normal > 0.0 => lambda_normal * (1.0 - dot(n, qn).abs()),
        _ => 0.0,
    };
    (l + nt, g)
}

/// Result of the ground-truth-to-samples term.
#[derive(Clone, Debug)]
pub struct ChamferGt {
    pub value: f64,
    pub grad: ChamferGrad,
    /// k to use next step.
    pub next_k: usize,
    /// Largest residual survival probability after k neighbours.
    pub max_residual: f64,
}

/// Upper bound on the adaptive neighbour count.
pub const MAX_K: usize = 64;

/// Σ over gt points of the expected distance to the first existing sample
/// among its k nearest, with samples from an already-seen face skipped.
pub fn expected_chamfer_gt_to_ours(
    gt_points: &[Point],
    gt_normals: Option<&[Point]>,
    samples: &[SampledPoint],
    k: usize,
    weights: &LossWeights,
) -> Result<ChamferGt> {
    if samples.is_empty() {
        return Err(DmeshError::EmptySurface);
    }
    let k = k.max(1);
    let pos: Vec<Point> = samples.iter().map(|s| s.position).collect();
    let index = PointIndex::new(&pos);
    let per: Vec<(f64, f64, Vec<(usize, f64, Point)>)> = gt_points
        .par_iter()
        .enumerate()
        .map(|(gi, &g)| {
            let pn = gt_normals.map(|n| n[gi]);
            let mut nn: Vec<(usize, f64, Point)> = index
                .knn(g, k)
                .into_iter()
                .map(|(si, _)| {
                    let (d, dg) = dbar(g, pn, samples[si].position, samples[si].face_normal, weights.lambda_normal);
                    (si, d, dg)
                })
                .collect();
            nn.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let mut seen = HashSet::new();
            let first: Vec<bool> = nn.iter().map(|(si, _, _)| seen.insert(samples[*si].face_index)).collect();
            let p: Vec<f64> =
                nn.iter().zip(&first).map(|((si, _, _), &f)| if f { samples[*si].face_prob } else { 0.0 }).collect();
            // r[i] = expected distance given none of the first i was chosen
            let m = nn.len();
            let mut r = vec![0.0; m + 1];
            for i in (0..m).rev() {
                r[i] = nn[i].1 * p[i] + (1.0 - p[i]) * r[i + 1];
            }
            let mut surv = 1.0;
            let mut partials = Vec::with_capacity(m);
            for i in 0..m {
                let d_dbar = surv * p[i];
                // a repeated face has P = 0 regardless of Λ
                let d_p = if first[i] { surv * (nn[i].1 - r[i + 1]) } else { 0.0 };
                partials.push((nn[i].0, d_p, scale(nn[i].2, d_dbar)));
                surv *= 1.0 - p[i];
            }
            (r[0], surv, partials)
        })
        .collect();
    let mut grad = ChamferGrad::zeros(samples.len());
    let mut value = 0.0;
    let mut max_residual: f64 = 0.0;
    for (v, surv, partials) in per {
        value += v;
        max_residual = max_residual.max(surv);
        for (si, dp, dx) in partials {
            grad.d_prob[si] += dp;
            grad.d_position[si] = crate::geometry::add(grad.d_position[si], dx);
        }
    }
    let next_k = if max_residual > 1e-4 { (k + 1).min(MAX_K) } else { k.saturating_sub(1).max(1) };
    Ok(ChamferGt { value, grad, next_k, max_residual })
}

/// Σ over samples of Λ_pt times the distance to the closest of the k
/// nearest gt points.
pub fn expected_chamfer_ours_to_gt(
    samples: &[SampledPoint],
    gt_points: &[Point],
    gt_normals: Option<&[Point]>,
    k: usize,
    weights: &LossWeights,
) -> Result<(f64, ChamferGrad)> {
    if gt_points.is_empty() {
        return Err(DmeshError::EmptySurface);
    }
    let k = if weights.lambda_normal > 0.0 && gt_normals.is_some() { k.max(1) } else { 1 };
    let index = PointIndex::new(gt_points);
    let per: Vec<(f64, f64, Point)> = samples
        .par_iter()
        .map(|s| {
            let best = index
                .knn(s.position, k)
                .into_iter()
                .map(|(gi, _)| {
                    let gn = gt_normals.map(|n| n[gi]);
                    // distance is symmetric; orientation term uses the gt normal against the face normal
                    let (d, dg) = dbar(s.position, gn, gt_points[gi], s.face_normal, weights.lambda_normal);
                    (d, gi, dg)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .expect("gt is non-empty");
            // ∂|g − s|/∂s = −(g − s)/|g − s|
            (best.0, s.face_prob * best.0, scale(best.2, -s.face_prob))
        })
        .collect();
    let mut grad = ChamferGrad::zeros(samples.len());
    let mut value = 0.0;
    for (i, (d, v, dx)) in per.into_iter().enumerate() {
        value += v;
        grad.d_prob[i] = d;
        grad.d_position[i] = dx;
    }
    Ok((value, grad))
}

fn attr_var<'t>(tape: &'t Tape, dim: usize, p: &WeightedPoint) -> (V3<Var<'t>>, Var<'t>) {
    let z = if dim == 3 { tape.var(p.position[2]) } else { tape.constant(0.0) };
    ([tape.var(p.position[0]), tape.var(p.position[1]), z], tape.var(p.weight))
}

/// Total length of inter-cell dual edges, with partials through every
/// plane that fixes an edge endpoint.
pub fn weight_regularization(pd: &PowerDiagram, points: &[WeightedPoint]) -> (f64, Grads) {
    let dim = pd.dim;
    let parts: Vec<(f64, Vec<(usize, Grad5)>)> = pd
        .edges
        .par_iter()
        .map(|e| {
            let tape = Tape::new();
            let mut vars: HashMap<usize, (V3<Var>, Var)> = HashMap::new();
            let mut ids: Vec<usize> = e.generators.iter().filter(|&&g| g != u32::MAX).map(|&g| g as usize).collect();
            for end in &e.ends {
                if let crate::geometry::PlaneLabel::Point(q) = end.plane {
                    ids.push(q as usize);
                }
            }
            for &i in &ids {
                vars.entry(i).or_insert_with(|| attr_var(&tape, dim, &points[i]));
            }
            let attr = |i: usize| vars[&i];
            let p = e.generators[0] as usize;
            let ends: Vec<V3<Var>> = e
                .ends
                .iter()
                .map(|end| {
                    let mut planes = Vec::with_capacity(3);
                    for &g in e.generators[1..].iter().filter(|&&g| g != u32::MAX) {
                        planes.push(plane_coeffs(crate::geometry::PlaneLabel::Point(g), p, &pd.bbox, dim, &attr));
                    }
                    planes.push(plane_coeffs(end.plane, p, &pd.bbox, dim, &attr));
                    solve_planes(dim, &planes)
                })
                .collect();
            let len = vec::norm(vec::sub(ends[1], ends[0]));
            let adj = tape.gradient(len);
            let at = |v: Var| v.index().map(|i| adj[i]).unwrap_or(0.0);
            let g: Vec<(usize, Grad5)> =
                vars.iter().map(|(&i, (x, w))| (i, [at(x[0]), at(x[1]), at(x[2]), at(*w), 0.0])).collect();
            (len.value(), g)
        })
        .collect();
    let mut grads = Grads::zeros(points.len());
    let mut total = 0.0;
    for (len, g) in parts {
        if !len.is_finite() || g.iter().any(|(_, v)| v.iter().any(|x| !x.is_finite())) {
            log::warn!("skipping degenerate power-diagram edge");
            continue;
        }
        total += len;
        for (i, v) in g {
            grads.add_point(i, v, 1.0);
        }
    }
    (total, grads)
}

/// σ₁ + σ₂ of one face and its partials per vertex ψ.
pub fn real_sigma(psi: &[f64], delta_high: f64) -> (f64, Vec<f64>) {
    let m = psi.len() as f64;
    let mean = psi.iter().sum::<f64>() / m;
    let sgn = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    let s1 = psi.iter().map(|p| (p - mean).abs()).sum::<f64>() / m;
    let signs: Vec<f64> = psi.iter().map(|p| sgn(p - mean)).collect();
    let ssum: f64 = signs.iter().sum();
    let mut g: Vec<f64> = signs.iter().map(|s| (s - ssum / m) / m).collect();
    let high = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max) > delta_high;
    let mut s2 = 0.0;
    if high {
        s2 = psi.iter().map(|p| (1.0 - p).abs()).sum::<f64>() / m;
        for (gi, p) in g.iter_mut().zip(psi) {
            *gi -= sgn(1.0 - p) / m;
        }
    }
    (s1 + s2, g)
}

/// Λ-weighted mean of σ₁ + σ₂ over faces.
pub fn real_regularization(evals: &[FaceEval], points: &[WeightedPoint], delta_high: f64) -> LossTerm {
    let mut direct = Grads::zeros(points.len());
    let total: f64 = evals.iter().map(|e| e.lambda).sum();
    if total <= 0.0 {
        return LossTerm { value: 0.0, d_lambda: vec![0.0; evals.len()], direct };
    }
    let sig: Vec<(f64, Vec<f64>)> = evals
        .iter()
        .map(|e| {
            let psi: Vec<f64> = e.face.indices().iter().map(|&i| points[i as usize].real_value).collect();
            real_sigma(&psi, delta_high)
        })
        .collect();
    let value = evals.iter().zip(&sig).map(|(e, s)| e.lambda * s.0).sum::<f64>() / total;
    let d_lambda = sig.iter().map(|s| (s.0 - value) / total).collect();
    for (e, (_, g)) in evals.iter().zip(&sig) {
        for (k, &i) in e.face.indices().iter().enumerate() {
            direct.0[i as usize][4] += e.lambda * g[k] / total;
        }
    }
    LossTerm { value, d_lambda, direct }
}

/// Cap on the aspect ratio of near-degenerate triangles.
pub const AR_CAP: f64 = 1e6;

/// Aspect ratio (E_max / H_min)·√3/2; 1 for segments.
pub fn aspect_ratio<T: Real>(v: &[V3<T>]) -> T {
    if v.len() < 3 {
        return v[0][0].lift(1.0);
    }
    let (emax, hmin) = emax_hmin(v);
    (emax / hmin) * (3f64.sqrt() / 2.0)
}

fn emax_hmin<T: Real>(v: &[V3<T>]) -> (T, T) {
    let e2 = [vec::norm2(vec::sub(v[1], v[0])), vec::norm2(vec::sub(v[2], v[1])), vec::norm2(vec::sub(v[0], v[2]))];
    let mut m = e2[0];
    for x in &e2[1..] {
        if x.value() > m.value() {
            m = *x;
        }
    }
    let emax = m.sqrt();
    let area2 = vec::norm(vec::cross(vec::sub(v[1], v[0]), vec::sub(v[2], v[0])));
    // the shortest height falls on the longest edge
    (emax, area2 / emax)
}

/// AR·E_max of a face, with the cap applied.
fn quality_term<T: Real>(v: &[V3<T>]) -> T {
    if v.len() < 3 {
        return vec::norm(vec::sub(v[1], v[0]));
    }
    let (emax, hmin) = emax_hmin(v);
    if !(hmin.value() > 0.0) || emax.value() / hmin.value() * (3f64.sqrt() / 2.0) > AR_CAP {
        log::warn!("degenerate face in quality term, aspect ratio capped");
        return emax.lift(AR_CAP * emax.value());
    }
    emax * emax / hmin * (3f64.sqrt() / 2.0)
}

/// Λ-weighted mean of AR·E_max over faces.
pub fn quality_regularization(evals: &[FaceEval], points: &[WeightedPoint]) -> LossTerm {
    let mut direct = Grads::zeros(points.len());
    let total: f64 = evals.iter().map(|e| e.lambda).sum();
    if total <= 0.0 {
        return LossTerm { value: 0.0, d_lambda: vec![0.0; evals.len()], direct };
    }
    let terms: Vec<(f64, Vec<Point>)> = evals
        .par_iter()
        .map(|e| {
            let tape = Tape::new();
            let v: Vec<V3<Var>> = e
                .face
                .indices()
                .iter()
                .map(|&i| points[i as usize].position.map(|x| tape.var(x)))
                .collect();
            let t = quality_term(&v);
            let adj = tape.gradient(t);
            let at = |x: Var| x.index().map(|i| adj[i]).unwrap_or(0.0);
            (t.value(), v.iter().map(|p| [at(p[0]), at(p[1]), at(p[2])]).collect())
        })
        .collect();
    let value = evals.iter().zip(&terms).map(|(e, t)| e.lambda * t.0).sum::<f64>() / total;
    let d_lambda = terms.iter().map(|t| (t.0 - value) / total).collect();
    for (e, (_, g)) in evals.iter().zip(&terms) {
        for (k, &i) in e.face.indices().iter().enumerate() {
            let s = e.lambda / total;
            direct.add_point(i as usize, [g[k][0], g[k][1], g[k][2], 0.0, 0.0], s);
        }
    }
    LossTerm { value, d_lambda, direct }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(face: &[u32], lambda: f64) -> FaceEval {
        FaceEval {
            face: Simplex::new(face),
            exists: true,
            tau: vec![],
            lambda_wdt: lambda,
            lambda_real: 1.0,
            lambda,
            grad_wdt: vec![],
            grad_real: vec![0.0; face.len()],
            error: None,
        }
    }

    fn sample(pos: Point, face: usize, prob: f64) -> SampledPoint {
        SampledPoint {
            position: pos,
            source_face: Simplex::new(&[face as u32 * 3, face as u32 * 3 + 1, face as u32 * 3 + 2]),
            face_index: face,
            face_prob: prob,
            face_normal: [0.0, 0.0, 1.0],
            bary: [1.0, 0.0, 0.0],
        }
    }

    #[test]
    fn recon_at_optimum() {
        let ev = vec![eval(&[0, 1, 2], 1.0), eval(&[0, 1, 3], 0.0)];
        let (l, d) = mesh_recon_loss(&[Simplex::new(&[0, 1, 2])], &[Simplex::new(&[0, 1, 3])], &ev).unwrap();
        assert_eq!(l, -1.0);
        assert_eq!(d, vec![-1.0, 1.0]);
        assert!(mesh_recon_loss(&[ev[0].face], &[ev[0].face], &ev).is_err());
    }

    #[test]
    fn two_term_expectation() {
        let s = vec![sample([1.0, 0.0, 0.0], 0, 0.5), sample([2.0, 0.0, 0.0], 1, 0.5)];
        let r = expected_chamfer_gt_to_ours(&[[0.0; 3]], None, &s, 2, &LossWeights::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        assert_eq!(r.next_k, 3);
    }

    #[test]
    fn same_face_is_counted_once() {
        let s = vec![sample([1.0, 0.0, 0.0], 0, 0.5), sample([2.0, 0.0, 0.0], 0, 0.5)];
        let r = expected_chamfer_gt_to_ours(&[[0.0; 3]], None, &s, 2, &LossWeights::default()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sigma_examples() {
        let (s, _) = real_sigma(&[1.0, 0.0, 0.0], 0.8);
        assert!((s - (4.0 / 9.0 + 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(real_sigma(&[0.3, 0.3, 0.3], 0.8).0, 0.0);
        assert_eq!(real_sigma(&[1.0, 1.0, 1.0], 0.8).0, 0.0);
    }

    #[test]
    fn aspect_ratio_examples() {
        let eq = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.75f64.sqrt(), 0.0]];
        assert!((aspect_ratio(&eq) - 1.0).abs() < 1e-15);
        let right = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!((aspect_ratio(&right) - 3f64.sqrt()).abs() < 1e-12);
    }
}
