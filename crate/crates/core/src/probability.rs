//! Face existence probabilities Λ = Λ_wdt · Λ_real with analytic gradients.
//!
//! τ for a vertex p of face Δ:
//! * Δ in the triangulation: signed distance from the midpoint of the dual
//!   line clipped to the reduced cell R_{p|Δ}. The reduced cell is rebuilt
//!   from the bisectors against the neighbours of Δ's vertices plus hidden
//!   points that resurface inside the cells of the removed vertices.
//! * otherwise: minus the distance between the dual line and the power cell
//!   of p.

use crate::autodiff::vec::{self, V3};
use crate::autodiff::{sigmoid, Real, Tape, Var};
use crate::error::{DmeshError, Result};
use crate::geometry::{
    bisector, dot, dual_coeffs, line_line_distance, point_line_distance, power_at, Aabb, ConvexCell, HalfPlane,
    LineWitness, PlaneLabel, Point, WeightedPoint,
};
use crate::power_diagram::{plane_coeffs, solve_planes, PowerDiagram};
use crate::spatial::PointIndex;
use crate::triangulation::{Simplex, WdtComplex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Mutex;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbConfig {
    /// Sigmoid sharpness applied to τ.
    pub alpha_wdt: f64,
    /// Softmin sharpness for Λ_real.
    pub beta: f64,
    /// Margin around the unit box used to bound power cells.
    pub clip_margin: f64,
}

impl Default for ProbConfig {
    fn default() -> Self {
        Self { alpha_wdt: 1000.0, beta: 100.0, clip_margin: 0.0 }
    }
}

impl ProbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_wdt > 0.0 && self.beta > 0.0 && self.clip_margin >= 0.0) {
            return Err(DmeshError::Config(format!("invalid probability config {self:?}")));
        }
        Ok(())
    }

    pub fn clip_box(&self, dim: usize) -> Aabb {
        Aabb::unit(dim).expanded(dim, self.clip_margin)
    }
}

/// Partials with respect to (x, y, z, weight, ψ).
pub type Grad5 = [f64; 5];

#[derive(Clone, Debug, PartialEq)]
pub struct FaceEval {
    pub face: Simplex,
    /// Whether the face belongs to the triangulation.
    pub exists: bool,
    pub tau: Vec<f64>,
    pub lambda_wdt: f64,
    pub lambda_real: f64,
    pub lambda: f64,
    /// ∂Λ_wdt per contributing point (ψ slot unused).
    pub grad_wdt: Vec<(u32, Grad5)>,
    /// ∂Λ_real/∂ψ per face vertex, in face order.
    pub grad_real: Vec<f64>,
    pub error: Option<String>,
}

impl FaceEval {
    /// Sparse ∂Λ for every contributing point.
    pub fn grads(&self) -> Vec<(u32, Grad5)> {
        let mut out: Vec<(u32, Grad5)> =
            self.grad_wdt.iter().map(|(i, g)| (*i, g.map(|x| x * self.lambda_real))).collect();
        for (k, &v) in self.face.indices().iter().enumerate() {
            let gr = self.grad_real[k] * self.lambda_wdt;
            match out.iter_mut().find(|(i, _)| *i == v) {
                Some((_, g)) => g[4] += gr,
                None => out.push((v, [0.0, 0.0, 0.0, 0.0, gr])),
            }
        }
        out.sort_by_key(|x| x.0);
        out
    }
}

/// Softmin of ψ and its gradient.
pub fn lambda_real(psi: &[f64], beta: f64) -> (f64, Vec<f64>) {
    let m = psi.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = psi.iter().map(|&p| (-beta * (p - m)).exp()).collect();
    let z: f64 = e.iter().sum();
    let kappa: Vec<f64> = e.iter().map(|x| x / z).collect();
    let val: f64 = kappa.iter().zip(psi).map(|(k, p)| k * p).sum();
    let grad = kappa.iter().zip(psi).map(|(k, p)| k * (1.0 + beta * (val - p))).collect();
    (val, grad)
}

/// How τ of one vertex is reproduced on the tape.
#[derive(Clone, Copy, Debug)]
enum TauPlan {
    Const(f64),
    ExistLine { lo: PlaneLabel, hi: PlaneLabel, near: PlaneLabel },
    ExistPoint { near: PlaneLabel },
    NearVertex { planes: [PlaneLabel; 3] },
    NearEdge { a: [PlaneLabel; 3], b: [PlaneLabel; 3] },
}

pub struct Evaluator<'a> {
    pub dim: usize,
    pub points: &'a [WeightedPoint],
    pub wdt: &'a WdtComplex,
    pub pd: &'a PowerDiagram,
    pub config: ProbConfig,
    /// Λ_wdt partials are skipped for faces with Λ_real at or below this.
    pub grad_floor: f64,
    hidden: Vec<usize>,
    hidden_index: PointIndex,
    max_hidden_weight: f64,
    hidden_cache: Mutex<HashMap<(u32, u32), Vec<u32>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(points: &'a [WeightedPoint], wdt: &'a WdtComplex, pd: &'a PowerDiagram, config: ProbConfig) -> Self {
        let hidden = wdt.hidden_indices();
        let hp: Vec<Point> = hidden.iter().map(|&i| points[i].position).collect();
        let max_hidden_weight = hidden.iter().map(|&i| points[i].weight).fold(f64::NEG_INFINITY, f64::max);
        Self {
            dim: wdt.dim,
            points,
            wdt,
            pd,
            config,
            grad_floor: -1.0,
            hidden_index: PointIndex::new(&hp),
            hidden,
            max_hidden_weight,
            hidden_cache: Mutex::new(HashMap::new()),
        }
    }

    fn bbox(&self) -> &Aabb {
        &self.pd.bbox
    }

    /// Points whose bisectors with `p` bound R_{p|Δ} when Δ is a face of
    /// the triangulation.
    pub fn reduced_opponents(&self, face: &Simplex, p: u32) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::with_capacity(64);
        for &q in face.indices() {
            out.extend(self.wdt.point_neighbors(q as usize).iter().copied().filter(|r| !face.contains(*r)));
        }
        if !self.hidden.is_empty() {
            for &q in face.indices() {
                if q != p {
                    out.extend(self.hidden_near(q, p));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Hidden points with lower power than `p` at some vertex of the cell
    /// of `q`; memoized since faces share vertex pairs.
    fn hidden_near(&self, q: u32, p: u32) -> Vec<u32> {
        if let Some(v) = self.hidden_cache.lock().expect("cache lock").get(&(q, p)) {
            return v.clone();
        }
        let pp = &self.points[p as usize];
        let mut out = Vec::new();
        for v in &self.pd.cells[q as usize].vertices {
            let r2 = power_at(v.pos, pp) + self.max_hidden_weight;
            if r2 <= 0.0 {
                continue;
            }
            for hi in self.hidden_index.within(v.pos, r2) {
                let h = self.hidden[hi];
                if power_at(v.pos, &self.points[h]) < power_at(v.pos, pp) {
                    out.push(h as u32);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        self.hidden_cache.lock().expect("cache lock").insert((q, p), out.clone());
        out
    }

    /// Planes of the (approximate) reduced cell, box planes first.
    fn reduced_planes(&self, face: &Simplex, p: u32) -> Vec<(HalfPlane, PlaneLabel)> {
        let mut planes: Vec<(HalfPlane, PlaneLabel)> = self
            .bbox()
            .planes(self.dim)
            .into_iter()
            .enumerate()
            .map(|(i, h)| (h, PlaneLabel::Box(i as u8)))
            .collect();
        let pp = &self.points[p as usize];
        for r in self.reduced_opponents(face, p) {
            if let Ok(h) = bisector(pp, &self.points[r as usize]) {
                planes.push((h, PlaneLabel::Point(r)));
            }
        }
        planes
    }

    /// The reduced cell as a polytope (for inspection and tests).
    pub fn reduced_cell(&self, face: &Simplex, p: u32) -> ConvexCell {
        let mut cell = ConvexCell::from_box(self.dim, self.bbox(), Some(p as usize));
        for (h, l) in self.reduced_planes(face, p).into_iter().skip(2 * self.dim) {
            cell.clip(h, l);
        }
        cell
    }

    fn face_dual(&self, face: &Simplex) -> Option<(Point, Point)> {
        let pts: Vec<(Point, f64)> =
            face.indices().iter().map(|&i| (self.points[i as usize].position, self.points[i as usize].weight)).collect();
        dual_coeffs(self.dim, &pts)
    }

    fn plan(&self, face: &Simplex, p: u32, exists: bool, dual: (Point, Point)) -> (f64, TauPlan) {
        let (a, u) = dual;
        let is_line = face.k() + 1 == self.dim;
        if exists {
            let planes = self.reduced_planes(face, p);
            let v = if is_line {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                let (mut llo, mut lhi) = (None, None);
                let mut empty = false;
                for (h, l) in &planes {
                    let nu = dot(h.normal, u);
                    let r = h.offset - dot(h.normal, a);
                    if nu > 0.0 {
                        if r / nu < hi {
                            hi = r / nu;
                            lhi = Some(*l);
                        }
                    } else if nu < 0.0 {
                        if r / nu > lo {
                            lo = r / nu;
                            llo = Some(*l);
                        }
                    } else if r < 0.0 {
                        empty = true;
                    }
                }
                match (llo, lhi) {
                    (Some(l0), Some(l1)) if lo <= hi && !empty => {
                        let v = vec::add(a, vec::scale(u, 0.5 * (lo + hi)));
                        Some((v, Some((l0, l1))))
                    }
                    _ => None,
                }
            } else {
                Some((a, None))
            };
            if let Some((v, lims)) = v {
                let mut best = (f64::INFINITY, PlaneLabel::Box(0));
                for (h, l) in &planes {
                    let d = h.signed_distance(v);
                    if d < best.0 {
                        best = (d, *l);
                    }
                }
                if best.0 >= 0.0 {
                    let plan = match lims {
                        Some((lo, hi)) => TauPlan::ExistLine { lo, hi, near: best.1 },
                        None => TauPlan::ExistPoint { near: best.1 },
                    };
                    return (best.0, plan);
                }
            }
            log::debug!("face {:?} exists but its dual misses the reduced cell of {p}", face.indices());
        }
        let cell = &self.pd.cells[p as usize];
        if cell.is_empty() {
            let d = -self.bbox().diagonal();
            return (d, TauPlan::Const(d));
        }
        let labels = |v: u32| {
            let cv = cell.vertices[v as usize];
            let mut l = [PlaneLabel::Box(0); 3];
            for k in 0..self.dim {
                l[k] = cell.labels[cv.planes[k] as usize];
            }
            l
        };
        if !is_line {
            let d = cell.signed_distance(a).map(|r| r.0).unwrap_or(0.0).min(0.0);
            return (d, TauPlan::Const(d));
        }
        match cell.line_distance(a, u) {
            Ok((d, LineWitness::Vertex(v))) => (-d, TauPlan::NearVertex { planes: labels(v) }),
            Ok((d, LineWitness::EdgeInterior(x, y))) => (-d, TauPlan::NearEdge { a: labels(x), b: labels(y) }),
            _ => (0.0, TauPlan::Const(0.0)),
        }
    }

    fn run_plan<T: Real>(
        &self,
        plan: &TauPlan,
        p: u32,
        dual: (V3<T>, V3<T>),
        attr: &impl Fn(usize) -> (V3<T>, T),
    ) -> T {
        let (a, u) = dual;
        let like = a[0];
        let plane = |l: PlaneLabel| plane_coeffs(l, p as usize, self.bbox(), self.dim, attr);
        let vertex = |ls: &[PlaneLabel; 3]| {
            let pl: Vec<(V3<T>, T)> = ls[..self.dim].iter().map(|&l| plane(l)).collect();
            solve_planes(self.dim, &pl)
        };
        let dist_to = |v: V3<T>, l: PlaneLabel| {
            let (n, c) = plane(l);
            (c - vec::dot(n, v)) / vec::norm(n)
        };
        match plan {
            TauPlan::Const(c) => like.lift(*c),
            TauPlan::ExistLine { lo, hi, near } => {
                let t = |l: PlaneLabel| {
                    let (n, c) = plane(l);
                    (c - vec::dot(n, a)) / vec::dot(n, u)
                };
                let mid = (t(*lo) + t(*hi)) * 0.5;
                dist_to(vec::add(a, vec::scale(u, mid)), *near)
            }
            TauPlan::ExistPoint { near } => dist_to(a, *near),
            TauPlan::NearVertex { planes } => -point_line_distance(vertex(planes), a, u),
            TauPlan::NearEdge { a: ea, b: eb } => {
                let x = vertex(ea);
                let y = vertex(eb);
                -line_line_distance(a, u, x, vec::sub(y, x))
            }
        }
    }

    /// τ of vertex `p` of `face`.
    pub fn tau(&self, face: &Simplex, p: u32) -> Result<f64> {
        if !face.contains(p) {
            return Err(DmeshError::Contract(format!("{p} is not a vertex of {:?}", face.indices())));
        }
        let dual = self.face_dual(face).ok_or_else(|| degenerate(face))?;
        Ok(self.plan(face, p, self.wdt.contains_simplex(face), dual).0)
    }

    /// Full evaluation of one face with gradients.
    pub fn evaluate(&self, face: &Simplex) -> FaceEval {
        let psi: Vec<f64> = face.indices().iter().map(|&i| self.points[i as usize].real_value).collect();
        let (lr, grad_real) = lambda_real(&psi, self.config.beta);
        let exists = self.wdt.contains_simplex(face);
        let mut out = FaceEval {
            face: *face,
            exists,
            tau: Vec::new(),
            lambda_wdt: 0.0,
            lambda_real: lr,
            lambda: 0.0,
            grad_wdt: Vec::new(),
            grad_real,
            error: None,
        };
        let Some(dual) = self.face_dual(face) else {
            out.error = Some(degenerate(face).to_string());
            return out;
        };
        let plans: Vec<(f64, TauPlan)> = face.indices().iter().map(|&p| self.plan(face, p, exists, dual)).collect();
        out.tau = plans.iter().map(|x| x.0).collect();
        let alpha = self.config.alpha_wdt;
        let n = face.indices().len() as f64;
        // sigmoid'(40) < 5e-18: partials vanish when every τ is that deep
        let saturated = out.tau.iter().all(|t| (alpha * t).abs() > 40.0);
        if saturated || out.lambda_real <= self.grad_floor {
            out.lambda_wdt = out.tau.iter().map(|&t| sigmoid(alpha * t)).sum::<f64>() / n;
            out.lambda = out.lambda_wdt * out.lambda_real;
            return out;
        }

        let tape = Tape::new();
        let vars: RefCell<HashMap<usize, (V3<Var>, Var)>> = RefCell::new(HashMap::new());
        let dim = self.dim;
        let attr = |i: usize| -> (V3<Var>, Var) {
            *vars.borrow_mut().entry(i).or_insert_with(|| {
                let p = &self.points[i];
                let z = if dim == 3 { tape.var(p.position[2]) } else { tape.constant(0.0) };
                ([tape.var(p.position[0]), tape.var(p.position[1]), z], tape.var(p.weight))
            })
        };
        let fpts: Vec<(V3<Var>, Var)> = face.indices().iter().map(|&i| attr(i as usize)).collect();
        let dual_t = dual_coeffs(dim, &fpts).expect("checked in f64");
        let mut lw = tape.constant(0.0);
        for (k, &p) in face.indices().iter().enumerate() {
            let mut t = self.run_plan(&plans[k].1, p, dual_t, &attr);
            // a tie in the recorded plan (e.g. a parallel edge) can give 0/0
            // on the tape while the f64 value is fine; keep it as a constant
            if !t.value().is_finite() {
                t = tape.constant(plans[k].0);
            }
            lw = lw + sigmoid(t * alpha) / n;
        }
        out.lambda_wdt = lw.value();
        out.lambda = out.lambda_wdt * out.lambda_real;
        let adj = tape.gradient(lw);
        let at = |v: Var| v.index().map(|i| adj[i]).unwrap_or(0.0);
        let mut grads: Vec<(u32, Grad5)> = vars
            .borrow()
            .iter()
            .map(|(&i, (x, w))| (i as u32, [at(x[0]), at(x[1]), at(x[2]), at(*w), 0.0]))
            .filter(|(_, g)| g.iter().all(|v| v.is_finite()))
            .collect();
        grads.sort_by_key(|x| x.0);
        out.grad_wdt = grads;
        out
    }

    pub fn evaluate_all(&self, faces: &[Simplex]) -> Vec<FaceEval> {
        faces.par_iter().map(|f| self.evaluate(f)).collect()
    }
}

fn degenerate(face: &Simplex) -> DmeshError {
    DmeshError::DegenerateSimplex(face.indices().iter().map(|&i| i as usize).collect())
}

pub fn evaluate_faces(
    faces: &[Simplex],
    points: &[WeightedPoint],
    wdt: &WdtComplex,
    pd: &PowerDiagram,
    config: &ProbConfig,
) -> Vec<FaceEval> {
    Evaluator::new(points, wdt, pd, *config).evaluate_all(faces)
}

/// Evaluations with Λ_wdt pinned to 1 (only ψ matters).
pub fn evaluate_faces_pinned(faces: &[Simplex], points: &[WeightedPoint], config: &ProbConfig) -> Vec<FaceEval> {
    faces
        .iter()
        .map(|f| {
            let psi: Vec<f64> = f.indices().iter().map(|&i| points[i as usize].real_value).collect();
            let (lr, grad_real) = lambda_real(&psi, config.beta);
            FaceEval {
                face: *f,
                exists: true,
                tau: Vec::new(),
                lambda_wdt: 1.0,
                lambda_real: lr,
                lambda: lr,
                grad_wdt: Vec::new(),
                grad_real,
                error: None,
            }
        })
        .collect()
}
