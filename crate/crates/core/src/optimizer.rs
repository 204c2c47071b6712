//! Optimization drivers: mesh conversion (known connectivity) and point
//! cloud reconstruction in two phases per epoch, with the supporting
//! initializers, face-set upkeep, point insertion and mesh extraction.

use crate::error::{DmeshError, Result};
use crate::geometry::{add, dist2, dot, scale, sub, Aabb, Point, WeightedPoint};
use crate::losses::{
    expected_chamfer_gt_to_ours, expected_chamfer_ours_to_gt, mesh_recon_loss, quality_regularization,
    real_regularization, sample_mesh_points, weight_regularization, Grads, LossWeights,
};
use crate::mesh::TriMesh;
use crate::power_diagram::{build_power_diagram, PowerDiagram};
use crate::probability::{evaluate_faces_pinned, Evaluator, FaceEval, ProbConfig};
use crate::triangulation::{build_wdt, knn_candidate_faces_of, Simplex, WdtComplex, NO_CELL};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn resize(&mut self, n: usize) {
        self.m.resize(n, 0.0);
        self.v.resize(n, 0.0);
    }

    /// One update of `x` along `g`; entries with `active[i] == false` or a
    /// non-finite gradient are left untouched.
    pub fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64, active: &[bool]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        let mut skipped = 0usize;
        for i in 0..x.len() {
            if !active[i] {
                continue;
            }
            if !g[i].is_finite() {
                skipped += 1;
                continue;
            }
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            x[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
        if skipped > 0 {
            log::warn!("skipped {skipped} attributes with non-finite gradients");
        }
    }
}

/// Where a point came from; decides which attributes move.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Origin {
    /// A ground-truth vertex; weight and ψ frozen, position kept near `anchor`.
    Gt { anchor: Point },
    Sample,
    Voronoi,
    Inserted,
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    One,
    Two,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    /// Adam step size for point-cloud reconstruction.
    pub lr: f64,
    /// Mesh conversion: step size, total steps and insertion cadence.
    pub convert_lr: f64,
    pub steps: usize,
    pub insert_every: usize,
    /// Random on-face points per insertion.
    pub insert_random: usize,
    /// Perturbation bound of ground-truth vertices, relative to model size.
    pub perturb_frac: f64,
    pub knn_every: usize,
    pub knn_k: usize,
    pub epochs: usize,
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    /// Sample counts for epochs 2, 3, ...
    pub refine_samples: Vec<usize>,
    /// Input samples used for the first-epoch initialization.
    pub init_samples: usize,
    /// Points drawn from the mesh per step for the Chamfer terms.
    pub n_samples: usize,
    pub chamfer_k: usize,
    pub ours_k: usize,
    /// Skip candidate faces whose largest ψ is below `eps_eta`; they can
    /// neither be sampled nor carry more than a negligible Λ.
    pub cull_low_psi: bool,
    /// Skip Λ_wdt partials for faces with Λ_real at or below this.
    pub grad_floor: f64,
    pub visibility_filter: bool,
    /// Skip inserted points that would remove a wanted face outright.
    pub insert_guard: bool,
    /// Also offer the orthocentres of cells around live excluded faces.
    pub insert_orthocentres: bool,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            convert_lr: 1e-4,
            steps: 5000,
            insert_every: 1000,
            insert_random: 50,
            perturb_frac: 0.01,
            knn_every: 10,
            knn_k: 8,
            epochs: 2,
            phase1_steps: 500,
            phase2_steps: 250,
            refine_samples: vec![1000, 3000, 10000],
            init_samples: 10_000,
            n_samples: 10_000,
            chamfer_k: 4,
            ours_k: 5,
            cull_low_psi: true,
            grad_floor: 1e-8,
            visibility_filter: false,
            insert_guard: false,
            insert_orthocentres: false,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if ![self.lr, self.convert_lr].iter().all(|v| *v >= 0.0 && v.is_finite()) || self.knn_k < 2 || self.perturb_frac < 0.0 {
            return Err(DmeshError::Config(format!("invalid optimizer config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptState {
    pub dim: usize,
    pub points: Vec<WeightedPoint>,
    pub origin: Vec<Origin>,
    /// Faces to evaluate (reconstruction) or wanted faces (conversion).
    pub candidate: BTreeSet<Simplex>,
    /// Faces to suppress (conversion only).
    pub excluded: BTreeSet<Simplex>,
    pub adam: Adam,
    pub step: usize,
    pub epoch: usize,
    pub phase: Phase,
    pub seed: u64,
    pub chamfer_k: usize,
    /// Allowed displacement of ground-truth vertices.
    pub perturb_bound: f64,
    /// Faces frozen for phase 2.
    pub frozen_faces: Vec<Simplex>,
}

impl OptState {
    fn new(dim: usize, points: Vec<WeightedPoint>, origin: Vec<Origin>, seed: u64) -> Self {
        let n = points.len();
        Self {
            dim,
            points,
            origin,
            candidate: BTreeSet::new(),
            excluded: BTreeSet::new(),
            adam: Adam::new(5 * n),
            step: 0,
            epoch: 0,
            phase: Phase::One,
            seed,
            chamfer_k: 4,
            perturb_bound: 0.0,
            frozen_faces: Vec::new(),
        }
    }

    fn push(&mut self, p: WeightedPoint, o: Origin) {
        self.points.push(p);
        self.origin.push(o);
        self.adam.resize(5 * self.points.len());
    }

    /// Triangulation and power diagram of the current points. A degenerate
    /// configuration is retried with a tiny deterministic jitter.
    pub fn rebuild(&self, prob: &ProbConfig) -> Result<(WdtComplex, PowerDiagram, Option<Vec<WeightedPoint>>)> {
        let bbox = prob.clip_box(self.dim);
        match build_wdt(&self.points, self.dim) {
            Ok(w) => {
                let pd = build_power_diagram(&w, &self.points, &bbox)?;
                Ok((w, pd, None))
            }
            Err(DmeshError::DegenerateInput(msg)) => {
                log::warn!("degenerate triangulation at step {} ({msg}); retrying with jitter", self.step);
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (self.step as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let mut pts = self.points.clone();
                for p in &mut pts {
                    for k in 0..self.dim {
                        p.position[k] += 1e-9 * (rng.random::<f64>() - 0.5);
                    }
                }
                let w = build_wdt(&pts, self.dim)?;
                let pd = build_power_diagram(&w, &pts, &bbox)?;
                Ok((w, pd, Some(pts)))
            }
            Err(e) => Err(e),
        }
    }

    fn active_mask(&self, phase: Phase) -> Vec<bool> {
        let mut m = vec![false; 5 * self.points.len()];
        for (i, o) in self.origin.iter().enumerate() {
            let a = &mut m[5 * i..5 * i + 5];
            match (phase, o) {
                (Phase::Two, _) => a[4] = true,
                (Phase::One, Origin::Gt { .. }) => a[..self.dim].fill(true),
                (Phase::One, _) => {
                    a[..self.dim].fill(true);
                    a[3] = true;
                    a[4] = true;
                }
            }
        }
        m
    }

    /// Adam step on the attributes unlocked in `phase`, then clamping.
    pub fn apply(&mut self, grads: &Grads, lr: f64, phase: Phase) {
        let mut x: Vec<f64> = Vec::with_capacity(5 * self.points.len());
        for p in &self.points {
            x.extend([p.position[0], p.position[1], p.position[2], p.weight, p.real_value]);
        }
        let g: Vec<f64> = grads.0.iter().flat_map(|g| g.iter().copied()).collect();
        let mask = self.active_mask(phase);
        self.adam.step(&mut x, &g, lr, &mask);
        for (i, p) in self.points.iter_mut().enumerate() {
            for k in 0..self.dim {
                p.position[k] = x[5 * i + k].clamp(0.0, 1.0);
            }
            p.weight = x[5 * i + 3];
            p.real_value = x[5 * i + 4].clamp(0.0, 1.0);
            if let Origin::Gt { anchor } = self.origin[i] {
                let d = sub(p.position, anchor);
                let l = dist2(p.position, anchor).sqrt();
                if l > self.perturb_bound {
                    p.position = add(anchor, scale(d, self.perturb_bound / l));
                }
            }
        }
    }
}

/// State over loaded points, all treated as free samples.
pub fn init_from_points(dim: usize, points: Vec<WeightedPoint>, seed: u64) -> OptState {
    let origin = vec![Origin::Sample; points.len()];
    OptState::new(dim, points, origin, seed)
}

fn pos3(p: [f64; 3]) -> WeightedPoint {
    WeightedPoint::new(p, 1.0, 1.0)
}

/// Ground-truth vertices with unit weight and ψ; they may drift by at
/// most `perturb_frac` of the model's bounding-box diagonal.
pub fn init_from_mesh(gt: &TriMesh, perturb_frac: f64, seed: u64) -> Result<OptState> {
    if gt.faces.is_empty() || gt.vertices.is_empty() {
        return Err(DmeshError::EmptyMesh);
    }
    let points: Vec<WeightedPoint> = gt.vertices.iter().map(|&v| pos3(v)).collect();
    let origin = gt.vertices.iter().map(|&v| Origin::Gt { anchor: v }).collect();
    let mut s = OptState::new(3, points, origin, seed);
    s.perturb_bound = perturb_frac * gt.bbox().diagonal();
    s.candidate = gt.faces.iter().map(|f| Simplex::new(f)).collect();
    Ok(s)
}

/// Poles of the Voronoi cells of `samples`: for every sample, the farthest
/// circumcentre among its Delaunay cells that falls inside `bbox`. Near
/// duplicates are merged.
pub fn voronoi_vertices(samples: &[Point], dim: usize, bbox: &Aabb) -> Result<Vec<Point>> {
    let pts: Vec<WeightedPoint> = samples.iter().map(|&p| WeightedPoint::new(p, 0.0, 1.0)).collect();
    let wdt = build_wdt(&pts, dim)?;
    let mut pole: Vec<Option<(f64, Point)>> = vec![None; samples.len()];
    for c in 0..wdt.cells.len() {
        let verts = wdt.cell(c);
        let cell: Vec<(Point, f64)> = verts.iter().map(|&i| (samples[i as usize], 0.0)).collect();
        let Some((x, _)) = crate::geometry::dual_coeffs(dim, &cell) else { continue };
        if (0..dim).any(|k| !x[k].is_finite() || x[k] < bbox.min[k] || x[k] > bbox.max[k]) {
            continue;
        }
        let r = dist2(x, samples[verts[0] as usize]);
        for &i in verts {
            let slot = &mut pole[i as usize];
            if slot.is_none_or(|(best, _)| r > best) {
                *slot = Some((r, x));
            }
        }
    }
    let mut seen: HashSet<[i64; 3]> = HashSet::new();
    let mut out = Vec::new();
    for (_, x) in pole.into_iter().flatten() {
        if seen.insert(x.map(|v| (v * 1e6).round() as i64)) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Samples (ψ = 1) plus the Voronoi vertices of the samples (ψ = 0), all
/// with unit weight.
pub fn init_from_samples(samples: &[Point], dim: usize, seed: u64) -> Result<OptState> {
    if samples.len() < dim + 1 {
        return Err(DmeshError::DegenerateInput(format!("{} samples in {dim}D", samples.len())));
    }
    let vor = voronoi_vertices(samples, dim, &Aabb::unit(dim))?;
    let mut points: Vec<WeightedPoint> = samples.iter().map(|&p| pos3(p)).collect();
    let mut origin = vec![Origin::Sample; samples.len()];
    for v in vor {
        points.push(WeightedPoint::new(v, 1.0, 0.0));
        origin.push(Origin::Voronoi);
    }
    Ok(OptState::new(dim, points, origin, seed))
}

/// n^d lattice points spanning the unit box, w = ψ = 1.
pub fn init_grid(n: usize, dim: usize, seed: u64) -> Result<OptState> {
    if n < 2 {
        return Err(DmeshError::Config("grid needs at least 2 points per axis".into()));
    }
    let mut points = Vec::new();
    let t = |i: usize| i as f64 / (n - 1) as f64;
    for i in 0..n {
        for j in 0..n {
            if dim == 2 {
                points.push(pos3([t(i), t(j), 0.0]));
            } else {
                for k in 0..n {
                    points.push(pos3([t(i), t(j), t(k)]));
                }
            }
        }
    }
    let origin = vec![Origin::Grid; points.len()];
    Ok(OptState::new(dim, points, origin, seed))
}

fn gt_indices(state: &OptState) -> Vec<usize> {
    (0..state.points.len()).filter(|&i| matches!(state.origin[i], Origin::Gt { .. })).collect()
}

/// Adds triangulation faces among ground-truth points that are not wanted,
/// and, when `knn` is set, k-nearest-neighbour face combinations of them.
pub fn maintain_excluded_faces(state: &mut OptState, wdt: &WdtComplex, knn: Option<usize>) -> usize {
    let before = state.excluded.len();
    let is_gt: Vec<bool> = state.origin.iter().map(|o| matches!(o, Origin::Gt { .. })).collect();
    for f in wdt.faces.keys() {
        if f.indices().iter().all(|&i| is_gt[i as usize]) && !state.candidate.contains(f) {
            state.excluded.insert(*f);
        }
    }
    if let Some(k) = knn {
        let ids = gt_indices(state);
        let pos: Vec<Point> = ids.iter().map(|&i| state.points[i].position).collect();
        for f in knn_candidate_faces_of(&pos, state.dim, k) {
            let g: Vec<u32> = f.indices().iter().map(|&i| ids[i as usize] as u32).collect();
            let s = Simplex::new(&g);
            if !state.candidate.contains(&s) {
                state.excluded.insert(s);
            }
        }
    }
    state.excluded.len() - before
}

fn barycenter(points: &[WeightedPoint], f: &Simplex) -> Point {
    let mut c = [0.0; 3];
    for &i in f.indices() {
        c = add(c, points[i as usize].position);
    }
    scale(c, 1.0 / f.indices().len() as f64)
}

/// Lloyd iterations from a seeded pick of initial centres.
fn kmeans(xs: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let k = k.min(xs.len());
    if k == 0 {
        return Vec::new();
    }
    let mut centres: Vec<Point> = sample_indices(rng, xs.len(), k).into_iter().map(|i| xs[i]).collect();
    for _ in 0..20 {
        let mut sum = vec![[0.0; 3]; k];
        let mut cnt = vec![0usize; k];
        for &x in xs {
            let j = (0..k).min_by(|&a, &b| dist2(x, centres[a]).total_cmp(&dist2(x, centres[b]))).unwrap_or(0);
            sum[j] = add(sum[j], x);
            cnt[j] += 1;
        }
        for j in 0..k {
            if cnt[j] > 0 {
                centres[j] = scale(sum[j], 1.0 / cnt[j] as f64);
            }
        }
    }
    centres
}

/// Surviving part of a face's dual line, `anchor + t·dir` for t in [lo, hi].
struct DualSpan {
    face: Simplex,
    anchor: Point,
    dir: Point,
    lo: f64,
    hi: f64,
}

/// Dual span of an existing face, from the orthocentres of its cells;
/// a hull face extends `far` beyond its single cell.
fn dual_span(points: &[WeightedPoint], wdt: &WdtComplex, f: &Simplex, far: f64) -> Option<DualSpan> {
    let cells = wdt.face_cells(f)?;
    let fp: Vec<(Point, f64)> = f.indices().iter().map(|&i| (points[i as usize].position, points[i as usize].weight)).collect();
    let (anchor, dir) = crate::geometry::dual_coeffs(3, &fp)?;
    let uu = dot(dir, dir);
    let mut ts = Vec::new();
    for &c in cells.iter().filter(|&&c| c != NO_CELL) {
        let cell = wdt.cell(c as usize);
        let cp: Vec<(Point, f64)> = cell.iter().map(|&i| (points[i as usize].position, points[i as usize].weight)).collect();
        let (x, _) = crate::geometry::dual_coeffs(3, &cp)?;
        let t = dot(sub(x, anchor), dir) / uu;
        ts.push(t);
        if cells[1] == NO_CELL {
            let opp = *cell.iter().find(|v| !f.contains(**v))?;
            let side = dot(sub(points[opp as usize].position, fp[0].0), dir);
            ts.push(t - side.signum() * far);
        }
    }
    if ts.len() < 2 {
        return None;
    }
    Some(DualSpan { face: *f, anchor, dir, lo: ts[0].min(ts[1]), hi: ts[0].max(ts[1]) })
}

impl DualSpan {
    /// The span left after adding point `x` with weight `w`; `None` when
    /// the face would disappear.
    fn clipped(&self, points: &[WeightedPoint], x: Point, w: f64) -> Option<(f64, f64)> {
        let p = &points[self.face.indices()[0] as usize];
        let d = sub(p.position, x);
        // x is closer in power where 2y·d > |p|² − w_p − |x|² + w
        let rhs = dot(p.position, p.position) - p.weight - dot(x, x) + w;
        let a = 2.0 * dot(self.anchor, d) - rhs;
        let b = 2.0 * dot(self.dir, d);
        let (mut lo, mut hi) = (self.lo, self.hi);
        // the face keeps the part where a + b·t >= 0
        if b.abs() < 1e-300 {
            return (a >= 0.0).then_some((lo, hi));
        }
        let t = -a / b;
        if b > 0.0 {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
        (lo < hi).then_some((lo, hi))
    }
}

/// Greedily accepts candidates that leave every existing wanted face in
/// the triangulation.
fn keep_wanted_faces(state: &OptState, wdt: &WdtComplex, cand: Vec<Point>) -> Vec<Point> {
    let mut spans: Vec<DualSpan> =
        state.candidate.iter().filter(|f| wdt.contains_face(f)).filter_map(|f| dual_span(&state.points, wdt, f, 1e3)).collect();
    let mut kept = Vec::new();
    for x in cand {
        let cut: Option<Vec<(f64, f64)>> = spans.iter().map(|s| s.clipped(&state.points, x, 1.0)).collect();
        if let Some(cut) = cut {
            for (s, (lo, hi)) in spans.iter_mut().zip(cut) {
                s.lo = lo;
                s.hi = hi;
            }
            kept.push(x);
        }
    }
    kept
}

/// Inserts ⌈0.1·n⌉ k-means centroids of the excluded faces that currently
/// exist, plus points at random spots on up to `n_random` of them.
/// Inserted points have w = 1 and ψ = 0. Returns the number added.
pub fn insert_points(state: &mut OptState, wdt: &WdtComplex, cfg: &OptConfig) -> usize {
    let live: Vec<Simplex> = state.excluded.iter().filter(|f| wdt.contains_face(f)).copied().collect();
    if live.is_empty() {
        return 0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(state.seed ^ 0x1f35_a7c3 ^ state.step as u64);
    let bary: Vec<Point> = live.iter().map(|f| barycenter(&state.points, f)).collect();
    let k = (live.len() as f64 * 0.1).ceil() as usize;
    let mut new_pts = kmeans(&bary, k, &mut rng);
    for i in sample_indices(&mut rng, live.len(), cfg.insert_random.min(live.len())) {
        let f = &live[i];
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let w = [1.0 - s, s * (1.0 - r2), s * r2];
        let mut x = [0.0; 3];
        for (j, &v) in f.indices().iter().enumerate() {
            x = add(x, scale(state.points[v as usize].position, w[j]));
        }
        new_pts.push(x);
    }
    if cfg.insert_orthocentres {
        let bbox = Aabb::unit(state.dim);
        let mut cells: Vec<u32> = live.iter().filter_map(|f| wdt.face_cells(f)).flatten().filter(|&c| c != NO_CELL).collect();
        cells.sort_unstable();
        cells.dedup();
        for c in cells {
            let cp: Vec<(Point, f64)> =
                wdt.cell(c as usize).iter().map(|&i| (state.points[i as usize].position, state.points[i as usize].weight)).collect();
            if let Some((x, _)) = crate::geometry::dual_coeffs(state.dim, &cp) {
                if (0..state.dim).all(|k| x[k] >= bbox.min[k] && x[k] <= bbox.max[k]) {
                    new_pts.push(x);
                }
            }
        }
    }
    if cfg.insert_guard {
        new_pts = keep_wanted_faces(state, wdt, new_pts);
    }
    let n = new_pts.len();
    for x in new_pts {
        state.push(WeightedPoint::new(x, 1.0, 0.0), Origin::Inserted);
    }
    n
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub loss: f64,
    pub recon: f64,
    pub weight: f64,
    pub real: f64,
    pub qual: f64,
    pub n_points: usize,
    pub n_faces: usize,
}

/// One conversion step: optional insertion, rebuild, face-set upkeep,
/// evaluation, reconstruction loss and update.
pub fn step_convert(state: &mut OptState, prob: &ProbConfig, cfg: &OptConfig) -> Result<StepReport> {
    let s = state.step;
    if cfg.insert_every > 0 && s >= 1 && (s == 1 || s % cfg.insert_every == 0) {
        let (wdt, _, _) = state.rebuild(prob)?;
        let n = insert_points(state, &wdt, cfg);
        log::info!("step {s}: inserted {n} points");
    }
    let (wdt, pd, jit) = state.rebuild(prob)?;
    let knn = (cfg.knn_every > 0 && s % cfg.knn_every == 0).then_some(cfg.knn_k);
    maintain_excluded_faces(state, &wdt, knn);
    let pts = jit.as_deref().unwrap_or(&state.points);
    let gt: Vec<Simplex> = state.candidate.iter().copied().collect();
    let ex: Vec<Simplex> = state.excluded.iter().copied().collect();
    let faces: Vec<Simplex> = gt.iter().chain(&ex).copied().collect();
    let ev = Evaluator::new(pts, &wdt, &pd, *prob);
    let evals = ev.evaluate_all(&faces);
    let (loss, d) = mesh_recon_loss(&gt, &ex, &evals)?;
    let mut g = Grads::zeros(state.points.len());
    g.absorb(&evals, &d);
    state.apply(&g, cfg.convert_lr, Phase::One);
    state.step += 1;
    Ok(StepReport { step: s, loss, recon: loss, n_points: state.points.len(), n_faces: faces.len(), ..Default::default() })
}

/// Observation for point-cloud reconstruction.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub normals: Option<Vec<Point>>,
}

fn eval_candidates(
    state: &OptState,
    pts: &[WeightedPoint],
    wdt: &WdtComplex,
    pd: &PowerDiagram,
    prob: &ProbConfig,
    cfg: &OptConfig,
    weights: &LossWeights,
) -> (Vec<Simplex>, Vec<FaceEval>) {
    let faces: Vec<Simplex> = state
        .candidate
        .iter()
        .filter(|f| {
            !cfg.cull_low_psi
                || f.indices().iter().map(|&i| pts[i as usize].real_value).fold(0.0, f64::max) >= weights.eps_eta
        })
        .copied()
        .collect();
    let mut ev = Evaluator::new(pts, wdt, pd, *prob);
    ev.grad_floor = cfg.grad_floor;
    let evals = ev.evaluate_all(&faces);
    (faces, evals)
}

/// Chamfer terms over `evals`, chained into point gradients.
fn chamfer_terms(
    state: &mut OptState,
    pts: &[WeightedPoint],
    evals: &[FaceEval],
    obs: &PointCloud,
    weights: &LossWeights,
    cfg: &OptConfig,
    with_positions: bool,
) -> Result<(f64, Grads)> {
    let seed = state.seed ^ ((state.epoch as u64) << 40) ^ state.step as u64;
    let samples = sample_mesh_points(evals, pts, cfg.n_samples, weights, seed)?;
    let normals = obs.normals.as_deref();
    let gt = expected_chamfer_gt_to_ours(&obs.points, normals, &samples, state.chamfer_k, weights)?;
    state.chamfer_k = gt.next_k;
    let (ours, og) = expected_chamfer_ours_to_gt(&samples, &obs.points, normals, cfg.ours_k, weights)?;
    let mut total = gt.grad.chain(&samples, evals.len(), pts.len());
    let o = og.chain(&samples, evals.len(), pts.len());
    for (a, b) in total.d_lambda.iter_mut().zip(&o.d_lambda) {
        *a += b;
    }
    total.direct.axpy(1.0, &o.direct);
    if !with_positions {
        total.direct = Grads::zeros(pts.len());
    }
    Ok((gt.value + ours, total.point_grads(evals)))
}

/// Phase-1 step of point-cloud reconstruction.
pub fn step_phase1(
    state: &mut OptState,
    obs: &PointCloud,
    weights: &LossWeights,
    prob: &ProbConfig,
    cfg: &OptConfig,
) -> Result<StepReport> {
    let s = state.step;
    let (wdt, pd, jit) = state.rebuild(prob)?;
    state.candidate.extend(wdt.faces.keys().copied());
    if cfg.knn_every > 0 && s % cfg.knn_every == 0 {
        let pos: Vec<Point> = state.points.iter().map(|p| p.position).collect();
        state.candidate.extend(knn_candidate_faces_of(&pos, state.dim, cfg.knn_k));
    }
    let pts_owned = jit.unwrap_or_else(|| state.points.clone());
    let pts = &pts_owned[..];
    let (faces, evals) = eval_candidates(state, pts, &wdt, &pd, prob, cfg, weights);
    let (recon, mut g) = chamfer_terms(state, pts, &evals, obs, weights, cfg, true)?;
    let (lw, gw) = if weights.lambda_weight > 0.0 { weight_regularization(&pd, pts) } else { (0.0, Grads::zeros(pts.len())) };
    let lr_term = real_regularization(&evals, pts, weights.delta_high);
    let lq_term = quality_regularization(&evals, pts);
    g.axpy(weights.lambda_weight, &gw);
    g.axpy(weights.lambda_real, &lr_term.point_grads(&evals));
    g.axpy(weights.lambda_qual, &lq_term.point_grads(&evals));
    let loss = recon + weights.lambda_weight * lw + weights.lambda_real * lr_term.value + weights.lambda_qual * lq_term.value;
    state.apply(&g, cfg.lr, Phase::One);
    state.step += 1;
    Ok(StepReport {
        step: s,
        loss,
        recon,
        weight: lw,
        real: lr_term.value,
        qual: lq_term.value,
        n_points: state.points.len(),
        n_faces: faces.len(),
    })
}

/// Freezes the current triangulation for phase 2.
pub fn enter_phase2(state: &mut OptState, prob: &ProbConfig) -> Result<()> {
    let (wdt, _, _) = state.rebuild(prob)?;
    state.frozen_faces = wdt.enumerate_faces();
    state.phase = Phase::Two;
    Ok(())
}

/// Phase-2 step: Λ_wdt pinned to 1 on the frozen faces, only ψ moves.
pub fn step_phase2(
    state: &mut OptState,
    obs: &PointCloud,
    weights: &LossWeights,
    prob: &ProbConfig,
    cfg: &OptConfig,
) -> Result<StepReport> {
    let s = state.step;
    let pts = state.points.clone();
    let faces: Vec<Simplex> = state
        .frozen_faces
        .iter()
        .filter(|f| {
            !cfg.cull_low_psi
                || f.indices().iter().map(|&i| pts[i as usize].real_value).fold(0.0, f64::max) >= weights.eps_eta
        })
        .copied()
        .collect();
    let evals = evaluate_faces_pinned(&faces, &pts, prob);
    let (recon, mut g) = chamfer_terms(state, &pts, &evals, obs, weights, cfg, false)?;
    let lr_term = real_regularization(&evals, &pts, weights.delta_high);
    g.axpy(weights.lambda_real, &lr_term.point_grads(&evals));
    let loss = recon + weights.lambda_real * lr_term.value;
    state.apply(&g, cfg.lr, Phase::Two);
    state.step += 1;
    Ok(StepReport {
        step: s,
        loss,
        recon,
        real: lr_term.value,
        n_points: state.points.len(),
        n_faces: faces.len(),
        ..Default::default()
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtractedMesh {
    pub mesh: TriMesh,
    /// Point index of every mesh vertex.
    pub provenance: Vec<u32>,
    /// Faces in point indices.
    pub point_faces: Vec<Simplex>,
}

/// Triangulation faces with Λ_wdt > 0.5 and Λ_real > 0.5. With the
/// visibility filter, a face also needs an opposite cell vertex with
/// ψ < 0.5 (hull faces check their single opposite vertex).
pub fn extract_mesh(state: &OptState, prob: &ProbConfig, visibility_filter: bool) -> Result<ExtractedMesh> {
    let (wdt, pd, jit) = state.rebuild(prob)?;
    let pts = jit.as_deref().unwrap_or(&state.points);
    let ev = Evaluator::new(pts, &wdt, &pd, *prob);
    let faces = wdt.enumerate_faces();
    let keep: Vec<Simplex> = faces
        .iter()
        .filter(|f| {
            let psi: Vec<f64> = f.indices().iter().map(|&i| pts[i as usize].real_value).collect();
            let (lr, _) = crate::probability::lambda_real(&psi, prob.beta);
            if lr <= 0.5 {
                return false;
            }
            let n = f.indices().len() as f64;
            let lw = f
                .indices()
                .iter()
                .map(|&p| crate::autodiff::sigmoid(prob.alpha_wdt * ev.tau(f, p).unwrap_or(f64::NEG_INFINITY)))
                .sum::<f64>()
                / n;
            if lw <= 0.5 {
                return false;
            }
            if visibility_filter {
                let cells = wdt.face_cells(f).unwrap_or([NO_CELL, NO_CELL]);
                let opp: Vec<f64> = cells
                    .iter()
                    .filter(|&&c| c != NO_CELL)
                    .filter_map(|&c| wdt.cell(c as usize).iter().find(|v| !f.contains(**v)))
                    .map(|&v| pts[v as usize].real_value)
                    .collect();
                return opp.iter().any(|&x| x < 0.5);
            }
            true
        })
        .copied()
        .collect();
    Ok(to_mesh(pts, &keep))
}

fn to_mesh(pts: &[WeightedPoint], faces: &[Simplex]) -> ExtractedMesh {
    let mut remap: HashMap<u32, u32> = HashMap::new();
    let mut provenance = Vec::new();
    let mut vertices = Vec::new();
    let mut tris = Vec::with_capacity(faces.len());
    for f in faces {
        let mut t = [0u32; 3];
        for (k, &i) in f.indices().iter().enumerate() {
            t[k] = *remap.entry(i).or_insert_with(|| {
                provenance.push(i);
                vertices.push(pts[i as usize].position);
                (vertices.len() - 1) as u32
            });
        }
        if f.indices().len() == 3 {
            tris.push(t);
        }
    }
    ExtractedMesh { mesh: TriMesh { vertices, faces: tris }, provenance, point_faces: faces.to_vec() }
}

/// Samples the current mesh and restarts from those samples, with fresh
/// optimizer moments. Falls back to the current sample-origin points when
/// the mesh is empty.
pub fn refine(state: &OptState, prob: &ProbConfig, n_samples: usize) -> Result<OptState> {
    let ex = extract_mesh(state, prob, false)?;
    let samples = match crate::mesh::sample_surface(&ex.mesh, n_samples, state.seed ^ (state.epoch as u64 + 1)) {
        Ok((p, _)) => p,
        Err(_) => {
            log::warn!("empty mesh at refinement; reusing current surface points");
            state
                .points
                .iter()
                .zip(&state.origin)
                .filter(|(_, o)| matches!(o, Origin::Sample))
                .map(|(p, _)| p.position)
                .collect()
        }
    };
    let mut next = init_from_samples(&samples, state.dim, state.seed)?;
    next.epoch = state.epoch + 1;
    next.chamfer_k = state.chamfer_k;
    Ok(next)
}

/// Progress of a run, one entry per step.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub steps: Vec<StepReport>,
    /// Expected Chamfer loss at the first step of every epoch and phase end.
    pub epoch_start_loss: Vec<f64>,
}

/// Mesh conversion run. `on_step` sees every report (for logging).
pub fn convert(
    gt: &TriMesh,
    prob: &ProbConfig,
    cfg: &OptConfig,
    seed: u64,
    mut on_step: impl FnMut(&OptState, &StepReport),
) -> Result<(OptState, RunLog)> {
    let mut state = init_from_mesh(gt, cfg.perturb_frac, seed)?;
    let mut log = RunLog::default();
    for _ in 0..cfg.steps {
        let r = step_convert(&mut state, prob, cfg)?;
        on_step(&state, &r);
        log.steps.push(r);
    }
    Ok((state, log))
}

/// Point-cloud reconstruction run over `cfg.epochs` epochs.
pub fn reconstruct(
    obs: &PointCloud,
    weights: &LossWeights,
    prob: &ProbConfig,
    cfg: &OptConfig,
    seed: u64,
    mut on_step: impl FnMut(&OptState, &StepReport),
) -> Result<(OptState, RunLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n0 = cfg.init_samples.min(obs.points.len());
    let mut idx: Vec<usize> = sample_indices(&mut rng, obs.points.len(), n0).into_vec();
    idx.sort_unstable();
    let init: Vec<Point> = idx.iter().map(|&i| obs.points[i]).collect();
    let mut state = init_from_samples(&init, 3, seed)?;
    state.chamfer_k = cfg.chamfer_k;
    let mut log = RunLog::default();
    for epoch in 0..cfg.epochs {
        if epoch > 0 {
            let n = cfg.refine_samples.get(epoch - 1).copied().unwrap_or(*cfg.refine_samples.last().unwrap_or(&1000));
            state = refine(&state, prob, n)?;
        }
        state.epoch = epoch;
        state.phase = Phase::One;
        for i in 0..cfg.phase1_steps {
            let r = step_phase1(&mut state, obs, weights, prob, cfg)?;
            if i == 0 {
                log.epoch_start_loss.push(r.recon);
            }
            on_step(&state, &r);
            log.steps.push(r);
        }
        enter_phase2(&mut state, prob)?;
        for _ in 0..cfg.phase2_steps {
            let r = step_phase2(&mut state, obs, weights, prob, cfg)?;
            on_step(&state, &r);
            log.steps.push(r);
        }
    }
    Ok((state, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_limits() {
        let mut a = Adam::new(1);
        let mut x = [1.0];
        a.step(&mut x, &[0.0], 0.1, &[true]);
        assert_eq!(x[0], 1.0);
        let mut a = Adam::new(1);
        let mut x = [0.0];
        for _ in 0..100 {
            let before = x[0];
            a.step(&mut x, &[2.5], 0.01, &[true]);
            assert!(((before - x[0]) - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(init_grid(2, 3, 0).unwrap().points.len(), 8);
        let g = init_grid(20, 3, 0).unwrap();
        assert_eq!(g.points.len(), 8000);
        assert!(g.points.iter().all(|p| p.real_value == 1.0));
    }

    #[test]
    fn tetra_samples_give_centre() {
        let s = 1.0 / 3f64.sqrt() * 0.3;
        let c = [0.5; 3];
        let samples: Vec<Point> =
            [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]].iter().map(|v| add(c, scale(*v, s))).collect();
        let st = init_from_samples(&samples, 3, 0).unwrap();
        assert_eq!(st.points.len(), 5);
        assert!(dist2(st.points[4].position, c) < 1e-20);
        assert_eq!(st.points[4].real_value, 0.0);
        assert!(st.points[..4].iter().all(|p| p.real_value == 1.0));
    }

    #[test]
    fn perturbation_is_clamped() {
        let gt = crate::mesh::icosphere(0).normalized(0.1, 0.9);
        let mut st = init_from_mesh(&gt, 0.01, 0).unwrap();
        assert_eq!(st.points.len(), 12);
        let mut g = Grads::zeros(12);
        g.0[0] = [1.0, 0.0, 0.0, 5.0, 5.0];
        for _ in 0..10 {
            st.apply(&g, 0.1, Phase::One);
        }
        let Origin::Gt { anchor } = st.origin[0] else { panic!() };
        assert!(dist2(st.points[0].position, anchor).sqrt() <= st.perturb_bound * (1.0 + 1e-12));
        assert_eq!((st.points[0].weight, st.points[0].real_value), (1.0, 1.0));
    }
}
