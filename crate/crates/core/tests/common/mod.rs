//! Shared helpers for the integration tests: central finite differences
//! and small fixtures.
#![allow(dead_code)]

use dmesh::geometry::WeightedPoint;
use dmesh::losses::{
    expected_chamfer_gt_to_ours, expected_chamfer_ours_to_gt, quality_regularization, real_regularization,
    weight_regularization, Grads, LossWeights, SampledPoint,
};
use dmesh::oracle::{query_simplices, random_weighted_points};
use dmesh::power_diagram::{build_power_diagram, PowerDiagram};
use dmesh::probability::{Evaluator, FaceEval, ProbConfig};
use dmesh::triangulation::{build_wdt, Simplex, WdtComplex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_FLOOR: f64 = 1e-7;

/// Outcome of comparing analytic partials with central differences.
#[derive(Clone, Debug, Default)]
pub struct FdStats {
    pub compared: usize,
    pub failed: usize,
    /// Entries where quartering the step changed the difference quotient
    /// by more than 1%: the function has a kink there.
    pub kinks: usize,
    /// Entries where the difference quotient at `FD_STEP` carries more
    /// truncation error than the tolerance (steep sigmoids); these are
    /// compared with the Richardson extrapolation of steps h and h/2.
    pub extrapolated: usize,
    pub worst: f64,
    pub worst_at: String,
}

impl FdStats {
    pub fn merge(&mut self, o: &FdStats) {
        self.compared += o.compared;
        self.failed += o.failed;
        self.kinks += o.kinks;
        self.extrapolated += o.extrapolated;
        if o.worst > self.worst {
            self.worst = o.worst;
            self.worst_at = o.worst_at.clone();
        }
    }

    pub fn ok(&self) -> bool {
        self.failed == 0 && self.compared > 0
    }
}

fn set_attr(p: &mut WeightedPoint, a: usize, v: f64) {
    match a {
        0..=2 => p.position[a] = v,
        3 => p.weight = v,
        _ => p.real_value = v,
    }
}

fn get_attr(p: &WeightedPoint, a: usize) -> f64 {
    match a {
        0..=2 => p.position[a],
        3 => p.weight,
        _ => p.real_value,
    }
}

/// Checks `analytic(i, a)` against central differences of `f` for every
/// (point, attribute) pair in `entries`.
pub fn fd_check(
    points: &[WeightedPoint],
    entries: &[(usize, usize)],
    analytic: impl Fn(usize, usize) -> f64,
    f: impl Fn(&[WeightedPoint]) -> Option<f64>,
    label: &str,
) -> FdStats {
    let mut st = FdStats::default();
    let quotient = |i: usize, a: usize, h: f64| -> Option<f64> {
        let mut q = points.to_vec();
        let x = get_attr(&q[i], a);
        set_attr(&mut q[i], a, x + h);
        let up = f(&q)?;
        set_attr(&mut q[i], a, x - h);
        let dn = f(&q)?;
        Some((up - dn) / (2.0 * h))
    };
    for &(i, a) in entries {
        let Some(fd) = quotient(i, a, FD_STEP) else {
            st.kinks += 1;
            continue;
        };
        if fd.abs() <= FD_FLOOR {
            continue;
        }
        let fine = quotient(i, a, FD_STEP / 4.0);
        if fine.is_none_or(|g| (g - fd).abs() > 1e-2 * fd.abs()) {
            st.kinks += 1;
            continue;
        }
        let an = analytic(i, a);
        let mut rel = (an - fd).abs() / fd.abs();
        if rel >= FD_REL_TOL {
            if let Some(half) = quotient(i, a, FD_STEP / 2.0) {
                if 4.0 / 3.0 * (fd - half).abs() >= FD_REL_TOL * fd.abs() {
                    let rich = (4.0 * half - fd) / 3.0;
                    rel = (an - rich).abs() / rich.abs();
                    st.extrapolated += 1;
                }
            }
        }
        st.compared += 1;
        if rel >= FD_REL_TOL {
            st.failed += 1;
        }
        if rel > st.worst {
            st.worst = rel;
            st.worst_at = format!("{label} point {i} attr {a}: analytic {an:e} fd {fd:e}");
        }
    }
    st
}

/// A triangulation with its diagram, rebuilt from scratch.
pub struct Built {
    pub wdt: WdtComplex,
    pub pd: PowerDiagram,
}

pub fn build(points: &[WeightedPoint], dim: usize, cfg: &ProbConfig) -> Option<Built> {
    let wdt = build_wdt(points, dim).ok()?;
    let pd = build_power_diagram(&wdt, points, &cfg.clip_box(dim)).ok()?;
    Some(Built { wdt, pd })
}

pub fn evaluate(points: &[WeightedPoint], dim: usize, faces: &[Simplex], cfg: &ProbConfig) -> Option<Vec<FaceEval>> {
    let b = build(points, dim, cfg)?;
    let ev = Evaluator::new(points, &b.wdt, &b.pd, *cfg);
    let out = ev.evaluate_all(faces);
    out.iter().all(|e| e.error.is_none()).then_some(out)
}

/// Random points in the unit cube with ψ drawn from [0.05, 1], plus a
/// query set of existing and non-existing faces.
pub fn gradient_fixture(n: usize, n_faces: usize, seed: u64) -> (Vec<WeightedPoint>, Vec<Simplex>) {
    let mut pts = random_weighted_points(n, 3, 1e-3, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for p in &mut pts {
        p.real_value = rng.random_range(0.05..1.0);
    }
    let wdt = build_wdt(&pts, 3).expect("random points triangulate");
    let faces = query_simplices(&pts, &wdt, 2, n_faces / 2, true, seed);
    (pts, faces)
}

/// Point indices a face evaluation depends on.
fn support(e: &FaceEval) -> Vec<usize> {
    let mut v: Vec<usize> = e.grads().iter().map(|(i, _)| *i as usize).collect();
    v.extend(e.face.indices().iter().map(|&i| i as usize));
    v.sort_unstable();
    v.dedup();
    v
}

fn all_attrs(ids: &[usize]) -> Vec<(usize, usize)> {
    ids.iter().flat_map(|&i| (0..5).map(move |a| (i, a))).collect()
}

/// ∂Λ of every face with respect to position, weight and ψ.
pub fn check_lambda(points: &[WeightedPoint], faces: &[Simplex], cfg: &ProbConfig) -> FdStats {
    let evals = evaluate(points, 3, faces, cfg).expect("fixture evaluates");
    let mut st = FdStats::default();
    for e in &evals {
        let g = e.grads();
        let one = [e.face];
        let s = fd_check(
            points,
            &all_attrs(&support(e)),
            |i, a| g.iter().find(|(j, _)| *j as usize == i).map(|(_, v)| v[a]).unwrap_or(0.0),
            |q| evaluate(q, 3, &one, cfg).map(|v| v[0].lambda),
            "lambda",
        );
        st.merge(&s);
    }
    st
}

/// The weight regularizer against differences of the rebuilt diagram.
pub fn check_weight_reg(points: &[WeightedPoint], cfg: &ProbConfig) -> FdStats {
    let b = build(points, 3, cfg).expect("fixture builds");
    let (_, g) = weight_regularization(&b.pd, points);
    let entries: Vec<(usize, usize)> = (0..points.len()).flat_map(|i| (0..4).map(move |a| (i, a))).collect();
    fd_check(points, &entries, |i, a| g.0[i][a], |q| build(q, 3, cfg).map(|b| weight_regularization(&b.pd, q).0), "weight")
}

fn union_support(evals: &[FaceEval]) -> Vec<(usize, usize)> {
    let mut ids: Vec<usize> = evals.iter().flat_map(support).collect();
    ids.sort_unstable();
    ids.dedup();
    all_attrs(&ids)
}

/// Real and quality regularizers through Λ and ψ.
pub fn check_real_and_quality(points: &[WeightedPoint], faces: &[Simplex], cfg: &ProbConfig) -> (FdStats, FdStats) {
    let evals = evaluate(points, 3, faces, cfg).expect("fixture evaluates");
    let entries = union_support(&evals);
    let delta = LossWeights::default().delta_high;
    let gr: Grads = real_regularization(&evals, points, delta).point_grads(&evals);
    let real = fd_check(
        points,
        &entries,
        |i, a| gr.0[i][a],
        |q| evaluate(q, 3, faces, cfg).map(|ev| real_regularization(&ev, q, delta).value),
        "real",
    );
    let gq = quality_regularization(&evals, points).point_grads(&evals);
    let qual = fd_check(
        points,
        &entries,
        |i, a| gq.0[i][a],
        |q| evaluate(q, 3, faces, cfg).map(|ev| quality_regularization(&ev, q).value),
        "quality",
    );
    (real, qual)
}

/// Both Chamfer terms against differences in their sample inputs
/// (positions and face probabilities). Sample positions are carried in
/// the position slots and probabilities in the ψ slot of stand-in points.
pub fn check_chamfer(samples: &[SampledPoint], gt: &[[f64; 3]], k: usize) -> (FdStats, FdStats) {
    let w = LossWeights::default();
    let carrier: Vec<WeightedPoint> = samples.iter().map(|s| WeightedPoint::new(s.position, 0.0, s.face_prob)).collect();
    let rebuild = |q: &[WeightedPoint]| -> Vec<SampledPoint> {
        samples
            .iter()
            .zip(q)
            .map(|(s, c)| SampledPoint { position: c.position, face_prob: c.real_value, ..*s })
            .collect()
    };
    let entries: Vec<(usize, usize)> = (0..samples.len()).flat_map(|i| [0, 1, 2, 4].map(|a| (i, a))).collect();
    let g = expected_chamfer_gt_to_ours(gt, None, samples, k, &w).expect("non-empty").grad;
    let pick = |d_pos: &[[f64; 3]], d_prob: &[f64], i: usize, a: usize| if a == 4 { d_prob[i] } else { d_pos[i][a] };
    let gt_side = fd_check(
        &carrier,
        &entries,
        |i, a| pick(&g.d_position, &g.d_prob, i, a),
        |q| expected_chamfer_gt_to_ours(gt, None, &rebuild(q), k, &w).ok().map(|r| r.value),
        "chamfer_gt",
    );
    let (_, g2) = expected_chamfer_ours_to_gt(samples, gt, None, 1, &w).expect("non-empty");
    let ours_side = fd_check(
        &carrier,
        &entries,
        |i, a| pick(&g2.d_position, &g2.d_prob, i, a),
        |q| expected_chamfer_ours_to_gt(&rebuild(q), gt, None, 1, &w).ok().map(|r| r.0),
        "chamfer_ours",
    );
    (gt_side, ours_side)
}

/// Every finite cell's orthosphere is empty: no point has a lower power
/// at the orthocentre than the cell's own vertices.
pub fn check_empty_orthosphere(points: &[WeightedPoint], dim: usize) -> Result<usize, String> {
    let wdt = build_wdt(points, dim).map_err(|e| e.to_string())?;
    for c in 0..wdt.cells.len() {
        let cell = wdt.cell(c);
        let pts: Vec<([f64; 3], f64)> = cell.iter().map(|&i| (points[i as usize].position, points[i as usize].weight)).collect();
        let (z, _) = dmesh::geometry::dual_coeffs(dim, &pts).ok_or_else(|| format!("flat cell {cell:?}"))?;
        let own = dmesh::geometry::power_at(z, &points[cell[0] as usize]);
        let scale = 1.0 + own.abs() + dmesh::geometry::dot(z, z);
        for (j, p) in points.iter().enumerate() {
            if cell.contains(&(j as u32)) {
                continue;
            }
            let pw = dmesh::geometry::power_at(z, p);
            if pw < own - 1e-9 * scale {
                return Err(format!("point {j} inside the orthosphere of cell {cell:?}: {pw} < {own}"));
            }
        }
    }
    Ok(wdt.cells.len())
}

fn cell_set(wdt: &WdtComplex) -> std::collections::BTreeSet<Simplex> {
    (0..wdt.cells.len()).map(|c| Simplex::new(wdt.cell(c))).collect()
}

/// Adding `shift` to every weight leaves the triangulation unchanged.
pub fn check_weight_shift(points: &[WeightedPoint], dim: usize, shift: f64) -> Result<(), String> {
    let a = build_wdt(points, dim).map_err(|e| e.to_string())?;
    let moved: Vec<WeightedPoint> = points.iter().map(|p| WeightedPoint { weight: p.weight + shift, ..*p }).collect();
    let b = build_wdt(&moved, dim).map_err(|e| e.to_string())?;
    if cell_set(&a) != cell_set(&b) || a.hidden != b.hidden {
        return Err(format!("triangulation changed under weight shift {shift}"));
    }
    Ok(())
}

/// Triangulation edges are exactly the pairs whose brute-force power
/// cells (every other point clipped, large box) share a facet; hidden
/// points have empty cells.
pub fn check_duality(points: &[WeightedPoint], dim: usize) -> Result<(), String> {
    use dmesh::geometry::{Aabb, PlaneLabel};
    let wdt = build_wdt(points, dim).map_err(|e| e.to_string())?;
    let bbox = Aabb::unit(dim).expanded(dim, 1e3);
    for p in 0..points.len() {
        let cell = dmesh::power_diagram::clip_cell(dim, points, p, 0..points.len(), &bbox);
        if cell.is_empty() != wdt.hidden[p] {
            return Err(format!("point {p}: empty cell {} but hidden {}", cell.is_empty(), wdt.hidden[p]));
        }
        let mut facets: Vec<u32> = cell
            .facets
            .iter()
            .filter_map(|f| match cell.labels[f.plane as usize] {
                PlaneLabel::Point(q) => Some(q),
                PlaneLabel::Box(_) => None,
            })
            .collect();
        facets.sort_unstable();
        facets.dedup();
        if facets != wdt.point_neighbors(p) {
            return Err(format!("point {p}: cell neighbours {facets:?} vs triangulation {:?}", wdt.point_neighbors(p)));
        }
    }
    Ok(())
}

/// Sphere of radius 0.35 about the box centre, sampled with normals.
pub fn sphere_cloud(n: usize, seed: u64) -> dmesh::optimizer::PointCloud {
    let (points, normals) = dmesh::mesh::sphere_samples(n, [0.5; 3], 0.35, seed);
    dmesh::optimizer::PointCloud { points, normals: Some(normals) }
}

/// A small reconstruction setting that runs in well under a second per step.
pub fn small_config() -> dmesh::optimizer::OptConfig {
    dmesh::optimizer::OptConfig {
        init_samples: 120,
        n_samples: 2000,
        phase1_steps: 4,
        phase2_steps: 2,
        epochs: 1,
        ..Default::default()
    }
}

fn random_grads(n: usize, scale: f64, seed: u64) -> Grads {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Grads((0..n).map(|_| std::array::from_fn(|_| scale * (rng.random::<f64>() - 0.5))).collect())
}

/// ψ and positions stay in [0, 1] and ground-truth vertices inside their
/// perturbation ball under arbitrary gradients; phase 2 moves only ψ.
pub fn check_clamps(seed: u64, grad_scale: f64, lr: f64) -> Result<(), String> {
    use dmesh::optimizer::{init_from_mesh, init_from_samples, Origin, Phase};
    let cloud = sphere_cloud(60, seed);
    let mut st = init_from_samples(&cloud.points, 3, seed).map_err(|e| e.to_string())?;
    for k in 0..5 {
        st.apply(&random_grads(st.points.len(), grad_scale, seed + k), lr, Phase::One);
        if let Some(p) = st.points.iter().find(|p| !(0.0..=1.0).contains(&p.real_value)) {
            return Err(format!("ψ escaped [0, 1]: {}", p.real_value));
        }
        if let Some(p) = st.points.iter().find(|p| p.position.iter().any(|x| !(0.0..=1.0).contains(x))) {
            return Err(format!("position escaped the box: {:?}", p.position));
        }
    }
    let before = st.points.clone();
    st.apply(&random_grads(st.points.len(), grad_scale, seed ^ 77), lr, Phase::Two);
    for (a, b) in before.iter().zip(&st.points) {
        if a.position != b.position || a.weight != b.weight {
            return Err("phase 2 moved a position or weight".into());
        }
    }
    let gt = dmesh::mesh::icosphere(1).normalized(0.1, 0.9);
    let mut st = init_from_mesh(&gt, 0.01, seed).map_err(|e| e.to_string())?;
    for k in 0..5 {
        st.apply(&random_grads(st.points.len(), grad_scale, seed + 100 + k), lr, Phase::One);
    }
    for (p, o) in st.points.iter().zip(&st.origin) {
        if let Origin::Gt { anchor } = o {
            let d = dmesh::geometry::dist2(p.position, *anchor).sqrt();
            if d > st.perturb_bound * (1.0 + 1e-12) {
                return Err(format!("ground-truth vertex moved {d} > {}", st.perturb_bound));
            }
        }
    }
    Ok(())
}

/// Two runs with the same seed give bit-identical states and losses.
pub fn check_determinism(seed: u64) -> Result<(), String> {
    let cloud = sphere_cloud(1500, seed);
    let w = LossWeights::default();
    let cfg = small_config();
    let run = || {
        dmesh::optimizer::reconstruct(&cloud, &w, &ProbConfig::default(), &cfg, seed, |_, _| {})
            .map(|(st, log)| (serde_json::to_string(&st).expect("state serializes"), log.steps.iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>()))
            .map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    if a != b {
        return Err("same seed, different result".into());
    }
    Ok(())
}
