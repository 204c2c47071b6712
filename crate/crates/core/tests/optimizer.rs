mod common;

use common::*;
use dmesh::geometry::{dist2, WeightedPoint};
use dmesh::losses::{Grads, LossWeights};
use dmesh::mesh::{icosphere, sphere_samples};
use dmesh::optimizer::*;
use dmesh::probability::ProbConfig;

#[test]
fn icosahedron_initializes_to_unit_points() {
    let gt = icosphere(0).normalized(0.1, 0.9);
    let st = init_from_mesh(&gt, 0.01, 0).unwrap();
    assert_eq!(st.points.len(), 12);
    assert!(st.points.iter().all(|p| p.weight == 1.0 && p.real_value == 1.0));
    assert_eq!(st.candidate.len(), 20);
}

#[test]
fn grid_of_two_in_the_plane() {
    let st = init_grid(2, 2, 0).unwrap();
    assert_eq!(st.points.len(), 4);
    assert!(init_grid(1, 3, 0).is_err());
}

#[test]
fn voronoi_points_lie_off_the_sphere() {
    let (pts, _) = sphere_samples(1000, [0.5; 3], 0.35, 3);
    let st = init_from_samples(&pts, 3, 0).unwrap();
    let vor: Vec<_> = st.points.iter().zip(&st.origin).filter(|(_, o)| matches!(o, Origin::Voronoi)).map(|(p, _)| p).collect();
    assert!(!vor.is_empty());
    let far = vor.iter().filter(|p| (dist2(p.position, [0.5; 3]).sqrt() - 0.35).abs() > 0.01).count();
    assert!(far as f64 >= 0.9 * vor.len() as f64, "{far} of {}", vor.len());
    assert!(vor.iter().all(|p| p.real_value == 0.0 && p.weight == 1.0));
}

#[test]
fn zero_step_size_changes_nothing() {
    let cloud = sphere_cloud(800, 1);
    let mut cfg = small_config();
    cfg.lr = 0.0;
    let prob = ProbConfig::default();
    let mut st = init_from_samples(&cloud.points[..100], 3, 1).unwrap();
    let before = st.points.clone();
    for _ in 0..2 {
        step_phase1(&mut st, &cloud, &LossWeights::default(), &prob, &cfg).unwrap();
    }
    assert_eq!(before, st.points);
}

#[test]
fn phase_two_moves_only_psi() {
    let cloud = sphere_cloud(800, 2);
    let cfg = small_config();
    let prob = ProbConfig::default();
    let w = LossWeights::default();
    let mut st = init_from_samples(&cloud.points[..100], 3, 2).unwrap();
    step_phase1(&mut st, &cloud, &w, &prob, &cfg).unwrap();
    enter_phase2(&mut st, &prob).unwrap();
    let before = st.points.clone();
    for _ in 0..3 {
        step_phase2(&mut st, &cloud, &w, &prob, &cfg).unwrap();
    }
    assert!(before.iter().zip(&st.points).all(|(a, b)| a.position == b.position && a.weight == b.weight));
    assert!(before.iter().zip(&st.points).any(|(a, b)| a.real_value != b.real_value));
}

#[test]
fn insertion_without_excluded_faces_adds_nothing() {
    let gt = icosphere(1).normalized(0.1, 0.9);
    let mut st = init_from_mesh(&gt, 0.01, 0).unwrap();
    let (wdt, _, _) = st.rebuild(&ProbConfig::default()).unwrap();
    assert_eq!(insert_points(&mut st, &wdt, &OptConfig::default()), 0);
    assert_eq!(st.points.len(), gt.vertices.len());
}

#[test]
fn zero_psi_extracts_nothing() {
    let cloud = sphere_cloud(200, 4);
    let mut st = init_from_samples(&cloud.points, 3, 4).unwrap();
    for p in &mut st.points {
        p.real_value = 0.0;
    }
    let ex = extract_mesh(&st, &ProbConfig::default(), false).unwrap();
    assert!(ex.mesh.faces.is_empty());
}

#[test]
fn adam_trace_over_three_steps() {
    let mut st = init_from_points(3, vec![WeightedPoint::new([0.5; 3], 0.0, 0.5)], 0);
    let mut g = Grads::zeros(1);
    g.0[0] = [1.0, -2.0, 0.0, 0.5, 0.1];
    for _ in 0..3 {
        st.apply(&g, 0.01, Phase::One);
    }
    // a constant gradient gives steps of lr·sign(g) each time
    let p = st.points[0];
    let close = |a: f64, b: f64| (a - b).abs() < 1e-7;
    assert!(close(p.position[0], 0.47) && close(p.position[1], 0.53) && close(p.position[2], 0.5));
    assert!(close(p.weight, -0.03) && close(p.real_value, 0.47));
    assert_eq!(st.adam.t, 3);
}

#[test]
fn refinement_resamples_the_surface() {
    let cloud = sphere_cloud(2000, 5);
    let prob = ProbConfig::default();
    let (st, _) = reconstruct(&cloud, &LossWeights::default(), &prob, &small_config(), 5, |_, _| {}).unwrap();
    let next = refine(&st, &prob, 300).unwrap();
    let samples = next.origin.iter().filter(|o| matches!(o, Origin::Sample)).count();
    assert_eq!(samples, 300);
    assert_eq!(next.epoch, st.epoch + 1);
    assert_eq!(next.adam.t, 0);
}

#[test]
fn reconstruction_lowers_the_loss() {
    let cloud = sphere_cloud(2000, 6);
    let cfg = OptConfig { phase1_steps: 15, phase2_steps: 5, ..small_config() };
    let (_, log) = reconstruct(&cloud, &LossWeights::default(), &ProbConfig::default(), &cfg, 6, |_, _| {}).unwrap();
    let first = log.steps.first().unwrap().recon;
    let last = log.steps.last().unwrap().recon;
    assert!(last < first, "{first} -> {last}");
}
