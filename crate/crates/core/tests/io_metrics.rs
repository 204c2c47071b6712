use dmesh::io::{parse_obj, parse_ply, parse_xyz, mesh_to_obj, pointcloud_to_xyz, PointCloudData};
use dmesh::mesh::{icosphere, sphere_samples, TriMesh};
use dmesh::metrics::{chamfer_points, evaluate, EvalOptions};

#[test]
fn large_obj_round_trip() {
    let m = icosphere(4).normalized(0.1, 0.9);
    assert!(m.faces.len() >= 5000);
    let back = parse_obj(&mesh_to_obj(&m)).unwrap();
    assert_eq!(back, m);
    let big = TriMesh { vertices: m.vertices.clone(), faces: m.faces.iter().cycle().take(10_000).copied().collect() };
    assert_eq!(parse_obj(&mesh_to_obj(&big)).unwrap().faces.len(), 10_000);
}

#[test]
fn cloud_keeps_nine_digits() {
    let (points, normals) = sphere_samples(500, [0.5; 3], 0.35, 1);
    let pc = PointCloudData { points, normals: Some(normals) };
    let back = parse_xyz(&pointcloud_to_xyz(&pc)).unwrap();
    for (a, b) in pc.points.iter().zip(&back.points) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 1e-9 * a[k].abs().max(1.0));
        }
    }
}

#[test]
fn ply_normals_are_unit_length() {
    let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n\
                property float nx\nproperty float ny\nproperty float nz\nend_header\n0 0 0 0 0 2\n1 1 1 3 4 0\n";
    let pc = parse_ply(text).unwrap();
    let n = pc.normals.unwrap();
    assert_eq!(n[0], [0.0, 0.0, 1.0]);
    assert!((n[1][0] - 0.6).abs() < 1e-12 && (n[1][1] - 0.8).abs() < 1e-12);
}

#[test]
fn point_chamfer_is_symmetric() {
    let (a, _) = sphere_samples(300, [0.5; 3], 0.3, 1);
    let (b, _) = sphere_samples(200, [0.45; 3], 0.35, 2);
    assert_eq!(chamfer_points(&a, &b), chamfer_points(&b, &a));
    assert_eq!(chamfer_points(&a, &a), 0.0);
}

#[test]
fn f1_grows_with_threshold() {
    let gt = icosphere(3).normalized(0.1, 0.9);
    let coarse = icosphere(1).normalized(0.1, 0.9);
    let mut last = -1.0;
    for thr in [0.001, 0.005, 0.01, 0.05] {
        let r = evaluate(&coarse, &gt, &EvalOptions { n_samples: 5000, f1_threshold: thr, seed: 0 }).unwrap();
        assert!(r.f1 >= last, "{thr}: {} < {last}", r.f1);
        last = r.f1;
    }
    assert!(last > 0.99);
}

#[test]
fn empty_mesh_is_an_error() {
    let gt = icosphere(1);
    assert!(evaluate(&TriMesh::default(), &gt, &EvalOptions::default()).is_err());
}
