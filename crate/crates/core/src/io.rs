//! Text formats: the native point file, OBJ meshes, XYZ and ASCII PLY
//! point clouds, plus atomic file writes.

use crate::error::{DmeshError, Result};
use crate::geometry::{norm, scale, Point, WeightedPoint};
use crate::mesh::TriMesh;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

pub const DMESH_MAGIC: &str = "DMESH";
pub const DMESH_VERSION: u32 = 1;

/// Points of a DMesh with their dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct DMeshFile {
    pub dim: usize,
    pub points: Vec<WeightedPoint>,
}

fn perr(line: usize, msg: impl Into<String>) -> DmeshError {
    DmeshError::Parse { line, msg: msg.into() }
}

/// Content lines with their 1-based numbers; blank lines and `#` comments dropped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| perr(line, format!("bad number {tok:?}")))?;
    if !v.is_finite() {
        return Err(perr(line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

impl DMeshFile {
    /// Shortest round-trip float formatting, so parsing recovers every bit.
    pub fn to_text(&self) -> String {
        let mut s = format!("{DMESH_MAGIC} {DMESH_VERSION} {} {}\n", self.dim, self.points.len());
        s.push_str("# x y");
        s.push_str(if self.dim == 3 { " z" } else { "" });
        s.push_str(" weight psi\n");
        for p in &self.points {
            for k in 0..self.dim {
                let _ = write!(s, "{:?} ", p.position[k]);
            }
            let _ = writeln!(s, "{:?} {:?}", p.weight, p.real_value);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let (ln, header) = lines.next().ok_or_else(|| perr(1, "missing header"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != DMESH_MAGIC {
            return Err(perr(ln, "expected `DMESH <version> <dim> <count>`"));
        }
        let version: u32 = h[1].parse().map_err(|_| perr(ln, "bad version"))?;
        if version != DMESH_VERSION {
            return Err(perr(ln, format!("unsupported version {version}")));
        }
        let dim: usize = h[2].parse().map_err(|_| perr(ln, "bad dimension"))?;
        if dim != 2 && dim != 3 {
            return Err(perr(ln, format!("dimension {dim} is not 2 or 3")));
        }
        let count: usize = h[3].parse().map_err(|_| perr(ln, "bad point count"))?;
        let mut points = Vec::with_capacity(count);
        for (ln, l) in lines {
            let v = l.split_whitespace().map(|t| parse_f64(t, ln)).collect::<Result<Vec<f64>>>()?;
            if v.len() != dim + 2 {
                return Err(perr(ln, format!("expected {} values, found {}", dim + 2, v.len())));
            }
            let mut x = [0.0; 3];
            x[..dim].copy_from_slice(&v[..dim]);
            points.push(WeightedPoint::new(x, v[dim], v[dim + 1]));
        }
        if points.len() != count {
            return Err(perr(0, format!("header declares {count} points, found {}", points.len())));
        }
        Ok(Self { dim, points })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

/// Writes to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| DmeshError::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn mesh_to_obj(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

/// Reads `v` and `f` records; polygons are fan-triangulated, other records
/// ignored. Face tokens may carry `/vt/vn` suffixes and negative indices.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut mesh = TriMesh::default();
    let mut pending: Vec<(usize, Vec<i64>)> = Vec::new();
    for (ln, l) in content_lines(text) {
        let mut it = l.split_whitespace();
        match it.next() {
            Some("v") => {
                let v = it.take(3).map(|t| parse_f64(t, ln)).collect::<Result<Vec<f64>>>()?;
                if v.len() != 3 {
                    return Err(perr(ln, "vertex needs 3 coordinates"));
                }
                mesh.vertices.push([v[0], v[1], v[2]]);
            }
            Some("f") => {
                let idx = it
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        head.parse::<i64>().map_err(|_| perr(ln, format!("bad face index {t:?}")))
                    })
                    .collect::<Result<Vec<i64>>>()?;
                if idx.len() < 3 {
                    return Err(perr(ln, "face needs at least 3 vertices"));
                }
                pending.push((ln, idx));
            }
            _ => {}
        }
    }
    let n = mesh.vertices.len() as i64;
    for (ln, idx) in pending {
        let r = idx
            .iter()
            .map(|&i| {
                let j = if i < 0 { n + i } else { i - 1 };
                if (0..n).contains(&j) {
                    Ok(j as u32)
                } else {
                    Err(perr(ln, format!("face index {i} out of range")))
                }
            })
            .collect::<Result<Vec<u32>>>()?;
        for k in 1..r.len() - 1 {
            mesh.faces.push([r[0], r[k], r[k + 1]]);
        }
    }
    Ok(mesh)
}

pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    parse_obj(&fs::read_to_string(path)?)
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    write_atomic(path, mesh_to_obj(mesh).as_bytes())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloudData {
    pub points: Vec<Point>,
    pub normals: Option<Vec<Point>>,
}

fn unit(n: Point) -> Point {
    let l = norm(n);
    if l > 0.0 {
        scale(n, 1.0 / l)
    } else {
        n
    }
}

/// Whitespace-separated `x y z [nx ny nz]` per line.
pub fn parse_xyz(text: &str) -> Result<PointCloudData> {
    let mut out = PointCloudData::default();
    let mut normals = Vec::new();
    let mut width = None;
    for (ln, l) in content_lines(text) {
        let v = l.split_whitespace().map(|t| parse_f64(t, ln)).collect::<Result<Vec<f64>>>()?;
        if v.len() != 3 && v.len() != 6 {
            return Err(perr(ln, format!("expected 3 or 6 values, found {}", v.len())));
        }
        if *width.get_or_insert(v.len()) != v.len() {
            return Err(perr(ln, "mixed records with and without normals"));
        }
        out.points.push([v[0], v[1], v[2]]);
        if v.len() == 6 {
            normals.push(unit([v[3], v[4], v[5]]));
        }
    }
    if width == Some(6) {
        out.normals = Some(normals);
    }
    Ok(out)
}

/// ASCII PLY with a `vertex` element holding x, y, z and optionally nx, ny, nz.
pub fn parse_ply(text: &str) -> Result<PointCloudData> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(perr(1, "missing `ply` magic")),
    }
    let mut n_vertex = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing end_header"))?;
        let t: Vec<&str> = l.split_whitespace().collect();
        match t.as_slice() {
            ["format", f, ..] if *f != "ascii" => return Err(perr(ln, format!("unsupported PLY format {f}"))),
            ["element", "vertex", n] => {
                n_vertex = Some(n.parse::<usize>().map_err(|_| perr(ln, "bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => return Err(perr(ln, "list property on vertex")),
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let n = n_vertex.ok_or_else(|| perr(0, "no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(perr(0, "vertex element lacks x, y, z")),
    };
    let nrm = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let mut out = PointCloudData::default();
    let mut normals = Vec::new();
    for _ in 0..n {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "fewer vertices than declared"))?;
        let v = l.split_whitespace().map(|t| parse_f64(t, ln)).collect::<Result<Vec<f64>>>()?;
        if v.len() < props.len() {
            return Err(perr(ln, format!("expected {} values, found {}", props.len(), v.len())));
        }
        out.points.push([v[x], v[y], v[z]]);
        if let Some((a, b, c)) = nrm {
            normals.push(unit([v[a], v[b], v[c]]));
        }
    }
    if nrm.is_some() {
        out.normals = Some(normals);
    }
    Ok(out)
}

/// Dispatches on the extension (`.ply`, anything else is XYZ).
pub fn read_pointcloud(path: &Path) -> Result<PointCloudData> {
    let text = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("ply") => parse_ply(&text),
        _ => parse_xyz(&text),
    }
}

pub fn pointcloud_to_xyz(pc: &PointCloudData) -> String {
    let mut s = String::new();
    for (i, p) in pc.points.iter().enumerate() {
        let _ = write!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]);
        if let Some(n) = &pc.normals {
            let _ = write!(s, " {:?} {:?} {:?}", n[i][0], n[i][1], n[i][2]);
        }
        s.push('\n');
    }
    s
}

pub fn pointcloud_to_ply(pc: &PointCloudData) -> String {
    let mut s = format!("ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n", pc.points.len());
    if pc.normals.is_some() {
        s.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    s.push_str("end_header\n");
    s.push_str(&pointcloud_to_xyz(pc));
    s
}

pub fn write_pointcloud(path: &Path, pc: &PointCloudData) -> Result<()> {
    let text = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ply") => pointcloud_to_ply(pc),
        _ => pointcloud_to_xyz(pc),
    };
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dmesh_round_trip() {
        let f = DMeshFile {
            dim: 2,
            points: vec![WeightedPoint::new([0.1, 1.0 / 3.0, 0.0], -2.5e-7, 1.0), WeightedPoint::new([1e-300, 0.7, 0.0], 0.0, 0.25)],
        };
        assert_eq!(DMeshFile::parse(&f.to_text()).unwrap(), f);
    }

    #[test]
    fn dmesh_errors_name_the_line() {
        let e = DMeshFile::parse("DMESH 1 3 1\n# c\n0 0 0 1\n").unwrap_err();
        assert!(matches!(e, DmeshError::Parse { line: 3, .. }), "{e}");
        assert!(DMeshFile::parse("DMESH 1 3 2\n0 0 0 1 1\n").is_err());
    }

    #[test]
    fn obj_round_trip_and_fan() {
        let text = "v 0.1 0.0 0.0\nv 1.0 0.0 0.0\nv 1.0 1.0 0.0\nf 1 2 3\n";
        assert_eq!(mesh_to_obj(&parse_obj(text).unwrap()), text);
        let quad = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3 -1\n").unwrap();
        assert_eq!(quad.faces, vec![[0, 1, 2], [0, 2, 3]]);
        let e = parse_obj("v 0 0 0\nf 1 2 3\n").unwrap_err();
        assert!(matches!(e, DmeshError::Parse { line: 2, .. }));
    }

    #[test]
    fn clouds() {
        let pc = parse_xyz("0 0 0\n1 2 3\n4 5 6\n").unwrap();
        assert_eq!((pc.points.len(), pc.normals.is_none()), (3, true));
        let ply = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\nproperty float nz\nend_header\n1 2 3 0 0 2\n";
        let pc = parse_ply(ply).unwrap();
        assert_eq!(pc.normals.unwrap()[0], [0.0, 0.0, 1.0]);
    }
}
