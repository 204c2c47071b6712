//! Regular (weighted Delaunay) triangulation by incremental Bowyer-Watson
//! insertion with ghost cells closing the convex hull.

use crate::error::{DmeshError, Result};
use crate::geometry::{Point, WeightedPoint};
use crate::predicates::{in_conflict, orient};
use crate::spatial::PointIndex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};

pub const INF: u32 = u32::MAX;
pub const NO_CELL: u32 = u32::MAX;

/// Sorted vertex set of a simplex with up to four vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct Simplex {
    v: [u32; 4],
    len: u8,
}

impl Simplex {
    pub fn new(idx: &[u32]) -> Self {
        assert!(!idx.is_empty() && idx.len() <= 4, "simplex size {}", idx.len());
        let mut v = [u32::MAX; 4];
        v[..idx.len()].copy_from_slice(idx);
        v[..idx.len()].sort_unstable();
        Self { v, len: idx.len() as u8 }
    }

    pub fn from_usize(idx: &[usize]) -> Self {
        let v: Vec<u32> = idx.iter().map(|&i| i as u32).collect();
        Self::new(&v)
    }

    pub fn indices(&self) -> &[u32] {
        &self.v[..self.len as usize]
    }

    /// Order k (vertex count minus one).
    pub fn k(&self) -> usize {
        self.len as usize - 1
    }

    pub fn contains(&self, i: u32) -> bool {
        self.indices().contains(&i)
    }

    /// Whether indices are strictly increasing.
    pub fn is_canonical(&self) -> bool {
        self.indices().windows(2).all(|w| w[0] < w[1])
    }
}

/// Finite cells of a regular triangulation with adjacency and faces.
#[derive(Clone, Debug)]
pub struct WdtComplex {
    pub dim: usize,
    pub point_count: usize,
    /// Positively oriented d-simplices; unused slots hold `INF`.
    pub cells: Vec<[u32; 4]>,
    /// Neighbour across the facet opposite each slot, `NO_CELL` on the hull.
    pub neighbors: Vec<[u32; 4]>,
    /// Points that are not vertices of the triangulation.
    pub hidden: Vec<bool>,
    /// (d-1)-faces with their one or two incident cells.
    pub faces: HashMap<Simplex, [u32; 2]>,
    adj_start: Vec<u32>,
    adj: Vec<u32>,
    cell_set: HashSet<Simplex>,
}

impl WdtComplex {
    /// Membership of a (d-1)-face or a d-cell.
    pub fn contains_simplex(&self, s: &Simplex) -> bool {
        if s.k() == self.dim {
            self.cell_set.contains(s)
        } else {
            self.faces.contains_key(s)
        }
    }

    pub fn cell(&self, c: usize) -> &[u32] {
        &self.cells[c][..self.dim + 1]
    }

    pub fn contains_face(&self, f: &Simplex) -> bool {
        self.faces.contains_key(f)
    }

    /// Incident cells of a face; the second entry is `NO_CELL` on the hull.
    pub fn face_cells(&self, f: &Simplex) -> Option<[u32; 2]> {
        self.faces.get(f).copied()
    }

    /// Vertices sharing an edge with `p`.
    pub fn point_neighbors(&self, p: usize) -> &[u32] {
        &self.adj[self.adj_start[p] as usize..self.adj_start[p + 1] as usize]
    }

    pub fn hidden_indices(&self) -> Vec<usize> {
        (0..self.point_count).filter(|&i| self.hidden[i]).collect()
    }

    fn finish(mut self) -> Self {
        let d1 = self.dim + 1;
        let mut faces: HashMap<Simplex, [u32; 2]> = HashMap::with_capacity(self.cells.len() * 2);
        let mut nb: Vec<Vec<u32>> = vec![Vec::new(); self.point_count];
        for (c, cell) in self.cells.iter().enumerate() {
            for i in 0..d1 {
                let f: Vec<u32> = (0..d1).filter(|&j| j != i).map(|j| cell[j]).collect();
                let s = Simplex::new(&f);
                faces.entry(s).and_modify(|e| e[1] = c as u32).or_insert([c as u32, NO_CELL]);
                for j in i + 1..d1 {
                    nb[cell[i] as usize].push(cell[j]);
                    nb[cell[j] as usize].push(cell[i]);
                }
            }
        }
        let mut start = Vec::with_capacity(self.point_count + 1);
        let mut adj = Vec::new();
        start.push(0u32);
        for mut l in nb {
            l.sort_unstable();
            l.dedup();
            adj.extend(l);
            start.push(adj.len() as u32);
        }
        self.cell_set = self.cells.iter().map(|c| Simplex::new(&c[..d1])).collect();
        self.faces = faces;
        self.adj_start = start;
        self.adj = adj;
        self
    }

    /// Deduplicated (d-1)-simplices, sorted.
    pub fn enumerate_faces(&self) -> Vec<Simplex> {
        let mut f: Vec<Simplex> = self.faces.keys().copied().collect();
        f.sort_unstable();
        f
    }
}

pub fn enumerate_faces(wdt: &WdtComplex) -> Vec<Simplex> {
    wdt.enumerate_faces()
}

struct Builder<'a> {
    dim: usize,
    pos: &'a [Point],
    w: &'a [f64],
    cells: Vec<[u32; 4]>,
    nbr: Vec<[u32; 4]>,
    alive: Vec<bool>,
    free: Vec<u32>,
    mark: Vec<u32>,
    stamp: u32,
    last: u32,
    rng: u64,
    present: Vec<bool>,
}

impl<'a> Builder<'a> {
    fn d1(&self) -> usize {
        self.dim + 1
    }

    fn is_ghost(&self, c: u32) -> bool {
        self.cells[c as usize][..self.d1()].contains(&INF)
    }

    fn next_rand(&mut self) -> u64 {
        self.rng ^= self.rng << 13;
        self.rng ^= self.rng >> 7;
        self.rng ^= self.rng << 17;
        self.rng
    }

    /// Orientation of cell `c` with slot `slot` replaced by `p`.
    fn orient_with(&self, c: u32, slot: usize, p: u32) -> i8 {
        let cell = self.cells[c as usize];
        let mut pts = [[0.0; 3]; 4];
        for i in 0..self.d1() {
            let v = if i == slot { p } else { cell[i] };
            pts[i] = self.pos[v as usize];
        }
        orient(self.dim, &pts[..self.d1()])
    }

    fn conflict(&self, c: u32, p: u32) -> bool {
        let cell = self.cells[c as usize];
        let d1 = self.d1();
        if let Some(k) = cell[..d1].iter().position(|&v| v == INF) {
            let o = self.orient_with(c, k, p);
            if o != 0 {
                return o > 0;
            }
            return self.conflict(self.nbr[c as usize][k], p);
        }
        let mut pts = [[0.0; 3]; 4];
        let mut ws = [0.0; 4];
        for i in 0..d1 {
            pts[i] = self.pos[cell[i] as usize];
            ws[i] = self.w[cell[i] as usize];
        }
        in_conflict(self.dim, &pts[..d1], &ws[..d1], &cell[..d1], self.pos[p as usize], self.w[p as usize], p)
    }

    fn new_cell(&mut self, v: [u32; 4]) -> u32 {
        if let Some(c) = self.free.pop() {
            self.cells[c as usize] = v;
            self.nbr[c as usize] = [NO_CELL; 4];
            self.alive[c as usize] = true;
            c
        } else {
            self.cells.push(v);
            self.nbr.push([NO_CELL; 4]);
            self.alive.push(true);
            self.mark.push(0);
            (self.cells.len() - 1) as u32
        }
    }

    /// Pairs up facets among `cells` that are not yet linked.
    fn link(&mut self, cells: &[u32]) {
        let d1 = self.d1();
        let mut open: HashMap<[u32; 3], (u32, usize)> = HashMap::new();
        for &c in cells {
            for j in 0..d1 {
                if self.nbr[c as usize][j] != NO_CELL {
                    continue;
                }
                let mut key = [0u32; 3];
                let mut k = 0;
                for i in 0..d1 {
                    if i != j {
                        key[k] = self.cells[c as usize][i];
                        k += 1;
                    }
                }
                key[..d1 - 1].sort_unstable();
                if let Some((o, oj)) = open.remove(&key) {
                    self.nbr[c as usize][j] = o;
                    self.nbr[o as usize][oj] = c;
                } else {
                    open.insert(key, (c, j));
                }
            }
        }
    }

    fn init(&mut self, s: &[u32]) {
        let d1 = self.d1();
        let mut v = [INF; 4];
        v[..d1].copy_from_slice(s);
        let pts: Vec<Point> = s.iter().map(|&i| self.pos[i as usize]).collect();
        if orient(self.dim, &pts) < 0 {
            v.swap(0, 1);
        }
        let c0 = self.new_cell(v);
        let mut all = vec![c0];
        for i in 0..d1 {
            let mut g = v;
            g[i] = INF;
            // flip orientation so the ghost is positive for points beyond its facet
            let others: Vec<usize> = (0..d1).filter(|&j| j != i).collect();
            g.swap(others[0], others[1]);
            let gc = self.new_cell(g);
            self.nbr[c0 as usize][i] = gc;
            self.nbr[gc as usize][i] = c0;
            all.push(gc);
        }
        self.link(&all);
        for &i in s {
            self.present[i as usize] = true;
        }
        self.last = c0;
    }

    fn locate(&mut self, p: u32) -> u32 {
        let mut c = self.last;
        if !self.alive[c as usize] || self.is_ghost(c) {
            c = (0..self.cells.len() as u32).find(|&c| self.alive[c as usize] && !self.is_ghost(c)).unwrap();
        }
        let d1 = self.d1();
        let mut guard = 0usize;
        'walk: loop {
            if self.is_ghost(c) {
                return c;
            }
            guard += 1;
            if guard > 10 * self.cells.len() + 100 {
                return c;
            }
            let off = (self.next_rand() % d1 as u64) as usize;
            for t in 0..d1 {
                let i = (off + t) % d1;
                if self.orient_with(c, i, p) < 0 {
                    c = self.nbr[c as usize][i];
                    continue 'walk;
                }
            }
            return c;
        }
    }

    /// Inserts `p`; returns false when it is hidden.
    fn insert(&mut self, p: u32) -> bool {
        let d1 = self.d1();
        let c0 = self.locate(p);
        if !self.conflict(c0, p) {
            return false;
        }
        self.stamp += 2;
        let (in_cav, no) = (self.stamp, self.stamp + 1);
        let mut cavity = vec![c0];
        self.mark[c0 as usize] = in_cav;
        let mut boundary: Vec<(u32, usize)> = Vec::new();
        let mut k = 0;
        while k < cavity.len() {
            let c = cavity[k];
            k += 1;
            for i in 0..d1 {
                let nb = self.nbr[c as usize][i];
                let m = self.mark[nb as usize];
                if m == in_cav {
                    continue;
                }
                if m != no && self.conflict(nb, p) {
                    self.mark[nb as usize] = in_cav;
                    cavity.push(nb);
                } else {
                    self.mark[nb as usize] = no;
                    boundary.push((c, i));
                }
            }
        }
        let mut created = Vec::with_capacity(boundary.len());
        let mut kept: HashSet<u32> = HashSet::new();
        for &(c, i) in &boundary {
            let mut v = self.cells[c as usize];
            for j in 0..d1 {
                if j != i {
                    kept.insert(v[j]);
                }
            }
            v[i] = p;
            let outside = self.nbr[c as usize][i];
            let nc = self.new_cell(v);
            self.nbr[nc as usize][i] = outside;
            let slot = (0..d1).find(|&j| self.nbr[outside as usize][j] == c).unwrap();
            self.nbr[outside as usize][slot] = nc;
            created.push(nc);
        }
        for &c in &cavity {
            for j in 0..d1 {
                let v = self.cells[c as usize][j];
                if v != INF && !kept.contains(&v) {
                    self.present[v as usize] = false;
                }
            }
            self.alive[c as usize] = false;
            self.free.push(c);
        }
        self.link(&created);
        self.present[p as usize] = true;
        if let Some(&c) = created.iter().find(|&&c| !self.is_ghost(c)) {
            self.last = c;
        }
        true
    }
}

fn input_hash(points: &[WeightedPoint]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for p in points {
        for v in [p.position[0], p.position[1], p.position[2], p.weight] {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn morton(p: Point, dim: usize) -> u64 {
    let bits = if dim == 2 { 20 } else { 16 };
    let q = |x: f64| ((x.clamp(-1.0, 2.0) + 1.0) / 3.0 * ((1u64 << bits) - 1) as f64) as u64;
    let c = [q(p[0]), q(p[1]), q(p[2])];
    let mut code = 0u64;
    for b in 0..bits {
        for k in 0..dim {
            code |= ((c[k] >> b) & 1) << (b * dim + k);
        }
    }
    code
}

/// Biased randomized insertion order: shuffled, split into rounds of
/// doubling size, each round sorted along a Morton curve.
fn brio_order(points: &[WeightedPoint], dim: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..points.len() as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(input_hash(points));
    order.shuffle(&mut rng);
    let mut end = order.len();
    while end > 0 {
        let start = if end > 64 { end / 2 } else { 0 };
        order[start..end].sort_by_key(|&i| morton(points[i as usize].position, dim));
        end = start;
    }
    order
}

/// Regular triangulation of `points` in dimension `dim`.
pub fn build_wdt(points: &[WeightedPoint], dim: usize) -> Result<WdtComplex> {
    if !(dim == 2 || dim == 3) {
        return Err(DmeshError::Contract(format!("dimension {dim}")));
    }
    if points.len() < dim + 1 {
        return Err(DmeshError::DegenerateInput(format!("{} points in {dim}D", points.len())));
    }
    let pos: Vec<Point> = points.iter().map(|p| p.position).collect();
    let w: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let order = brio_order(points, dim);
    // affinely independent start simplex, preferring early points
    let mut s: Vec<u32> = vec![order[0]];
    for &i in &order[1..] {
        let mut cand: Vec<Point> = s.iter().map(|&j| pos[j as usize]).collect();
        cand.push(pos[i as usize]);
        let ok = match cand.len() {
            2 => cand[0] != cand[1],
            3 if dim == 2 => orient(2, &cand) != 0,
            3 => {
                let c = crate::geometry::cross(
                    crate::geometry::sub(cand[1], cand[0]),
                    crate::geometry::sub(cand[2], cand[0]),
                );
                c != [0.0; 3]
                    && [0, 1, 2].iter().any(|&ax| {
                        let proj: Vec<Point> = cand
                            .iter()
                            .map(|p| {
                                let mut q = [0.0; 3];
                                let (a, b) = [(1, 2), (0, 2), (0, 1)][ax];
                                q[0] = p[a];
                                q[1] = p[b];
                                q
                            })
                            .collect();
                        orient(2, &proj) != 0
                    })
            }
            4 => orient(3, &cand) != 0,
            _ => false,
        };
        if ok {
            s.push(i);
            if s.len() == dim + 1 {
                break;
            }
        }
    }
    if s.len() < dim + 1 {
        return Err(DmeshError::DegenerateInput("all points are affinely dependent".into()));
    }
    let mut b = Builder {
        dim,
        pos: &pos,
        w: &w,
        cells: Vec::new(),
        nbr: Vec::new(),
        alive: Vec::new(),
        free: Vec::new(),
        mark: Vec::new(),
        stamp: 0,
        last: 0,
        rng: input_hash(points) | 1,
        present: vec![false; points.len()],
    };
    b.init(&s);
    let initial: HashSet<u32> = s.iter().copied().collect();
    for &i in &order {
        if !initial.contains(&i) {
            b.insert(i);
        }
    }
    let d1 = dim + 1;
    let mut remap = vec![NO_CELL; b.cells.len()];
    let mut cells = Vec::new();
    for c in 0..b.cells.len() {
        if b.alive[c] && !b.is_ghost(c as u32) {
            remap[c] = cells.len() as u32;
            cells.push(b.cells[c]);
        }
    }
    let mut neighbors = Vec::with_capacity(cells.len());
    for c in 0..b.cells.len() {
        if remap[c] == NO_CELL {
            continue;
        }
        let mut n = [NO_CELL; 4];
        for j in 0..d1 {
            let o = b.nbr[c][j];
            n[j] = if o == NO_CELL { NO_CELL } else { remap[o as usize] };
        }
        neighbors.push(n);
    }
    let hidden = b.present.iter().map(|&x| !x).collect();
    Ok(WdtComplex {
        dim,
        point_count: points.len(),
        cells,
        neighbors,
        hidden,
        faces: HashMap::new(),
        adj_start: Vec::new(),
        adj: Vec::new(),
        cell_set: HashSet::new(),
    }
    .finish())
}

/// For every point, all (d-1)-simplices formed with d-1 of its k nearest
/// neighbours, deduplicated and sorted.
pub fn knn_candidate_faces(points: &[WeightedPoint], dim: usize, k: usize) -> Vec<Simplex> {
    let pos: Vec<Point> = points.iter().map(|p| p.position).collect();
    knn_candidate_faces_of(&pos, dim, k)
}

pub fn knn_candidate_faces_of(pos: &[Point], dim: usize, k: usize) -> Vec<Simplex> {
    let k = k.max(2).min(pos.len().saturating_sub(1));
    if k == 0 {
        return Vec::new();
    }
    let index = PointIndex::new(pos);
    let mut out: HashSet<Simplex> = HashSet::new();
    for (i, &p) in pos.iter().enumerate() {
        let nn: Vec<u32> =
            index.knn(p, k + 1).into_iter().map(|x| x.0 as u32).filter(|&j| j != i as u32).take(k).collect();
        if dim == 2 {
            for &a in &nn {
                out.insert(Simplex::new(&[i as u32, a]));
            }
        } else {
            for x in 0..nn.len() {
                for y in x + 1..nn.len() {
                    out.insert(Simplex::new(&[i as u32, nn[x], nn[y]]));
                }
            }
        }
    }
    let mut v: Vec<Simplex> = out.into_iter().collect();
    v.sort_unstable();
    v
}
