//! Filtered exact predicates for orientation and power (regular) tests.
//!
//! Fast path: floating-point determinant with a permanent-based error bound.
//! Slow path: all inputs scaled by a common power of two to integers and the
//! determinant evaluated with big integers. Power ties are broken by
//! symbolic perturbation of the lifted coordinate, ordered by point index.

use num_bigint::BigInt;
use num_traits::{Float, Signed, Zero};
use std::cmp::Ordering;

const EPS: f64 = f64::EPSILON * 0.5;

fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn perm3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] + m[1][2] * m[2][1])
        + m[0][1] * (m[1][0] * m[2][2] + m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] + m[1][1] * m[2][0])
}

fn det4(m: [[f64; 4]; 4]) -> f64 {
    let mut s = 0.0;
    for c in 0..4 {
        let sub = minor4(&m, c);
        let t = m[0][c] * det3(sub);
        s += if c % 2 == 0 { t } else { -t };
    }
    s
}

fn perm4(m: [[f64; 4]; 4]) -> f64 {
    (0..4).map(|c| m[0][c] * perm3(minor4(&m, c))).sum()
}

fn minor4(m: &[[f64; 4]; 4], c: usize) -> [[f64; 3]; 3] {
    let mut sub = [[0.0; 3]; 3];
    for r in 1..4 {
        let mut k = 0;
        for cc in 0..4 {
            if cc != c {
                sub[r - 1][k] = m[r][cc];
                k += 1;
            }
        }
    }
    sub
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn big_sign(x: &BigInt) -> i8 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}

/// Exact determinant by fraction-free Gaussian elimination.
fn bareiss(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let n = m.len();
    let mut neg = false;
    let mut prev = BigInt::from(1);
    for k in 0..n {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&r| !m[r][k].is_zero()) {
                Some(r) => {
                    m.swap(k, r);
                    neg = !neg;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
        }
        prev = m[k][k].clone();
    }
    let d = m[n - 1][n - 1].clone();
    if neg {
        -d
    } else {
        d
    }
}

/// Converts coordinates and weights to integers under the common scaling
/// x -> x * 2^s, w -> w * 2^(2s).
fn to_integers(coords: &[f64], weights: &[f64]) -> (Vec<BigInt>, Vec<BigInt>) {
    let decode = |v: f64| {
        let (m, e, s) = Float::integer_decode(v);
        (m, e as i64, s)
    };
    let mut need = 0i64;
    for &c in coords {
        let (m, e, _) = decode(c);
        if m != 0 {
            need = need.max(-e);
        }
    }
    for &w in weights {
        let (m, e, _) = decode(w);
        if m != 0 {
            need = need.max((-e + 1).div_euclid(2));
        }
    }
    let s = need.max(0);
    let conv = |v: f64, scale: i64| {
        let (m, e, sg) = decode(v);
        let mut b = BigInt::from(m);
        let shift = e + scale;
        debug_assert!(shift >= 0 || m == 0);
        if m != 0 {
            b <<= shift as usize;
        }
        if sg < 0 {
            -b
        } else {
            b
        }
    };
    (
        coords.iter().map(|&c| conv(c, s)).collect(),
        weights.iter().map(|&w| conv(w, 2 * s)).collect(),
    )
}

fn orient_exact(dim: usize, pts: &[[f64; 3]]) -> i8 {
    let coords: Vec<f64> = pts.iter().flat_map(|p| p[..dim].to_vec()).collect();
    let (c, _) = to_integers(&coords, &[]);
    let m: Vec<Vec<BigInt>> = (1..=dim)
        .map(|i| (0..dim).map(|k| &c[i * dim + k] - &c[k]).collect())
        .collect();
    big_sign(&bareiss(m))
}

/// Sign of det[p_i - p_0] for i = 1..=dim. `pts` holds dim+1 points.
pub fn orient(dim: usize, pts: &[[f64; 3]]) -> i8 {
    debug_assert_eq!(pts.len(), dim + 1);
    let (det, perm, k) = if dim == 2 {
        let a = [pts[1][0] - pts[0][0], pts[1][1] - pts[0][1]];
        let b = [pts[2][0] - pts[0][0], pts[2][1] - pts[0][1]];
        (det2([a, b]), (a[0] * b[1]).abs() + (a[1] * b[0]).abs(), 8.0)
    } else {
        let mut m = [[0.0; 3]; 3];
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                m[i][k] = pts[i + 1][k] - pts[0][k];
                a[i][k] = m[i][k].abs();
            }
        }
        (det3(m), perm3(a), 32.0)
    };
    if det.abs() > k * EPS * perm {
        return sign(det);
    }
    orient_exact(dim, pts)
}

/// Sign of the translated lifted determinant
/// L = det[p_i - p_0, |p_i - p_0|^2 - w_i + w_0], i = 1..=dim+1,
/// without perturbation; zero on exact ties.
pub fn lifted_raw(dim: usize, pts: &[[f64; 3]], w: &[f64]) -> i8 {
    debug_assert_eq!(pts.len(), dim + 2);
    let row = |i: usize| {
        let mut d = [0.0; 3];
        for k in 0..dim {
            d[k] = pts[i][k] - pts[0][k];
        }
        let l = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] - w[i] + w[0];
        let lm = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + w[i].abs() + w[0].abs();
        (d, l, lm)
    };
    let (det, perm) = if dim == 2 {
        let mut m = [[0.0; 3]; 3];
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            let (d, l, lm) = row(i + 1);
            m[i] = [d[0], d[1], l];
            a[i] = [d[0].abs(), d[1].abs(), lm];
        }
        (det3(m), perm3(a))
    } else {
        let mut m = [[0.0; 4]; 4];
        let mut a = [[0.0; 4]; 4];
        for i in 0..4 {
            let (d, l, lm) = row(i + 1);
            m[i] = [d[0], d[1], d[2], l];
            a[i] = [d[0].abs(), d[1].abs(), d[2].abs(), lm];
        }
        (det4(m), perm4(a))
    };
    if det.abs() > 256.0 * EPS * perm {
        return sign(det);
    }
    let sm = homogeneous_exact(dim, pts, w, None);
    // det M = (-1)^(dim+1) L
    if dim % 2 == 1 {
        sm
    } else {
        -sm
    }
}

/// Sign of det of rows [x_j, |x_j|^2 - w_j, 1], or of the minor that drops
/// row `skip` and the lift column.
fn homogeneous_exact(dim: usize, pts: &[[f64; 3]], w: &[f64], skip: Option<usize>) -> i8 {
    let coords: Vec<f64> = pts.iter().flat_map(|p| p[..dim].to_vec()).collect();
    let (c, wi) = to_integers(&coords, w);
    let one = BigInt::from(1);
    let mut m = Vec::new();
    for j in 0..pts.len() {
        if Some(j) == skip {
            continue;
        }
        let mut r: Vec<BigInt> = (0..dim).map(|k| c[j * dim + k].clone()).collect();
        if skip.is_none() {
            let mut h = -wi[j].clone();
            for k in 0..dim {
                h += &c[j * dim + k] * &c[j * dim + k];
            }
            r.push(h);
        }
        r.push(one.clone());
        m.push(r);
    }
    big_sign(&bareiss(m))
}

/// Whether `q` (index `qid`) lies strictly inside the orthosphere of a
/// positively oriented cell, with ties broken symbolically. Perturbed
/// weights are w_j - eps_j where eps_j dominates for larger ids.
pub fn in_conflict(
    dim: usize,
    cell: &[[f64; 3]],
    cell_w: &[f64],
    cell_ids: &[u32],
    q: [f64; 3],
    wq: f64,
    qid: u32,
) -> bool {
    let mut pts = [[0.0; 3]; 5];
    let mut w = [0.0; 5];
    let mut ids = [0u32; 5];
    for i in 0..=dim {
        pts[i] = cell[i];
        w[i] = cell_w[i];
        ids[i] = cell_ids[i];
    }
    pts[dim + 1] = q;
    w[dim + 1] = wq;
    ids[dim + 1] = qid;
    let n = dim + 2;
    let l = lifted_raw(dim, &pts[..n], &w[..n]);
    if l != 0 {
        return l < 0;
    }
    // det M' = det M + sum_j eps_j C_j; the largest id with a nonzero
    // cofactor decides.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ids[b].cmp(&ids[a]).then(Ordering::Equal));
    for j in order {
        let minor = homogeneous_exact(dim, &pts[..n], &w[..n], Some(j));
        if minor != 0 {
            // cofactor sign (-1)^(j + dim); conflict iff (-1)^dim det M' > 0
            let c = if (j + dim) % 2 == 0 { minor } else { -minor };
            let s = if dim % 2 == 0 { c } else { -c };
            return s > 0;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orient_basic() {
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(orient(2, &p), 1);
        let q = [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 2.0, 0.0]];
        assert_eq!(orient(2, &q), 0);
        let t = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(orient(3, &t), 1);
    }

    #[test]
    fn near_collinear_uses_exact_path() {
        let a = [0.1, 0.1, 0.0];
        let b = [0.3, 0.3, 0.0];
        let c = [0.7, 0.7 + 1e-17, 0.0];
        // 0.7 + 1e-17 rounds to 0.7 in double, so exactly collinear
        assert_eq!(orient(2, &[a, b, c]), 0);
        let c2 = [0.7, f64::from_bits(0.7f64.to_bits() + 1), 0.0];
        assert_eq!(orient(2, &[a, b, c2]), 1);
    }

    #[test]
    fn lifted_matches_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in [2, 3] {
            for _ in 0..200 {
                let pts: Vec<[f64; 3]> = (0..dim + 2)
                    .map(|_| {
                        let mut p = [0.0; 3];
                        for k in 0..dim {
                            p[k] = rng.random::<f64>();
                        }
                        p
                    })
                    .collect();
                let w: Vec<f64> = (0..dim + 2).map(|_| rng.random::<f64>() * 0.1).collect();
                let l = lifted_raw(dim, &pts, &w);
                let m = homogeneous_exact(dim, &pts, &w, None);
                let expect = if dim % 2 == 1 { m } else { -m };
                assert_eq!(l, expect);
            }
        }
    }

    #[test]
    fn cocircular_tie_is_consistent() {
        // four cocircular points: exactly one diagonal must win
        let s = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        let w = [0.0; 3];
        let a = in_conflict(2, &[s[0], s[1], s[2]], &w, &[0, 1, 2], s[3], 0.0, 3);
        let b = in_conflict(2, &[s[0], s[2], s[3]], &w, &[0, 2, 3], s[1], 0.0, 1);
        let c = in_conflict(2, &[s[0], s[1], s[3]], &w, &[0, 1, 3], s[2], 0.0, 2);
        let d = in_conflict(2, &[s[1], s[2], s[3]], &w, &[1, 2, 3], s[0], 0.0, 0);
        // diagonal 0-2 valid iff neither of its triangles sees the opposite point
        let diag02 = !a && !b;
        let diag13 = !c && !d;
        assert!(diag02 ^ diag13);
    }

    #[test]
    fn weighted_conflict() {
        let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let w = [0.0; 3];
        assert!(in_conflict(2, &tri, &w, &[0, 1, 2], [0.3, 0.3, 0.0], 0.0, 3));
        assert!(!in_conflict(2, &tri, &w, &[0, 1, 2], [0.3, 0.3, 0.0], -10.0, 3));
        assert!(!in_conflict(2, &tri, &w, &[0, 1, 2], [2.0, 2.0, 0.0], 0.0, 3));
        assert!(in_conflict(2, &tri, &w, &[0, 1, 2], [2.0, 2.0, 0.0], 10.0, 3));
    }
}
