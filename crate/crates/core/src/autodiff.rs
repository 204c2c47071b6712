//! Small reverse-mode tape. Geometry formulas are written once against
//! [`Real`] and run either on plain `f64` or on a [`Var`] bound to a tape.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    a: u32,
    da: f64,
    b: u32,
    db: f64,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// New independent variable.
    pub fn var(&self, val: f64) -> Var<'_> {
        self.push(val, NONE, 0.0, NONE, 0.0)
    }

    pub fn constant(&self, val: f64) -> Var<'_> {
        Var { tape: self, idx: NONE, val }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, val: f64, a: u32, da: f64, b: u32, db: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(Node { a, da, b, db });
        Var { tape: self, idx, val }
    }

    /// Adjoints of every node with respect to `out`.
    pub fn gradient(&self, out: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        if out.idx == NONE {
            return adj;
        }
        adj[out.idx as usize] = 1.0;
        for i in (0..=out.idx as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let n = nodes[i];
            if n.a != NONE {
                adj[n.a as usize] += g * n.da;
            }
            if n.b != NONE {
                adj[n.b as usize] += g * n.db;
            }
        }
        adj
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.val
    }

    /// Tape slot, `None` for constants.
    pub fn index(&self) -> Option<usize> {
        (self.idx != NONE).then_some(self.idx as usize)
    }

    fn unary(self, val: f64, d: f64) -> Self {
        if self.idx == NONE {
            return Var { val, ..self };
        }
        self.tape.push(val, self.idx, d, NONE, 0.0)
    }

    fn binary(self, o: Self, val: f64, da: f64, db: f64) -> Self {
        match (self.idx == NONE, o.idx == NONE) {
            (true, true) => Var { val, ..self },
            (false, true) => self.tape.push(val, self.idx, da, NONE, 0.0),
            (true, false) => self.tape.push(val, o.idx, db, NONE, 0.0),
            (false, false) => self.tape.push(val, self.idx, da, o.idx, db),
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}
impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}
impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}
impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.val / o.val;
        self.binary(o, q, 1.0 / o.val, -q / o.val)
    }
}
impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}
impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        self.unary(self.val + o, 1.0)
    }
}
impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        self.unary(self.val - o, 1.0)
    }
}
impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        self.unary(self.val * o, o)
    }
}
impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        self.unary(self.val / o, 1.0 / o)
    }
}

/// Scalar usable by the shared geometry formulas.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
    /// A constant living in the same context as `self`.
    fn lift(self, v: f64) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;

    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn min(self, o: Self) -> Self {
        if o.value() < self.value() {
            o
        } else {
            self
        }
    }

    fn max(self, o: Self) -> Self {
        if o.value() > self.value() {
            o
        } else {
            self
        }
    }
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }
    fn lift(self, v: f64) -> Self {
        v
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        self.val
    }
    fn lift(self, v: f64) -> Self {
        self.tape.constant(v)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    let v = x.value();
    if v >= 0.0 {
        let e = (-x).exp();
        (e + 1.0).lift(1.0) / (e + 1.0)
    } else {
        let e = x.exp();
        e / (e + 1.0)
    }
}

pub mod vec {
    //! Three-component vector helpers generic over [`Real`].
    use super::Real;

    pub type V3<T> = [T; 3];

    pub fn add<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }
    pub fn sub<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }
    pub fn scale<T: Real>(a: V3<T>, s: T) -> V3<T> {
        [a[0] * s, a[1] * s, a[2] * s]
    }
    pub fn dot<T: Real>(a: V3<T>, b: V3<T>) -> T {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }
    pub fn cross<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }
    pub fn norm2<T: Real>(a: V3<T>) -> T {
        dot(a, a)
    }
    pub fn norm<T: Real>(a: V3<T>) -> T {
        norm2(a).sqrt()
    }
    pub fn lift<T: Real>(like: T, a: [f64; 3]) -> V3<T> {
        [like.lift(a[0]), like.lift(a[1]), like.lift(a[2])]
    }
    pub fn value<T: Real>(a: V3<T>) -> [f64; 3] {
        [a[0].value(), a[1].value(), a[2].value()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let t = Tape::new();
        let x = t.var(3.0);
        let y = t.var(-2.0);
        let z = x * y + x.sqrt() / y;
        let g = t.gradient(z);
        let gx = -2.0 + 0.5 / 3f64.sqrt() / -2.0;
        let gy = 3.0 - 3f64.sqrt() / 4.0;
        assert!((g[0] - gx).abs() < 1e-14);
        assert!((g[1] - gy).abs() < 1e-14);
    }

    #[test]
    fn constants_do_not_record() {
        let t = Tape::new();
        let c = t.constant(2.0);
        let d = c * c + 1.0;
        assert_eq!(t.len(), 0);
        assert_eq!(d.value(), 5.0);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        let t = Tape::new();
        let x = t.var(0.3);
        let s = sigmoid(x);
        let g = t.gradient(s);
        let v = sigmoid(0.3);
        assert!((g[0] - v * (1.0 - v)).abs() < 1e-15);
    }
}
