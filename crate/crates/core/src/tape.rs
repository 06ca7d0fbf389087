//! Scalar reverse-mode automatic differentiation on a growable tape.
//!
//! Used to cross-check the network's closed-form backprop and to
//! differentiate small composite expressions in tests; the training hot
//! path uses [`crate::nn::Mlp::backprop`] directly.

use std::cell::RefCell;

#[derive(Debug, Clone, Copy)]
struct Node {
    /// up to two parents: (parent index, local partial)
    parents: [(usize, f64); 2],
    n_parents: u8,
}

/// Records one scalar computation; create variables with [`Tape::var`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
    val: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, parents: [(usize, f64); 2], n_parents: u8) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, n_parents });
        nodes.len() - 1
    }

    /// A new independent variable (leaf).
    pub fn var(&self, val: f64) -> Var<'_> {
        let idx = self.push([(0, 0.0); 2], 0);
        Var {
            tape: self,
            idx,
            val,
        }
    }

    /// Reverse pass from `root`; returns d root / d node for every node.
    pub fn gradient(&self, root: Var<'_>) -> Gradient {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[root.idx] = 1.0;
        for i in (0..=root.idx).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = &nodes[i];
            for p in 0..node.n_parents as usize {
                let (parent, partial) = node.parents[p];
                adj[parent] += a * partial;
            }
        }
        Gradient { adj }
    }
}

pub struct Gradient {
    adj: Vec<f64>,
}

impl Gradient {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.idx]
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.val
    }

    fn unary(&self, val: f64, partial: f64) -> Var<'t> {
        let idx = self.tape.push([(self.idx, partial), (0, 0.0)], 1);
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }

    fn binary(&self, other: Var<'t>, val: f64, pa: f64, pb: f64) -> Var<'t> {
        let idx = self
            .tape
            .push([(self.idx, pa), (other.idx, pb)], 2);
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(self.val.sin(), self.val.cos())
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(self.val.cos(), -self.val.sin())
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.val.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        self.unary(self.val.powi(n), n as f64 * self.val.powi(n - 1))
    }

    pub fn powf(self, p: f64) -> Var<'t> {
        self.unary(self.val.powf(p), p * self.val.powf(p - 1.0))
    }

    pub fn recip(self) -> Var<'t> {
        self.unary(1.0 / self.val, -1.0 / (self.val * self.val))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(c * self.val, c)
    }

    pub fn shift(self, c: f64) -> Var<'t> {
        self.unary(self.val + c, 1.0)
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> std::ops::Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(
            rhs,
            self.val / rhs.val,
            1.0 / rhs.val,
            -self.val / (rhs.val * rhs.val),
        )
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}
