//! Scalar reverse-mode automatic differentiation.
//!
//! Computations are written once against the [`Recorder`] trait. Running
//! them with [`Eval`] computes plain values; running them with a
//! [`DiffGraph`] records every scalar operation with its local partials so
//! that [`DiffGraph::backprop`] can return derivatives with respect to the
//! registered parameter leaves. Both paths perform the same floating-point
//! operations in the same order, so their values agree bit for bit.

/// Scalar arithmetic that may or may not be recorded.
pub trait Recorder {
    type V: Copy;

    fn constant(&mut self, x: f64) -> Self::V;
    fn value(&self, v: Self::V) -> f64;

    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn div(&mut self, a: Self::V, b: Self::V) -> Self::V;
    /// `a * c` for a constant `c`.
    fn scale(&mut self, a: Self::V, c: f64) -> Self::V;
    /// `a + c` for a constant `c`.
    fn offset(&mut self, a: Self::V, c: f64) -> Self::V;
    /// `acc + c * b` for a constant `c`.
    fn fma_const(&mut self, acc: Self::V, b: Self::V, c: f64) -> Self::V;
    fn exp(&mut self, a: Self::V) -> Self::V;
    fn ln(&mut self, a: Self::V) -> Self::V;
    fn sin(&mut self, a: Self::V) -> Self::V;
    fn cos(&mut self, a: Self::V) -> Self::V;
    fn tanh(&mut self, a: Self::V) -> Self::V;
    fn softplus(&mut self, a: Self::V) -> Self::V;
    fn sqrt(&mut self, a: Self::V) -> Self::V;

    fn neg(&mut self, a: Self::V) -> Self::V {
        self.scale(a, -1.0)
    }

    fn square(&mut self, a: Self::V) -> Self::V {
        self.mul(a, a)
    }

    fn sum(&mut self, xs: &[Self::V]) -> Self::V {
        let mut acc = self.constant(0.0);
        for &x in xs {
            acc = self.add(acc, x);
        }
        acc
    }

    fn dot(&mut self, a: &[Self::V], b: &[Self::V]) -> Self::V {
        assert_eq!(a.len(), b.len(), "dot length mismatch");
        let mut acc = self.constant(0.0);
        for (&x, &y) in a.iter().zip(b) {
            let p = self.mul(x, y);
            acc = self.add(acc, p);
        }
        acc
    }

    fn dot_const(&mut self, a: &[Self::V], c: &[f64]) -> Self::V {
        assert_eq!(a.len(), c.len(), "dot length mismatch");
        let mut acc = self.constant(0.0);
        for (&x, &k) in a.iter().zip(c) {
            acc = self.fma_const(acc, x, k);
        }
        acc
    }

    fn constants(&mut self, xs: &[f64]) -> Vec<Self::V> {
        xs.iter().map(|&x| self.constant(x)).collect()
    }

    fn values(&self, vs: &[Self::V]) -> Vec<f64> {
        vs.iter().map(|&v| self.value(v)).collect()
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Plain evaluation, nothing recorded.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eval;

impl Recorder for Eval {
    type V = f64;

    fn constant(&mut self, x: f64) -> f64 {
        x
    }
    fn value(&self, v: f64) -> f64 {
        v
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    fn scale(&mut self, a: f64, c: f64) -> f64 {
        a * c
    }
    fn offset(&mut self, a: f64, c: f64) -> f64 {
        a + c
    }
    fn fma_const(&mut self, acc: f64, b: f64, c: f64) -> f64 {
        acc + c * b
    }
    fn exp(&mut self, a: f64) -> f64 {
        a.exp()
    }
    fn ln(&mut self, a: f64) -> f64 {
        a.ln()
    }
    fn sin(&mut self, a: f64) -> f64 {
        a.sin()
    }
    fn cos(&mut self, a: f64) -> f64 {
        a.cos()
    }
    fn tanh(&mut self, a: f64) -> f64 {
        a.tanh()
    }
    fn softplus(&mut self, a: f64) -> f64 {
        softplus(a)
    }
    fn sqrt(&mut self, a: f64) -> f64 {
        a.sqrt()
    }
}

/// Handle to a node of a [`DiffGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    value: f64,
    a: u32,
    da: f64,
    b: u32,
    db: f64,
}

/// Recorded scalar computation graph. Nodes are appended in evaluation order,
/// so the graph is acyclic by construction and reverse order is a valid
/// topological order for backpropagation.
#[derive(Debug, Default, Clone)]
pub struct DiffGraph {
    nodes: Vec<Node>,
    leaves: Vec<u32>,
}

impl DiffGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self { nodes: Vec::with_capacity(nodes), leaves: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Registers a differentiable parameter leaf. Gradients are returned in
    /// registration order.
    pub fn param(&mut self, x: f64) -> Var {
        let v = self.push(x, NONE, 0.0, NONE, 0.0);
        self.leaves.push(v.0);
        v
    }

    pub fn params(&mut self, xs: &[f64]) -> Vec<Var> {
        xs.iter().map(|&x| self.param(x)).collect()
    }

    fn push(&mut self, value: f64, a: u32, da: f64, b: u32, db: f64) -> Var {
        let id = u32::try_from(self.nodes.len()).expect("graph exceeds u32 nodes");
        self.nodes.push(Node { value, a, da, b, db });
        Var(id)
    }

    fn unary(&mut self, value: f64, a: Var, da: f64) -> Var {
        self.push(value, a.0, da, NONE, 0.0)
    }

    fn binary(&mut self, value: f64, a: Var, da: f64, b: Var, db: f64) -> Var {
        self.push(value, a.0, da, b.0, db)
    }

    /// Adjoint of `output` with respect to every node.
    pub fn adjoints(&self, output: Var) -> Vec<f64> {
        let mut adj = vec![0.0; output.index() + 1];
        adj[output.index()] = 1.0;
        for i in (0..=output.index()).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let node = self.nodes[i];
            if node.a != NONE {
                adj[node.a as usize] += g * node.da;
            }
            if node.b != NONE {
                adj[node.b as usize] += g * node.db;
            }
        }
        adj
    }

    /// d(output)/d(leaf) for every registered parameter leaf.
    pub fn backprop(&self, output: Var) -> Vec<f64> {
        let adj = self.adjoints(output);
        self.leaves
            .iter()
            .map(|&l| adj.get(l as usize).copied().unwrap_or(0.0))
            .collect()
    }
}

impl Recorder for DiffGraph {
    type V = Var;

    fn constant(&mut self, x: f64) -> Var {
        self.push(x, NONE, 0.0, NONE, 0.0)
    }
    fn value(&self, v: Var) -> f64 {
        self.nodes[v.index()].value
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.binary(v, a, 1.0, b, 1.0)
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.binary(v, a, 1.0, b, -1.0)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.binary(x * y, a, y, b, x)
    }
    fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.binary(x / y, a, 1.0 / y, b, -x / (y * y))
    }
    fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.unary(v, a, c)
    }
    fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.unary(v, a, 1.0)
    }
    fn fma_const(&mut self, acc: Var, b: Var, c: f64) -> Var {
        let v = self.value(acc) + c * self.value(b);
        self.binary(v, acc, 1.0, b, c)
    }
    fn exp(&mut self, a: Var) -> Var {
        let e = self.value(a).exp();
        self.unary(e, a, e)
    }
    fn ln(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(x.ln(), a, 1.0 / x)
    }
    fn sin(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(x.sin(), a, x.cos())
    }
    fn cos(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(x.cos(), a, -x.sin())
    }
    fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).tanh();
        self.unary(t, a, 1.0 - t * t)
    }
    fn softplus(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(softplus(x), a, sigmoid(x))
    }
    fn sqrt(&mut self, a: Var) -> Var {
        let s = self.value(a).sqrt();
        self.unary(s, a, 0.5 / s)
    }
}
