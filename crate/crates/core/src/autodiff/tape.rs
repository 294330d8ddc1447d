//! Reverse-mode tape over whole arrays.
//!
//! Each recorded node holds its value and the indices of its inputs. A
//! backward sweep in reverse recording order accumulates adjoints. Nodes that
//! depend only on constants are marked inactive and skipped.

use std::cell::RefCell;

use crate::array::RealArray;
use crate::linalg;

use super::tensor::{self, Tensor};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    Sin(usize),
    Cos(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Solve(usize, usize),
    Hcat(Vec<usize>),
    Vcat(Vec<usize>),
    SelectCols(usize, Vec<usize>),
    Sum(usize),
    Affine { x: usize, w: usize, b: usize },
    Linear { x: usize, w: usize },
    LinearT { x: usize, w: usize },
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::MatMul(a, b)
            | Op::Solve(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Transpose(a)
            | Op::SelectCols(a, _)
            | Op::Sum(a) => vec![*a],
            Op::Hcat(p) | Op::Vcat(p) => p.clone(),
            Op::Affine { x, w, b } => vec![*x, *w, *b],
            Op::Linear { x, w } | Op::LinearT { x, w } => vec![*x, *w],
        }
    }
}

struct Node {
    value: RealArray,
    op: Op,
    active: bool,
}

/// Recording arena for one differentiable computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a recorded array.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
    rows: usize,
    cols: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({}x{})", self.id, self.rows, self.cols)
    }
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

    /// An input the gradient is taken with respect to.
    pub fn variable(&self, value: RealArray) -> Var<'_> {
        self.push_node(value, Op::Leaf, true)
    }

    pub fn constant(&self, value: RealArray) -> Var<'_> {
        self.push_node(value, Op::Leaf, false)
    }

    fn push_node(&self, value: RealArray, op: Op, active: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let (rows, cols) = (value.rows(), value.cols());
        nodes.push(Node { value, op, active });
        Var {
            tape: self,
            id: nodes.len() - 1,
            rows,
            cols,
        }
    }

    fn record(&self, op: Op, compute: impl FnOnce(&[Node]) -> RealArray) -> Var<'_> {
        let (value, active) = {
            let nodes = self.nodes.borrow();
            let active = op.inputs().iter().any(|&i| nodes[i].active);
            (compute(&nodes), active)
        };
        self.push_node(value, op, active)
    }

    /// Reverse sweep from `output`, seeded with ones of its shape.
    pub fn gradients(&self, output: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut adj: Vec<Option<RealArray>> = vec![None; nodes.len()];
        adj[output.id] = Some(RealArray::filled(output.rows, output.cols, 1.0));
        for id in (0..=output.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            if !node.active {
                continue;
            }
            backprop(&nodes, id, &g, &mut adj);
            adj[id] = Some(g);
        }
        Gradients { adj }
    }
}

fn accumulate(adj: &mut [Option<RealArray>], nodes: &[Node], id: usize, g: RealArray) {
    if !nodes[id].active {
        return;
    }
    match &mut adj[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &RealArray, adj: &mut [Option<RealArray>]) {
    let val = |i: usize| &nodes[i].value;
    let y = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(adj, nodes, *a, g.clone());
            accumulate(adj, nodes, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(adj, nodes, *a, g.clone());
            accumulate(adj, nodes, *b, g.scale(-1.0));
        }
        Op::Mul(a, b) => {
            if nodes[*a].active {
                accumulate(adj, nodes, *a, g.hadamard(val(*b)));
            }
            if nodes[*b].active {
                accumulate(adj, nodes, *b, g.hadamard(val(*a)));
            }
        }
        Op::Div(a, b) => {
            let ga = g.div(val(*b));
            if nodes[*b].active {
                accumulate(adj, nodes, *b, ga.hadamard(y).scale(-1.0));
            }
            accumulate(adj, nodes, *a, ga);
        }
        Op::Scale(a, s) => accumulate(adj, nodes, *a, g.scale(*s)),
        Op::Offset(a) => accumulate(adj, nodes, *a, g.clone()),
        Op::Tanh(a) => accumulate(adj, nodes, *a, g.zip_map(y, |g, t| g * (1.0 - t * t))),
        Op::Sigmoid(a) => accumulate(adj, nodes, *a, g.zip_map(y, |g, s| g * s * (1.0 - s))),
        Op::Softplus(a) => accumulate(
            adj,
            nodes,
            *a,
            g.zip_map(val(*a), |g, x| g * tensor::sigmoid(x)),
        ),
        Op::Sin(a) => accumulate(adj, nodes, *a, g.zip_map(val(*a), |g, x| g * x.cos())),
        Op::Cos(a) => accumulate(adj, nodes, *a, g.zip_map(val(*a), |g, x| -g * x.sin())),
        Op::MatMul(a, b) => {
            if nodes[*a].active {
                accumulate(adj, nodes, *a, g.matmul_t(val(*b)));
            }
            if nodes[*b].active {
                accumulate(adj, nodes, *b, val(*a).t_matmul(g));
            }
        }
        Op::Transpose(a) => accumulate(adj, nodes, *a, g.transpose()),
        Op::Solve(a, b) => {
            // X = A⁻¹B: ḡB = A⁻ᵀḡX, ḡA = −ḡB Xᵀ
            let gb = linalg::solve(&val(*a).transpose(), g);
            if nodes[*a].active {
                accumulate(adj, nodes, *a, gb.matmul_t(y).scale(-1.0));
            }
            accumulate(adj, nodes, *b, gb);
        }
        Op::Hcat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let c = nodes[p].value.cols();
                let idx: Vec<usize> = (offset..offset + c).collect();
                if nodes[p].active {
                    accumulate(adj, nodes, p, g.select_cols(&idx));
                }
                offset += c;
            }
        }
        Op::Vcat(parts) => {
            let cols = g.cols();
            let mut offset = 0;
            for &p in parts {
                let r = nodes[p].value.rows();
                if nodes[p].active {
                    let slice = g.data()[offset * cols..(offset + r) * cols].to_vec();
                    accumulate(adj, nodes, p, RealArray::from_matrix(r, cols, slice));
                }
                offset += r;
            }
        }
        Op::SelectCols(a, idx) => {
            let src = val(*a);
            let mut ga = RealArray::zeros(src.rows(), src.cols());
            for i in 0..g.rows() {
                for (j, &c) in idx.iter().enumerate() {
                    ga[(i, c)] += g[(i, j)];
                }
            }
            accumulate(adj, nodes, *a, ga);
        }
        Op::Sum(a) => {
            let src = val(*a);
            accumulate(
                adj,
                nodes,
                *a,
                RealArray::filled(src.rows(), src.cols(), g.item()),
            );
        }
        Op::Affine { x, w, b } => {
            if nodes[*x].active {
                accumulate(adj, nodes, *x, val(*w).t_matmul(g));
            }
            if nodes[*w].active {
                accumulate(adj, nodes, *w, g.matmul_t(val(*x)));
            }
            if nodes[*b].active {
                let sums: Vec<f64> = (0..g.rows()).map(|i| g.row(i).iter().sum()).collect();
                accumulate(adj, nodes, *b, RealArray::column(&sums));
            }
        }
        Op::Linear { x, w } => {
            if nodes[*x].active {
                accumulate(adj, nodes, *x, val(*w).t_matmul(g));
            }
            if nodes[*w].active {
                accumulate(adj, nodes, *w, g.matmul_t(val(*x)));
            }
        }
        Op::LinearT { x, w } => {
            if nodes[*x].active {
                accumulate(adj, nodes, *x, val(*w).matmul(g));
            }
            if nodes[*w].active {
                accumulate(adj, nodes, *w, val(*x).matmul_t(g));
            }
        }
    }
}

/// Adjoints produced by [`Tape::gradients`].
pub struct Gradients {
    adj: Vec<Option<RealArray>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros when the output does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> RealArray {
        self.adj
            .get(var.id)
            .and_then(Clone::clone)
            .unwrap_or_else(|| RealArray::zeros(var.rows, var.cols))
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(&self, op: Op, f: impl FnOnce(&RealArray) -> RealArray) -> Self {
        let id = self.id;
        self.tape.record(op, |n| f(&n[id].value))
    }

    fn binary(
        &self,
        other: &Self,
        op: Op,
        f: impl FnOnce(&RealArray, &RealArray) -> RealArray,
    ) -> Self {
        let (a, b) = (self.id, other.id);
        self.tape.record(op, |n| f(&n[a].value, &n[b].value))
    }
}

impl<'t> Tensor for Var<'t> {
    type Param = Var<'t>;
    type Ctx = &'t Tape;
    const DEPTH: usize = 0;

    fn ctx(&self) -> &'t Tape {
        self.tape
    }

    fn constant(tape: &'t Tape, value: &RealArray) -> Self {
        tape.constant(value.clone())
    }

    fn value(&self) -> RealArray {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn add(&self, other: &Self) -> Self {
        self.binary(other, Op::Add(self.id, other.id), RealArray::add)
    }

    fn sub(&self, other: &Self) -> Self {
        self.binary(other, Op::Sub(self.id, other.id), RealArray::sub)
    }

    fn mul(&self, other: &Self) -> Self {
        self.binary(other, Op::Mul(self.id, other.id), RealArray::hadamard)
    }

    fn div(&self, other: &Self) -> Self {
        self.binary(other, Op::Div(self.id, other.id), RealArray::div)
    }

    fn scale(&self, s: f64) -> Self {
        self.unary(Op::Scale(self.id, s), |a| a.scale(s))
    }

    fn offset(&self, s: f64) -> Self {
        self.unary(Op::Offset(self.id), |a| a.map(|v| v + s))
    }

    fn tanh(&self) -> Self {
        self.unary(Op::Tanh(self.id), |a| a.map(f64::tanh))
    }

    fn sigmoid(&self) -> Self {
        self.unary(Op::Sigmoid(self.id), |a| a.map(tensor::sigmoid))
    }

    fn softplus(&self) -> Self {
        self.unary(Op::Softplus(self.id), |a| a.map(tensor::softplus))
    }

    fn sin(&self) -> Self {
        self.unary(Op::Sin(self.id), |a| a.map(f64::sin))
    }

    fn cos(&self) -> Self {
        self.unary(Op::Cos(self.id), |a| a.map(f64::cos))
    }

    fn matmul(&self, other: &Self) -> Self {
        self.binary(other, Op::MatMul(self.id, other.id), RealArray::matmul)
    }

    fn transpose(&self) -> Self {
        self.unary(Op::Transpose(self.id), RealArray::transpose)
    }

    fn solve(&self, rhs: &Self) -> Self {
        self.binary(rhs, Op::Solve(self.id, rhs.id), linalg::solve)
    }

    fn hcat(parts: &[Self]) -> Self {
        let tape = parts[0].tape;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        tape.record(Op::Hcat(ids.clone()), |n| {
            let vals: Vec<RealArray> = ids.iter().map(|&i| n[i].value.clone()).collect();
            RealArray::hcat(&vals)
        })
    }

    fn vcat(parts: &[Self]) -> Self {
        let tape = parts[0].tape;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        tape.record(Op::Vcat(ids.clone()), |n| {
            let vals: Vec<RealArray> = ids.iter().map(|&i| n[i].value.clone()).collect();
            RealArray::vcat(&vals)
        })
    }

    fn select_cols(&self, idx: &[usize]) -> Self {
        self.unary(Op::SelectCols(self.id, idx.to_vec()), |a| {
            a.select_cols(idx)
        })
    }

    fn sum(&self) -> Self {
        self.unary(Op::Sum(self.id), |a| RealArray::scalar(a.sum()))
    }

    fn affine(&self, w: &Var<'t>, b: &Var<'t>) -> Self {
        let (x, wi, bi) = (self.id, w.id, b.id);
        self.tape.record(Op::Affine { x, w: wi, b: bi }, |n| {
            tensor::affine(&n[x].value, &n[wi].value, &n[bi].value)
        })
    }

    fn linear(&self, w: &Var<'t>) -> Self {
        let (x, wi) = (self.id, w.id);
        self.tape
            .record(Op::Linear { x, w: wi }, |n| n[wi].value.matmul(&n[x].value))
    }

    fn linear_t(&self, w: &Var<'t>) -> Self {
        let (x, wi) = (self.id, w.id);
        self.tape.record(Op::LinearT { x, w: wi }, |n| {
            n[wi].value.t_matmul(&n[x].value)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&RealArray) -> f64, x: &RealArray, grad: &RealArray) {
        let h = 1e-6;
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[k] += h;
            let mut xm = x.clone();
            xm.data_mut()[k] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            let g = grad.data()[k];
            assert!(
                (fd - g).abs() <= 1e-6 * (1.0 + g.abs()),
                "entry {k}: fd {fd} vs tape {g}"
            );
        }
    }

    #[test]
    fn elementwise_chain() {
        let x0 = RealArray::from_matrix(2, 2, vec![0.3, -0.5, 1.2, 0.1]);
        let f = |x: &RealArray| {
            let t = Tensor::tanh(x);
            let s = Tensor::softplus(x);
            Tensor::div(&t.hadamard(&Tensor::sin(x)), &Tensor::offset(&s, 1.0))
                .sub(&Tensor::cos(x).scale(0.5))
                .sum()
        };
        let tape = Tape::new();
        let x = tape.variable(x0.clone());
        let t = x.tanh();
        let s = x.softplus();
        let out = t
            .mul(&x.sin())
            .div(&s.offset(1.0))
            .sub(&x.cos().scale(0.5))
            .sum();
        assert!((out.value().item() - f(&x0)).abs() < 1e-15);
        let g = tape.gradients(out).wrt(x);
        fd_check(f, &x0, &g);
    }

    #[test]
    fn matrix_ops() {
        let a0 = RealArray::from_matrix(2, 2, vec![3.0, 0.4, -0.2, 2.0]);
        let b0 = RealArray::from_matrix(2, 3, vec![0.3, -1.0, 0.2, 0.7, 0.1, -0.4]);
        let f = |a: &RealArray, b: &RealArray| {
            let x = linalg::solve(a, b);
            let y = RealArray::hcat(&[x.clone(), a.matmul(b)]);
            let z = RealArray::vcat(&[y.clone(), y.select_cols(&[0, 4, 0, 1, 2, 3])]);
            z.transpose().matmul(&z).map(|v| v.sin()).sum() + x.sigmoid_sum()
        };
        trait SigSum {
            fn sigmoid_sum(&self) -> f64;
        }
        impl SigSum for RealArray {
            fn sigmoid_sum(&self) -> f64 {
                Tensor::sigmoid(self).sum()
            }
        }
        let tape = Tape::new();
        let a = tape.variable(a0.clone());
        let b = tape.variable(b0.clone());
        let x = a.solve(&b);
        let y = Var::hcat(&[x, a.matmul(&b)]);
        let z = Var::vcat(&[y, y.select_cols(&[0, 4, 0, 1, 2, 3])]);
        let out = z.transpose().matmul(&z).sin().sum().add(&x.sigmoid().sum());
        assert!((out.value().item() - f(&a0, &b0)).abs() < 1e-12);
        let grads = tape.gradients(out);
        fd_check(|a| f(a, &b0), &a0, &grads.wrt(a));
        fd_check(|b| f(&a0, b), &b0, &grads.wrt(b));
    }

    #[test]
    fn affine_layers() {
        let w0 = RealArray::from_matrix(3, 2, vec![0.2, -0.3, 0.5, 0.1, -0.6, 0.4]);
        let b0 = RealArray::column(&[0.1, 0.0, -0.2]);
        let x0 = RealArray::from_matrix(2, 2, vec![1.0, -0.5, 0.25, 2.0]);
        let f = |w: &RealArray, b: &RealArray, x: &RealArray| {
            let h = tensor::affine(x, w, b);
            w.t_matmul(&h).sum() + w.matmul(x).map(|v| v * v).sum()
        };
        let tape = Tape::new();
        let (w, b, x) = (
            tape.variable(w0.clone()),
            tape.variable(b0.clone()),
            tape.variable(x0.clone()),
        );
        let out = x
            .affine(&w, &b)
            .linear_t(&w)
            .sum()
            .add(&x.linear(&w).square().sum());
        let g = tape.gradients(out);
        fd_check(|w| f(w, &b0, &x0), &w0, &g.wrt(w));
        fd_check(|b| f(&w0, b, &x0), &b0, &g.wrt(b));
        fd_check(|x| f(&w0, &b0, x), &x0, &g.wrt(x));
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(RealArray::scalar(2.0));
        let v = tape.variable(RealArray::scalar(3.0));
        let out = c.mul(&v);
        let g = tape.gradients(out);
        assert_eq!(g.wrt(v).item(), 2.0);
        assert_eq!(g.wrt(c).item(), 0.0);
    }
}
