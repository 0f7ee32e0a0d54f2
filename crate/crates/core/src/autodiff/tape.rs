use std::sync::atomic::{AtomicU32, Ordering};

use super::tensor::{mat_vec, outer_add, vec_mat, Tensor};
use crate::error::{Error, Result};

/// Floor applied inside [`Tape::log`].
pub const LOG_FLOOR: f64 = 1e-12;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    idx: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx as usize
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Affine(usize, f64),
    Concat(Vec<usize>),
    Stack(Vec<usize>),
    Slice(usize, usize),
    Gather(usize, Vec<usize>),
    Reshape(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Softmax(usize),
    Log(usize),
    Exp(usize),
    Pow(usize, f64),
    Clamp(usize, f64, f64),
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records primitive operations in evaluation order and replays them in
/// reverse to accumulate gradients.
///
/// Nodes are appended as operations run, so every input precedes the node
/// that consumes it. A tape supports a single backward pass.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::with_capacity(1024),
            grads: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index() >= self.nodes.len() {
            return Err(Error::Autodiff(format!(
                "variable {} does not belong to this tape",
                v.idx
            )));
        }
        Ok(v.index())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self.id, idx }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.index()].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index()].requires_grad
    }

    /// `[k] x [k, n] -> [n]` or `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if tb.rank() != 2 || ta.rank() == 0 || ta.rank() > 2 || ta.last_dim() != tb.shape()[0] {
            return Err(shape_err("matmul", ta, tb));
        }
        let n = tb.shape()[1];
        let k = tb.shape()[0];
        let rows = if ta.rank() == 1 { 1 } else { ta.shape()[0] };
        let mut out = vec![0.0; rows * n];
        for (x, o) in ta.data().chunks_exact(k).zip(out.chunks_exact_mut(n)) {
            vec_mat(x, tb.data(), n, o);
        }
        let shape = if ta.rank() == 1 { vec![n] } else { vec![rows, n] };
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMul(ia, ib), rg))
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(value, op(ia, ib), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// Adds the vector `b` of shape `[n]` to every row of `a`. When `a` is a
    /// vector this is an ordinary add.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if tb.rank() != 1 || ta.rank() == 0 || ta.last_dim() != tb.numel() {
            return Err(shape_err("add_row", ta, tb));
        }
        let n = tb.numel();
        let mut data = ta.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            for (o, bv) in row.iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(value, Op::AddRow(ia, ib), rg))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let ta = &self.nodes[ia].value;
        let data = ta.data().iter().map(|&x| scale * x + shift).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(ia);
        Ok(self.push(value, Op::Affine(ia, scale), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.affine(a, s, 0.0)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.affine(a, -1.0, 1.0)
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let idx: Vec<usize> = parts.iter().map(|&p| self.idx(p)).collect::<Result<_>>()?;
        let mut data = Vec::new();
        let mut rg = false;
        for &i in &idx {
            let t = &self.nodes[i].value;
            if t.rank() != 1 {
                return Err(shape_err("concat", t, &Tensor::zeros(&[0])));
            }
            data.extend_from_slice(t.data());
            rg |= self.rg(i);
        }
        let value = Tensor::vector(data);
        Ok(self.push(value, Op::Concat(idx), rg))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let idx: Vec<usize> = rows.iter().map(|&p| self.idx(p)).collect::<Result<_>>()?;
        let Some(&first) = idx.first() else {
            return Err(Error::Autodiff("stack of zero rows".into()));
        };
        let width = self.nodes[first].value.numel();
        let mut data = Vec::with_capacity(width * idx.len());
        let mut rg = false;
        for &i in &idx {
            let t = &self.nodes[i].value;
            if t.rank() != 1 || t.numel() != width {
                return Err(shape_err("stack", &self.nodes[first].value, t));
            }
            data.extend_from_slice(t.data());
            rg |= self.rg(i);
        }
        let value = Tensor::from_parts(vec![idx.len(), width], data);
        Ok(self.push(value, Op::Stack(idx), rg))
    }

    /// `a[start..start + len]` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let ta = &self.nodes[ia].value;
        if ta.rank() != 1 || start + len > ta.numel() {
            return Err(Error::Shape {
                op: "slice",
                lhs: ta.shape().to_vec(),
                rhs: vec![start, start + len],
            });
        }
        let value = Tensor::vector(ta.data()[start..start + len].to_vec());
        let rg = self.rg(ia);
        Ok(self.push(value, Op::Slice(ia, start), rg))
    }

    /// Picks flat positions of `a` into a vector.
    pub fn gather(&mut self, a: Var, positions: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let ta = &self.nodes[ia].value;
        if let Some(&bad) = positions.iter().find(|&&p| p >= ta.numel()) {
            return Err(Error::Shape {
                op: "gather",
                lhs: ta.shape().to_vec(),
                rhs: vec![bad],
            });
        }
        let value = Tensor::vector(positions.iter().map(|&p| ta.data()[p]).collect());
        let rg = self.rg(ia);
        Ok(self.push(value, Op::Gather(ia, positions.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let ta = &self.nodes[ia].value;
        if shape.iter().product::<usize>() != ta.numel() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: ta.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let value = Tensor::from_parts(shape.to_vec(), ta.data().to_vec());
        let rg = self.rg(ia);
        Ok(self.push(value, Op::Reshape(ia), rg))
    }

    fn map_op(&mut self, a: Var, f: impl Fn(f64) -> f64, op: fn(usize) -> Op) -> Result<Var> {
        let ia = self.idx(a)?;
        let ta = &self.nodes[ia].value;
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(ia);
        Ok(self.push(value, op(ia), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, sigmoid, Op::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, f64::tanh, Op::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, |x| x.max(0.0), Op::Relu)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, f64::exp, Op::Exp)
    }

    /// Natural log with the argument floored at [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, |x| x.max(LOG_FLOOR).ln(), Op::Log)
    }

    pub fn pow(&mut self, a: Var, p: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let ta = &self.nodes[ia].value;
        let data = ta.data().iter().map(|&x| x.powf(p)).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(ia);
        Ok(self.push(value, Op::Pow(ia, p), rg))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let ta = &self.nodes[ia].value;
        let data = ta.data().iter().map(|&x| x.clamp(lo, hi)).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(ia);
        Ok(self.push(value, Op::Clamp(ia, lo, hi), rg))
    }

    /// Softmax over the trailing axis, stabilised by subtracting the row max.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let ta = &self.nodes[ia].value;
        let n = ta.last_dim();
        if ta.rank() == 0 || n == 0 {
            return Err(Error::Shape {
                op: "softmax",
                lhs: ta.shape().to_vec(),
                rhs: vec![],
            });
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(ia);
        Ok(self.push(value, Op::Softmax(ia), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = Tensor::scalar(self.nodes[ia].value.sum());
        let rg = self.rg(ia);
        Ok(self.push(value, Op::Sum(ia), rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let t = &self.nodes[ia].value;
        if t.numel() == 0 {
            return Err(Error::Autodiff("mean of empty tensor".into()));
        }
        let value = Tensor::scalar(t.sum() / t.numel() as f64);
        let rg = self.rg(ia);
        Ok(self.push(value, Op::Mean(ia), rg))
    }

    /// Runs reverse-mode accumulation from the scalar `loss`. Afterwards
    /// [`Tape::grad`] returns d(loss)/d(leaf) for every leaf that requires a
    /// gradient and lies upstream of `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let il = self.idx(loss)?;
        if self.consumed {
            return Err(Error::Autodiff("backward already ran on this tape".into()));
        }
        if self.nodes[il].value.numel() != 1 {
            return Err(Error::Autodiff(format!(
                "loss must be scalar, got shape {:?}",
                self.nodes[il].value.shape()
            )));
        }
        self.consumed = true;
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; il + 1];
        if nodes[il].requires_grad {
            grads[il] = Some(vec![1.0]);
        }

        for i in (0..=il).rev() {
            if matches!(nodes[i].op, Op::Leaf) || !nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let out = &nodes[i].value;
            let mut acc = |j: usize, f: &mut dyn FnMut(&mut [f64])| {
                if nodes[j].requires_grad {
                    let buf = grads[j].get_or_insert_with(|| vec![0.0; nodes[j].value.numel()]);
                    f(buf);
                }
            };
            match &nodes[i].op {
                Op::Leaf => unreachable!(),
                &Op::MatMul(a, b) => {
                    let ta = &nodes[a].value;
                    let tb = &nodes[b].value;
                    let n = tb.shape()[1];
                    let k = tb.shape()[0];
                    acc(a, &mut |ga| {
                        for (grow, gout) in ga.chunks_exact_mut(k).zip(g.chunks_exact(n)) {
                            mat_vec(tb.data(), gout, grow);
                        }
                    });
                    acc(b, &mut |gb| {
                        for (x, gout) in ta.data().chunks_exact(k).zip(g.chunks_exact(n)) {
                            outer_add(x, gout, gb);
                        }
                    });
                }
                &Op::Add(a, b) => {
                    acc(a, &mut |ga| add_into(ga, &g));
                    acc(b, &mut |gb| add_into(gb, &g));
                }
                &Op::Sub(a, b) => {
                    acc(a, &mut |ga| add_into(ga, &g));
                    acc(b, &mut |gb| {
                        for (o, v) in gb.iter_mut().zip(&g) {
                            *o -= v;
                        }
                    });
                }
                &Op::Mul(a, b) => {
                    let (va, vb) = (nodes[a].value.data(), nodes[b].value.data());
                    acc(a, &mut |ga| {
                        for ((o, v), y) in ga.iter_mut().zip(&g).zip(vb) {
                            *o += v * y;
                        }
                    });
                    acc(b, &mut |gb| {
                        for ((o, v), x) in gb.iter_mut().zip(&g).zip(va) {
                            *o += v * x;
                        }
                    });
                }
                &Op::AddRow(a, b) => {
                    let n = nodes[b].value.numel();
                    acc(a, &mut |ga| add_into(ga, &g));
                    acc(b, &mut |gb| {
                        for row in g.chunks_exact(n) {
                            add_into(gb, row);
                        }
                    });
                }
                &Op::Affine(a, s) => acc(a, &mut |ga| {
                    for (o, v) in ga.iter_mut().zip(&g) {
                        *o += s * v;
                    }
                }),
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = nodes[p].value.numel();
                        acc(p, &mut |gp| add_into(gp, &g[offset..offset + len]));
                        offset += len;
                    }
                }
                Op::Stack(rows) => {
                    let width = out.last_dim();
                    for (r, &p) in rows.iter().enumerate() {
                        acc(p, &mut |gp| add_into(gp, &g[r * width..(r + 1) * width]));
                    }
                }
                &Op::Slice(a, start) => {
                    acc(a, &mut |ga| add_into(&mut ga[start..start + g.len()], &g));
                }
                Op::Gather(a, positions) => acc(*a, &mut |ga| {
                    for (&p, v) in positions.iter().zip(&g) {
                        ga[p] += v;
                    }
                }),
                &Op::Reshape(a) => acc(a, &mut |ga| add_into(ga, &g)),
                &Op::Sigmoid(a) => acc(a, &mut |ga| {
                    for ((o, v), y) in ga.iter_mut().zip(&g).zip(out.data()) {
                        *o += v * y * (1.0 - y);
                    }
                }),
                &Op::Tanh(a) => acc(a, &mut |ga| {
                    for ((o, v), y) in ga.iter_mut().zip(&g).zip(out.data()) {
                        *o += v * (1.0 - y * y);
                    }
                }),
                &Op::Relu(a) => {
                    let x = nodes[a].value.data();
                    acc(a, &mut |ga| {
                        for ((o, v), xv) in ga.iter_mut().zip(&g).zip(x) {
                            if *xv > 0.0 {
                                *o += v;
                            }
                        }
                    })
                }
                &Op::Exp(a) => acc(a, &mut |ga| {
                    for ((o, v), y) in ga.iter_mut().zip(&g).zip(out.data()) {
                        *o += v * y;
                    }
                }),
                &Op::Log(a) => {
                    let x = nodes[a].value.data();
                    acc(a, &mut |ga| {
                        for ((o, v), xv) in ga.iter_mut().zip(&g).zip(x) {
                            if *xv > LOG_FLOOR {
                                *o += v / xv;
                            }
                        }
                    })
                }
                &Op::Pow(a, p) => {
                    if p != 0.0 {
                        let x = nodes[a].value.data();
                        acc(a, &mut |ga| {
                            for ((o, v), xv) in ga.iter_mut().zip(&g).zip(x) {
                                *o += v * p * xv.powf(p - 1.0);
                            }
                        })
                    }
                }
                &Op::Clamp(a, lo, hi) => {
                    let x = nodes[a].value.data();
                    acc(a, &mut |ga| {
                        for ((o, v), xv) in ga.iter_mut().zip(&g).zip(x) {
                            if *xv >= lo && *xv <= hi {
                                *o += v;
                            }
                        }
                    })
                }
                &Op::Softmax(a) => {
                    let n = out.last_dim();
                    acc(a, &mut |ga| {
                        for ((grow, gout), y) in ga
                            .chunks_exact_mut(n)
                            .zip(g.chunks_exact(n))
                            .zip(out.data().chunks_exact(n))
                        {
                            let dot: f64 = gout.iter().zip(y).map(|(a, b)| a * b).sum();
                            for ((o, gv), yv) in grow.iter_mut().zip(gout).zip(y) {
                                *o += yv * (gv - dot);
                            }
                        }
                    })
                }
                &Op::Sum(a) => acc(a, &mut |ga| {
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }),
                &Op::Mean(a) => {
                    let scale = g[0] / nodes[a].value.numel() as f64;
                    acc(a, &mut |ga| {
                        for o in ga.iter_mut() {
                            *o += scale;
                        }
                    })
                }
            }
        }

        self.grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| match (&self.nodes[i].op, g) {
                (Op::Leaf, Some(g)) => Some(Tensor::from_parts(self.nodes[i].value.shape().to_vec(), g)),
                (Op::Leaf, None) if self.nodes[i].requires_grad => {
                    Some(Tensor::zeros(self.nodes[i].value.shape()))
                }
                _ => None,
            })
            .collect();
        Ok(())
    }

    /// Gradient of the last backward pass with respect to a leaf. `None` for
    /// constants, interior nodes, and before backward has run.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.id {
            return None;
        }
        self.grads.get(v.index()).and_then(|g| g.as_ref())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}
