use std::borrow::Cow;

use super::Tensor;
use crate::error::{Error, Result};

/// Norm at or below which a vector cannot be projected onto the unit sphere.
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation supplied from outside the built-in set.
///
/// `backward` receives the upstream gradient of the output and returns one
/// gradient per input, each with the input's element count.
pub trait Function {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &[f64]) -> Vec<Vec<f64>>;
}

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Neg(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Dot(Var, Var),
    L2Normalize(Var),
    Softmax(Var),
    Transpose(Var),
    Reshape(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        src: Var,
        axis: usize,
        start: usize,
    },
    Custom {
        inputs: Vec<Var>,
        f: Box<dyn Function + 'a>,
    },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op<'a>,
    requires_grad: bool,
}

/// Records a forward computation so it can be replayed in reverse.
///
/// Leaves may borrow their values (`'a`), so model parameters are placed on a
/// tape without copying. A tape is single-writer; build one per example.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of `like`'s shape when nothing flowed to it.
    pub fn wrt(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

// (outer, extent along axis, inner) for row-major strides.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn matmul_values(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || !(b.ndim() == 1 || b.ndim() == 2) || a.shape()[1] != b.shape()[0] {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let p = if b.ndim() == 2 { b.shape()[1] } else { 1 };
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let row = &ad[i * k..(i + 1) * k];
        let dst = &mut out[i * p..(i + 1) * p];
        for (kk, &aik) in row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &bd[kk * p..(kk + 1) * p];
            for (o, &bv) in dst.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    let shape = if b.ndim() == 2 { vec![m, p] } else { vec![m] };
    Tensor::new(shape, out)
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

fn zip(a: &Tensor, b: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op<'a>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned leaf; participates in gradients iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let requires_grad = t.requires_grad();
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Borrowed leaf. `track` overrides the tensor's own flag.
    pub fn leaf_ref(&mut self, t: &'a Tensor, track: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: track,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let mut t = t;
        t.set_requires_grad(false);
        self.leaf(t)
    }

    /// `a · b` for `a: [m, k]` and `b: [k, p]` or `b: [k]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matmul_values(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip(self.value(a), self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip(self.value(a), self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip(self.value(a), self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = map(self.value(a), |x| k * x);
        self.push(out, Op::Scale(a, k), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let out = map(self.value(a), |x| -x);
        self.push(out, Op::Neg(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = map(self.value(a), |x| if x > 0.0 { x } else { 0.0 });
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = map(self.value(a), sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = map(self.value(a), f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    /// Natural log; every entry must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if let Some(bad) = x.data().iter().find(|&&v| v.is_nan() || v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        let out = map(x, f64::ln);
        Ok(self.push(out, Op::Log(a), &[a]))
    }

    /// Clamp into `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = map(self.value(a), |x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Inner product of two equally shaped tensors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape("dot", x.shape(), y.shape()));
        }
        let s = x.data().iter().zip(y.data()).map(|(p, q)| p * q).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), &[a, b]))
    }

    /// Projects a vector onto the unit sphere.
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.ndim() != 1 {
            return Err(Error::contract(format!(
                "l2_normalize expects a vector, got shape {:?}",
                x.shape()
            )));
        }
        let norm = x.norm();
        if norm <= NORM_EPS {
            return Err(Error::Degenerate {
                norm,
                threshold: NORM_EPS,
            });
        }
        let out = map(x, |v| v / norm);
        Ok(self.push(out, Op::L2Normalize(a), &[a]))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.ndim() != 1 || x.is_empty() {
            return Err(Error::contract(format!(
                "softmax expects a non-empty vector, got shape {:?}",
                x.shape()
            )));
        }
        let max = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.data().iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let out = Tensor::vector(exps.into_iter().map(|e| e / total).collect());
        Ok(self.push(out, Op::Softmax(a), &[a]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.ndim() != 2 {
            return Err(Error::contract(format!(
                "transpose expects a matrix, got shape {:?}",
                x.shape()
            )));
        }
        let (r, c) = (x.rows(), x.cols());
        let d = x.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let out = Tensor::matrix(c, r, out)?;
        Ok(self.push(out, Op::Transpose(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat of an empty list"))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::contract(format!(
                "concat axis {axis} out of range for shape {base:?}"
            )));
        }
        let mut total = 0;
        for p in parts {
            let s = self.value(*p).shape();
            let off_axis_ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !off_axis_ok {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        ))
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.ndim() || start + len > x.shape()[axis] || len == 0 {
            return Err(Error::contract(format!(
                "slice [{start}, {}) on axis {axis} of shape {:?}",
                start + len,
                x.shape()
            )));
        }
        let (outer, extent, inner) = split_axis(x.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner + start * inner;
            out.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        let out = Tensor::new(shape, out)?;
        Ok(self.push(
            out,
            Op::Slice {
                src: a,
                axis,
                start,
            },
            &[a],
        ))
    }

    /// Applies a user-supplied [`Function`].
    pub fn apply(&mut self, f: Box<dyn Function + 'a>, inputs: &[Var]) -> Result<Var> {
        let out = {
            let vals: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
            f.forward(&vals)?
        };
        Ok(self.push(
            out,
            Op::Custom {
                inputs: inputs.to_vec(),
                f,
            },
            inputs,
        ))
    }

    // Convenience compositions.

    /// Stacks equal-length vectors as the columns of a matrix.
    pub fn stack_columns(&mut self, cols: &[Var]) -> Result<Var> {
        let mut reshaped = Vec::with_capacity(cols.len());
        for &c in cols {
            let n = self.value(c).len();
            if self.value(c).ndim() != 1 {
                return Err(Error::contract("stack_columns expects vectors"));
            }
            reshaped.push(self.reshape(c, &[n, 1])?);
        }
        self.concat(&reshaped, 1)
    }

    /// Column `j` of a matrix as a vector.
    pub fn column(&mut self, m: Var, j: usize) -> Result<Var> {
        let rows = self.value(m).rows();
        let c = self.slice(m, 1, j, 1)?;
        self.reshape(c, &[rows])
    }

    /// Reverse-mode pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let out = &*node.value;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k) = (av.shape()[0], av.shape()[1]);
                    let p = if bv.ndim() == 2 { bv.shape()[1] } else { 1 };
                    if self.requires_grad(*a) {
                        // dA = G Bᵀ
                        let bd = bv.data();
                        self.accumulate(&mut grads, *a, |ga| {
                            for i in 0..m {
                                let grow = &g[i * p..(i + 1) * p];
                                for kk in 0..k {
                                    let brow = &bd[kk * p..(kk + 1) * p];
                                    ga[i * k + kk] +=
                                        grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                                }
                            }
                        });
                    }
                    if self.requires_grad(*b) {
                        // dB = Aᵀ G
                        let ad = av.data();
                        self.accumulate(&mut grads, *b, |gb| {
                            for i in 0..m {
                                let grow = &g[i * p..(i + 1) * p];
                                for kk in 0..k {
                                    let aik = ad[i * k + kk];
                                    if aik == 0.0 {
                                        continue;
                                    }
                                    let dst = &mut gb[kk * p..(kk + 1) * p];
                                    for (d, &gv) in dst.iter_mut().zip(grow) {
                                        *d += aik * gv;
                                    }
                                }
                            }
                        });
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, |ga| add_into(ga, &g, 1.0));
                    self.accumulate(&mut grads, *b, |gb| add_into(gb, &g, 1.0));
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, |ga| add_into(ga, &g, 1.0));
                    self.accumulate(&mut grads, *b, |gb| add_into(gb, &g, -1.0));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    self.accumulate(&mut grads, *a, |ga| {
                        for ((d, gv), y) in ga.iter_mut().zip(&g).zip(bv) {
                            *d += gv * y;
                        }
                    });
                    self.accumulate(&mut grads, *b, |gb| {
                        for ((d, gv), x) in gb.iter_mut().zip(&g).zip(av) {
                            *d += gv * x;
                        }
                    });
                }
                Op::Scale(a, k) => self.accumulate(&mut grads, *a, |ga| add_into(ga, &g, *k)),
                Op::Neg(a) => self.accumulate(&mut grads, *a, |ga| add_into(ga, &g, -1.0)),
                Op::Relu(a) => {
                    let xv = self.value(*a).data();
                    self.accumulate(&mut grads, *a, |ga| {
                        for ((d, gv), x) in ga.iter_mut().zip(&g).zip(xv) {
                            if *x > 0.0 {
                                *d += gv;
                            }
                        }
                    });
                }
                Op::Sigmoid(a) => self.accumulate(&mut grads, *a, |ga| {
                    for ((d, gv), y) in ga.iter_mut().zip(&g).zip(out.data()) {
                        *d += gv * y * (1.0 - y);
                    }
                }),
                Op::Tanh(a) => self.accumulate(&mut grads, *a, |ga| {
                    for ((d, gv), y) in ga.iter_mut().zip(&g).zip(out.data()) {
                        *d += gv * (1.0 - y * y);
                    }
                }),
                Op::Log(a) => {
                    let xv = self.value(*a).data();
                    self.accumulate(&mut grads, *a, |ga| {
                        for ((d, gv), x) in ga.iter_mut().zip(&g).zip(xv) {
                            *d += gv / x;
                        }
                    });
                }
                Op::Clamp(a, lo, hi) => {
                    let xv = self.value(*a).data();
                    self.accumulate(&mut grads, *a, |ga| {
                        for ((d, gv), x) in ga.iter_mut().zip(&g).zip(xv) {
                            if *x >= *lo && *x <= *hi {
                                *d += gv;
                            }
                        }
                    });
                }
                Op::Sum(a) => self.accumulate(&mut grads, *a, |ga| {
                    for d in ga.iter_mut() {
                        *d += g[0];
                    }
                }),
                Op::Dot(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    self.accumulate(&mut grads, *a, |ga| add_into(ga, bv, g[0]));
                    self.accumulate(&mut grads, *b, |gb| add_into(gb, av, g[0]));
                }
                Op::L2Normalize(a) => {
                    // d/dx (x/|x|) applied to g: (g - y (y·g)) / |x|
                    let norm = self.value(*a).norm();
                    let y = out.data();
                    let yg: f64 = y.iter().zip(&g).map(|(p, q)| p * q).sum();
                    self.accumulate(&mut grads, *a, |ga| {
                        for ((d, gv), yv) in ga.iter_mut().zip(&g).zip(y) {
                            *d += (gv - yv * yg) / norm;
                        }
                    });
                }
                Op::Softmax(a) => {
                    let y = out.data();
                    let yg: f64 = y.iter().zip(&g).map(|(p, q)| p * q).sum();
                    self.accumulate(&mut grads, *a, |ga| {
                        for ((d, gv), yv) in ga.iter_mut().zip(&g).zip(y) {
                            *d += yv * (gv - yg);
                        }
                    });
                }
                Op::Transpose(a) => {
                    // `out` is [c, r]; source is [r, c].
                    let (c, r) = (out.rows(), out.cols());
                    self.accumulate(&mut grads, *a, |ga| {
                        for i in 0..r {
                            for j in 0..c {
                                ga[i * c + j] += g[j * r + i];
                            }
                        }
                    });
                }
                Op::Reshape(a) => self.accumulate(&mut grads, *a, |ga| add_into(ga, &g, 1.0)),
                Op::Concat { parts, axis } => {
                    let (outer, total, inner) = split_axis(out.shape(), *axis);
                    let mut offset = 0;
                    for p in parts {
                        let extent = self.value(*p).shape()[*axis];
                        let chunk = extent * inner;
                        self.accumulate(&mut grads, *p, |gp| {
                            for o in 0..outer {
                                let src = o * total * inner + offset * inner;
                                add_into(
                                    &mut gp[o * chunk..(o + 1) * chunk],
                                    &g[src..src + chunk],
                                    1.0,
                                );
                            }
                        });
                        offset += extent;
                    }
                }
                Op::Slice { src, axis, start } => {
                    let (outer, extent, inner) = split_axis(self.value(*src).shape(), *axis);
                    let len = out.shape()[*axis];
                    self.accumulate(&mut grads, *src, |gs| {
                        for o in 0..outer {
                            let base = o * extent * inner + start * inner;
                            add_into(
                                &mut gs[base..base + len * inner],
                                &g[o * len * inner..(o + 1) * len * inner],
                                1.0,
                            );
                        }
                    });
                }
                Op::Custom { inputs, f } => {
                    let vals: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                    let parts = f.backward(&vals, out, &g);
                    for (v, part) in inputs.iter().zip(parts) {
                        self.accumulate(&mut grads, *v, |gv| add_into(gv, &part, 1.0));
                    }
                }
            }
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let node = &self.nodes[i];
                match (&node.op, g) {
                    (Op::Leaf, Some(g)) if node.requires_grad => {
                        Some(Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape"))
                    }
                    _ => None,
                }
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(slot);
    }
}

fn add_into(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_leaf(t: &mut Tape, xs: &[f64]) -> Var {
        t.leaf(Tensor::vector(xs.to_vec()).with_grad())
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut t = Tape::new();
        let i2 = t.constant(Tensor::identity(2));
        let m = t.constant(Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap());
        let out = t.matmul(i2, m).unwrap();
        assert_eq!(t.value(out).data(), &[1., 2., 3., 4.]);

        let a = t.constant(Tensor::matrix(1, 2, vec![1., 2.]).unwrap());
        let b = t.constant(Tensor::matrix(2, 1, vec![3., 4.]).unwrap());
        let out = t.matmul(a, b).unwrap();
        assert_eq!(t.value(out).shape(), &[1, 1]);
        assert_eq!(t.value(out).data(), &[11.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn elementwise_values() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![-1., 0., 2.]));
        let r = t.relu(x);
        assert_eq!(t.value(r).data(), &[0., 0., 2.]);
        let z = t.constant(Tensor::scalar(0.0));
        let s = t.sigmoid(z);
        assert_eq!(t.value(s).item(), 0.5);
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(t.log(x), Err(Error::Domain { .. })));
    }

    #[test]
    fn l2_normalize_values_and_degenerate() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![3., 4.]));
        let y = t.l2_normalize(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.6, 0.8]);
        let e1 = t.constant(Tensor::basis(3, 0));
        let y = t.l2_normalize(e1).unwrap();
        assert_eq!(t.value(y).data(), &[1., 0., 0.]);
        let z = t.constant(Tensor::vector(vec![0.0, 1e-13]));
        assert!(matches!(t.l2_normalize(z), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn concat_values_and_errors() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1., 2.]));
        let b = t.constant(Tensor::vector(vec![3.]));
        let c = t.concat(&[a, b], 0).unwrap();
        assert_eq!(t.value(c).data(), &[1., 2., 3.]);
        assert!(t.concat(&[], 0).is_err());

        let m = t.constant(Tensor::zeros(&[2, 2]));
        let n = t.constant(Tensor::zeros(&[3, 1]));
        assert!(matches!(t.concat(&[m, n], 1), Err(Error::Shape { .. })));
    }

    #[test]
    fn stack_columns_lays_out_row_major() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1., 2.]));
        let b = t.constant(Tensor::vector(vec![3., 4.]));
        let m = t.stack_columns(&[a, b]).unwrap();
        assert_eq!(t.value(m).shape(), &[2, 2]);
        assert_eq!(t.value(m).data(), &[1., 3., 2., 4.]);
        let c = t.column(m, 1).unwrap();
        assert_eq!(t.value(c).data(), &[3., 4.]);
    }

    #[test]
    fn backward_identity_and_square() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0).with_grad());
        let g = t.backward(x).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 1.0);

        let mut t = Tape::new();
        let x = vec_leaf(&mut t, &[1., -2., 0.5]);
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum(sq);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2., -4., 1.]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = vec_leaf(&mut t, &[1., 2.]);
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let x = vec_leaf(&mut t, &[1., 2.]);
        let c = t.constant(Tensor::vector(vec![5., 6.]));
        let d = t.dot(x, c).unwrap();
        let g = t.backward(d).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[5., 6.]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn slice_gradient_routes_to_source_only() {
        let mut t = Tape::new();
        let a = vec_leaf(&mut t, &[1., 2.]);
        let b = vec_leaf(&mut t, &[3., 4., 5.]);
        let c = t.concat(&[a, b], 0).unwrap();
        let s = t.slice(c, 0, 2, 2).unwrap();
        let loss = t.sum(s);
        let g = t.backward(loss).unwrap();
        assert!(g.get(a).is_none_or(|t| t.data().iter().all(|x| *x == 0.0)));
        assert_eq!(g.get(b).unwrap().data(), &[1., 1., 0.]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1000.0, -3.0, 2.5, 0.0]));
        let y = t.softmax(x).unwrap();
        let s: f64 = t.value(y).data().iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }
}
