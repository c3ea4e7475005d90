//! Named parameter storage and the per-example forward graph.
//!
//! Parameters live in a [`ParamSet`]. A [`Graph`] borrows the set, places
//! parameters on a fresh tape on first use, and after the backward pass
//! folds leaf gradients back into per-parameter [`ParamGrads`]. Embedding
//! rows are bound individually, so a lookup never copies or differentiates
//! a whole table.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::autodiff::{Tape, Tensor, Var, NORM_EPS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }
}

/// Gradient contribution for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum GradPart {
    Full(Vec<f64>),
    Row { row: usize, values: Vec<f64> },
}

/// Sparse gradient of one forward graph, in binding order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGrads {
    pub parts: Vec<(ParamId, GradPart)>,
}

/// Dense gradient accumulator shaped like a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer {
    grads: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn zeros_like(params: &ParamSet) -> Self {
        GradBuffer {
            grads: params.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn add(&mut self, g: &ParamGrads, scale: f64) {
        for (id, part) in &g.parts {
            let dst = &mut self.grads[id.0];
            match part {
                GradPart::Full(v) => {
                    for (d, s) in dst.iter_mut().zip(v) {
                        *d += scale * s;
                    }
                }
                GradPart::Row { row, values } => {
                    let w = values.len();
                    for (d, s) in dst[row * w..(row + 1) * w].iter_mut().zip(values) {
                        *d += scale * s;
                    }
                }
            }
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn clear(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// All gradients concatenated in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.grads.concat()
    }
}

/// One forward pass over borrowed parameters.
pub struct Graph<'a> {
    pub tape: Tape<'a>,
    params: &'a ParamSet,
    track: bool,
    bound: Vec<Option<Var>>,
    rows: Vec<(Var, ParamId, usize)>,
    degenerate: usize,
}

impl<'a> Graph<'a> {
    /// `track` controls whether parameters request gradients.
    pub fn new(params: &'a ParamSet, track: bool) -> Self {
        Graph {
            tape: Tape::new(),
            params,
            track,
            bound: vec![None; params.len()],
            rows: Vec::new(),
            degenerate: 0,
        }
    }

    pub fn params(&self) -> &'a ParamSet {
        self.params
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf_ref(self.params.get(id), self.track);
        self.bound[id.0] = Some(v);
        v
    }

    /// Row `row` of the matrix parameter `id`, as a vector leaf.
    pub fn row(&mut self, id: ParamId, row: usize, table: &'static str) -> Result<Var> {
        let t = self.params.get(id);
        let (rows, width) = (t.rows(), t.cols());
        if row >= rows {
            return Err(Error::Lookup {
                table,
                index: row,
                size: rows,
            });
        }
        let mut v = Tensor::vector(t.data()[row * width..(row + 1) * width].to_vec());
        v.set_requires_grad(self.track);
        let var = self.tape.leaf(v);
        self.rows.push((var, id, row));
        Ok(var)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.tape.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }

    /// Unit-sphere projection with a fixed fallback.
    ///
    /// Vectors with norm at or below [`NORM_EPS`] map to `e₁` (no gradient)
    /// and bump [`Graph::degenerate_count`].
    pub fn sphere_project(&mut self, v: Var) -> Result<Var> {
        let x = self.tape.value(v);
        if x.norm() <= NORM_EPS {
            self.degenerate += 1;
            let n = x.len();
            return Ok(self.tape.constant(Tensor::basis(n, 0)));
        }
        self.tape.l2_normalize(v)
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate
    }

    /// Backward from `loss`, folded into per-parameter gradients.
    pub fn gradients(&self, loss: Var) -> Result<ParamGrads> {
        let grads = self.tape.backward(loss)?;
        let mut parts = Vec::new();
        for (i, bound) in self.bound.iter().enumerate() {
            if let Some(v) = bound {
                if let Some(g) = grads.get(*v) {
                    parts.push((ParamId(i), GradPart::Full(g.data().to_vec())));
                }
            }
        }
        for &(v, id, row) in &self.rows {
            if let Some(g) = grads.get(v) {
                parts.push((
                    id,
                    GradPart::Row {
                        row,
                        values: g.data().to_vec(),
                    },
                ));
            }
        }
        Ok(ParamGrads { parts })
    }
}

/// Parameter initializers.
pub mod init {
    use super::*;

    /// Uniform on `(-sqrt(1/fan_in), sqrt(1/fan_in))`.
    pub fn fan_in_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let dist = Uniform::new(-bound, bound).expect("positive bound");
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(rng)).collect();
        Tensor::new(shape.to_vec(), data).expect("shape")
    }

    pub fn normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
        let dist = Normal::new(0.0, std).expect("finite std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(rng)).collect();
        Tensor::new(shape.to_vec(), data).expect("shape")
    }

    /// Identity plus `N(0, std²)` noise.
    pub fn near_identity<R: Rng + ?Sized>(rng: &mut R, n: usize, std: f64) -> Tensor {
        let mut t = normal(rng, &[n, n], std);
        for i in 0..n {
            t.data_mut()[i * n + i] += 1.0;
        }
        t
    }
}
