//! Adagrad.

use crate::error::{Error, Result};
use crate::params::{GradBuffer, ParamSet};

/// Default step size.
pub const DEFAULT_LR: f64 = 0.05;
/// Default stabilizer added to the root of the accumulator.
pub const DEFAULT_EPS: f64 = 1e-10;

/// `acc += g²`, `θ -= η g / (√acc + ε)`, elementwise.
///
/// ```
/// use tbsm::autodiff::Tensor;
/// use tbsm::params::{GradBuffer, ParamSet};
/// use tbsm::train::Adagrad;
///
/// let mut ps = ParamSet::new();
/// let w = ps.add("w", Tensor::vector(vec![0.0]));
/// let mut g = GradBuffer::zeros_like(&ps);
/// g.get_mut(w)[0] = 1.0;
/// let mut opt = Adagrad::new(&ps, 0.1, 1e-10);
/// opt.step(&mut ps, &g).unwrap();
/// assert!((ps.get(w).data()[0] + 0.1).abs() < 1e-9);
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct Adagrad {
    pub lr: f64,
    pub eps: f64,
    acc: Vec<Vec<f64>>,
}

impl Adagrad {
    pub fn new(params: &ParamSet, lr: f64, eps: f64) -> Self {
        Adagrad {
            lr,
            eps,
            acc: params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect(),
        }
    }

    /// Accumulated squared gradients, one vector per parameter.
    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.acc
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &GradBuffer) -> Result<()> {
        if grads.len() != self.acc.len() || params.len() != self.acc.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} tensors, got {} params and {} gradients",
                self.acc.len(),
                params.len(),
                grads.len()
            )));
        }
        let ids: Vec<_> = params.ids().collect();
        for (id, acc) in ids.into_iter().zip(&mut self.acc) {
            let g = grads.get(id);
            let theta = params.get_mut(id).data_mut();
            if g.len() != acc.len() || theta.len() != acc.len() {
                return Err(Error::shape("adagrad", &[theta.len()], &[g.len()]));
            }
            for ((t, a), &gi) in theta.iter_mut().zip(acc.iter_mut()).zip(g) {
                if gi != 0.0 {
                    *a += gi * gi;
                    *t -= self.lr * gi / (a.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}
