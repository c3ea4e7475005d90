//! Stacked LSTM baseline in place of the TSL.

use rand::Rng;

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{init, Graph, ParamId, ParamSet};
use crate::tsl::SeqView;

/// Initial value of the forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

/// Gate rows are ordered input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    /// `[4n, n]`
    pub w_input: ParamId,
    /// `[4n, n]`
    pub w_hidden: ParamId,
    /// `[4n]`
    pub bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmHead {
    pub n: usize,
    pub layers: Vec<LstmLayer>,
}

impl LstmHead {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        n: usize,
        layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 || layers == 0 {
            return Err(Error::contract("LSTM dims must be positive"));
        }
        let layers = (0..layers)
            .map(|l| {
                let w_input = params.add(
                    format!("{name}.{l}.w_input"),
                    init::fan_in_uniform(rng, &[4 * n, n], n),
                );
                let w_hidden = params.add(
                    format!("{name}.{l}.w_hidden"),
                    init::fan_in_uniform(rng, &[4 * n, n], n),
                );
                let mut bias = vec![0.0; 4 * n];
                bias[n..2 * n].iter_mut().for_each(|b| *b = FORGET_BIAS);
                let bias = params.add(format!("{name}.{l}.bias"), Tensor::vector(bias));
                LstmLayer {
                    w_input,
                    w_hidden,
                    bias,
                }
            })
            .collect();
        Ok(LstmHead { n, layers })
    }

    /// Runs every layer left to right over the history; returns the top
    /// layer's final hidden state.
    pub fn forward(&self, g: &mut Graph<'_>, view: &SeqView) -> Result<Var> {
        let n = self.n;
        let zero = g.constant(Tensor::zeros(&[n]));
        let mut inputs: Vec<Var> = view.columns().to_vec();
        if let Some(c) = inputs.first() {
            if g.value(*c).len() != n {
                return Err(Error::shape("lstm", g.value(*c).shape(), &[n]));
            }
        }
        for layer in &self.layers {
            let (wi, wh, b) = (
                g.param(layer.w_input),
                g.param(layer.w_hidden),
                g.param(layer.bias),
            );
            let (mut h, mut c) = (zero, zero);
            let mut outputs = Vec::with_capacity(inputs.len());
            for &x in &inputs {
                let gx = g.tape.matmul(wi, x)?;
                let gh = g.tape.matmul(wh, h)?;
                let pre = g.tape.add(gx, gh)?;
                let pre = g.tape.add(pre, b)?;
                let gate = |g: &mut Graph<'_>, k: usize| g.tape.slice(pre, 0, k * n, n);
                let i = gate(g, 0)?;
                let f = gate(g, 1)?;
                let cand = gate(g, 2)?;
                let o = gate(g, 3)?;
                let i = g.tape.sigmoid(i);
                let f = g.tape.sigmoid(f);
                let cand = g.tape.tanh(cand);
                let o = g.tape.sigmoid(o);
                let keep = g.tape.mul(f, c)?;
                let write = g.tape.mul(i, cand)?;
                c = g.tape.add(keep, write)?;
                let tc = g.tape.tanh(c);
                h = g.tape.mul(o, tc)?;
                outputs.push(h);
            }
            inputs = outputs;
        }
        inputs
            .last()
            .copied()
            .ok_or_else(|| Error::contract("LSTM over an empty history"))
    }
}
