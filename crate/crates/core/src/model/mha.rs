//! Multi-head attention baseline in place of the TSL.

use rand::Rng;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::params::{init, Graph, ParamId, ParamSet};
use crate::tsl::SeqView;

/// Per head `h`: weights `softmax_t((K_h z_t)ᵀ(Q_h z_τ) / √dₕ)`, context
/// `Σ_t w_t V_h z_t`. Head contexts are concatenated and mapped back to
/// `ℝⁿ` by `out`. Projections of all heads are stacked row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct MhaHead {
    pub heads: usize,
    pub head_dim: usize,
    pub n: usize,
    /// `[heads·head_dim, n]`, applied to the last item.
    pub query: ParamId,
    /// `[heads·head_dim, n]`, applied to history items.
    pub key: ParamId,
    pub value: ParamId,
    pub out: Linear,
}

impl MhaHead {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        n: usize,
        heads: usize,
        head_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || head_dim == 0 || n == 0 {
            return Err(Error::contract("attention dims must be positive"));
        }
        let rows = heads * head_dim;
        let mut proj = |p: &str, rng: &mut R| {
            params.add(
                format!("{name}.{p}"),
                init::fan_in_uniform(rng, &[rows, n], n),
            )
        };
        let query = proj("query", rng);
        let key = proj("key", rng);
        let value = proj("value", rng);
        let out = Linear::new(params, &format!("{name}.out"), rows, n, rng);
        Ok(MhaHead {
            heads,
            head_dim,
            n,
            query,
            key,
            value,
            out,
        })
    }

    /// Context vector and the per-head attention weights.
    pub fn forward(&self, g: &mut Graph<'_>, view: &mut SeqView) -> Result<(Var, Vec<Var>)> {
        let z = view.matrix(g)?;
        if g.value(z).rows() != self.n {
            return Err(Error::shape("attention", g.value(z).shape(), &[self.n]));
        }
        let (q, k, v) = (g.param(self.query), g.param(self.key), g.param(self.value));
        let keys = g.tape.matmul(k, z)?; // [H·dh, L]
        let values = g.tape.matmul(v, z)?; // [H·dh, L]
        let query = g.tape.matmul(q, view.last())?; // [H·dh]
        let scale = 1.0 / (self.head_dim as f64).sqrt();

        let mut contexts = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let start = h * self.head_dim;
            let kh = g.tape.slice(keys, 0, start, self.head_dim)?;
            let vh = g.tape.slice(values, 0, start, self.head_dim)?;
            let qh = g.tape.slice(query, 0, start, self.head_dim)?;
            let kt = g.tape.transpose(kh)?;
            let scores = g.tape.matmul(kt, qh)?;
            let scores = g.tape.scale(scores, scale);
            let w = g.tape.softmax(scores)?;
            contexts.push(g.tape.matmul(vh, w)?);
            weights.push(w);
        }
        let joined = g.tape.concat(&contexts, 0)?;
        Ok((self.out.forward(g, joined)?, weights))
    }
}
