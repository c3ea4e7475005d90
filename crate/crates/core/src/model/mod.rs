//! Full model: embedding layer, context heads, per-head MLPs, final layer.
//!
//! ```text
//! events ─ DLRM ─┬─ z_1 … z_{τ-1} ─┐
//!                └─ z_τ ───────────┼─ head_i ─ c_i ─ [z_τ, c_i] ─ MLP_i ─ σ ─ p_i
//!                                  │
//!                       final: p = σ(w · [p_1 … p_k] + b)
//! ```
//!
//! A head is a TSL, a multi-head attention block or a stacked LSTM. Every
//! head owns its MLP (`2n → 4n → 1`). Models without an embedding layer
//! consume pre-embedded sequences directly.

mod lstm;
mod mha;

pub use lstm::{LstmHead, LstmLayer, FORGET_BIAS};
pub use mha::MhaHead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{numeric_gradient, GradCheckReport, Tensor, Var};
use crate::embedding::{DlrmDims, DlrmEmbedding, Event};
use crate::error::{Error, Result};
use crate::nn::{Linear, Mlp};
use crate::params::{GradBuffer, Graph, ParamGrads, ParamSet};
use crate::tsl::{multi_tsl_inner, multi_tsl_seq, SeqView, SimilarityKind, Tsl};

/// Lower clamp on probabilities inside the loss.
pub const PROB_EPS: f64 = 1e-7;

/// One TSL head: similarity kind and subsequence length (history + last).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TslSpec {
    pub kind: SimilarityKind,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HeadConfig {
    Tsl { heads: Vec<TslSpec> },
    Mha { heads: usize, head_dim: usize },
    Lstm { layers: usize },
}

impl HeadConfig {
    /// Parses a variant name for sequences of length `tau`.
    ///
    /// Accepted: `dotsim`, `cossim`, `gensim`, `indsim`, `K-inner`, `K-dot`,
    /// `K-cos`, `K-ind`, `K-seq`, `mha[H]`, `lstm[L]` (defaults `H = 8`,
    /// `L = 5`). `1-inner` is `gensim`.
    pub fn from_variant(variant: &str, tau: usize) -> Result<Self> {
        let v = variant.trim().to_ascii_lowercase();
        let bad = || Error::Config(format!("unknown model variant {variant:?}"));
        if let Ok(kind) = v.parse::<SimilarityKind>() {
            return Ok(HeadConfig::Tsl {
                heads: vec![TslSpec { kind, length: tau }],
            });
        }
        if let Some(rest) = v.strip_prefix("mha") {
            let heads = if rest.is_empty() {
                8
            } else {
                rest.trim_start_matches('-').parse().map_err(|_| bad())?
            };
            return Ok(HeadConfig::Mha { heads, head_dim: 8 });
        }
        if let Some(rest) = v.strip_prefix("lstm") {
            let layers = if rest.is_empty() {
                5
            } else {
                rest.trim_start_matches('-').parse().map_err(|_| bad())?
            };
            return Ok(HeadConfig::Lstm { layers });
        }
        let (k, kind) = v.split_once('-').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        if kind == "seq" {
            return Ok(HeadConfig::Tsl {
                heads: seq_lengths(tau, k)?
                    .into_iter()
                    .map(|length| TslSpec {
                        kind: SimilarityKind::Gen,
                        length,
                    })
                    .collect(),
            });
        }
        let kind: SimilarityKind = kind.parse().map_err(|_| bad())?;
        Ok(HeadConfig::Tsl {
            heads: vec![TslSpec { kind, length: tau }; k],
        })
    }

    pub fn num_heads(&self) -> usize {
        match self {
            HeadConfig::Tsl { heads } => heads.len(),
            HeadConfig::Mha { .. } | HeadConfig::Lstm { .. } => 1,
        }
    }

    /// Row label in result tables.
    pub fn label(&self, tau: usize) -> String {
        match self {
            HeadConfig::Mha { heads, .. } => format!("MHA({heads}-heads)"),
            HeadConfig::Lstm { layers } => format!("LSTM({layers}-stack)"),
            HeadConfig::Tsl { heads } => {
                let k = heads.len();
                let full = heads.iter().all(|h| h.length == tau);
                let same_kind = heads.iter().all(|h| h.kind == heads[0].kind);
                match (k, full, same_kind, heads[0].kind) {
                    (1, true, _, kind) => kind.label().to_string(),
                    (_, true, true, SimilarityKind::Gen) => format!("TSL({k}-inner)"),
                    (_, true, true, kind) => format!("TSL({k}-{kind})"),
                    (_, false, _, _) => format!("TSL({k}-seq)"),
                    _ => format!("TSL({k}-mixed)"),
                }
            }
        }
    }
}

/// `k` evenly spaced subsequence lengths ending at `tau`, e.g. `{5, 10, 15, 20}`
/// for `tau = 20, k = 4`.
pub fn seq_lengths(tau: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || tau < 2 {
        return Err(Error::Config(format!(
            "cannot split tau={tau} into {k} subsequences"
        )));
    }
    let mut out: Vec<usize> = (1..=k)
        .map(|j| ((tau * j) as f64 / k as f64).round().max(2.0) as usize)
        .collect();
    out.dedup();
    if out.len() != k {
        return Err(Error::Config(format!(
            "tau={tau} is too short for {k} distinct subsequences"
        )));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension seen by the heads.
    pub n: usize,
    /// Sequence length including the last item.
    pub tau: usize,
    pub head: HeadConfig,
    /// Absent when the model consumes pre-embedded sequences.
    pub embedding: Option<DlrmDims>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.tau < 2 {
            return Err(Error::Config(format!(
                "tau must be at least 2, got {}",
                self.tau
            )));
        }
        if let Some(e) = &self.embedding {
            if e.n != self.n {
                return Err(Error::Config(format!(
                    "embedding output {} differs from model n {}",
                    e.n, self.n
                )));
            }
        }
        if let HeadConfig::Tsl { heads } = &self.head {
            if heads.is_empty() {
                return Err(Error::Config("a TSL model needs at least one head".into()));
            }
            if let Some(h) = heads.iter().find(|h| h.length < 2 || h.length > self.tau) {
                return Err(Error::Config(format!(
                    "subsequence length {} outside [2, {}]",
                    h.length, self.tau
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Contexts {
    Tsl(Vec<Tsl>),
    Mha(MhaHead),
    Lstm(LstmHead),
}

/// Input sequence in either raw-event or pre-embedded form.
#[derive(Clone, Copy, Debug)]
pub enum Input<'a> {
    Events(&'a [Event]),
    /// `history: [n, τ-1]`, `last: [n]`.
    Embedded {
        history: &'a Tensor,
        last: &'a Tensor,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub p: f64,
    pub per_head: Vec<f64>,
}

/// Graph handles for one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub p: Var,
    pub per_head: Vec<Var>,
    pub contexts: Vec<Var>,
    pub last: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TbsmModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub embedding: Option<DlrmEmbedding>,
    pub contexts: Contexts,
    pub head_mlps: Vec<Mlp>,
    pub final_layer: Linear,
}

impl TbsmModel {
    /// Fresh model with parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let n = config.n;
        let embedding = config
            .embedding
            .map(|dims| DlrmEmbedding::new(&mut params, dims, &mut rng))
            .transpose()?;
        let contexts = match &config.head {
            HeadConfig::Tsl { heads } => Contexts::Tsl(
                heads
                    .iter()
                    .enumerate()
                    .map(|(i, h)| {
                        Tsl::new(
                            &mut params,
                            &format!("tsl.{i}"),
                            h.kind,
                            n,
                            h.length - 1,
                            &mut rng,
                        )
                    })
                    .collect::<Result<_>>()?,
            ),
            HeadConfig::Mha { heads, head_dim } => Contexts::Mha(MhaHead::new(
                &mut params,
                "mha",
                n,
                *heads,
                *head_dim,
                &mut rng,
            )?),
            HeadConfig::Lstm { layers } => {
                Contexts::Lstm(LstmHead::new(&mut params, "lstm", n, *layers, &mut rng)?)
            }
        };
        let k = config.head.num_heads();
        let head_mlps = (0..k)
            .map(|i| {
                Mlp::new(
                    &mut params,
                    &format!("head.{i}"),
                    &[2 * n, 4 * n, 1],
                    false,
                    &mut rng,
                )
            })
            .collect::<Result<_>>()?;
        let final_layer = Linear::new(&mut params, "final", k, 1, &mut rng);
        Ok(TbsmModel {
            config,
            params,
            embedding,
            contexts,
            head_mlps,
            final_layer,
        })
    }

    /// Rebuilds the model around existing parameters, checking names and shapes.
    pub fn with_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let mut model = TbsmModel::new(config, 0)?;
        if model.params.len() != params.len() {
            return Err(Error::Format {
                what: "checkpoint",
                detail: format!(
                    "{} tensors, model expects {}",
                    params.len(),
                    model.params.len()
                ),
            });
        }
        for ((_, name_a, a), (_, name_b, b)) in model.params.iter().zip(params.iter()) {
            if name_a != name_b || a.shape() != b.shape() {
                return Err(Error::Format {
                    what: "checkpoint",
                    detail: format!(
                        "tensor {name_b} {:?} does not match {name_a} {:?}",
                        b.shape(),
                        a.shape()
                    ),
                });
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn num_heads(&self) -> usize {
        self.head_mlps.len()
    }

    /// Builds the forward pass on `g`, which must borrow `self.params`.
    pub fn forward(&self, g: &mut Graph<'_>, input: Input<'_>) -> Result<ForwardVars> {
        let mut view = self.view(g, input)?;
        let contexts = match &self.contexts {
            Contexts::Tsl(tsls) => {
                if tsls.iter().all(|t| t.history_len == view.history_len()) {
                    multi_tsl_inner(tsls, g, &mut view)?
                } else {
                    multi_tsl_seq(tsls, g, &mut view)?
                }
            }
            Contexts::Mha(m) => vec![m.forward(g, &mut view)?.0],
            Contexts::Lstm(l) => vec![l.forward(g, &view)?],
        };
        let last = view.last();
        let mut per_head = Vec::with_capacity(contexts.len());
        for (c, mlp) in contexts.iter().zip(&self.head_mlps) {
            let joined = g.tape.concat(&[last, *c], 0)?;
            let logit = mlp.forward(g, joined)?;
            per_head.push(g.tape.sigmoid(logit));
        }
        let ps = g.tape.concat(&per_head, 0)?;
        let logit = self.final_layer.forward(g, ps)?;
        let p = g.tape.sigmoid(logit);
        let p = g.tape.reshape(p, &[])?;
        Ok(ForwardVars {
            p,
            per_head,
            contexts,
            last,
        })
    }

    fn view(&self, g: &mut Graph<'_>, input: Input<'_>) -> Result<SeqView> {
        let tau = self.config.tau;
        match (input, &self.embedding) {
            (Input::Events(seq), Some(emb)) => {
                let (cols, last) = emb.embed_sequence(g, seq, tau)?;
                SeqView::new(g, cols, last)
            }
            (Input::Embedded { history, last }, None) => {
                if history.ndim() != 2
                    || history.cols() != tau - 1
                    || history.rows() != self.config.n
                {
                    return Err(Error::shape(
                        "model input",
                        history.shape(),
                        &[self.config.n, tau - 1],
                    ));
                }
                SeqView::from_values(g, history, last)
            }
            (Input::Events(_), None) => Err(Error::contract(
                "model has no embedding layer for raw events",
            )),
            (Input::Embedded { .. }, Some(_)) => {
                Err(Error::contract("model expects raw events, got embeddings"))
            }
        }
    }

    pub fn predict(&self, input: Input<'_>) -> Result<Prediction> {
        let mut g = Graph::new(&self.params, false);
        let vars = self.forward(&mut g, input)?;
        Ok(Prediction {
            p: g.value(vars.p).item(),
            per_head: vars.per_head.iter().map(|v| g.value(*v).item()).collect(),
        })
    }

    /// Loss, prediction and parameter gradients for one labelled example.
    pub fn loss_and_grads(&self, input: Input<'_>, label: f64) -> Result<(f64, f64, ParamGrads)> {
        let mut g = Graph::new(&self.params, true);
        let vars = self.forward(&mut g, input)?;
        let loss = bce_loss(&mut g, vars.p, label)?;
        let grads = g.gradients(loss)?;
        Ok((g.value(loss).item(), g.value(vars.p).item(), grads))
    }

    /// Loss only, on the current parameters.
    pub fn loss(&self, input: Input<'_>, label: f64) -> Result<f64> {
        let p = self.predict(input)?.p;
        Ok(bce(p, label))
    }
}

impl TbsmModel {
    /// Compares the gradient of the loss on one example with central
    /// differences in every parameter coordinate, in declaration order.
    pub fn grad_check(&self, input: Input<'_>, label: f64, h: f64) -> Result<GradCheckReport> {
        let (_, _, grads) = self.loss_and_grads(input, label)?;
        let mut buf = GradBuffer::zeros_like(&self.params);
        buf.add(&grads, 1.0);
        let flat = self.flat_params();
        let mut probe = self.clone();
        let numeric = numeric_gradient(
            |x: &Tensor| {
                probe_load(&mut probe.params, x.data());
                probe.loss(input, label)
            },
            &Tensor::vector(flat),
            h,
        );
        Ok(GradCheckReport::from_pairs(
            buf.flatten().into_iter().zip(numeric?),
        ))
    }

    /// Every parameter concatenated in declaration order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|(_, _, t)| t.data().iter().copied())
            .collect()
    }

    /// Parameter name and offset of flat coordinate `index`.
    pub fn locate(&self, mut index: usize) -> Option<(&str, usize)> {
        for (_, name, t) in self.params.iter() {
            if index < t.len() {
                return Some((name, index));
            }
            index -= t.len();
        }
        None
    }
}

fn probe_load(params: &mut ParamSet, flat: &[f64]) {
    let mut rest = flat;
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let t = params.get_mut(id).data_mut();
        let (head, tail) = rest.split_at(t.len());
        t.copy_from_slice(head);
        rest = tail;
    }
}

/// Small configuration for exhaustive gradient checks: `τ = 5`, `n = 4`,
/// `d = 4`, ten ids per table.
pub fn toy_config(head: HeadConfig) -> ModelConfig {
    ModelConfig {
        n: 4,
        tau: 5,
        head,
        embedding: Some(DlrmDims {
            d: 4,
            n: 4,
            users: 10,
            items: 10,
            categories: 10,
        }),
    }
}

/// A toy model with every parameter drawn from `N(0, 1)`.
pub fn toy_model(head: HeadConfig, seed: u64) -> Result<TbsmModel> {
    let mut m = TbsmModel::new(toy_config(head), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let ids: Vec<_> = m.params.ids().collect();
    for id in ids {
        let t = crate::params::init::normal(&mut rng, m.params.get(id).shape(), 1.0);
        *m.params.get_mut(id) = t;
    }
    Ok(m)
}

/// Smallest non-zero gradient magnitude a toy probe point may have.
///
/// Central differences with step `h` carry roundoff of order `1e-16 / h`,
/// so coordinates much smaller than this cannot be resolved at `h = 1e-6`.
pub const PROBE_FLOOR: f64 = 1e-5;

/// A toy model, input and label whose loss gradient has no coordinate in
/// `(0, PROBE_FLOOR)`.
#[derive(Clone, Debug)]
pub struct ToyProbe {
    pub seed: u64,
    pub model: TbsmModel,
    pub events: Vec<Event>,
    pub label: f64,
}

impl ToyProbe {
    pub fn grad_check(&self, h: f64) -> Result<GradCheckReport> {
        self.model
            .grad_check(Input::Events(&self.events), self.label, h)
    }
}

/// First seed in `0..max_seeds` giving a probe point whose analytic
/// gradient clears [`PROBE_FLOOR`]. Only the analytic gradient is inspected.
pub fn toy_probe(head: &HeadConfig, max_seeds: u64) -> Result<ToyProbe> {
    for seed in 0..max_seeds {
        let model = toy_model(head.clone(), seed)?;
        let events = toy_events(5, seed);
        let label = 1.0;
        let (_, _, grads) = model.loss_and_grads(Input::Events(&events), label)?;
        let mut buf = GradBuffer::zeros_like(&model.params);
        buf.add(&grads, 1.0);
        if buf
            .flatten()
            .iter()
            .all(|g| *g == 0.0 || g.abs() >= PROBE_FLOOR)
        {
            return Ok(ToyProbe {
                seed,
                model,
                events,
                label,
            });
        }
    }
    Err(Error::contract(format!(
        "no well-conditioned toy point in {max_seeds} seeds"
    )))
}

/// Head variants covered by the toy gradient check.
pub fn toy_heads() -> Vec<(String, HeadConfig)> {
    [
        "2-dot", "2-cos", "2-inner", "2-ind", "2-seq", "mha8", "lstm5",
    ]
    .iter()
    .map(|v| {
        (
            v.to_string(),
            HeadConfig::from_variant(v, 5).expect("known variant"),
        )
    })
    .collect()
}

/// A random length-`τ` event sequence over the toy vocabulary.
pub fn toy_events(tau: usize, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = crate::taobao::time_grid(tau);
    times
        .into_iter()
        .map(|time| Event {
            user: rng.random_range(0..10),
            item: rng.random_range(0..10),
            category: rng.random_range(0..10),
            time,
            label: 1,
        })
        .collect()
}

/// `-(y log p + (1 - y) log(1 - p))` with `p` clamped to `[ε, 1 - ε]`.
pub fn bce_loss(g: &mut Graph<'_>, p: Var, y: f64) -> Result<Var> {
    let p = g.tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS);
    let log_p = g.tape.log(p)?;
    let one = g.constant(Tensor::new(g.value(p).shape().to_vec(), vec![1.0])?);
    let q = g.tape.sub(one, p)?;
    let log_q = g.tape.log(q)?;
    let a = g.tape.scale(log_p, y);
    let b = g.tape.scale(log_q, 1.0 - y);
    let ll = g.tape.add(a, b)?;
    Ok(g.tape.neg(ll))
}

/// Value form of [`bce_loss`].
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}
