//! Time series layer.
//!
//! A TSL scores every history embedding `z_t` against the last embedding
//! `z_τ`, maps the score vector through a small MLP to coefficients `a`, and
//! returns the context `c = Z a`. Scores come from one of four measures:
//!
//! | kind  | score                         | space   |
//! |-------|-------------------------------|---------|
//! | `Dot` | `uᵀv`                          | ℝⁿ      |
//! | `Cos` | `ûᵀv̂`                          | sphere  |
//! | `Gen` | `(Aû)ᵀ(Av̂) = ûᵀ(AᵀA)v̂`         | sphere  |
//! | `Ind` | `ûᵀAv̂`                         | sphere  |
//!
//! Projection onto the sphere only feeds the scores; the context is built
//! from the raw columns of `Z`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tensor, Var, NORM_EPS};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::params::{init, Graph, ParamId, ParamSet};

/// Standard deviation of the noise added to the identity when initializing `A`.
pub const A_INIT_STD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    Dot,
    Cos,
    Gen,
    Ind,
}

impl SimilarityKind {
    pub const ALL: [SimilarityKind; 4] = [
        SimilarityKind::Dot,
        SimilarityKind::Cos,
        SimilarityKind::Gen,
        SimilarityKind::Ind,
    ];

    /// Whether inputs are projected onto the unit sphere first.
    pub fn on_sphere(self) -> bool {
        !matches!(self, SimilarityKind::Dot)
    }

    /// Whether the measure owns a learned matrix `A`.
    pub fn has_matrix(self) -> bool {
        matches!(self, SimilarityKind::Gen | SimilarityKind::Ind)
    }

    pub fn label(self) -> &'static str {
        match self {
            SimilarityKind::Dot => "DotSim(R^n)",
            SimilarityKind::Cos => "CosSim(S^n)",
            SimilarityKind::Gen => "GenSim(S^n)",
            SimilarityKind::Ind => "IndSim(S^n)",
        }
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityKind::Dot => "dotsim",
            SimilarityKind::Cos => "cossim",
            SimilarityKind::Gen => "gensim",
            SimilarityKind::Ind => "indsim",
        })
    }
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" | "dotsim" => Ok(SimilarityKind::Dot),
            "cos" | "cossim" => Ok(SimilarityKind::Cos),
            "gen" | "gensim" | "inner" => Ok(SimilarityKind::Gen),
            "ind" | "indsim" => Ok(SimilarityKind::Ind),
            other => Err(Error::Config(format!("unknown similarity kind {other:?}"))),
        }
    }
}

/// Score of `u` against `v` on plain values.
///
/// `a` must be present (`n × n`) for `Gen` and `Ind`. Degenerate vectors fall
/// back to `e₁` like [`Graph::sphere_project`].
pub fn similarity(kind: SimilarityKind, a: Option<&Tensor>, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("similarity", &[u.len()], &[v.len()]));
    }
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    if !kind.on_sphere() {
        return Ok(dot(u, v));
    }
    let (u, v) = (project(u), project(v));
    let matvec = |a: &Tensor, x: &[f64]| -> Vec<f64> {
        (0..a.rows())
            .map(|i| dot(&a.data()[i * a.cols()..(i + 1) * a.cols()], x))
            .collect()
    };
    let need_a = || -> Result<&Tensor> {
        let a = a.ok_or_else(|| Error::contract(format!("{kind} needs a matrix")))?;
        if a.shape() != [u.len(), u.len()] {
            return Err(Error::shape("similarity", a.shape(), &[u.len(), u.len()]));
        }
        Ok(a)
    };
    Ok(match kind {
        SimilarityKind::Cos => dot(&u, &v),
        SimilarityKind::Gen => {
            let a = need_a()?;
            dot(&matvec(a, &u), &matvec(a, &v))
        }
        SimilarityKind::Ind => dot(&u, &matvec(need_a()?, &v)),
        SimilarityKind::Dot => unreachable!(),
    })
}

fn project(x: &[f64]) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= NORM_EPS {
        let mut e = vec![0.0; x.len()];
        e[0] = 1.0;
        return e;
    }
    x.iter().map(|v| v / norm).collect()
}

/// Geodesic distance between unit vectors scaled to `[0, 1]`:
/// `acos(<w, v>) / π`, evaluated as `2 atan2(|w - v|, |w + v|) / π` to stay
/// accurate near `w = ±v`.
pub fn sphere_distance(w: &[f64], v: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (p, q) in w.iter().zip(v) {
        diff += (p - q) * (p - q);
        sum += (p + q) * (p + q);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt()) / std::f64::consts::PI
}

/// History columns and last embedding of one sequence, on a graph.
///
/// The stacked matrix and the sphere projections are built lazily and
/// shared by every head reading the view.
#[derive(Clone, Debug)]
pub struct SeqView {
    cols: Vec<Var>,
    last: Var,
    matrix: Option<Var>,
    projected_cols: Option<Vec<Var>>,
    projected_last: Option<Var>,
    projected_matrix: Option<Var>,
}

impl SeqView {
    pub fn new(g: &Graph<'_>, cols: Vec<Var>, last: Var) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::contract(
                "a sequence view needs at least one history column",
            ));
        }
        let n = g.value(last).len();
        for c in &cols {
            if g.value(*c).shape() != [n] {
                return Err(Error::shape("sequence view", g.value(*c).shape(), &[n]));
            }
        }
        Ok(SeqView {
            cols,
            last,
            matrix: None,
            projected_cols: None,
            projected_last: None,
            projected_matrix: None,
        })
    }

    /// Builds a view from an `n × L` matrix of constants and a last vector.
    pub fn from_values(g: &mut Graph<'_>, z: &Tensor, last: &Tensor) -> Result<Self> {
        if z.ndim() != 2 || last.shape() != [z.rows()] {
            return Err(Error::shape("sequence view", z.shape(), last.shape()));
        }
        let cols = (0..z.cols())
            .map(|j| g.constant(Tensor::vector(z.column(j))))
            .collect();
        let last = g.constant(last.clone());
        SeqView::new(g, cols, last)
    }

    pub fn history_len(&self) -> usize {
        self.cols.len()
    }

    pub fn columns(&self) -> &[Var] {
        &self.cols
    }

    pub fn last(&self) -> Var {
        self.last
    }

    /// `Z` as an `n × L` matrix.
    pub fn matrix(&mut self, g: &mut Graph<'_>) -> Result<Var> {
        if let Some(m) = self.matrix {
            return Ok(m);
        }
        let m = g.tape.stack_columns(&self.cols)?;
        self.matrix = Some(m);
        Ok(m)
    }

    /// Projected `(Ẑ, ẑ_τ)`.
    pub fn projected(&mut self, g: &mut Graph<'_>) -> Result<(Var, Var)> {
        if let (Some(m), Some(l)) = (self.projected_matrix, self.projected_last) {
            return Ok((m, l));
        }
        let cols = self.projected_columns(g)?.to_vec();
        let m = g.tape.stack_columns(&cols)?;
        let last = match self.projected_last {
            Some(l) => l,
            None => g.sphere_project(self.last)?,
        };
        self.projected_matrix = Some(m);
        self.projected_last = Some(last);
        Ok((m, last))
    }

    fn projected_columns(&mut self, g: &mut Graph<'_>) -> Result<&[Var]> {
        if self.projected_cols.is_none() {
            let cols = self
                .cols
                .iter()
                .map(|&c| g.sphere_project(c))
                .collect::<Result<Vec<_>>>()?;
            self.projected_cols = Some(cols);
        }
        Ok(self.projected_cols.as_deref().expect("just set"))
    }

    /// View over the most recent `len` history columns.
    pub fn suffix(&self, len: usize) -> Result<SeqView> {
        let total = self.cols.len();
        if len == 0 || len > total {
            return Err(Error::contract(format!(
                "suffix of {len} columns requested from a history of {total}"
            )));
        }
        if len == total {
            return Ok(self.clone());
        }
        let start = total - len;
        let projected_cols = self.projected_cols.as_ref().map(|c| c[start..].to_vec());
        Ok(SeqView {
            cols: self.cols[start..].to_vec(),
            last: self.last,
            matrix: None,
            projected_cols,
            projected_last: self.projected_last,
            projected_matrix: None,
        })
    }

    /// Projects every column now so later suffix views can share them.
    pub fn prepare_projection(&mut self, g: &mut Graph<'_>) -> Result<()> {
        self.projected_columns(g)?;
        if self.projected_last.is_none() {
            self.projected_last = Some(g.sphere_project(self.last)?);
        }
        Ok(())
    }
}

/// One time series layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tsl {
    pub kind: SimilarityKind,
    /// `n × n` matrix for `Gen` and `Ind`.
    pub matrix: Option<ParamId>,
    /// `L → n → n → L`, ReLU hidden, linear output.
    pub mlp: Mlp,
    pub history_len: usize,
    pub n: usize,
}

impl Tsl {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        kind: SimilarityKind,
        n: usize,
        history_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if history_len == 0 || n == 0 {
            return Err(Error::contract("TSL dims must be positive"));
        }
        let matrix = kind
            .has_matrix()
            .then(|| params.add(format!("{name}.A"), init::near_identity(rng, n, A_INIT_STD)));
        let mlp = Mlp::new(
            params,
            &format!("{name}.mlp"),
            &[history_len, n, n, history_len],
            false,
            rng,
        )?;
        Ok(Tsl {
            kind,
            matrix,
            mlp,
            history_len,
            n,
        })
    }

    /// Score vector `s ∈ ℝᴸ`, `s_t = sim(z_t, z_τ)`.
    pub fn similarities(&self, g: &mut Graph<'_>, view: &mut SeqView) -> Result<Var> {
        self.check_len(view)?;
        match self.kind {
            SimilarityKind::Dot => {
                let z = view.matrix(g)?;
                let zt = g.tape.transpose(z)?;
                g.tape.matmul(zt, view.last())
            }
            SimilarityKind::Cos => {
                let (zh, lh) = view.projected(g)?;
                let zt = g.tape.transpose(zh)?;
                g.tape.matmul(zt, lh)
            }
            SimilarityKind::Gen => {
                let (zh, lh) = view.projected(g)?;
                let a = g.param(self.matrix.expect("Gen owns A"));
                let az = g.tape.matmul(a, zh)?;
                let al = g.tape.matmul(a, lh)?;
                let azt = g.tape.transpose(az)?;
                g.tape.matmul(azt, al)
            }
            SimilarityKind::Ind => {
                let (zh, lh) = view.projected(g)?;
                let a = g.param(self.matrix.expect("Ind owns A"));
                let al = g.tape.matmul(a, lh)?;
                let zt = g.tape.transpose(zh)?;
                g.tape.matmul(zt, al)
            }
        }
    }

    /// Coefficients `a = mlp(s)`.
    pub fn coefficients(&self, g: &mut Graph<'_>, view: &mut SeqView) -> Result<Var> {
        let s = self.similarities(g, view)?;
        self.mlp.forward(g, s)
    }

    /// Context `c = Z a`.
    pub fn forward(&self, g: &mut Graph<'_>, view: &mut SeqView) -> Result<Var> {
        let a = self.coefficients(g, view)?;
        let z = view.matrix(g)?;
        g.tape.matmul(z, a)
    }

    fn check_len(&self, view: &SeqView) -> Result<()> {
        if view.history_len() != self.history_len {
            return Err(Error::contract(format!(
                "TSL expects {} history columns, got {}",
                self.history_len,
                view.history_len()
            )));
        }
        Ok(())
    }
}

/// `k` TSLs over the same full history, one context each.
pub fn multi_tsl_inner(tsls: &[Tsl], g: &mut Graph<'_>, view: &mut SeqView) -> Result<Vec<Var>> {
    if let Some(first) = tsls.first() {
        if let Some(bad) = tsls.iter().find(|t| t.history_len != first.history_len) {
            return Err(Error::contract(format!(
                "TSL history lengths disagree: {} vs {}",
                first.history_len, bad.history_len
            )));
        }
    }
    tsls.iter().map(|t| t.forward(g, view)).collect()
}

/// TSLs over suffixes of the history.
///
/// A TSL with `history_len = ℓ - 1` covers the most recent subsequence of
/// length `ℓ` (its `ℓ - 1` newest history items plus the last item).
pub fn multi_tsl_seq(tsls: &[Tsl], g: &mut Graph<'_>, view: &mut SeqView) -> Result<Vec<Var>> {
    let available = view.history_len();
    if let Some(bad) = tsls.iter().find(|t| t.history_len > available) {
        return Err(Error::contract(format!(
            "subsequence of length {} exceeds the available {} events",
            bad.history_len + 1,
            available + 1
        )));
    }
    if tsls.iter().any(|t| t.kind.on_sphere()) {
        view.prepare_projection(g)?;
    }
    tsls.iter()
        .map(|t| {
            let mut sub = view.suffix(t.history_len)?;
            t.forward(g, &mut sub)
        })
        .collect()
}
