//! Synthetic embedded time series with a tunable cross-coordinate coupling.
//!
//! A point is `τ` vectors in `ℝⁿ` with i.i.d. standard-normal coordinates.
//! With `z̃ = Σⱼ Pⱼ z_τ` over `δ` random coordinate permutations,
//!
//! ```text
//! f = Σ_{i<τ} ⟨z_i, z_τ⟩ + ⟨z_i, z̃⟩,     label = 1 iff f > 0
//! ```
//!
//! At `δ = 0` the label is a plain dot-product signal; every permutation
//! adds products of mismatched coordinates. Points skip the embedding layer
//! and feed the heads directly.
//!
//! ```
//! use tbsm::synthetic::{gen_dataset, SynthConfig};
//!
//! let cfg = SynthConfig { n: 4, tau: 6, delta: 3, count: 50, seed: 9, test_fraction: 0.2 };
//! let (train, test) = gen_dataset(&cfg).unwrap();
//! assert_eq!((train.len(), test.len()), (40, 10));
//! assert_eq!(train[0].perms.len(), 3);
//! assert_eq!(gen_dataset(&cfg).unwrap().0, train);
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub tau: usize,
    /// Number of permutation summands in `z̃`.
    pub delta: usize,
    /// Total points, train and test together.
    pub count: usize,
    pub seed: u64,
    /// Fraction of points, taken from the end, that form the test set.
    pub test_fraction: f64,
}

impl SynthConfig {
    /// Named presets `delta0`, `delta3`, `delta12`, `delta30`: `n = 15`,
    /// `τ = 20`, 20k train and 4k test points.
    pub fn preset(name: &str) -> Result<Self> {
        let delta = match name {
            "delta0" => 0,
            "delta3" => 3,
            "delta12" => 12,
            "delta30" => 30,
            _ => return Err(Error::Config(format!("unknown synthetic preset {name:?}"))),
        };
        Ok(SynthConfig {
            n: 15,
            tau: 20,
            delta,
            count: 24_000,
            seed: 2020,
            test_fraction: 1.0 / 6.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.tau < 2 {
            return Err(Error::Config(format!(
                "synthetic data needs n >= 2 and tau >= 2, got n={} tau={}",
                self.n, self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!(
                "test_fraction {} outside [0, 1]",
                self.test_fraction
            )));
        }
        Ok(())
    }

    pub fn test_count(&self) -> usize {
        (self.count as f64 * self.test_fraction).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPoint {
    /// `[n, τ-1]`, column `t` is `z_{t+1}`.
    pub history: Tensor,
    pub last: Tensor,
    /// `perms[j][k]` is the source coordinate of `(Pⱼ z)_k`.
    pub perms: Vec<Vec<u32>>,
    pub label: u8,
}

impl SynthPoint {
    /// `z̃`, summed over permutations in stored order.
    pub fn coupled(&self) -> Vec<f64> {
        let last = self.last.data();
        let mut out = vec![0.0; last.len()];
        for p in &self.perms {
            for (o, &src) in out.iter_mut().zip(p) {
                *o += last[src as usize];
            }
        }
        out
    }

    /// The label function `f`.
    pub fn f(&self) -> f64 {
        let tilde = self.coupled();
        let (n, l) = (self.history.rows(), self.history.cols());
        let h = self.history.data();
        let last = self.last.data();
        let mut f = 0.0;
        for i in 0..l {
            let mut dot = 0.0;
            let mut mixed = 0.0;
            for k in 0..n {
                dot += h[k * l + i] * last[k];
                mixed += h[k * l + i] * tilde[k];
            }
            f += dot + mixed;
        }
        f
    }
}

/// Point `index` of the stream rooted at `cfg.seed`; independent of every
/// other index.
pub fn gen_point(cfg: &SynthConfig, index: u64) -> SynthPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let (n, l) = (cfg.n, cfg.tau - 1);
    // Draw time-major so z_1 … z_τ come off the stream in order.
    let mut cols: Vec<f64> = (0..n * l)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let last: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut history = vec![0.0; n * l];
    for (t, col) in cols.chunks_mut(n).enumerate() {
        for (k, v) in col.iter().enumerate() {
            history[k * l + t] = *v;
        }
    }
    let perms = (0..cfg.delta)
        .map(|_| {
            let mut p: Vec<u32> = (0..n as u32).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let mut point = SynthPoint {
        history: Tensor::new(vec![n, l], history).expect("shape by construction"),
        last: Tensor::vector(last),
        perms,
        label: 0,
    };
    point.label = u8::from(point.f() > 0.0);
    point
}

/// `(train, test)`; the test set is the last [`SynthConfig::test_count`]
/// points of the stream.
pub fn gen_dataset(cfg: &SynthConfig) -> Result<(Vec<SynthPoint>, Vec<SynthPoint>)> {
    cfg.validate()?;
    let mut points: Vec<SynthPoint> = (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| gen_point(cfg, i))
        .collect();
    let test = points.split_off(cfg.count - cfg.test_count());
    Ok((points, test))
}

/// Fraction of positive labels; `None` on an empty set.
pub fn label_balance<'a>(labels: impl IntoIterator<Item = &'a SynthPoint>) -> Option<f64> {
    let (pos, total) = labels
        .into_iter()
        .fold((0usize, 0usize), |(p, t), x| (p + x.label as usize, t + 1));
    (total > 0).then(|| pos as f64 / total as f64)
}
