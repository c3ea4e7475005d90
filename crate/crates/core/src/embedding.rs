//! DLRM-style per-event embedding.
//!
//! Each event carries three categorical ids (user, item, category) and one
//! dense feature (time). The ids select rows of three embedding tables, the
//! time goes through a single-layer bottom MLP into the same `d`-dimensional
//! space, and the four `d`-vectors are combined as
//!
//! ```text
//! [ dense | <x,u> <x,i> <x,c> <u,i> <u,c> <i,c> ]   (length d + s(s+1)/2)
//! ```
//!
//! which the top MLP maps to the event embedding `z ∈ ℝⁿ`. The top MLP is
//! linear: `z` is the representation one layer before a click probability.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::params::{init, Graph, ParamId, ParamSet};

/// Id reserved for front padding in every table.
pub const PADDING_ID: u32 = 0;

/// Number of categorical features per event.
pub const SPARSE_FEATURES: usize = 3;

/// One user interaction. `label` is only meaningful on the last event of a
/// sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub user: u32,
    pub item: u32,
    pub category: u32,
    pub time: f64,
    pub label: u8,
}

/// Length of the interaction vector fed to the top MLP.
pub fn interaction_dim(d: usize, sparse: usize) -> usize {
    d + sparse * (sparse + 1) / 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DlrmDims {
    /// Embedding dimension of tables and bottom MLP output.
    pub d: usize,
    /// Output embedding dimension.
    pub n: usize,
    pub users: usize,
    pub items: usize,
    pub categories: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DlrmEmbedding {
    pub dims: DlrmDims,
    pub user_table: ParamId,
    pub item_table: ParamId,
    pub category_table: ParamId,
    pub bottom: Mlp,
    pub top: Mlp,
}

impl DlrmEmbedding {
    /// Tables ~ `N(0, 1/d)`, row 0 included; MLPs per [`Mlp::new`].
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        dims: DlrmDims,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.d == 0 || dims.n == 0 {
            return Err(Error::contract("embedding dims must be positive"));
        }
        let std = 1.0 / (dims.d as f64).sqrt();
        let mut table = |name: &str, rows: usize, rng: &mut R| {
            params.add(
                format!("embedding.{name}"),
                init::normal(rng, &[rows.max(1), dims.d], std),
            )
        };
        let user_table = table("user", dims.users, rng);
        let item_table = table("item", dims.items, rng);
        let category_table = table("category", dims.categories, rng);
        let bottom = Mlp::new(params, "embedding.bottom", &[1, dims.d], true, rng)?;
        let mu = interaction_dim(dims.d, SPARSE_FEATURES);
        let top = Mlp::new(params, "embedding.top", &[mu, dims.n], false, rng)?;
        Ok(DlrmEmbedding {
            dims,
            user_table,
            item_table,
            category_table,
            bottom,
            top,
        })
    }

    pub fn embed_event(&self, g: &mut Graph<'_>, ev: &Event) -> Result<Var> {
        let u = g.row(self.user_table, ev.user as usize, "user")?;
        let i = g.row(self.item_table, ev.item as usize, "item")?;
        let c = g.row(self.category_table, ev.category as usize, "category")?;
        let t = g.constant(Tensor::vector(vec![ev.time]));
        let x = self.bottom.forward(g, t)?;

        let feats = [x, u, i, c];
        let mut parts = Vec::with_capacity(1 + 6);
        parts.push(x);
        for a in 0..feats.len() {
            for b in a + 1..feats.len() {
                let d = g.tape.dot(feats[a], feats[b])?;
                parts.push(g.tape.reshape(d, &[1])?);
            }
        }
        let interactions = g.tape.concat(&parts, 0)?;
        self.top.forward(g, interactions)
    }

    /// Embeds a sequence of exactly `tau` events into history columns and the
    /// last-item embedding.
    pub fn embed_sequence(
        &self,
        g: &mut Graph<'_>,
        seq: &[Event],
        tau: usize,
    ) -> Result<(Vec<Var>, Var)> {
        if seq.len() != tau || tau == 0 {
            return Err(Error::contract(format!(
                "sequence has {} events, expected {tau}",
                seq.len()
            )));
        }
        let mut zs = seq
            .iter()
            .map(|ev| self.embed_event(g, ev))
            .collect::<Result<Vec<_>>>()?;
        let last = zs.pop().expect("tau >= 1");
        Ok((zs, last))
    }

    /// Value-only embedding of one event.
    pub fn embed_event_value(&self, params: &ParamSet, ev: &Event) -> Result<Tensor> {
        let mut g = Graph::new(params, false);
        let z = self.embed_event(&mut g, ev)?;
        Ok(g.value(z).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ev(user: u32, item: u32, category: u32, time: f64) -> Event {
        Event {
            user,
            item,
            category,
            time,
            label: 0,
        }
    }

    fn small(d: usize, n: usize) -> (ParamSet, DlrmEmbedding) {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dims = DlrmDims {
            d,
            n,
            users: 5,
            items: 6,
            categories: 4,
        };
        let emb = DlrmEmbedding::new(&mut ps, dims, &mut rng).unwrap();
        (ps, emb)
    }

    #[test]
    fn interaction_length() {
        assert_eq!(interaction_dim(16, 3), 22);
        let (ps, emb) = small(16, 15);
        assert_eq!(emb.top.in_dim(), 22);
        assert_eq!(ps.get(emb.top.layers[0].weight).shape(), &[15, 22]);
    }

    #[test]
    fn zero_tables_give_top_mlp_of_zero() {
        let (mut ps, emb) = small(4, 3);
        for id in [emb.user_table, emb.item_table, emb.category_table] {
            ps.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        for l in &emb.bottom.layers {
            ps.get_mut(l.weight)
                .data_mut()
                .iter_mut()
                .for_each(|x| *x = 0.0);
        }
        let top_bias = emb.top.layers[0].bias;
        ps.get_mut(top_bias)
            .data_mut()
            .copy_from_slice(&[0.5, -1.0, 2.0]);
        let z = emb.embed_event_value(&ps, &ev(1, 2, 3, 0.7)).unwrap();
        assert_eq!(z.data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn hand_computed_two_dim_event() {
        let (mut ps, emb) = small(2, 2);
        let set = |ps: &mut ParamSet, id: ParamId, v: &[f64]| {
            ps.get_mut(id).data_mut().copy_from_slice(v)
        };
        // user 1 -> (1, 2), item 2 -> (0, 3), category 3 -> (-1, 1)
        let mut user = vec![0.0; 10];
        user[2..4].copy_from_slice(&[1.0, 2.0]);
        set(&mut ps, emb.user_table, &user);
        let mut item = vec![0.0; 12];
        item[4..6].copy_from_slice(&[0.0, 3.0]);
        set(&mut ps, emb.item_table, &item);
        let mut cat = vec![0.0; 8];
        cat[6..8].copy_from_slice(&[-1.0, 1.0]);
        set(&mut ps, emb.category_table, &cat);
        // bottom: x = relu([2, -1] * t + [0, 0.5]) at t = 0.5 -> (1, 0)
        set(&mut ps, emb.bottom.layers[0].weight, &[2.0, -1.0]);
        set(&mut ps, emb.bottom.layers[0].bias, &[0.0, 0.5]);
        // top: z0 = sum of the 6 dots, z1 = dense[0] + dense[1]
        let top = &emb.top.layers[0];
        set(
            &mut ps,
            top.weight,
            &[
                0., 0., 1., 1., 1., 1., 1., 1., 1., 1., 0., 0., 0., 0., 0., 0.,
            ],
        );
        set(&mut ps, top.bias, &[0.0, 0.25]);

        // dots: <x,u>=1, <x,i>=0, <x,c>=-1, <u,i>=6, <u,c>=1, <i,c>=3  -> 10
        let z = emb.embed_event_value(&ps, &ev(1, 2, 3, 0.5)).unwrap();
        assert_eq!(z.data(), &[10.0, 1.25]);
    }

    #[test]
    fn lookup_out_of_bounds() {
        let (ps, emb) = small(4, 3);
        let err = emb.embed_event_value(&ps, &ev(1, 99, 0, 0.0)).unwrap_err();
        assert!(matches!(
            err,
            Error::Lookup {
                table: "item",
                index: 99,
                ..
            }
        ));
    }

    #[test]
    fn sequence_shapes_and_per_position_independence() {
        let (ps, emb) = small(4, 3);
        let seq: Vec<Event> = (0..5)
            .map(|t| ev(1, t as u32, t as u32 % 4, t as f64 / 4.0))
            .collect();
        let mut g = Graph::new(&ps, false);
        let (hist, last) = emb.embed_sequence(&mut g, &seq, 5).unwrap();
        assert_eq!(hist.len(), 4);
        for (t, h) in hist.iter().enumerate() {
            let solo = emb.embed_event_value(&ps, &seq[t]).unwrap();
            assert_eq!(g.value(*h), &solo);
        }
        assert_eq!(g.value(last), &emb.embed_event_value(&ps, &seq[4]).unwrap());

        let mut g = Graph::new(&ps, false);
        let (hist, _) = emb.embed_sequence(&mut g, &seq[3..], 2).unwrap();
        assert_eq!(hist.len(), 1);

        let mut g = Graph::new(&ps, false);
        assert!(emb.embed_sequence(&mut g, &seq, 4).is_err());
    }

    #[test]
    fn permuting_history_permutes_columns() {
        let (ps, emb) = small(4, 3);
        let seq: Vec<Event> = (0..4)
            .map(|t| ev(2, t as u32 + 1, 1, t as f64 / 3.0))
            .collect();
        let mut swapped = seq.clone();
        swapped.swap(0, 2);
        let mut g = Graph::new(&ps, false);
        let (a, _) = emb.embed_sequence(&mut g, &seq, 4).unwrap();
        let (b, _) = emb.embed_sequence(&mut g, &swapped, 4).unwrap();
        assert_eq!(g.value(a[0]), g.value(b[2]));
        assert_eq!(g.value(a[2]), g.value(b[0]));
        assert_eq!(g.value(a[1]), g.value(b[1]));
    }
}
