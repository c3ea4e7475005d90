//! Versioned binary container for sampled datasets.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header   "TBSMDATA"  u32 version (= 1)  u8 kind
//! kind 1   embedded:  u32 n  u32 τ  u32 δ  u64 seed  u64 count
//!          per point: u8 label, τ·n f64 (z_1 … z_τ, one vector at a time),
//!                     δ·n u32 permutation entries
//! kind 2   events:    u32 τ  u32 users  u32 items  u32 categories  u64 count
//!          per point: u8 label, τ × (u32 user, u32 item, u32 category, f64 time)
//! ```
//!
//! `users`, `items` and `categories` are embedding table sizes (largest id
//! plus one). Files end exactly after the last point.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::binary::{put_f64, put_u32, Reader};
use crate::embedding::Event;
use crate::error::{Error, Result};
use crate::synthetic::SynthPoint;

pub const MAGIC: &[u8; 8] = b"TBSMDATA";
pub const VERSION: u32 = 1;

const KIND_EMBEDDED: u8 = 1;
const KIND_EVENTS: u8 = 2;

/// A labelled event sequence. History events carry label 1, the last event
/// carries the point label.
#[derive(Clone, Debug, PartialEq)]
pub struct EventPoint {
    pub events: Vec<Event>,
    pub label: u8,
}

/// Embedding table sizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub users: usize,
    pub items: usize,
    pub categories: usize,
}

impl Vocab {
    /// Smallest vocabulary covering every id in `points`.
    pub fn covering<'a>(points: impl IntoIterator<Item = &'a EventPoint>) -> Self {
        let mut v = Vocab {
            users: 1,
            items: 1,
            categories: 1,
        };
        for e in points.into_iter().flat_map(|p| &p.events) {
            v.users = v.users.max(e.user as usize + 1);
            v.items = v.items.max(e.item as usize + 1);
            v.categories = v.categories.max(e.category as usize + 1);
        }
        v
    }

    pub fn union(self, other: Vocab) -> Vocab {
        Vocab {
            users: self.users.max(other.users),
            items: self.items.max(other.items),
            categories: self.categories.max(other.categories),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedSet {
    pub n: usize,
    pub tau: usize,
    pub delta: usize,
    pub seed: u64,
    pub points: Vec<SynthPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventSet {
    pub tau: usize,
    pub vocab: Vocab,
    pub points: Vec<EventPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Embedded(EmbeddedSet),
    Events(EventSet),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Embedded(s) => s.points.len(),
            Dataset::Events(s) => s.points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tau(&self) -> usize {
        match self {
            Dataset::Embedded(s) => s.tau,
            Dataset::Events(s) => s.tau,
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        match self {
            Dataset::Embedded(s) => s.points.iter().map(|p| p.label).collect(),
            Dataset::Events(s) => s.points.iter().map(|p| p.label).collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, VERSION);
        match self {
            Dataset::Embedded(s) => {
                w.push(KIND_EMBEDDED);
                for v in [s.n, s.tau, s.delta] {
                    put_u32(&mut w, v as u32);
                }
                w.extend_from_slice(&s.seed.to_le_bytes());
                w.extend_from_slice(&(s.points.len() as u64).to_le_bytes());
                for (i, p) in s.points.iter().enumerate() {
                    let l = s.tau - 1;
                    if p.history.shape() != [s.n, l]
                        || p.last.len() != s.n
                        || p.perms.len() != s.delta
                    {
                        return Err(Error::contract(format!(
                            "point {i} does not match the set header"
                        )));
                    }
                    w.push(p.label);
                    for t in 0..l {
                        for k in 0..s.n {
                            put_f64(&mut w, p.history.data()[k * l + t]);
                        }
                    }
                    for &v in p.last.data() {
                        put_f64(&mut w, v);
                    }
                    for perm in &p.perms {
                        if perm.len() != s.n {
                            return Err(Error::contract(format!(
                                "point {i} has a permutation of the wrong length"
                            )));
                        }
                        for &x in perm {
                            put_u32(&mut w, x);
                        }
                    }
                }
            }
            Dataset::Events(s) => {
                w.push(KIND_EVENTS);
                for v in [s.tau, s.vocab.users, s.vocab.items, s.vocab.categories] {
                    put_u32(&mut w, v as u32);
                }
                w.extend_from_slice(&(s.points.len() as u64).to_le_bytes());
                for (i, p) in s.points.iter().enumerate() {
                    if p.events.len() != s.tau {
                        return Err(Error::contract(format!(
                            "point {i} has {} events, header says {}",
                            p.events.len(),
                            s.tau
                        )));
                    }
                    w.push(p.label);
                    for e in &p.events {
                        put_u32(&mut w, e.user);
                        put_u32(&mut w, e.item);
                        put_u32(&mut w, e.category);
                        put_f64(&mut w, e.time);
                    }
                }
            }
        }
        Ok(w)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "dataset");
        if r.take(8)? != MAGIC {
            return Err(r.error("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        let set = match r.u8()? {
            KIND_EMBEDDED => {
                let (n, tau, delta) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
                let seed = r.u64()?;
                let count = r.u64()? as usize;
                if tau < 2 || n == 0 {
                    return Err(r.error(format!("invalid dims n={n} tau={tau}")));
                }
                let l = tau - 1;
                let mut points = Vec::with_capacity(count.min(1 << 20));
                for _ in 0..count {
                    let label = read_label(&mut r)?;
                    let mut history = vec![0.0; n * l];
                    for t in 0..l {
                        for k in 0..n {
                            history[k * l + t] = r.f64()?;
                        }
                    }
                    let last = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                    let perms = (0..delta)
                        .map(|_| (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()?;
                    points.push(SynthPoint {
                        history: Tensor::new(vec![n, l], history)?,
                        last: Tensor::vector(last),
                        perms,
                        label,
                    });
                }
                Dataset::Embedded(EmbeddedSet {
                    n,
                    tau,
                    delta,
                    seed,
                    points,
                })
            }
            KIND_EVENTS => {
                let tau = r.u32()? as usize;
                let vocab = Vocab {
                    users: r.u32()? as usize,
                    items: r.u32()? as usize,
                    categories: r.u32()? as usize,
                };
                let count = r.u64()? as usize;
                let mut points = Vec::with_capacity(count.min(1 << 20));
                for _ in 0..count {
                    let label = read_label(&mut r)?;
                    let mut events = Vec::with_capacity(tau);
                    for j in 0..tau {
                        events.push(Event {
                            user: r.u32()?,
                            item: r.u32()?,
                            category: r.u32()?,
                            time: r.f64()?,
                            label: if j + 1 == tau { label } else { 1 },
                        });
                    }
                    points.push(EventPoint { events, label });
                }
                Dataset::Events(EventSet { tau, vocab, points })
            }
            k => return Err(r.error(format!("unknown kind {k}"))),
        };
        r.finish()?;
        Ok(set)
    }

    /// Writes the file and returns its SHA-256 as lowercase hex.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let bytes = self.to_bytes()?;
        let path = path.as_ref();
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Dataset::from_bytes(&bytes)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn read_label(r: &mut Reader<'_>) -> Result<u8> {
    match r.u8()? {
        l @ (0 | 1) => Ok(l),
        l => Err(r.error(format!("label {l} at byte {}", r.pos() - 1))),
    }
}
