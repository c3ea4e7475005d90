//! Model checkpoints.
//!
//! A checkpoint is a binary parameter file plus a `model.toml`-style config
//! record next to it (same stem, `.toml` extension). Little-endian layout:
//!
//! ```text
//! "TBSMCKPT"  u32 version (= 1)
//! u32 d  u32 n  u32 s  u32 users  u32 items  u32 categories   (zeros without an embedding layer)
//! u32 tensor count
//! per tensor, in declaration order:
//!     u32 name length, UTF-8 name, u32 ndim, ndim × u32 extent, f64 values (row-major)
//! ```
//!
//! Declaration order is embedding tables (user, item, category), bottom and
//! top MLP, then the context heads, per-head MLPs and the final layer.

use std::path::{Path, PathBuf};

use crate::autodiff::Tensor;
use crate::binary::{put_f64, put_u32, Reader};
use crate::embedding::SPARSE_FEATURES;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TbsmModel};
use crate::params::ParamSet;

pub const MAGIC: &[u8; 8] = b"TBSMCKPT";
pub const VERSION: u32 = 1;

/// Path of the config record belonging to a parameter file.
pub fn config_path(path: &Path) -> PathBuf {
    path.with_extension("toml")
}

pub fn to_bytes(model: &TbsmModel) -> Vec<u8> {
    let mut w = Vec::new();
    w.extend_from_slice(MAGIC);
    put_u32(&mut w, VERSION);
    for v in header(&model.config) {
        put_u32(&mut w, v as u32);
    }
    put_u32(&mut w, model.params.len() as u32);
    for (_, name, t) in model.params.iter() {
        put_u32(&mut w, name.len() as u32);
        w.extend_from_slice(name.as_bytes());
        put_u32(&mut w, t.ndim() as u32);
        for &e in t.shape() {
            put_u32(&mut w, e as u32);
        }
        for &v in t.data() {
            put_f64(&mut w, v);
        }
    }
    w
}

fn header(config: &ModelConfig) -> [usize; 6] {
    match config.embedding {
        Some(e) => [e.d, e.n, SPARSE_FEATURES, e.users, e.items, e.categories],
        None => [0; 6],
    }
}

/// Parses parameters and checks the header against `config`.
pub fn from_bytes(bytes: &[u8], config: ModelConfig) -> Result<TbsmModel> {
    let mut r = Reader::new(bytes, "checkpoint");
    if r.take(8)? != MAGIC {
        return Err(r.error("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let mut found = [0usize; 6];
    for h in &mut found {
        *h = r.u32()? as usize;
    }
    let expected = header(&config);
    if found != expected {
        return Err(r.error(format!(
            "header {found:?} does not match config {expected:?}"
        )));
    }
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| r.error("tensor name is not UTF-8"))?
            .to_string();
        let ndim = r.u32()?;
        let shape = (0..ndim)
            .map(|_| Ok(r.u32()? as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        params.add(name, Tensor::new(shape, data)?);
    }
    r.finish()?;
    TbsmModel::with_params(config, params)
}

/// Writes the parameter file at `path` and the config record beside it.
pub fn save(model: &TbsmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))?;
    let cfg = config_path(path);
    let text = toml::to_string(&model.config).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&cfg, text).map_err(|e| Error::io(cfg, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TbsmModel> {
    let path = path.as_ref();
    let cfg = config_path(path);
    let text = std::fs::read_to_string(&cfg).map_err(|e| Error::io(&cfg, e))?;
    let config: ModelConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", cfg.display())))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::DlrmDims;
    use crate::model::HeadConfig;

    fn model() -> TbsmModel {
        let cfg = ModelConfig {
            n: 4,
            tau: 5,
            head: HeadConfig::from_variant("4-seq", 5).unwrap(),
            embedding: Some(DlrmDims {
                d: 3,
                n: 4,
                users: 5,
                items: 7,
                categories: 2,
            }),
        };
        TbsmModel::new(cfg, 42).unwrap()
    }

    #[test]
    fn round_trip_in_memory_and_on_disk() {
        let m = model();
        let back = from_bytes(&to_bytes(&m), m.config.clone()).unwrap();
        assert_eq!(back, m);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.bin");
        save(&m, &p).unwrap();
        assert!(config_path(&p).ends_with("model.toml"));
        assert_eq!(load(&p).unwrap(), m);
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let m = model();
        let mut other = m.config.clone();
        other.embedding.as_mut().unwrap().items = 8;
        assert!(matches!(
            from_bytes(&to_bytes(&m), other),
            Err(Error::Format { .. })
        ));
        let bytes = to_bytes(&m);
        assert!(from_bytes(&bytes[..bytes.len() - 3], m.config.clone()).is_err());
    }
}
