//! Time-based sequence model (TBSM) for click-through-rate prediction.
//!
//! The model embeds every event of a user's behavior sequence with a
//! DLRM-style layer, relates the history to the candidate item through one
//! or more time series layers (TSL) that compare projected embeddings under
//! learned inner products, and turns each resulting context into a click
//! probability.
//!
//! Crate layout:
//!
//! - [`autodiff`]: tensors and the reverse-mode tape everything trains on.
//! - [`params`], [`nn`]: parameter storage, forward graphs, dense layers.
//! - [`embedding`]: per-event DLRM embedding.
//! - [`tsl`]: similarity measures and the time series layer.
//! - [`model`]: full model composition, attention and LSTM baselines, loss.
//! - [`synthetic`], [`taobao`], [`dataset`]: data generation and pipelines.
//! - [`train`]: Adagrad, metrics, the training loop and multi-seed runner.
//! - [`checkpoint`], [`config`]: on-disk formats.

pub mod autodiff;
mod binary;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod embedding;
mod error;
pub mod model;
pub mod nn;
pub mod params;
pub mod synthetic;
pub mod taobao;
pub mod train;
pub mod tsl;

pub use error::{Error, Result};
