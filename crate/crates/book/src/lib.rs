//! Guide chapters compiled as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod chapter0 {}

#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod chapter1 {}

#[doc = include_str!("../../../book/src/tsl.md")]
pub mod chapter2 {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod chapter3 {}

#[doc = include_str!("../../../book/src/data.md")]
pub mod chapter4 {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod chapter5 {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod chapter6 {}
