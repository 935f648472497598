//! The guide under `book/` is written for mdbook, which cannot run listings
//! that depend on workspace crates. Each chapter is included here as a module
//! doc so `cargo test --doc` compiles and runs every listing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/robustness.md")]
pub mod robustness {}
#[doc = include_str!("../../../book/src/attribution.md")]
pub mod attribution {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
