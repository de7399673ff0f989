//! The guide under `book/`, one module per chapter, so that
//! `cargo test --doc` runs every code block in it.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/defense.md")]
pub mod defense {}
#[doc = include_str!("../../../book/src/attacks.md")]
pub mod attacks {}
#[doc = include_str!("../../../book/src/accuracy-model.md")]
pub mod accuracy_model {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
