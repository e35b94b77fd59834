//! Code listings of the `gle-lab` guide in `book/`, compiled and run as
//! doc-tests. One module per chapter, so a failing listing points at its
//! chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/kernels.md")]
pub mod kernels {}
#[doc = include_str!("../../../book/src/volterra.md")]
pub mod volterra {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
