//! Guide chapters compiled as doc-tests, one module per chapter so a failing
//! listing points at its file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/surface.md")]
pub mod surface {}
#[doc = include_str!("../../../book/src/saddles.md")]
pub mod saddles {}
#[doc = include_str!("../../../book/src/steepest.md")]
pub mod steepest {}
#[doc = include_str!("../../../book/src/regions.md")]
pub mod regions {}
#[doc = include_str!("../../../book/src/edges.md")]
pub mod edges {}
#[doc = include_str!("../../../book/src/output.md")]
pub mod output {}
#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
