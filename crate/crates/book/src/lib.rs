//! Runs the code blocks of the user guide in `book/src` as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/hyperboloid.md")]
pub mod hyperboloid {}

#[doc = include_str!("../../../book/src/curvature.md")]
pub mod curvature {}

#[doc = include_str!("../../../book/src/quadrature.md")]
pub mod quadrature {}

#[doc = include_str!("../../../book/src/monotonicity.md")]
pub mod monotonicity {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
