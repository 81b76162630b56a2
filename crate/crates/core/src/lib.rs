//! Embedded-boundary finite-volume kernels on structured grids.
//!
//! The crate covers cut-cell geometry from implicit functions, patch
//! decomposition with ghost exchange, state redistribution (original and
//! weighted), flux redistribution, and a scalar advection-diffusion solver
//! that ties them together. Everything here is `no_std` with `alloc`; file
//! formats and the command line live in the `ebsrd` crate.

#![no_std]
#![deny(unsafe_code)]
#![warn(missing_debug_implementations)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod frd;
pub mod geometry;
pub mod index;
pub mod mesh;
pub mod solver;
pub mod srd;

pub use error::{Error, Result};
pub use index::{Index, IndexBox, PatchArray};
