//! Beta-hypergeometric distributions on the cone of positive-definite
//! symmetric matrices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accel;
pub mod cone;
pub mod dist;
pub mod error;
pub mod hyp;
pub mod partition;
pub mod rng;
pub mod special;
pub mod verify;
pub mod zonal;

pub use cone::{LowerTriangular, Matrix, SymMatrix};
pub use dist::BetaHypParams;
pub use error::{Error, Result};
pub use partition::Partition;
pub use rng::RngStream;
pub use special::VecParam;
