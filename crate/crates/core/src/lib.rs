//! Detection of finite-time coherent sets in 2-D nonautonomous dynamics.
//!
//! The pipeline discretises a weighted flat manifold into a uniform cell
//! grid, estimates the transfer operator of a flow map by Ulam's method,
//! assembles the weighted dynamic Laplace operator, computes its leading
//! eigenvectors, and extracts the level set minimising the dynamic Cheeger
//! ratio. Supporting modules verify a run against the theory it rests on:
//! the dynamic Cheeger inequality, the co-area identity, the dynamic Sobolev
//! quotient, and the small-radius expansion of mollified transfer operators.

pub mod contour;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod isoperimetry;
pub mod laplacian;
pub mod mollify;
pub mod sparse;
pub mod spectral;
pub mod transfer;
pub(crate) mod tridiag;

pub use contour::Contour;
pub use dynamics::{DensitySpec, MapKind, MapSpec};
pub use error::{Error, Result};
pub use grid::{CellField, Grid, NodeField, Point};
pub use isoperimetry::Partition;
pub use laplacian::{Convention, DynOperator};
pub use spectral::{CondensedSpectrum, EigenSolution};
pub use transfer::{DensityField, NormalizedTransfer, TransferMatrix};
