//! Scattered-data regression with elliptic PDE regularization.
//!
//! Given `m` local-average or point samples of an unknown function on the
//! cube `[0,D]^d`, this crate fits a tensor-product Lagrange finite element
//! function by minimizing a weighted sum of the data misfit and the Dirichlet
//! energy of an auxiliary elliptic operator. The pieces are:
//!
//! - [`grid`]: uniform tensor-product meshes and Gauss quadrature,
//! - [`fespace`]: Q_k Lagrange spaces, form assembly, interpolation, norms,
//! - [`dataterm`]: sample clouds, averaging boxes and the data bilinear form,
//! - [`params`]: heuristic selection of box edge and regularization weight,
//! - [`regsolver`]: assembly and CG solution of the regularized system,
//! - [`oracle`]: executable checks of the underlying inequalities,
//! - [`experiment`]: convergence-study sweeps with CSV output.

pub mod dataterm;
pub mod error;
pub mod experiment;
pub mod fespace;
pub mod field;
pub mod grid;
pub mod oracle;
pub mod params;
pub mod regsolver;
pub mod sparse;

pub use error::PdefitError;
