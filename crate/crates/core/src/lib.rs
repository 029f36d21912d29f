//! Estimation of low-rank Hermitian matrix-valued functions `A: [0, 1] → ℂ^{m×m}`
//! from noisy, randomly sampled matrix-completion observations.
//!
//! Local polynomial fits with a nuclear-norm penalty are solved by ADMM
//! ([`local`]), stitched into a global estimator on a regular tiling
//! ([`global`]), and tuned by a Lepskii-grid train/test split ([`selection`]).
//! Synthetic truths and sampling live in [`sampling`]; full simulation runs
//! in [`experiment`].
//!
//! Every routine is generic over the scalar width through [`Real`]; the
//! aliases below fix `f64`, and the `*32` variants fix `f32`.

pub mod basis;
pub mod error;
pub mod experiment;
pub mod global;
pub mod linalg;
pub mod local;
pub mod quadrature;
pub mod sampling;
pub mod scalar;
pub mod selection;
pub mod spline;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Hermitian = linalg::HermitianMatrix<f64>;
pub type Hermitian32 = linalg::HermitianMatrix<f32>;
pub type BlockDiag = linalg::BlockDiagMatrix<f64>;
pub type Basis = basis::OrthoPolyBasis<f64>;
pub type Kernel = basis::HigherOrderKernel<f64>;
pub type Dataset = sampling::Dataset<f64>;
pub type Dataset32 = sampling::Dataset<f32>;
pub type Truth = sampling::MatrixFunctionSpec<f64>;
pub type LocalEstimate = local::BlockDiagEstimate<f64>;
pub type GlobalEstimate = global::GlobalEstimate<f64>;
pub type ExperimentConfig = experiment::ExperimentConfig;
