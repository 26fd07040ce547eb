//! Functional Gaussian-process regression for data assimilation with linear
//! PDE models.
//!
//! A best-knowledge finite-element model is corrected by a Gaussian
//! functional learned from pointwise observations through adjoint states.
//! The result is a posterior mean state and covariance, with hyperparameters
//! chosen by maximizing the log marginal likelihood.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the tolerances in the
//! test suites assume.

pub mod covariance;
pub mod error;
pub mod fem1d;
pub mod fgp;
pub mod hyperopt;
pub mod linalg;
pub mod oracles;
pub mod pipeline;
pub mod problem;
pub mod scalar;
pub mod sgp;

pub use covariance::{CovOperator, GramBundle, GramComponents};
pub use error::{Error, Result};
pub use fem1d::{solve_dirichlet, EvalMatrix, FeSpace, Field, Mesh};
pub use fgp::{FgpFit, FgpPosterior, FunctionalPosterior};
pub use hyperopt::{GridSpec, LmlKind, LmlProblem, NelderMeadSpec, OptResult};
pub use linalg::Mat;
pub use pipeline::{FgpRun, Scenario, SearchSpec, SgpRun};
pub use problem::{AdjointSet, BkModel, BkSolution, ObservationSet};
pub use scalar::Real;
pub use sgp::{SeKernel, SgpPosterior};

pub type Mesh64 = Mesh<f64>;
pub type FeSpace64 = FeSpace<f64>;
pub type Field64 = Field<f64>;
pub type Mat64 = Mat<f64>;
pub type CovOperator64 = CovOperator<f64>;
pub type BkModel64 = BkModel<f64>;
pub type ObservationSet64 = ObservationSet<f64>;
pub type AdjointSet64 = AdjointSet<f64>;
pub type FgpFit64 = FgpFit<f64>;
pub type FgpPosterior64 = FgpPosterior<f64>;
pub type SeKernel64 = SeKernel<f64>;
pub type SgpPosterior64 = SgpPosterior<f64>;
pub type Scenario64 = Scenario<f64>;
