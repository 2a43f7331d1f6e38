//! Critical points of strongly indefinite functionals `Φ(x) = ½⟨Lx, x⟩ + Ψ(x)`
//! near a nondegenerate critical manifold, and their persistence under
//! gradient-small perturbations.
//!
//! * [`spectral`]: splittings `X⁻ ⊕ X⁰ ⊕ X⁺`, Riesz projectors, adapted metrics.
//! * [`grassmann`]: gap distance and pseudodistance between subspaces.
//! * [`bundle`]: critical manifolds, fiber bundles, mollification, Galerkin reductions.
//! * [`saddle`]: fibered saddle neighborhoods, pseudogradient flows, deformations.
//! * [`lab`]: scenarios, perturbations, critical point search and sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod functional;
pub mod grassmann;
pub mod io;
pub mod lab;
pub mod linalg;
pub mod saddle;
pub mod scalar;
pub mod spectral;

use thiserror::Error;

pub use functional::SplitFunctional;
pub use scalar::Scalar;

pub type SymOperatorF64 = spectral::SymOperator<f64>;
pub type SymOperatorF32 = spectral::SymOperator<f32>;
pub type SubspaceF64 = grassmann::Subspace<f64>;
pub type SubspaceF32 = grassmann::Subspace<f32>;
pub type SplittingF64 = spectral::SpectralSplitting<f64>;
pub type SplittingF32 = spectral::SpectralSplitting<f32>;

/// Any failure raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
    #[error(transparent)]
    Grassmann(#[from] grassmann::GrassmannError),
    #[error(transparent)]
    Functional(#[from] functional::FunctionalError),
    #[error(transparent)]
    Bundle(#[from] bundle::BundleError),
    #[error(transparent)]
    Saddle(#[from] saddle::SaddleError),
    #[error(transparent)]
    Lab(#[from] lab::LabError),
    #[error(transparent)]
    Format(#[from] io::FormatError),
}
