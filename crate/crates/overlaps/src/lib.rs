//! Eigenvector overlaps of non-normal random matrices.
//!
//! Sampling of Ginibre-type ensembles, eigendecomposition with biorthogonal
//! eigenvectors, Schur-chain recurrences for the overlaps of two distinguished
//! eigenvalues, closed-form finite-N expressions, Monte Carlo estimators,
//! eigenvalue dynamics under the Ornstein–Uhlenbeck matrix flow, eigenvector
//! angles, and brute-force quadrature oracles.
//!
//! Numerical code is generic over [`Real`] (implemented for `f32` and `f64`);
//! the `*64` aliases below fix the scalar to `f64`.

pub mod angles;
pub mod dynamics;
pub mod estimators;
pub mod formulas;
mod matrix;
pub mod oracle;
pub mod rand_ensembles;
pub mod schur_chain;
pub mod spectral;
mod summation;

use std::fmt::{Debug, Display};

pub use matrix::ComplexMatrix;
pub use num_complex::Complex;
pub use rand_ensembles::{EnsembleKind, EnsembleSpec, RngStream};
pub use spectral::{EigenSystem, OverlapMatrix, Spectrum};
pub use summation::NeumaierSum;

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
    + spectral::Backend
{
    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("f64 conversion")
    }

    /// Lossy conversion from an integer count.
    fn of_usize(n: usize) -> Self {
        <Self as num_traits::FromPrimitive>::from_usize(n).expect("usize conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Relative tolerance below which two eigenvalues are considered merged
/// (scaled by the matrix norm).
pub const GAP_FLOOR: f64 = 1e-12;

/// Pair separation `δ = N|λ₁−λ₂|²` below which second moments switch to their
/// leading-order expansion.
pub const DELTA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("eigensolver did not converge")]
    NonConvergence,
    #[error("degenerate spectrum: minimum gap {gap:e} below floor {floor:e}")]
    DegenerateSpectrum { gap: f64, floor: f64 },
    #[error("eigenvalue gap {gap:e} below floor {floor:e}")]
    GapTooSmall { gap: f64, floor: f64 },
    #[error("pair separation δ = {delta:e} below floor")]
    DeltaDegenerate { delta: f64 },
    #[error("argument {0} too large for a finite result")]
    ArgumentTooLarge(f64),
    #[error("no sample fell in the window")]
    EmptyWindow,
    #[error("need at least {needed} steps, got {got}")]
    InsufficientSteps { needed: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("eigendecomposition failed at step {step}: {source}")]
    DecompositionFailed { step: usize, source: Box<Error> },
    #[error("conjugate pair collided with the real axis at step {step}")]
    CollisionDetected { step: usize },
    #[error("quadrature tolerance not reached: estimate {estimate:e}")]
    ToleranceNotReached { estimate: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub type C64 = Complex<f64>;
pub type ComplexMatrix64 = ComplexMatrix<f64>;
pub type Spectrum64 = Spectrum<f64>;
pub type EigenSystem64 = EigenSystem<f64>;
pub type OverlapMatrix64 = OverlapMatrix<f64>;
pub type ChainState64 = schur_chain::ChainState<f64>;
pub type PairGeometry64 = schur_chain::PairGeometry<f64>;
