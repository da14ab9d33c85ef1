//! Extension and compression calculus for symmetric operators whose domain
//! need not be dense, realized on exact models in `ℓ²(ℤ)`.
//!
//! The matrix layer ([`matkit`]) is generic over the real scalar; every
//! operator layer runs in `f64` through the aliases below.

pub mod error;
pub mod charfn;
pub mod compressor;
pub mod extenders;
pub mod matkit;
pub mod random;
pub mod seqspace;
pub mod symop;
pub mod suites;
pub mod synthesizer;

pub use error::{Error, Result};
pub use matkit::{ComplexMatrix, RealScalar, Subspace, TolerancePolicy};

pub type C64 = num_complex::Complex64;
pub type CMat = ComplexMatrix<f64>;
pub type CSub = Subspace<f64>;
